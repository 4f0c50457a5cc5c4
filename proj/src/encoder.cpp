#include "icd/encoder.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "icd/error.hpp"
#include "icd/format.hpp"
#include "icd/rng.hpp"

namespace icd::encoder {

posenc::PosEncConfig EncoderConfig::head_posenc() const {
  posenc::PosEncConfig pe = posenc;
  pe.head_dim = head_dim();
  return pe;
}

void EncoderConfig::validate() const {
  if (vocab_size == 0) throw ValidationError("vocab_size must be positive");
  if (model_dim == 0) throw ValidationError("model_dim must be positive");
  if (n_heads == 0 || model_dim % n_heads != 0) {
    throw ValidationError("n_heads (" + std::to_string(n_heads) + ") must divide model_dim (" +
                          std::to_string(model_dim) + ")");
  }
  if (head_dim() % 2 != 0) throw ValidationError("head_dim " + std::to_string(head_dim()) + " must be even");
  head_posenc().validate();
}

Pooling parse_pooling(const std::string& name) {
  if (name == "mean") return Pooling::kMean;
  if (name == "last") return Pooling::kLast;
  throw ValidationError("unknown pooling '" + name + "'");
}

const char* pooling_name(Pooling p) { return p == Pooling::kMean ? "mean" : "last"; }

namespace {

Tensor uniform_tensor(Shape shape, double bound, std::uint64_t seed, std::uint64_t stream) {
  Tensor t(std::move(shape));
  CounterRng rng(seed, stream);
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor rms_norm(const Tensor& x) {
  Tensor out = x;
  const std::size_t d = x.dim(1);
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    auto row = out.row(t);
    double ss = 0.0;
    for (double v : row) ss += v * v;
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(d) + 1e-6);
    for (auto& v : row) v *= inv;
  }
  return out;
}

double silu(double x) { return x * kernels::sigmoid(x); }

}  // namespace

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  cfg_.posenc.head_dim = cfg_.head_dim();
  head_pe_ = cfg_.head_posenc();
  context_limit_ = posenc::scaled_context(head_pe_);
  const std::size_t d = cfg_.model_dim, f = cfg_.ffn_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uint64_t stream = 0;
  embedding_ = uniform_tensor({cfg_.vocab_size, d}, bound, cfg_.seed, stream++);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    Layer layer;
    layer.wq = uniform_tensor({d, d}, bound, cfg_.seed, stream++);
    layer.wk = uniform_tensor({d, d}, bound, cfg_.seed, stream++);
    layer.wv = uniform_tensor({d, d}, bound, cfg_.seed, stream++);
    layer.wo = uniform_tensor({d, d}, bound, cfg_.seed, stream++);
    layer.w_gate = uniform_tensor({d, f}, bound, cfg_.seed, stream++);
    layer.w_up = uniform_tensor({d, f}, bound, cfg_.seed, stream++);
    layer.w_down = uniform_tensor({f, d}, bound, cfg_.seed, stream++);
    layers_.push_back(std::move(layer));
  }
}

Tensor Encoder::attention(const Tensor& h, const Layer& layer) const {
  const std::size_t len = h.dim(0), d = cfg_.model_dim, hd = cfg_.head_dim();
  const Tensor q = kernels::matmul(h, layer.wq);
  const Tensor k = kernels::matmul(h, layer.wk);
  const Tensor v = kernels::matmul(h, layer.wv);
  std::vector<std::size_t> positions(len);
  std::iota(positions.begin(), positions.end(), std::size_t{0});
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor heads({len, d});
  for (std::size_t head = 0; head < cfg_.n_heads; ++head) {
    Tensor qh({len, hd}), kh({len, hd});
    for (std::size_t t = 0; t < len; ++t)
      for (std::size_t j = 0; j < hd; ++j) {
        qh(t, j) = q(t, head * hd + j);
        kh(t, j) = k(t, head * hd + j);
      }
    qh = posenc::rope_apply(qh, positions, head_pe_);
    kh = posenc::rope_apply(kh, positions, head_pe_);
    std::vector<double> weights(len);
    for (std::size_t t = 0; t < len; ++t) {
      // Causal: position t attends to 0..t.
      double mx = -INFINITY;
      for (std::size_t s = 0; s <= t; ++s) {
        double dot = 0.0;
        for (std::size_t j = 0; j < hd; ++j) dot += qh(t, j) * kh(s, j);
        weights[s] = dot * inv_scale;
        mx = std::max(mx, weights[s]);
      }
      double z = 0.0;
      for (std::size_t s = 0; s <= t; ++s) {
        weights[s] = std::exp(weights[s] - mx);
        z += weights[s];
      }
      for (std::size_t s = 0; s <= t; ++s) {
        const double a = weights[s] / z;
        for (std::size_t j = 0; j < hd; ++j) heads(t, head * hd + j) += a * v(s, head * hd + j);
      }
    }
  }
  return kernels::matmul(heads, layer.wo);
}

EmbeddingSequence Encoder::encode(std::string doc_id, std::span<const std::uint32_t> tokens) const {
  if (tokens.empty()) throw ValidationError("cannot encode an empty document '" + doc_id + "'");
  if (tokens.size() > context_limit_) {
    throw ContextOverflowError("document '" + doc_id + "' has " + std::to_string(tokens.size()) +
                               " tokens, exceeding the scaled context S_new=" + std::to_string(context_limit_));
  }
  const std::size_t len = tokens.size(), d = cfg_.model_dim;
  Tensor x({len, d});
  for (std::size_t t = 0; t < len; ++t) {
    if (tokens[t] >= cfg_.vocab_size) {
      throw ValidationError("token " + std::to_string(tokens[t]) + " at position " + std::to_string(t) +
                            " is outside the vocabulary of size " + std::to_string(cfg_.vocab_size));
    }
    auto src = embedding_.row(tokens[t]);
    std::copy(src.begin(), src.end(), x.row(t).begin());
  }
  for (const Layer& layer : layers_) {
    x = kernels::add(x, attention(rms_norm(x), layer));
    const Tensor h = rms_norm(x);
    Tensor gate = kernels::matmul(h, layer.w_gate);
    const Tensor up = kernels::matmul(h, layer.w_up);
    for (std::size_t i = 0; i < gate.size(); ++i) gate[i] = silu(gate[i]) * up[i];
    x = kernels::add(x, kernels::matmul(gate, layer.w_down));
  }
  return EmbeddingSequence{std::move(doc_id), rms_norm(x)};
}

EmbeddingSequence encode_document(std::span<const std::uint32_t> tokens, const EncoderConfig& cfg,
                                  std::string doc_id) {
  return Encoder(cfg).encode(std::move(doc_id), tokens);
}

Tensor pool(const EmbeddingSequence& e, Pooling method) {
  const Tensor& m = e.matrix;
  const std::size_t len = m.dim(0), d = m.dim(1);
  Tensor out({d});
  if (method == Pooling::kLast) {
    auto last = m.row(len - 1);
    std::copy(last.begin(), last.end(), out.data().begin());
    return out;
  }
  for (std::size_t t = 0; t < len; ++t)
    for (std::size_t j = 0; j < d; ++j) out[j] += m(t, j);
  for (auto& v : out.data()) v /= static_cast<double>(len);
  return out;
}

void write_embeddings(const std::vector<EmbeddingSequence>& seqs, std::ostream& os, std::size_t dim) {
  os << "EMB v1 " << seqs.size() << ' ' << dim << '\n';
  for (const auto& s : seqs) {
    if (s.dim() != dim) {
      throw DimensionError("embedding '" + s.doc_id + "' has dim " + std::to_string(s.dim()) + ", expected " +
                           std::to_string(dim));
    }
    os << s.doc_id << '\t' << s.length() << '\n';
    for (std::size_t t = 0; t < s.length(); ++t) {
      auto row = s.matrix.row(t);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (j) os << ' ';
        os << format_double(row[j]);
      }
      os << '\n';
    }
  }
}

void save_embeddings(const std::vector<EmbeddingSequence>& seqs, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  const std::size_t dim = seqs.empty() ? 0 : seqs.front().dim();
  write_embeddings(seqs, os, dim);
  if (!os) throw Error("failed writing '" + path.string() + "'");
}

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::vector<EmbeddingSequence> read_embeddings(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) throw ParseError(std::string("unexpected end of file, expected ") + what, lineno + 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  next_line("header");
  const auto header = split_spaces(line);
  std::uint64_t n_docs = 0, dim = 0;
  if (header.size() != 4 || header[0] != "EMB" || header[1] != "v1" || !parse_u64(header[2], n_docs) ||
      !parse_u64(header[3], dim)) {
    throw ParseError("malformed EMB header '" + line + "'", lineno);
  }
  std::vector<EmbeddingSequence> out;
  out.reserve(n_docs);
  for (std::uint64_t d = 0; d < n_docs; ++d) {
    next_line("document header");
    const auto tab = line.find('\t');
    std::uint64_t len = 0;
    if (tab == std::string::npos || !parse_u64(std::string_view(line).substr(tab + 1), len) || len == 0) {
      throw ParseError("malformed document header '" + line + "'", lineno);
    }
    if (dim == 0) throw ParseError("EMB header declares dim 0 with documents present", 1);
    EmbeddingSequence seq{line.substr(0, tab), Tensor({len, dim})};
    for (std::uint64_t t = 0; t < len; ++t) {
      next_line("embedding row");
      const auto fields = split_spaces(line);
      if (fields.size() != dim) {
        throw ParseError("row has " + std::to_string(fields.size()) + " values, header declares dim " +
                             std::to_string(dim),
                         lineno);
      }
      for (std::size_t j = 0; j < dim; ++j) {
        double v;
        if (!parse_double(fields[j], v) || !std::isfinite(v)) {
          throw ParseError("bad number '" + std::string(fields[j]) + "'", lineno);
        }
        seq.matrix(t, j) = v;
      }
    }
    out.push_back(std::move(seq));
  }
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line != "\r") throw ParseError("trailing content after declared documents", lineno);
  }
  return out;
}

std::vector<EmbeddingSequence> load_embeddings(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return read_embeddings(is);
}

}  // namespace icd::encoder
