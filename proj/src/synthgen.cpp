#include "icd/synthgen.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "icd/error.hpp"
#include "icd/format.hpp"
#include "icd/rng.hpp"

namespace icd::synth {

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ValidationError("unknown split '" + s + "'");
}

void GeneratorSpec::validate() const {
  if (n_labels == 0 || tokens_per_label == 0) throw ValidationError("n_labels and tokens_per_label must be positive");
  if (n_labels * tokens_per_label >= vocab_size) {
    throw ValidationError("signal blocks need C*m < V, got C*m=" + std::to_string(n_labels * tokens_per_label) +
                          " and V=" + std::to_string(vocab_size));
  }
  if (n_docs == 0) throw ValidationError("n_docs must be positive");
  if (min_len == 0 || min_len > max_len) throw ValidationError("doc length range must satisfy 1 <= min <= max");
  if (!(label_prevalence > 0.0 && label_prevalence < 1.0)) throw ValidationError("label_prevalence must be in (0,1)");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ValidationError("noise_rate must be in [0,1)");
}

Tensor Corpus::gold(const Document& d) const {
  Tensor g({n_labels});
  for (auto l : d.labels) g[l] = 1.0;
  return g;
}

std::vector<const Document*> Corpus::split(Split s) const {
  std::vector<const Document*> out;
  for (const auto& d : documents)
    if (d.split == s) out.push_back(&d);
  return out;
}

namespace {

constexpr std::uint64_t kSplitStream = 0xFFFFFFFFULL;
constexpr int kMaxAttempts = 64;

std::string make_doc_id(std::size_t i) {
  std::ostringstream os;
  os << 'd' << std::setw(6) << std::setfill('0') << i;
  return os.str();
}

Document generate_document(const GeneratorSpec& spec, std::size_t index, std::uint64_t attempt) {
  CounterRng rng(spec.seed, (attempt << 40) | index);
  const std::size_t m = spec.tokens_per_label;
  const std::size_t noise_lo = spec.n_labels * m;
  const std::size_t noise_span = spec.vocab_size - noise_lo;
  Document doc;
  doc.doc_id = make_doc_id(index);
  const std::size_t len = spec.min_len + rng.below(spec.max_len - spec.min_len + 1);
  std::vector<std::uint32_t> signal;
  for (std::size_t l = 0; l < spec.n_labels; ++l) {
    if (!rng.bernoulli(spec.label_prevalence)) continue;
    doc.labels.push_back(l);
    for (std::size_t r = 0; r < m; ++r) {
      if (rng.bernoulli(spec.noise_rate)) continue;
      signal.push_back(static_cast<std::uint32_t>(l * m + rng.below(m)));
    }
  }
  doc.tokens.resize(len);
  for (auto& t : doc.tokens) t = static_cast<std::uint32_t>(noise_lo + rng.below(noise_span));
  // Partial Fisher-Yates picks distinct positions; extra signal is truncated.
  std::vector<std::size_t> slots(len);
  for (std::size_t i = 0; i < len; ++i) slots[i] = i;
  const std::size_t placed = std::min(signal.size(), len);
  for (std::size_t i = 0; i < placed; ++i) {
    const std::size_t j = i + rng.below(len - i);
    std::swap(slots[i], slots[j]);
    doc.tokens[slots[i]] = signal[i];
  }
  return doc;
}

}  // namespace

Corpus generate(const GeneratorSpec& spec) {
  spec.validate();
  for (std::uint64_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    Corpus c;
    c.vocab_size = spec.vocab_size;
    c.n_labels = spec.n_labels;
    c.documents.reserve(spec.n_docs);
    for (std::size_t i = 0; i < spec.n_docs; ++i) c.documents.push_back(generate_document(spec, i, attempt));
    CounterRng split_rng(spec.seed, kSplitStream - attempt);
    const auto order = permutation(spec.n_docs, split_rng);
    const std::size_t n_train = spec.n_docs * 8 / 10;
    const std::size_t n_val = spec.n_docs / 10;
    for (std::size_t r = 0; r < order.size(); ++r) {
      c.documents[order[r]].split = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
    }
    std::vector<bool> seen(spec.n_labels, false);
    for (const auto& d : c.documents)
      if (d.split == Split::kTrain)
        for (auto l : d.labels) seen[l] = true;
    if (std::all_of(seen.begin(), seen.end(), [](bool b) { return b; })) return c;
  }
  throw ValidationError("could not cover every label in the training split after " + std::to_string(kMaxAttempts) +
                        " attempts; raise n_docs or label_prevalence");
}

std::vector<double> bayes_oracle(std::span<const std::uint32_t> tokens, const GeneratorSpec& spec) {
  const std::size_t m = spec.tokens_per_label;
  std::vector<std::size_t> counts(spec.n_labels, 0);
  for (auto t : tokens) {
    if (t < spec.n_labels * m) ++counts[t / m];
  }
  const double pi = spec.label_prevalence;
  const double miss = pi * std::pow(spec.noise_rate, static_cast<double>(m));
  const double absent_posterior = miss / (miss + (1.0 - pi));
  std::vector<double> scores(spec.n_labels);
  for (std::size_t l = 0; l < spec.n_labels; ++l) scores[l] = counts[l] > 0 ? 1.0 : absent_posterior;
  return scores;
}

void write_corpus(const Corpus& c, std::ostream& os) {
  os << "CORPUS v1 " << c.documents.size() << ' ' << c.vocab_size << ' ' << c.n_labels << '\n';
  for (const auto& d : c.documents) {
    os << d.doc_id << '\t' << split_name(d.split) << '\t';
    if (d.labels.empty()) {
      os << '-';
    } else {
      for (std::size_t i = 0; i < d.labels.size(); ++i) os << (i ? "," : "") << d.labels[i];
    }
    os << '\t';
    for (std::size_t i = 0; i < d.tokens.size(); ++i) os << (i ? " " : "") << d.tokens[i];
    os << '\n';
  }
}

namespace {

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Corpus read_corpus(std::istream& is) {
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(is, line)) throw ParseError("empty corpus file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_on(line, ' ');
  std::uint64_t n_docs = 0, v = 0, c = 0;
  if (header.size() != 5 || header[0] != "CORPUS" || header[1] != "v1" || !parse_u64(header[2], n_docs) ||
      !parse_u64(header[3], v) || !parse_u64(header[4], c)) {
    throw ParseError("malformed CORPUS header '" + line + "'", 1);
  }
  Corpus corpus;
  corpus.vocab_size = v;
  corpus.n_labels = c;
  for (std::uint64_t i = 0; i < n_docs; ++i) {
    if (!std::getline(is, line)) throw ParseError("expected " + std::to_string(n_docs) + " documents", lineno + 1);
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_on(line, '\t');
    if (fields.size() != 4) throw ParseError("expected 4 tab-separated fields", lineno);
    Document d;
    d.doc_id = fields[0];
    try {
      d.split = parse_split(fields[1]);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), lineno);
    }
    if (fields[2] != "-") {
      for (const auto& tok : split_on(fields[2], ',')) {
        std::uint64_t l;
        if (!parse_u64(tok, l) || l >= c) throw ParseError("bad label '" + tok + "'", lineno);
        d.labels.push_back(l);
      }
    }
    for (const auto& tok : split_on(fields[3], ' ')) {
      std::uint64_t t;
      if (!parse_u64(tok, t) || t >= v) throw ParseError("bad token '" + tok + "'", lineno);
      d.tokens.push_back(static_cast<std::uint32_t>(t));
    }
    corpus.documents.push_back(std::move(d));
  }
  return corpus;
}

void save_corpus(const Corpus& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  write_corpus(c, os);
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return read_corpus(is);
}

}  // namespace icd::synth
