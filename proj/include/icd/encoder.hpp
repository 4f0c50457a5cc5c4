#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "icd/posenc.hpp"
#include "icd/tensor.hpp"

namespace icd::encoder {

struct EncoderConfig {
  std::size_t vocab_size = 2000;
  std::size_t model_dim = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 2;
  // posenc.head_dim is overwritten with model_dim / n_heads.
  posenc::PosEncConfig posenc;
  std::uint64_t seed = 1234;

  std::size_t head_dim() const { return n_heads ? model_dim / n_heads : 0; }
  std::size_t ffn_dim() const { return 2 * model_dim; }
  posenc::PosEncConfig head_posenc() const;
  void validate() const;
};

struct EmbeddingSequence {
  std::string doc_id;
  // [L x model_dim]
  Tensor matrix;

  std::size_t length() const { return matrix.dim(0); }
  std::size_t dim() const { return matrix.dim(1); }
};

enum class Pooling { kMean, kLast };
Pooling parse_pooling(const std::string& name);
const char* pooling_name(Pooling p);

// Frozen toy decoder stack: token embedding, then n_layers of pre-norm
// causal multi-head attention with rotary queries/keys and a gated
// feed-forward block, both residual, then a final RMS norm. All weights are
// drawn once from the seed.
class Encoder {
 public:
  explicit Encoder(EncoderConfig cfg);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t context_limit() const { return context_limit_; }

  EmbeddingSequence encode(std::string doc_id, std::span<const std::uint32_t> tokens) const;

 private:
  struct Layer {
    Tensor wq, wk, wv, wo;
    Tensor w_gate, w_up, w_down;
  };

  Tensor attention(const Tensor& h, const Layer& layer) const;

  EncoderConfig cfg_;
  posenc::PosEncConfig head_pe_;
  std::size_t context_limit_;
  Tensor embedding_;
  std::vector<Layer> layers_;
};

// Convenience wrapper that builds the encoder from cfg on every call.
EmbeddingSequence encode_document(std::span<const std::uint32_t> tokens, const EncoderConfig& cfg,
                                  std::string doc_id = "");

// [model_dim] summary of a sequence: mean of rows or the last row.
Tensor pool(const EmbeddingSequence& e, Pooling method);

// EMB v1 text format: header `EMB v1 <n_docs> <dim>`, then per document a
// `<doc_id>\t<L>` line followed by L rows of dim space-separated values in
// shortest round-trip form.
void save_embeddings(const std::vector<EmbeddingSequence>& seqs, const std::filesystem::path& path);
std::vector<EmbeddingSequence> load_embeddings(const std::filesystem::path& path);
void write_embeddings(const std::vector<EmbeddingSequence>& seqs, std::ostream& os, std::size_t dim);
std::vector<EmbeddingSequence> read_embeddings(std::istream& is);

}  // namespace icd::encoder
