#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icd/autodiff.hpp"
#include "icd/encoder.hpp"
#include "icd/params.hpp"

namespace icd::dimreduce {

enum class Strategy { kCnnChain, kResidual };

const char* strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

struct ReductionConfig {
  Strategy strategy = Strategy::kCnnChain;
  // Channel sizes of the CNN chain, input first. A single entry means no
  // reduction layers.
  std::vector<std::size_t> cnn_dims = {64, 32, 16};
  // Residual strategy: input dim, layer count and output dim.
  std::size_t residual_in_dim = 64;
  std::size_t K = 2;
  std::size_t residual_out_dim = 16;
  std::uint64_t seed = 7;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  void validate() const;
};

// Named ablation presets: CNN-1024, CNN-768, CNN-512, CNN-300, CNN-100,
// CNN-1024_map_256, Residual-4096 and Residual-128. With paper_dims the
// nominal sizes are used verbatim (input_dim should be 4096); otherwise each
// nominal size x is mapped to round(input_dim * sqrt(x / 4096)), which sends
// 4096 -> 1024 -> 256 onto 64 -> 32 -> 16 for a 64-wide input.
ReductionConfig reduction_preset(const std::string& name, std::size_t input_dim, bool paper_dims = false);
std::vector<std::string> preset_names();
std::size_t desk_dim(std::size_t nominal, std::size_t input_dim);

struct CnnStage {
  Tensor weight;  // [1 x d_in x d_out]
  Tensor bias;    // [d_out]
};

// ResLayer(x) = relu(x W1 + b1) W2 + b2 + x P.
struct ResidualLayer {
  Tensor w1;    // [d_in x d_out]
  Tensor b1;    // [d_out]
  Tensor w2;    // [d_out x d_out]
  Tensor b2;    // [d_out]
  Tensor proj;  // [d_in x d_out]
};

class Reducer {
 public:
  explicit Reducer(ReductionConfig cfg);
  // Same shapes with every parameter zero.
  static Reducer zeros(ReductionConfig cfg);

  const ReductionConfig& config() const { return cfg_; }
  std::vector<CnnStage>& stages() { return stages_; }
  std::vector<ResidualLayer>& layers() { return layers_; }

  void collect(ParamList& out, const std::string& prefix = "reduce.");

  // [L x input_dim] -> [L x output_dim] using the configured strategy.
  ad::Var forward(ad::Var x);

 private:
  Reducer(ReductionConfig cfg, bool random);

  ReductionConfig cfg_;
  std::vector<CnnStage> stages_;
  std::vector<ResidualLayer> layers_;
};

// Kernel-1 convolution + relu per consecutive pair of cnn_dims.
ad::Var cnn_reduce(ad::Var x, std::vector<CnnStage>& stages);
// relu(ResLayer_k(x)) for a single layer.
ad::Var residual_term(ad::Var x, ResidualLayer& layer);
// Sum over k of relu(ResLayer_k(x)).
ad::Var residual_reduce(ad::Var x, std::vector<ResidualLayer>& layers);

// Value-level convenience: runs the reducer on a sequence without tracking
// gradients.
encoder::EmbeddingSequence reduce(const encoder::EmbeddingSequence& e, Reducer& reducer);

}  // namespace icd::dimreduce
