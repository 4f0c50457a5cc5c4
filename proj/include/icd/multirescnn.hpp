#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "icd/autodiff.hpp"
#include "icd/params.hpp"

namespace icd::mrcnn {

struct MRCNNConfig {
  std::size_t in_dim = 16;
  std::vector<std::size_t> kernel_sizes = {3, 5, 7};
  std::size_t filters_per_kernel = 32;
  std::size_t n_residual_blocks = 1;
  // Kernel width of both convolutions inside a residual block.
  std::size_t residual_kernel = 3;
  std::size_t n_labels = 50;
  std::uint64_t seed = 11;

  std::size_t feature_dim() const { return filters_per_kernel * kernel_sizes.size(); }
  void validate() const;
};

struct ConvParams {
  Tensor weight;  // [k x c_in x c_out]
  Tensor bias;    // [c_out]
};

struct ResidualBlockParams {
  ConvParams first;
  ConvParams second;
};

struct LabelAttentionParams {
  Tensor U;      // [C x f] per-label attention queries
  Tensor W_out;  // [C x f]
  Tensor b_out;  // [C]
};

class MultiResCnn {
 public:
  explicit MultiResCnn(MRCNNConfig cfg);
  static MultiResCnn zeros(MRCNNConfig cfg);

  const MRCNNConfig& config() const { return cfg_; }
  std::vector<ConvParams>& branches() { return branches_; }
  std::vector<ResidualBlockParams>& blocks() { return blocks_; }
  LabelAttentionParams& attention() { return attention_; }

  void collect(ParamList& out, const std::string& prefix = "mrcnn.");

  // [L x in_dim] -> raw logits [C].
  ad::Var forward(ad::Var e);

 private:
  MultiResCnn(MRCNNConfig cfg, bool random);

  MRCNNConfig cfg_;
  std::vector<ConvParams> branches_;
  std::vector<ResidualBlockParams> blocks_;
  LabelAttentionParams attention_;
};

// Same-padded conv + tanh per kernel size, concatenated along channels.
ad::Var multi_filter_conv(ad::Var e, std::vector<ConvParams>& branches);
// H + conv(tanh(conv(H))), same padding.
ad::Var residual_block(ad::Var h, ResidualBlockParams& p);

struct AttentionOutput {
  ad::Var scores;   // [C]
  ad::Var weights;  // [C x L], rows sum to 1
};

// Per label l: a_l = softmax_t(H U_l), v_l = sum_t a_l[t] H[t],
// score_l = <v_l, W_out_l> + b_out_l.
AttentionOutput label_attention(ad::Var h, LabelAttentionParams& p);

}  // namespace icd::mrcnn
