#include "icd/multirescnn.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "icd/error.hpp"

namespace icd::mrcnn {

void MRCNNConfig::validate() const {
  if (in_dim == 0) throw ValidationError("mrcnn in_dim must be positive");
  if (kernel_sizes.empty()) throw ValidationError("mrcnn needs at least one kernel size");
  std::set<std::size_t> seen;
  for (auto k : kernel_sizes) {
    if (k % 2 == 0) throw ValidationError("kernel sizes must be odd, got " + std::to_string(k));
    if (!seen.insert(k).second) throw ValidationError("kernel sizes must be distinct, " + std::to_string(k) + " repeats");
  }
  if (residual_kernel % 2 == 0) throw ValidationError("residual kernel must be odd");
  if (filters_per_kernel == 0) throw ValidationError("filters_per_kernel must be positive");
  if (n_labels == 0) throw ValidationError("n_labels must be at least 1");
}

MultiResCnn::MultiResCnn(MRCNNConfig cfg) : MultiResCnn(std::move(cfg), true) {}

MultiResCnn MultiResCnn::zeros(MRCNNConfig cfg) { return MultiResCnn(std::move(cfg), false); }

MultiResCnn::MultiResCnn(MRCNNConfig cfg, bool random) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::uint64_t stream = 0;
  auto make = [&](Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    if (random) init_uniform(t, 1.0 / std::sqrt(static_cast<double>(fan_in)), cfg_.seed, stream);
    ++stream;
    return t;
  };
  const std::size_t f = cfg_.feature_dim(), fk = cfg_.filters_per_kernel;
  for (auto k : cfg_.kernel_sizes) {
    branches_.push_back({make({k, cfg_.in_dim, fk}, k * cfg_.in_dim), make({fk}, k * cfg_.in_dim)});
  }
  const std::size_t rk = cfg_.residual_kernel;
  for (std::size_t b = 0; b < cfg_.n_residual_blocks; ++b) {
    ResidualBlockParams p;
    p.first = {make({rk, f, f}, rk * f), make({f}, rk * f)};
    p.second = {make({rk, f, f}, rk * f), make({f}, rk * f)};
    blocks_.push_back(std::move(p));
  }
  attention_.U = make({cfg_.n_labels, f}, f);
  attention_.W_out = make({cfg_.n_labels, f}, f);
  attention_.b_out = make({cfg_.n_labels}, f);
}

void MultiResCnn::collect(ParamList& out, const std::string& prefix) {
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    const std::string p = prefix + "branch" + std::to_string(cfg_.kernel_sizes[i]) + ".";
    out.push_back({p + "weight", &branches_[i].weight});
    out.push_back({p + "bias", &branches_[i].bias});
  }
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    const std::string p = prefix + "block" + std::to_string(b) + ".";
    out.push_back({p + "conv1.weight", &blocks_[b].first.weight});
    out.push_back({p + "conv1.bias", &blocks_[b].first.bias});
    out.push_back({p + "conv2.weight", &blocks_[b].second.weight});
    out.push_back({p + "conv2.bias", &blocks_[b].second.bias});
  }
  out.push_back({prefix + "attention.U", &attention_.U});
  out.push_back({prefix + "attention.W_out", &attention_.W_out});
  out.push_back({prefix + "attention.b_out", &attention_.b_out});
}

ad::Var multi_filter_conv(ad::Var e, std::vector<ConvParams>& branches) {
  ad::Graph& g = *e.graph;
  std::vector<ad::Var> parts;
  parts.reserve(branches.size());
  for (auto& b : branches) {
    parts.push_back(ad::tanh(ad::conv1d(e, g.parameter(b.weight), g.parameter(b.bias), ad::Padding::kSame)));
  }
  return parts.size() == 1 ? parts.front() : ad::concat_cols(parts);
}

ad::Var residual_block(ad::Var h, ResidualBlockParams& p) {
  ad::Graph& g = *h.graph;
  ad::Var inner = ad::tanh(ad::conv1d(h, g.parameter(p.first.weight), g.parameter(p.first.bias), ad::Padding::kSame));
  ad::Var outer = ad::conv1d(inner, g.parameter(p.second.weight), g.parameter(p.second.bias), ad::Padding::kSame);
  return ad::add(h, outer);
}

AttentionOutput label_attention(ad::Var h, LabelAttentionParams& p) {
  ad::Graph& g = *h.graph;
  if (h.shape().size() != 2 || h.shape()[1] != p.U.dim(1)) {
    throw DimensionError("label attention expects features of width " + std::to_string(p.U.dim(1)) + ", got " +
                         shape_to_string(h.shape()));
  }
  ad::Var weights = ad::softmax(ad::matmul(g.parameter(p.U), ad::transpose(h)));  // [C x L]
  ad::Var pooled = ad::matmul(weights, h);                                        // [C x f]
  ad::Var scores = ad::add(ad::row_sum(ad::mul(pooled, g.parameter(p.W_out))), g.parameter(p.b_out));
  return {scores, weights};
}

ad::Var MultiResCnn::forward(ad::Var e) {
  if (e.shape().size() != 2 || e.shape()[1] != cfg_.in_dim) {
    throw ValidationError("mrcnn expects input width " + std::to_string(cfg_.in_dim) + ", got " +
                          shape_to_string(e.shape()));
  }
  ad::Var h = multi_filter_conv(e, branches_);
  for (auto& b : blocks_) h = residual_block(h, b);
  return label_attention(h, attention_).scores;
}

}  // namespace icd::mrcnn
