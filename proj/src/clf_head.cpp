#include "icd/clf_head.hpp"

#include <cmath>

#include "icd/error.hpp"

namespace icd::head {

const char* mode_name(HeadMode m) { return m == HeadMode::kSoftmaxCe ? "softmax_ce" : "sigmoid_bce"; }

HeadMode parse_mode(const std::string& name) {
  if (name == "softmax_ce") return HeadMode::kSoftmaxCe;
  if (name == "sigmoid_bce") return HeadMode::kSigmoidBce;
  throw ValidationError("unknown head mode '" + name + "'");
}

HeadParams HeadParams::init(std::size_t d, std::size_t n_labels, HeadMode mode, std::uint64_t seed) {
  HeadParams p = zeros(d, n_labels, mode);
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  init_uniform(p.W_h, bound, seed, 0);
  init_uniform(p.b, bound, seed, 1);
  return p;
}

HeadParams HeadParams::zeros(std::size_t d, std::size_t n_labels, HeadMode mode) {
  if (d == 0 || n_labels == 0) throw ValidationError("head dimensions must be positive");
  return HeadParams{Tensor({n_labels, d}), Tensor({n_labels}), mode};
}

void HeadParams::collect(ParamList& out, const std::string& prefix) {
  out.push_back({prefix + "W_h", &W_h});
  out.push_back({prefix + "b", &b});
}

ad::Var head_forward(ad::Var h, HeadParams& p) {
  ad::Graph& g = *h.graph;
  if (h.shape().size() != 1 || h.shape()[0] != p.input_dim()) {
    throw ValidationError("head expects a vector of length " + std::to_string(p.input_dim()) + ", got " +
                          shape_to_string(h.shape()));
  }
  const std::size_t c = p.n_labels(), d = p.input_dim();
  ad::Var column = ad::reshape(h, {d, 1});
  ad::Var logits = ad::add(ad::reshape(ad::matmul(g.parameter(p.W_h), column), {c}), g.parameter(p.b));
  return p.mode == HeadMode::kSoftmaxCe ? ad::softmax(logits) : logits;
}

ad::Var head_loss(ad::Var outputs, const Tensor& targets, const HeadParams& p) {
  if (p.mode == HeadMode::kSoftmaxCe) {
    try {
      return ad::cross_entropy(outputs, targets);
    } catch (const ValidationError& e) {
      throw ValidationError(std::string("softmax_ce mode needs one-hot targets: ") + e.what());
    }
  }
  return ad::binary_cross_entropy(ad::sigmoid(outputs), targets);
}

}  // namespace icd::head
