#pragma once

#include <cstdint>
#include <string>

#include "icd/autodiff.hpp"
#include "icd/params.hpp"

namespace icd::head {

enum class HeadMode { kSoftmaxCe, kSigmoidBce };

const char* mode_name(HeadMode m);
HeadMode parse_mode(const std::string& name);

// Label-space presets: top-50 codes, and a configurable full-code count.
inline constexpr std::size_t kTopCodes = 50;

struct HeadParams {
  Tensor W_h;  // [C x d]
  Tensor b;    // [C]
  HeadMode mode = HeadMode::kSigmoidBce;

  static HeadParams init(std::size_t d, std::size_t n_labels, HeadMode mode, std::uint64_t seed);
  static HeadParams zeros(std::size_t d, std::size_t n_labels, HeadMode mode);

  std::size_t input_dim() const { return W_h.dim(1); }
  std::size_t n_labels() const { return W_h.dim(0); }
  void collect(ParamList& out, const std::string& prefix = "head.");
};

// softmax(W_h h + b) in softmax_ce mode, raw logits W_h h + b otherwise.
ad::Var head_forward(ad::Var h, HeadParams& p);

// outputs: [N x C] rows from head_forward. Softmax mode needs one-hot rows,
// sigmoid mode multi-hot rows.
ad::Var head_loss(ad::Var outputs, const Tensor& targets, const HeadParams& p);

}  // namespace icd::head
