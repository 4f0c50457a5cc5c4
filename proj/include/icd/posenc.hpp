#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "icd/tensor.hpp"

namespace icd::posenc {

enum class Mode { kPaperLiteral, kStandard };

const char* mode_name(Mode mode);
Mode parse_mode(const std::string& name);

struct PosEncConfig {
  std::size_t head_dim = 32;
  double rope_base = 10000.0;
  std::size_t original_context = 128;
  // Context scaling factor; >= 1.
  double alpha = 2.0;
  // Adjustment coefficient of the literal log-scaled encoding.
  double rho = 1.0;
  Mode mode = Mode::kStandard;

  void validate() const;
};

// floor(original_context * alpha).
std::size_t scaled_context(const PosEncConfig& cfg);

// base^(-2j / head_dim) for j < head_dim / 2; divided by alpha in standard
// mode (positional interpolation), unchanged in paper-literal mode.
std::vector<double> rope_frequencies(const PosEncConfig& cfg);

// Rotates each consecutive pair (x[2j], x[2j+1]) of row t by
// positions[t] * freq[j].
Tensor rope_apply(const Tensor& x, std::span<const std::size_t> positions, const PosEncConfig& cfg);

// Literal log-scaled encoding: beta = ln(alpha) * rho, returns
// (sin(pos * beta), cos(pos * beta)). Only valid in paper-literal mode.
std::pair<double, double> paper_pe(std::size_t pos, const PosEncConfig& cfg);

}  // namespace icd::posenc
