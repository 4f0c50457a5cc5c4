#include "icd/posenc.hpp"

#include <cmath>
#include <string>

#include "icd/error.hpp"

namespace icd::posenc {

const char* mode_name(Mode mode) { return mode == Mode::kPaperLiteral ? "paper_literal" : "standard"; }

Mode parse_mode(const std::string& name) {
  if (name == "paper_literal") return Mode::kPaperLiteral;
  if (name == "standard") return Mode::kStandard;
  throw ValidationError("unknown positional encoding mode '" + name + "'");
}

void PosEncConfig::validate() const {
  if (head_dim == 0 || head_dim % 2 != 0) {
    throw ValidationError("head_dim must be even and positive, got " + std::to_string(head_dim));
  }
  if (!(alpha >= 1.0)) throw ValidationError("alpha must be >= 1, got " + std::to_string(alpha));
  if (original_context == 0) throw ValidationError("original context must be positive");
  if (!(rope_base > 0.0)) throw ValidationError("rope_base must be positive");
}

std::size_t scaled_context(const PosEncConfig& cfg) {
  if (!(cfg.alpha >= 1.0)) throw ValidationError("alpha must be >= 1, got " + std::to_string(cfg.alpha));
  return static_cast<std::size_t>(std::floor(static_cast<double>(cfg.original_context) * cfg.alpha));
}

std::vector<double> rope_frequencies(const PosEncConfig& cfg) {
  cfg.validate();
  const std::size_t half = cfg.head_dim / 2;
  std::vector<double> freqs(half);
  for (std::size_t j = 0; j < half; ++j) {
    const double exponent = -2.0 * static_cast<double>(j) / static_cast<double>(cfg.head_dim);
    freqs[j] = std::pow(cfg.rope_base, exponent);
    if (cfg.mode == Mode::kStandard) freqs[j] /= cfg.alpha;
  }
  return freqs;
}

Tensor rope_apply(const Tensor& x, std::span<const std::size_t> positions, const PosEncConfig& cfg) {
  if (cfg.head_dim % 2 != 0) throw ValidationError("rope_apply: odd head_dim " + std::to_string(cfg.head_dim));
  if (x.rank() != 2 || x.dim(1) != cfg.head_dim || positions.size() != x.dim(0)) {
    throw DimensionError("rope_apply: input " + shape_to_string(x.shape()) + " with " +
                         std::to_string(positions.size()) + " positions and head_dim " +
                         std::to_string(cfg.head_dim));
  }
  const auto freqs = rope_frequencies(cfg);
  Tensor out = x;
  for (std::size_t t = 0; t < x.dim(0); ++t) {
    if (positions[t] == 0) continue;
    const double pos = static_cast<double>(positions[t]);
    for (std::size_t j = 0; j < freqs.size(); ++j) {
      const double angle = pos * freqs[j];
      const double c = std::cos(angle), s = std::sin(angle);
      const double a = x(t, 2 * j), b = x(t, 2 * j + 1);
      out(t, 2 * j) = a * c - b * s;
      out(t, 2 * j + 1) = a * s + b * c;
    }
  }
  return out;
}

std::pair<double, double> paper_pe(std::size_t pos, const PosEncConfig& cfg) {
  if (cfg.mode != Mode::kPaperLiteral) throw ModeError("paper_pe requires paper_literal mode");
  if (!(cfg.alpha >= 1.0)) throw ValidationError("alpha must be >= 1, got " + std::to_string(cfg.alpha));
  const double beta = std::log(cfg.alpha) * cfg.rho;
  const double angle = static_cast<double>(pos) * beta;
  return {std::sin(angle), std::cos(angle)};
}

}  // namespace icd::posenc
