#pragma once

// Slow reference implementations used only by tests.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <vector>

#include "icd/rng.hpp"
#include "icd/tensor.hpp"

namespace oracle {

inline double f1(double tp, double fp, double fn) {
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

struct F1Pair {
  double macro, micro;
};

inline F1Pair f1_scores(const icd::Tensor& s, const icd::Tensor& g, double thr = 0.5) {
  const std::size_t n = s.dim(0), c = s.dim(1);
  double macro = 0, TP = 0, FP = 0, FN = 0;
  for (std::size_t l = 0; l < c; ++l) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool p = s(i, l) >= thr, y = g(i, l) == 1.0;
      tp += p && y;
      fp += p && !y;
      fn += !p && y;
    }
    macro += f1(tp, fp, fn);
    TP += tp;
    FP += fp;
    FN += fn;
  }
  return {macro / static_cast<double>(c), f1(TP, FP, FN)};
}

// Fraction of (positive, negative) pairs ordered correctly, ties count half.
inline std::optional<double> pair_auc(const std::vector<double>& s, const std::vector<double>& g) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (g[i] != 1.0) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (g[j] == 1.0) continue;
      pairs += 1;
      if (s[i] > s[j]) good += 1;
      else if (s[i] == s[j]) good += 0.5;
    }
  }
  if (pairs == 0) return std::nullopt;
  return good / pairs;
}

struct AucPair {
  std::optional<double> macro, micro;
  std::size_t scored = 0;
};

inline AucPair auc_scores(const icd::Tensor& s, const icd::Tensor& g) {
  const std::size_t n = s.dim(0), c = s.dim(1);
  AucPair out;
  double sum = 0;
  for (std::size_t l = 0; l < c; ++l) {
    std::vector<double> sc, gl;
    for (std::size_t i = 0; i < n; ++i) {
      sc.push_back(s(i, l));
      gl.push_back(g(i, l));
    }
    if (auto a = pair_auc(sc, gl)) {
      sum += *a;
      ++out.scored;
    }
  }
  if (out.scored) out.macro = sum / static_cast<double>(out.scored);
  out.micro = pair_auc(s.storage(), g.storage());
  return out;
}

inline double precision_at_k(const icd::Tensor& s, const icd::Tensor& g, std::size_t k) {
  const std::size_t n = s.dim(0), c = s.dim(1);
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    // Repeated selection of the best remaining label; first index wins ties.
    std::vector<bool> used(c, false);
    double hits = 0;
    for (std::size_t pick = 0; pick < std::min(k, c); ++pick) {
      std::size_t best = c;
      for (std::size_t l = 0; l < c; ++l) {
        if (used[l]) continue;
        if (best == c || s(i, l) > s(i, best)) best = l;
      }
      used[best] = true;
      hits += g(i, best);
    }
    total += hits / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

// Random scores with deliberate ties (values drawn from a coarse grid half
// of the time) and random gold.
inline void random_batch(icd::CounterRng& rng, std::size_t n, std::size_t c, icd::Tensor& s, icd::Tensor& g) {
  s = icd::Tensor({n, c});
  g = icd::Tensor({n, c});
  const bool coarse = rng.bernoulli(0.5);
  const double rate = 0.05 + 0.5 * rng.uniform();
  for (std::size_t i = 0; i < n * c; ++i) {
    s[i] = coarse ? static_cast<double>(rng.below(5)) / 4.0 : rng.uniform();
    g[i] = rng.bernoulli(rate) ? 1.0 : 0.0;
  }
}

}  // namespace oracle
