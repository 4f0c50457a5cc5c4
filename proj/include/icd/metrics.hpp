#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>

#include "icd/tensor.hpp"

namespace icd::metrics {

// scores: [N x C] probabilities (already passed through a sigmoid);
// gold: [N x C] entries in {0,1}. A label is predicted when
// score >= threshold.
struct EvalBatch {
  Tensor scores;
  Tensor gold;
  double threshold = 0.5;

  std::size_t n_docs() const { return scores.dim(0); }
  std::size_t n_labels() const { return scores.dim(1); }
  void validate() const;
};

struct F1 {
  double macro = 0.0;
  double micro = 0.0;
};

// Undefined averages (no label or pool with both classes) are nullopt.
struct Auc {
  std::optional<double> macro;
  std::optional<double> micro;
  std::size_t n_labels_scored = 0;
};

struct MetricsReport {
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  std::optional<double> auc_macro;
  std::optional<double> auc_micro;
  // Only k <= C are present, except P@5 which is always reported.
  std::map<std::size_t, double> p_at;
  std::size_t n_labels_scored_macro = 0;
};

inline constexpr std::size_t kReportedK[] = {5, 8, 15};

F1 f1_scores(const EvalBatch& b);
Auc auc_scores(const EvalBatch& b);
double precision_at_k(const EvalBatch& b, std::size_t k);
MetricsReport full_report(const EvalBatch& b);

// Mann-Whitney AUC with mid-ranks for ties. nullopt when either class is
// empty.
std::optional<double> rank_auc(std::span<const double> scores, std::span<const double> gold);

// Fixed-order `name<TAB>value` lines, values with 6 decimals, undefined
// values written as `undefined`.
std::string render_report(const MetricsReport& r);

}  // namespace icd::metrics
