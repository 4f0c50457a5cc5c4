#include "icd/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <vector>

#include "icd/error.hpp"
#include "icd/format.hpp"

namespace icd::metrics {

void EvalBatch::validate() const {
  if (scores.rank() != 2 || scores.shape() != gold.shape()) {
    throw DimensionError("eval batch shapes differ: scores " + shape_to_string(scores.shape()) + ", gold " +
                         shape_to_string(gold.shape()));
  }
  for (double g : gold.data()) {
    if (g != 0.0 && g != 1.0) throw ValidationError("gold entries must be 0 or 1");
  }
}

namespace {

double f1_from_counts(double tp, double fp, double fn) {
  const double denom = 2.0 * tp + fp + fn;
  return denom > 0.0 ? 2.0 * tp / denom : 0.0;
}

}  // namespace

F1 f1_scores(const EvalBatch& b) {
  b.validate();
  const std::size_t n = b.n_docs(), c = b.n_labels();
  std::vector<double> tp(c, 0.0), fp(c, 0.0), fn(c, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t l = 0; l < c; ++l) {
      const bool pred = b.scores(i, l) >= b.threshold;
      const bool gold = b.gold(i, l) == 1.0;
      if (pred && gold) tp[l] += 1;
      else if (pred) fp[l] += 1;
      else if (gold) fn[l] += 1;
    }
  }
  F1 out;
  double macro = 0.0;
  for (std::size_t l = 0; l < c; ++l) macro += f1_from_counts(tp[l], fp[l], fn[l]);
  out.macro = macro / static_cast<double>(c);
  const double stp = std::accumulate(tp.begin(), tp.end(), 0.0);
  const double sfp = std::accumulate(fp.begin(), fp.end(), 0.0);
  const double sfn = std::accumulate(fn.begin(), fn.end(), 0.0);
  out.micro = f1_from_counts(stp, sfp, sfn);
  return out;
}

std::optional<double> rank_auc(std::span<const double> scores, std::span<const double> gold) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos = 0.0, rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Mid-rank of the tie group [i, j), ranks are 1-based.
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (gold[order[t]] == 1.0) {
        pos += 1.0;
        rank_sum += mid;
      }
    }
    i = j;
  }
  const double neg = static_cast<double>(n) - pos;
  if (pos == 0.0 || neg == 0.0) return std::nullopt;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

Auc auc_scores(const EvalBatch& b) {
  b.validate();
  const std::size_t n = b.n_docs(), c = b.n_labels();
  Auc out;
  double total = 0.0;
  std::vector<double> s(n), g(n);
  for (std::size_t l = 0; l < c; ++l) {
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = b.scores(i, l);
      g[i] = b.gold(i, l);
    }
    if (auto a = rank_auc(s, g)) {
      total += *a;
      ++out.n_labels_scored;
    }
  }
  if (out.n_labels_scored > 0) out.macro = total / static_cast<double>(out.n_labels_scored);
  out.micro = rank_auc(b.scores.data(), b.gold.data());
  return out;
}

double precision_at_k(const EvalBatch& b, std::size_t k) {
  b.validate();
  if (k == 0) throw ValidationError("precision_at_k needs k >= 1");
  const std::size_t n = b.n_docs(), c = b.n_labels();
  const std::size_t take = std::min(k, c);
  std::vector<std::size_t> order(c);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto row = b.scores.row(i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t z) { return row[a] > row[z] || (row[a] == row[z] && a < z); });
    double hits = 0.0;
    for (std::size_t t = 0; t < take; ++t) hits += b.gold(i, order[t]);
    total += hits / static_cast<double>(k);
  }
  return total / static_cast<double>(n);
}

MetricsReport full_report(const EvalBatch& b) {
  MetricsReport r;
  const F1 f1 = f1_scores(b);
  r.f1_macro = f1.macro;
  r.f1_micro = f1.micro;
  const Auc auc = auc_scores(b);
  r.auc_macro = auc.macro;
  r.auc_micro = auc.micro;
  r.n_labels_scored_macro = auc.n_labels_scored;
  for (std::size_t k : kReportedK) {
    if (k == 5 || b.n_labels() >= k) r.p_at[k] = precision_at_k(b, k);
  }
  return r;
}

std::string render_report(const MetricsReport& r) {
  std::ostringstream os;
  auto line = [&](const char* name, std::optional<double> v) {
    os << name << '\t' << (v ? format_fixed(*v, 6) : std::string("undefined")) << '\n';
  };
  auto p_at = [&](std::size_t k) -> std::optional<double> {
    auto it = r.p_at.find(k);
    if (it == r.p_at.end()) return std::nullopt;
    return it->second;
  };
  line("f1_macro", r.f1_macro);
  line("f1_micro", r.f1_micro);
  line("auc_macro", r.auc_macro);
  line("auc_micro", r.auc_micro);
  line("p_at_5", p_at(5));
  line("p_at_8", p_at(8));
  line("p_at_15", p_at(15));
  line("n_labels_scored_macro", static_cast<double>(r.n_labels_scored_macro));
  return os.str();
}

}  // namespace icd::metrics
