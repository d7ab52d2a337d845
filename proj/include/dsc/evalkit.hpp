#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsc {

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;
};

// Per-class precision/recall/F1 plus support-weighted aggregates. Empty
// denominators score 0. confusion[t][p] counts samples with true class t
// predicted as p, so each row sums to that class's support.
struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  std::vector<std::vector<long>> confusion;
  double weighted_precision = 0.0;
  double weighted_recall = 0.0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  long total = 0;
};

MetricsReport compute_metrics(const std::vector<int>& y_true,
                              const std::vector<int>& y_pred, int n_classes);

double weighted_f1(const std::vector<int>& y_true,
                   const std::vector<int>& y_pred, int n_classes);

// Human-readable table, one row per named class plus the aggregates.
std::string format_report(const MetricsReport& r,
                          const std::vector<std::string>& names);

struct FoldItem {
  std::string patient;
  int class_id = 0;
};

// Assigns each item a fold in [0, k) such that items of one patient always
// share a fold. Patients are placed greedily, largest first, onto the fold
// that keeps per-class counts most even; the seed only breaks ordering ties.
// Throws when k < 2 or fewer than k distinct patients exist.
std::vector<int> stratified_patient_folds(const std::vector<FoldItem>& items,
                                          int k, uint64_t seed);

struct WilcoxonResult {
  double statistic = 0.0;  // rank sum of positive differences
  double p_value = 1.0;    // two-sided
  long n = 0;              // pairs kept after dropping zero differences
  bool exact = true;
};

// Paired two-sided signed-rank test. Zero differences are dropped; tied
// absolute differences receive averaged ranks. Up to 20 kept pairs the null
// distribution is enumerated exactly, above that a normal approximation with
// tie correction is used. All-zero differences throw std::domain_error.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

}  // namespace dsc
