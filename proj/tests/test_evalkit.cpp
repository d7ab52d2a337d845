#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "dsc/evalkit.hpp"
#include "dsc/rng.hpp"

using namespace dsc;

namespace {

// Straight-line two-sided signed-rank p-value: average ranks over |d|, then
// the exact null by enumerating every sign assignment.
double enumerated_p(const std::vector<double>& a,
                    const std::vector<double>& b) {
  std::vector<double> d;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  size_t n = d.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return std::fabs(d[x]) < std::fabs(d[y]);
  });
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n &&
           std::fabs(d[order[j + 1]]) == std::fabs(d[order[i]]))
      ++j;
    double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double w = 0.0;
  for (size_t k = 0; k < n; ++k)
    if (d[k] > 0) w += rank[k];
  long lo = 0, hi = 0, total = 1L << n;
  for (long mask = 0; mask < total; ++mask) {
    double s = 0.0;
    for (size_t k = 0; k < n; ++k)
      if (mask & (1L << k)) s += rank[k];
    if (s <= w) ++lo;
    if (s >= w) ++hi;
  }
  double p = 2.0 * std::min(lo, hi) / static_cast<double>(total);
  return std::min(1.0, p);
}

}  // namespace

TEST_CASE("metrics match the hand-worked two-class table") {
  // labels [a,a,b,b], preds [a,b,b,b]
  std::vector<int> t = {0, 0, 1, 1}, p = {0, 1, 1, 1};
  MetricsReport r = compute_metrics(t, p, 2);
  CHECK(r.per_class[0].precision == doctest::Approx(1.0));
  CHECK(r.per_class[0].recall == doctest::Approx(0.5));
  CHECK(r.per_class[0].f1 == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].precision == doctest::Approx(2.0 / 3.0));
  CHECK(r.per_class[1].recall == doctest::Approx(1.0));
  CHECK(r.per_class[1].f1 == doctest::Approx(0.8));
  CHECK(std::fabs(r.weighted_f1 - 0.7333) < 5e-5);
  CHECK(weighted_f1(t, p, 2) == doctest::Approx(r.weighted_f1));
  CHECK(r.accuracy == doctest::Approx(0.75));
  CHECK(r.total == 4);
}

TEST_CASE("metric edge cases") {
  CHECK(weighted_f1({0, 1, 2, 1}, {0, 1, 2, 1}, 3) == doctest::Approx(1.0));
  CHECK(weighted_f1({0, 0, 1, 1}, {1, 1, 0, 0}, 2) == doctest::Approx(0.0));
  CHECK_THROWS_AS(compute_metrics({0}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({0, 2}, {0, 1}, 2), std::invalid_argument);
  CHECK_THROWS_AS(compute_metrics({}, {}, 2), std::invalid_argument);
}

TEST_CASE("confusion rows sum to support and weighted recall is accuracy") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    int n_classes = static_cast<int>(rng.uniform_int(2, 8));
    long n = rng.uniform_int(5, 60);
    std::vector<int> t(static_cast<size_t>(n)), p(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) {
      t[static_cast<size_t>(i)] =
          static_cast<int>(rng.uniform_int(0, n_classes - 1));
      p[static_cast<size_t>(i)] =
          static_cast<int>(rng.uniform_int(0, n_classes - 1));
    }
    MetricsReport r = compute_metrics(t, p, n_classes);
    long diag = 0;
    for (int c = 0; c < n_classes; ++c) {
      long row = 0;
      for (int q = 0; q < n_classes; ++q)
        row += r.confusion[static_cast<size_t>(c)][static_cast<size_t>(q)];
      CHECK(row == r.per_class[static_cast<size_t>(c)].support);
      diag += r.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)];
    }
    CHECK(r.accuracy == doctest::Approx(static_cast<double>(diag) / n));
    CHECK(r.weighted_recall == doctest::Approx(r.accuracy));
  }
}

TEST_CASE("weighted f1 is invariant to relabeling") {
  Rng rng(11);
  std::vector<int> perm = {2, 0, 3, 1};
  std::vector<int> t, p;
  for (int i = 0; i < 80; ++i) {
    t.push_back(static_cast<int>(rng.uniform_int(0, 3)));
    p.push_back(static_cast<int>(rng.uniform_int(0, 3)));
  }
  std::vector<int> t2, p2;
  for (size_t i = 0; i < t.size(); ++i) {
    t2.push_back(perm[static_cast<size_t>(t[i])]);
    p2.push_back(perm[static_cast<size_t>(p[i])]);
  }
  CHECK(weighted_f1(t, p, 4) == doctest::Approx(weighted_f1(t2, p2, 4)));
}

TEST_CASE("report formatting names every class") {
  MetricsReport r = compute_metrics({0, 1, 1}, {0, 1, 0}, 2);
  std::string s = format_report(r, {"alpha", "beta"});
  CHECK(s.find("alpha") != std::string::npos);
  CHECK(s.find("beta") != std::string::npos);
  CHECK(s.find("weighted") != std::string::npos);
}

TEST_CASE("patient folds never split a patient and balance classes") {
  std::vector<FoldItem> items;
  for (int p = 0; p < 100; ++p)
    for (int j = 0; j < 4; ++j)
      items.push_back({"P" + std::to_string(p), (p * 4 + j) % 13});

  std::vector<int> folds = stratified_patient_folds(items, 5, 3);
  REQUIRE(folds.size() == items.size());
  std::map<std::string, std::set<int>> by_patient;
  std::vector<std::vector<long>> counts(5, std::vector<long>(13, 0));
  for (size_t i = 0; i < items.size(); ++i) {
    CHECK(folds[i] >= 0);
    CHECK(folds[i] < 5);
    by_patient[items[i].patient].insert(folds[i]);
    ++counts[static_cast<size_t>(folds[i])]
            [static_cast<size_t>(items[i].class_id)];
  }
  for (const auto& [patient, fold_set] : by_patient)
    CHECK(fold_set.size() == 1);
  // Per-fold class proportions stay within 20% relative of the global mean.
  for (int c = 0; c < 13; ++c) {
    double global = 400.0 / 13.0 / 5.0;
    for (int f = 0; f < 5; ++f) {
      double got = static_cast<double>(
          counts[static_cast<size_t>(f)][static_cast<size_t>(c)]);
      CHECK(std::fabs(got - global) <= 0.2 * global + 1.0);
    }
  }

  CHECK(stratified_patient_folds(items, 5, 3) == folds);  // same seed
}

TEST_CASE("fold count edge cases") {
  std::vector<FoldItem> items = {{"A", 0}, {"B", 1}, {"C", 0}};
  std::vector<int> folds = stratified_patient_folds(items, 3, 1);
  std::set<int> used(folds.begin(), folds.end());
  CHECK(used.size() == 3);  // k patients, k folds: one patient per fold
  CHECK_THROWS_AS(stratified_patient_folds(items, 4, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS(stratified_patient_folds(items, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("signed rank test matches frozen small cases") {
  WilcoxonResult r =
      wilcoxon_signed_rank({1, 2, 3, 4, 5}, {0, 1, 2, 3, 4.5});
  CHECK(r.n == 5);
  CHECK(r.exact);
  CHECK(r.statistic == doctest::Approx(15.0));
  CHECK(r.p_value == doctest::Approx(0.0625));

  WilcoxonResult even = wilcoxon_signed_rank({1, 0}, {0, 1});
  CHECK(even.p_value == doctest::Approx(1.0));

  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2}, {1, 2}), std::domain_error);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2}, {1}), std::invalid_argument);
}

TEST_CASE("signed rank exact p equals full enumeration") {
  Rng rng(23);
  for (int rep = 0; rep < 60; ++rep) {
    long n = rng.uniform_int(2, 10);
    std::vector<double> a, b;
    for (long i = 0; i < n; ++i) {
      // Coarse grid so ties and zero differences occur often.
      a.push_back(rng.uniform_int(0, 4));
      b.push_back(rng.uniform_int(0, 4));
    }
    bool all_equal = true;
    for (long i = 0; i < n; ++i)
      if (a[static_cast<size_t>(i)] != b[static_cast<size_t>(i)])
        all_equal = false;
    if (all_equal) continue;
    WilcoxonResult r = wilcoxon_signed_rank(a, b);
    CHECK(r.exact);
    CHECK(r.p_value == doctest::Approx(enumerated_p(a, b)).epsilon(1e-12));
    CHECK(r.p_value > 0.0);
    CHECK(r.p_value <= 1.0);
  }
}

TEST_CASE("signed rank p is symmetric under swapping the samples") {
  Rng rng(29);
  std::vector<double> a, b;
  for (int i = 0; i < 12; ++i) {
    a.push_back(rng.uniform(0, 1));
    b.push_back(rng.uniform(0, 1));
  }
  WilcoxonResult ab = wilcoxon_signed_rank(a, b);
  WilcoxonResult ba = wilcoxon_signed_rank(b, a);
  CHECK(ab.p_value == doctest::Approx(ba.p_value).epsilon(1e-12));
}

TEST_CASE("signed rank uses the normal tail for large samples") {
  Rng rng(31);
  std::vector<double> a, b;
  for (int i = 0; i < 40; ++i) {
    double base = rng.uniform(0, 1);
    a.push_back(base + rng.uniform(0, 0.5));
    b.push_back(base);
  }
  WilcoxonResult r = wilcoxon_signed_rank(a, b);
  CHECK(r.n == 40);
  CHECK_FALSE(r.exact);
  CHECK(r.p_value > 0.0);
  CHECK(r.p_value < 1e-4);  // every difference is positive
}
