#include "dsc/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

#include "dsc/rng.hpp"

namespace dsc {

namespace {

double ratio(double num, double den) { return den > 0.0 ? num / den : 0.0; }

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

MetricsReport compute_metrics(const std::vector<int>& y_true,
                              const std::vector<int>& y_pred, int n_classes) {
  if (y_true.size() != y_pred.size())
    throw std::invalid_argument("compute_metrics: size mismatch");
  if (y_true.empty())
    throw std::invalid_argument("compute_metrics: no samples");
  if (n_classes < 1)
    throw std::invalid_argument("compute_metrics: need n_classes >= 1");

  MetricsReport r;
  size_t n = static_cast<size_t>(n_classes);
  r.confusion.assign(n, std::vector<long>(n, 0));
  for (size_t i = 0; i < y_true.size(); ++i) {
    int t = y_true[i], p = y_pred[i];
    if (t < 0 || t >= n_classes || p < 0 || p >= n_classes)
      throw std::invalid_argument("compute_metrics: label out of range");
    ++r.confusion[static_cast<size_t>(t)][static_cast<size_t>(p)];
  }
  r.total = static_cast<long>(y_true.size());

  long correct = 0;
  double wp = 0, wr = 0, wf = 0;
  r.per_class.resize(n);
  for (size_t c = 0; c < n; ++c) {
    long tp = r.confusion[c][c], row = 0, col = 0;
    for (size_t j = 0; j < n; ++j) {
      row += r.confusion[c][j];
      col += r.confusion[j][c];
    }
    ClassMetrics& m = r.per_class[c];
    m.support = row;
    m.precision = ratio(static_cast<double>(tp), static_cast<double>(col));
    m.recall = ratio(static_cast<double>(tp), static_cast<double>(row));
    m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
    correct += tp;
    wp += static_cast<double>(row) * m.precision;
    wr += static_cast<double>(row) * m.recall;
    wf += static_cast<double>(row) * m.f1;
  }
  double total = static_cast<double>(r.total);
  r.accuracy = ratio(static_cast<double>(correct), total);
  r.weighted_precision = ratio(wp, total);
  r.weighted_recall = ratio(wr, total);
  r.weighted_f1 = ratio(wf, total);
  return r;
}

double weighted_f1(const std::vector<int>& y_true,
                   const std::vector<int>& y_pred, int n_classes) {
  return compute_metrics(y_true, y_pred, n_classes).weighted_f1;
}

std::string format_report(const MetricsReport& r,
                          const std::vector<std::string>& names) {
  if (names.size() != r.per_class.size())
    throw std::invalid_argument("format_report: name count mismatch");
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %9s %9s %9s %9s\n", "class",
                "precision", "recall", "f1", "support");
  out += line;
  for (size_t c = 0; c < names.size(); ++c) {
    const ClassMetrics& m = r.per_class[c];
    std::snprintf(line, sizeof(line), "%-12s %9.4f %9.4f %9.4f %9ld\n",
                  names[c].c_str(), m.precision, m.recall, m.f1, m.support);
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-12s %9.4f %9.4f %9.4f %9ld\n",
                "weighted", r.weighted_precision, r.weighted_recall,
                r.weighted_f1, r.total);
  out += line;
  std::snprintf(line, sizeof(line), "accuracy %.4f\n", r.accuracy);
  out += line;
  return out;
}

std::vector<int> stratified_patient_folds(const std::vector<FoldItem>& items,
                                          int k, uint64_t seed) {
  if (k < 2) throw std::invalid_argument("folds: need k >= 2");
  int n_classes = 0;
  for (const auto& it : items) {
    if (it.class_id < 0)
      throw std::invalid_argument("folds: negative class id");
    n_classes = std::max(n_classes, it.class_id + 1);
  }

  struct Patient {
    std::string id;
    std::vector<long> counts;
    long total = 0;
  };
  std::map<std::string, size_t> index;
  std::vector<Patient> patients;
  for (const auto& it : items) {
    auto [pos, fresh] = index.try_emplace(it.patient, patients.size());
    if (fresh)
      patients.push_back(
          {it.patient, std::vector<long>(static_cast<size_t>(n_classes), 0),
           0});
    Patient& p = patients[pos->second];
    ++p.counts[static_cast<size_t>(it.class_id)];
    ++p.total;
  }
  if (patients.size() < static_cast<size_t>(k))
    throw std::invalid_argument("folds: fewer distinct patients than folds");

  // Largest patients first; the seed only reorders equal-sized patients.
  std::vector<size_t> order(patients.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (patients[a].total != patients[b].total)
      return patients[a].total > patients[b].total;
    uint64_t ha = hash_mix(seed, fnv1a(patients[a].id));
    uint64_t hb = hash_mix(seed, fnv1a(patients[b].id));
    if (ha != hb) return ha < hb;
    return patients[a].id < patients[b].id;
  });

  // Greedy sum-of-squares placement keeps each class spread evenly.
  std::vector<std::vector<long>> fold_counts(
      static_cast<size_t>(k), std::vector<long>(static_cast<size_t>(n_classes), 0));
  std::vector<long> fold_totals(static_cast<size_t>(k), 0);
  std::map<std::string, int> fold_of;
  for (size_t pi : order) {
    const Patient& p = patients[pi];
    int best = 0;
    double best_cost = 0;
    long best_total = 0;
    for (int f = 0; f < k; ++f) {
      double cost = 0;
      for (size_t c = 0; c < p.counts.size(); ++c) {
        double v = static_cast<double>(fold_counts[static_cast<size_t>(f)][c] +
                                       p.counts[c]);
        cost += v * v;
      }
      long ftotal = fold_totals[static_cast<size_t>(f)];
      if (f == 0 || cost < best_cost ||
          (cost == best_cost && ftotal < best_total)) {
        best = f;
        best_cost = cost;
        best_total = ftotal;
      }
    }
    for (size_t c = 0; c < p.counts.size(); ++c)
      fold_counts[static_cast<size_t>(best)][c] += p.counts[c];
    fold_totals[static_cast<size_t>(best)] += p.total;
    fold_of[p.id] = best;
  }

  std::vector<int> out(items.size());
  for (size_t i = 0; i < items.size(); ++i)
    out[i] = fold_of.at(items[i].patient);
  return out;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("wilcoxon: need equal-length nonempty inputs");
  std::vector<double> d;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  if (d.empty())
    throw std::domain_error("wilcoxon: all paired differences are zero");

  size_t n = d.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t x, size_t y) {
    return std::fabs(d[x]) < std::fabs(d[y]);
  });

  // Average ranks across runs of equal |d|; remember run lengths for the
  // tie-corrected variance.
  std::vector<double> rank(n, 0.0);
  std::vector<long> tie_runs;
  for (size_t i = 0; i < n;) {
    size_t j = i;
    while (j < n && std::fabs(d[order[j]]) == std::fabs(d[order[i]])) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t t = i; t < j; ++t) rank[order[t]] = avg;
    tie_runs.push_back(static_cast<long>(j - i));
    i = j;
  }

  double w_plus = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (d[i] > 0) w_plus += rank[i];

  WilcoxonResult res;
  res.statistic = w_plus;
  res.n = static_cast<long>(n);

  if (n <= 20) {
    // Doubled ranks are integers even with ties; count subsets by rank sum.
    std::vector<long> r2(n);
    long sum2 = 0;
    for (size_t i = 0; i < n; ++i) {
      r2[i] = std::lround(2.0 * rank[i]);
      sum2 += r2[i];
    }
    std::vector<double> ways(static_cast<size_t>(sum2 + 1), 0.0);
    ways[0] = 1.0;
    for (size_t i = 0; i < n; ++i)
      for (long s = sum2 - r2[i]; s >= 0; --s)
        ways[static_cast<size_t>(s + r2[i])] += ways[static_cast<size_t>(s)];
    double total = std::ldexp(1.0, static_cast<int>(n));
    long w2 = std::lround(2.0 * w_plus);
    double lo = 0.0, hi = 0.0;
    for (long s = 0; s <= sum2; ++s) {
      if (s <= w2) lo += ways[static_cast<size_t>(s)];
      if (s >= w2) hi += ways[static_cast<size_t>(s)];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lo, hi) / total);
    res.exact = true;
  } else {
    double nn = static_cast<double>(n);
    double mu = nn * (nn + 1.0) / 4.0;
    double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0;
    for (long t : tie_runs) {
      double tt = static_cast<double>(t);
      var -= (tt * tt * tt - tt) / 48.0;
    }
    double z = (w_plus - mu) / std::sqrt(var);
    res.p_value = std::max(std::erfc(std::fabs(z) / std::sqrt(2.0)), 1e-300);
    res.exact = false;
  }
  return res;
}

}  // namespace dsc
