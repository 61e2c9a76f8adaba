#include "connectoflow/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "connectoflow/errors.hpp"
#include "connectoflow/random.hpp"

namespace connectoflow {

std::vector<std::size_t> FoldPlan::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (f != fold) out.insert(out.end(), folds[f].begin(), folds[f].end());
  std::sort(out.begin(), out.end());
  return out;
}

FoldPlan stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw StatsError("k-fold needs k >= 2");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw StatsError("labels must be 0 or 1");
    by_class[labels[i]].push_back(i);
  }
  for (int c = 0; c < 2; ++c)
    if (by_class[c].size() < k)
      throw StatsError("class " + std::to_string(c) + " has " + std::to_string(by_class[c].size()) +
                       " members, fewer than k=" + std::to_string(k));
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.folds.assign(k, {});
  RandomStream rng(seed);
  std::size_t next = 0;  // continue dealing where the previous class stopped so fold sizes balance
  for (auto& members : by_class) {
    rng.shuffle(members);
    for (std::size_t idx : members) {
      plan.folds[next].push_back(idx);
      next = (next + 1) % k;
    }
  }
  for (auto& f : plan.folds) std::sort(f.begin(), f.end());
  return plan;
}

namespace {

void check_binary(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t& pos,
                  std::size_t& neg) {
  if (scores.size() != labels.size()) throw StatsError("scores and labels differ in length");
  pos = neg = 0;
  for (int l : labels) {
    if (l == 1)
      ++pos;
    else if (l == 0)
      ++neg;
    else
      throw StatsError("labels must be 0 or 1");
  }
}

// Midranks (1-based) of `values`, ties sharing the average rank.
std::vector<double> midranks(const std::vector<double>& values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> rank(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) rank[order[m]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  std::size_t pos, neg;
  check_binary(scores, labels, pos, neg);
  if (pos == 0 || neg == 0) throw StatsError("roc_auc needs both classes present");
  for (double s : scores)
    if (!std::isfinite(s)) throw StatsError("roc_auc: non-finite score");
  const std::vector<double> rank = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (labels[i] == 1) rank_sum += rank[i];
  const double p = static_cast<double>(pos), n = static_cast<double>(neg);
  // rank_sum − p(p+1)/2 is the pairwise win count with half credit for ties.
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

MetricSet confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                            double threshold) {
  std::size_t pos, neg;
  check_binary(scores, labels, pos, neg);
  std::size_t tp = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1 && predicted) ++tp;
    if (labels[i] == 0 && !predicted) ++tn;
  }
  MetricSet m;
  m.accuracy = scores.empty() ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  m.sensitivity = pos == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pos);
  m.specificity = neg == 0 ? 0.0 : static_cast<double>(tn) / static_cast<double>(neg);
  return m;
}

MetricSet evaluate(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
  MetricSet m = confusion_metrics(scores, labels, threshold);
  m.roc_auc = roc_auc(scores, labels);
  return m;
}

namespace {

// Placement values: for each positive, the share of negatives it beats (ties ½); and vice versa.
void placements(const std::vector<double>& scores, const std::vector<int>& labels, std::vector<double>& v10,
                std::vector<double>& v01) {
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(scores[i]);
  std::vector<double> sorted_neg = neg, sorted_pos = pos;
  std::sort(sorted_neg.begin(), sorted_neg.end());
  std::sort(sorted_pos.begin(), sorted_pos.end());
  auto share_below = [](const std::vector<double>& sorted, double x) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), x);
    const auto hi = std::upper_bound(sorted.begin(), sorted.end(), x);
    const double less = static_cast<double>(lo - sorted.begin());
    const double ties = static_cast<double>(hi - lo);
    return (less + 0.5 * ties) / static_cast<double>(sorted.size());
  };
  v10.clear();
  v01.clear();
  for (double x : pos) v10.push_back(share_below(sorted_neg, x));
  for (double y : neg) v01.push_back(1.0 - share_below(sorted_pos, y));
}

double covariance(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 0.0;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / (n - 1.0);
}

}  // namespace

DeLongResult delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                         const std::vector<int>& labels) {
  if (scores_a.size() != scores_b.size()) throw StatsError("delong: paired score vectors differ in length");
  DeLongResult out;
  out.auc_a = roc_auc(scores_a, labels);
  out.auc_b = roc_auc(scores_b, labels);
  std::vector<double> a10, a01, b10, b01;
  placements(scores_a, labels, a10, a01);
  placements(scores_b, labels, b10, b01);
  const double m = static_cast<double>(a10.size()), n = static_cast<double>(a01.size());
  const double var = (covariance(a10, a10) + covariance(b10, b10) - 2.0 * covariance(a10, b10)) / m +
                     (covariance(a01, a01) + covariance(b01, b01) - 2.0 * covariance(a01, b01)) / n;
  const double diff = out.auc_a - out.auc_b;
  if (!(var > 1e-15)) {
    out.degenerate = true;
    out.z = 0.0;
    out.p = diff == 0.0 ? 1.0 : 0.0;
    return out;
  }
  out.z = diff / std::sqrt(var);
  out.p = normal_two_sided_p(out.z);
  return out;
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete_beta: x must be in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  // The continued fraction converges fast for x < (a+1)/(a+b+2); use the symmetry otherwise.
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                           b * std::log1p(-x);
  // Modified Lentz evaluation.
  constexpr double tiny = 1e-300;
  constexpr double tol = 1e-15;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double mm = static_cast<double>(m);
    double num = mm * (b - mm) * x / ((a + 2.0 * mm - 1.0) * (a + 2.0 * mm));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + mm) * (a + b + mm) * x / ((a + 2.0 * mm) * (a + 2.0 * mm + 1.0));
    d = 1.0 + num * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + num / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < tol) return std::exp(log_front) * h / a;
  }
  throw DomainError("incomplete_beta: continued fraction did not converge");
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw DomainError("student t: df must be positive");
  if (std::isnan(t)) throw DomainError("student t: t is NaN");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

TTestResult welch_t(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() < 2 || b.size() < 2) throw StatsError("welch_t needs at least 2 values per group");
  auto moments = [](const std::vector<double>& v, double& mean, double& var) {
    const double n = static_cast<double>(v.size());
    mean = 0.0;
    for (double x : v) {
      if (!std::isfinite(x)) throw StatsError("welch_t: non-finite value");
      mean += x;
    }
    mean /= n;
    var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n - 1.0;
  };
  double ma, va, mb, vb;
  moments(a, ma, va);
  moments(b, mb, vb);
  const double sa = va / static_cast<double>(a.size());
  const double sb = vb / static_cast<double>(b.size());
  TTestResult out;
  const double se2 = sa + sb;
  if (!(se2 > 0.0)) {
    out.df = static_cast<double>(a.size() + b.size() - 2);
    if (ma == mb) return out;
    out.t = ma > mb ? HUGE_VAL : -HUGE_VAL;
    out.p = 0.0;
    return out;
  }
  out.t = (ma - mb) / std::sqrt(se2);
  const double denom = sa * sa / static_cast<double>(a.size() - 1) + sb * sb / static_cast<double>(b.size() - 1);
  out.df = se2 * se2 / denom;
  out.p = student_t_two_sided_p(out.t, out.df);
  return out;
}

FdrResult bh_fdr(const std::vector<double>& p_values, double q) {
  const std::size_t m = p_values.size();
  for (double p : p_values)
    if (!(p >= 0.0 && p <= 1.0)) throw StatsError("bh_fdr: p-values must be in [0, 1]");
  FdrResult out;
  out.adjusted.assign(m, 1.0);
  out.rejected.assign(m, 0);
  if (m == 0) return out;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t idx = order[r];
    const double scaled = p_values[idx] * static_cast<double>(m) / static_cast<double>(r + 1);
    running = std::min(running, std::min(1.0, scaled));
    out.adjusted[idx] = running;
  }
  for (std::size_t i = 0; i < m; ++i) out.rejected[i] = out.adjusted[i] < q ? 1 : 0;
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw StatsError("pearson: lengths differ");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0 && syy > 0.0)) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PermutationResult permutation_corr(const std::vector<double>& x, const std::vector<double>& y, std::size_t n_perm,
                                   std::uint64_t seed) {
  if (x.size() != y.size()) throw StatsError("permutation_corr: lengths differ");
  if (x.size() < 3) throw StatsError("permutation_corr needs at least 3 pairs");
  PermutationResult out;
  out.r = pearson(x, y);
  if (out.r == 0.0) {
    out.p = 1.0;
    return out;
  }
  RandomStream rng(seed);
  std::vector<double> shuffled = y;
  std::size_t extreme = 0;
  const double observed = std::abs(out.r) - 1e-12;
  for (std::size_t k = 0; k < n_perm; ++k) {
    rng.shuffle(shuffled);
    if (std::abs(pearson(x, shuffled)) >= observed) ++extreme;
  }
  out.p = static_cast<double>(extreme + 1) / static_cast<double>(n_perm + 1);
  return out;
}

}  // namespace connectoflow
