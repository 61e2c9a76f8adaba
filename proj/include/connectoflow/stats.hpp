#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace connectoflow {

struct FoldPlan {
  std::size_t k = 0;
  std::uint64_t seed = 0;
  /// Test indices (into the label vector) per fold, ascending.
  std::vector<std::vector<std::size_t>> folds;

  std::vector<std::size_t> test_indices(std::size_t fold) const { return folds.at(fold); }
  std::vector<std::size_t> train_indices(std::size_t fold) const;
};

/// Shuffle each class with the seed and deal members round-robin across folds.
/// Throws StatsError when a class has fewer than k members.
FoldPlan stratified_kfold(const std::vector<int>& labels, std::size_t k, std::uint64_t seed);

struct MetricSet {
  double accuracy = 0.0;
  double roc_auc = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
};

/// Mann–Whitney AUC with half credit for ties. Throws StatsError unless both classes are present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Predicted positive when score ≥ threshold; empty denominators give 0. roc_auc is left at 0.
MetricSet confusion_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                            double threshold = 0.5);

MetricSet evaluate(const std::vector<double>& scores, const std::vector<int>& labels, double threshold = 0.5);

struct DeLongResult {
  double auc_a = 0.0;
  double auc_b = 0.0;
  double z = 0.0;
  double p = 1.0;
  /// Variance of the AUC difference was zero; z and p are not informative.
  bool degenerate = false;
};

/// Paired comparison of two correlated AUCs on the same subjects.
DeLongResult delong_test(const std::vector<double>& scores_a, const std::vector<double>& scores_b,
                         const std::vector<int>& labels);

/// Regularized incomplete beta I_x(a, b) by continued fraction.
double incomplete_beta(double a, double b, double x);

/// Two-sided tail P(|T| ≥ |t|) for Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// Standard normal two-sided tail P(|Z| ≥ |z|).
double normal_two_sided_p(double z);

struct TTestResult {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
};

/// Welch's unequal-variance t-test (a minus b). Both groups need ≥ 2 finite values.
TTestResult welch_t(const std::vector<double>& a, const std::vector<double>& b);

struct FdrResult {
  std::vector<double> adjusted;
  std::vector<std::uint8_t> rejected;
};

/// Benjamini–Hochberg step-up; rejected where adjusted p < q.
FdrResult bh_fdr(const std::vector<double>& p_values, double q = 0.05);

struct PermutationResult {
  double r = 0.0;
  double p = 1.0;
};

double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Pearson r with an add-one permutation p-value over |r|.
PermutationResult permutation_corr(const std::vector<double>& x, const std::vector<double>& y,
                                   std::size_t n_perm = 10000, std::uint64_t seed = 0);

}  // namespace connectoflow
