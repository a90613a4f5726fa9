// stats.hpp - descriptive statistics, univariate response tests and the
// cluster -> LASSO -> random-forest cross-validated predictor.
#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace blendreg {

double mean(std::span<const double> v);
/// ddof = 1 gives the sample SD, 0 the population SD.
double standard_deviation(std::span<const double> v, int ddof = 1);
/// Throws DegenerateError when either series has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Ranks 1..n with ties sharing their mean rank.
std::vector<double> midranks(std::span<const double> v);

/// Mann-Whitney U of sample a: rank sum of a minus n_a(n_a+1)/2.
double mann_whitney_u(std::span<const double> a, std::span<const double> b);

enum class WilcoxonMethod { automatic, exact, normal };

/// Two-sided rank-sum p-value. automatic = exact when n_a + n_b <= 12.
double wilcoxon_rank_sum(std::span<const double> a, std::span<const double> b,
                         WilcoxonMethod method = WilcoxonMethod::automatic);

/// U / (n1 n0) with label 1 as the positive class.
double auc(std::span<const double> scores, std::span<const int> labels);

struct CaseTable {
    std::vector<std::string> case_ids;
    std::vector<std::string> feature_names;
    std::vector<std::vector<double>> rows; ///< rows[case][feature]
    std::vector<int> labels;               ///< 1 = responder

    std::size_t cases() const { return rows.size(); }
    std::size_t features() const { return feature_names.size(); }
    std::vector<double> column(std::size_t f) const;
    /// Shapes agree, values finite, labels binary with both classes present.
    void validate() const;
};

struct UnivariateResult {
    std::string feature;
    double auc = 0.5;             ///< max(auc, 1 - auc)
    bool higher_in_positive = true; ///< orientation of the raw AUC
    double p_value = 1.0;
};

/// One result per feature, sorted by descending AUC then name.
std::vector<UnivariateResult> univariate_analysis(const CaseTable &table);

/// Complete-linkage clustering on 1 - |r|, cut at 1 - corr_threshold; returns the
/// highest-AUC feature of each cluster as ascending column indices.
std::vector<std::size_t> cluster_distinct(const CaseTable &table, double corr_threshold = 0.9);

struct LassoOptions {
    int path_length = 50;
    double lambda_min_ratio = 1e-3;
    int max_outer = 100;
    int max_inner = 1000;
    double tolerance = 1e-7;
};

/// L1 logistic regression path on standardized columns; indices ordered by entry
/// into the active set, truncated to k. Constant columns never enter.
std::vector<std::size_t> lasso_select(const std::vector<std::vector<double>> &X, std::span<const int> y,
                                      std::size_t k = 10, const LassoOptions &opts = {});

struct CVOptions {
    int folds = 10;
    int repeats = 10;
    std::uint64_t seed = 0;
    int max_features = 10;
    int n_trees = 200;
    double corr_threshold = 0.9;
};

struct CVMetrics {
    double sensitivity = 0.0;
    double specificity = 0.0;
    double accuracy = 0.0;
    double auc = 0.0;
};

struct CVReport {
    std::vector<CVMetrics> per_repeat;  ///< pooled over the folds of each repeat
    CVMetrics mean;
    CVMetrics sd;
    std::map<std::string, int> selection_frequency; ///< folds in which each feature was selected
    std::vector<double> accuracy_curve; ///< mean accuracy using the first 1..max_features selected features
    int single_class_folds = 0;         ///< test folds holding one class only
};

CVReport cross_validate(const CaseTable &table, const CVOptions &opts = {});

} // namespace blendreg
