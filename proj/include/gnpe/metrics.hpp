#pragma once

// Sample-based evaluation metrics. All functions are pure; sample matrices
// are (n x d) with one sample per row.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace gnpe {

struct C2stConfig {
    /// Hidden widths as multiples of the sample dimension.
    std::vector<std::size_t> hidden_multipliers{10, 10};
    double learning_rate = 1e-3;
    std::size_t batch_size = 200;
    std::size_t max_epochs = 200;
    /// Stop when the training loss has not improved by `tolerance` for
    /// `patience` consecutive epochs.
    double tolerance = 1e-4;
    std::size_t patience = 10;
    double train_fraction = 0.8;
    std::size_t repetitions = 5;
    std::size_t min_samples = 500;
    std::uint64_t seed = 0;
    std::size_t workers = 1;

    void validate() const;
};

struct C2stResult {
    double score = 0.0;                 // mean held-out accuracy
    std::vector<double> repetitions;    // accuracy per repetition
};

/// Classifier two-sample test. Both sets are z-scored with pooled statistics;
/// each repetition draws a fresh train/test split and a freshly initialised
/// classifier. The score is not clipped at 0.5.
C2stResult c2st(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const C2stConfig& config = {});

/// Squared distance between sample means after dividing each dimension by
/// its prior standard deviation.
double mse_of_means(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& reference,
                    const Eigen::VectorXd& prior_stds);

/// Descending singular values of the column-centred matrix (rows are
/// simulations, columns are bins).
Eigen::VectorXd singular_spectrum(const Eigen::MatrixXd& data);

/// Number of values >= rel_threshold * max(values).
std::size_t effective_dimension(const Eigen::VectorXd& values, double rel_threshold = 1e-2);

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Complementary Kolmogorov distribution Q(lambda) = P(K > lambda).
double kolmogorov_survival(double lambda);

/// One-sample Kolmogorov-Smirnov test against a continuous cdf, with the
/// asymptotic p-value Q((sqrt(n) + 0.12 + 0.11 / sqrt(n)) D).
KsResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);

struct JsDivergence {
    double value = 0.0;   // nats, in [0, log 2]
    bool degenerate = false;
    std::size_t bins = 0;
};

/// Histogram Jensen-Shannon divergence with Freedman-Diaconis bins computed
/// on the pooled sample and shared by both sets. A set whose values are all
/// equal yields log 2 with `degenerate` set.
JsDivergence js_divergence(std::span<const double> a, std::span<const double> b);

}  // namespace gnpe
