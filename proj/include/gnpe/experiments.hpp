#pragma once

// Method-level training and sampling shared by the command-line tool and the
// acceptance suite, and the toy-study / figure reproductions built on them.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/dataset.hpp"
#include "gnpe/estimator.hpp"
#include "gnpe/metrics.hpp"
#include "gnpe/models.hpp"
#include "gnpe/sampler.hpp"

namespace gnpe {

enum class Method { npe, npe_cnn, gnpe, chained_npe };

std::string to_string(Method method);
Method method_from_string(const std::string& s);

/// Estimator roles a method trains, in training order:
///   npe, npe-cnn: q;  gnpe: q, q_init;  chained-npe: q_pose, q_rest.
std::vector<std::string> method_roles(Method method);

struct MethodSettings {
    Method method = Method::gnpe;
    /// Used for every role except the npe-cnn density estimator, which gets
    /// a conv stack followed by `embedding.hidden`.
    EmbeddingSpec embedding;
    double log_std_min = -7.0;
    double log_std_max = 5.0;
    Kernel kernel = Kernel::gaussian({0.1});
    std::vector<EquivarianceMode> modes;
    TrainingConfig training;
};

/// Embedding used when none is configured: identity for scalar data, MLP
/// otherwise.
EmbeddingKind default_embedding_kind(const ForwardModel& model);

struct TrainedRole {
    std::string role;
    ConditionalGaussianEstimator estimator;
    TrainingHistory history;
};

using EpochCallback = std::function<void(const std::string& role, const EpochRecord&)>;

/// Builds the role datasets from a raw NPE dataset and trains every role.
/// Role r trains with seed derive_seed(training.seed, r).
std::vector<TrainedRole> train_method(const ForwardModel& model, const TrainingDataset& raw,
                                      const MethodSettings& settings,
                                      const EpochCallback& on_epoch = {});

struct SamplerSettings {
    /// NPE draws, or the number of GNPE chains.
    std::size_t samples = 10000;
    IterationPolicy policy;
    std::size_t burn_in = 10;
    std::size_t thinning = 1;
    /// Start every chain at `init_pose` instead of drawing from q_init.
    bool fixed_init = false;
    std::vector<double> init_pose;
};

using RoleMap = std::map<std::string, const ThetaConditional*>;

/// Samples the posterior for one observation with the method's sampling
/// path. Non-GNPE methods return a single-pass result with converged = true
/// and iterations = 0.
GnpeResult infer_method(const ForwardModel& model, const MethodSettings& settings,
                        const RoleMap& roles, const Eigen::VectorXd& x,
                        const SamplerSettings& sampler, std::uint64_t seed, std::size_t workers = 1);

/// Per-parameter margin keeping evaluation observations three noise
/// standard deviations inside the prior box (zero for unbounded priors).
Eigen::VectorXd evaluation_margin(const ForwardModel& model);

/// Observations with a known ground-truth posterior.
struct Observation {
    Eigen::VectorXd theta;
    Simulation simulation;
    GaussianPosterior posterior;
};

/// `count` observations from stream i of `seed`, drawn inside the margin.
std::vector<Observation> make_observations(const ForwardModel& model, std::size_t count,
                                           std::uint64_t seed);

// ---------------------------------------------------------------------------
// Toy study: NPE vs NPE-CNN vs GNPE on the oscillator

struct ToyStudySettings {
    std::vector<Method> methods{Method::npe, Method::npe_cnn, Method::gnpe};
    std::size_t observations = 5;
    std::size_t seeds = 10;
    std::size_t simulations = 10000;
    double validation_fraction = kDefaultValidationFraction;
    /// Posterior and reference samples per c2st evaluation.
    std::size_t samples = 2000;
    double kernel_width = 0.1;
    /// GNPE sweeps after q_init initialisation (all kept from the last one).
    std::size_t gnpe_iterations = 1;
    EmbeddingSpec embedding;
    TrainingConfig training;
    C2stConfig c2st;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct ToyStudyRow {
    Method method;
    std::size_t seed_index;
    std::size_t observation;
    double c2st;
    double mse;
    std::size_t epochs;  // epochs of the main estimator
};

struct ToyStudyResult {
    std::vector<ToyStudyRow> rows;
    double mean_c2st(Method method) const;
};

using ProgressCallback = std::function<void(const std::string&)>;

ToyStudyResult run_toy_study(const ForwardModel& model, const ToyStudySettings& settings,
                             const ProgressCallback& progress = {});

// ---------------------------------------------------------------------------
// Singular spectra of raw vs pose-standardised inputs

struct SpectrumSettings {
    std::size_t simulations = 512;
    double kernel_width = 0.1;
    double threshold = 1e-2;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct SpectrumResult {
    Eigen::VectorXd raw;
    Eigen::VectorXd standardized;
    std::size_t raw_dimension = 0;
    std::size_t standardized_dimension = 0;
};

SpectrumResult compare_spectra(const ForwardModel& model, const SpectrumSettings& settings);

// ---------------------------------------------------------------------------
// Gaussian worked example: GNPE with the analytic conditional

struct GaussianExampleSettings {
    double observation = 3.0;
    double kernel_width = 1.0;
    double init = 0.0;
    std::size_t chains = 10000;
    std::size_t burn_in = 10;
    std::size_t iterations = 11;
    std::size_t bins = 60;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct GaussianExampleResult {
    GnpeResult run;
    double mean = 0.0;
    double variance = 0.0;
    Eigen::VectorXd bin_centers;
    Eigen::VectorXd sample_density;
    Eigen::VectorXd analytic_density;
};

GaussianExampleResult run_gaussian_example(const GaussianExampleSettings& settings);

}  // namespace gnpe
