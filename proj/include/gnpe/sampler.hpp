#pragma once

// Gibbs sampling over (theta, g_hat) with an ensemble of parallel chains,
// convergence diagnostics, analytic test oracles and the chained-NPE
// baseline.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/dataset.hpp"
#include "gnpe/estimator.hpp"
#include "gnpe/group.hpp"
#include "gnpe/metrics.hpp"

namespace gnpe {

/// N chains advanced in lock step. Column i of every matrix belongs to
/// chain i; chain i draws only from rngs[i].
struct GibbsChainEnsemble {
    std::vector<std::size_t> pose_slots;
    std::size_t param_dim = 0;
    Eigen::MatrixXd theta;         // P x N; NaN before the first update
    Eigen::MatrixXd pose;          // K x N, g^theta of the current state
    Eigen::MatrixXd proxy;         // K x N, g_hat used by the last update
    Eigen::MatrixXd initial_pose;  // K x N
    std::vector<Rng> rngs;
    /// 0 when the last update of the chain produced a non-finite theta.
    std::vector<std::uint8_t> valid;
    std::size_t iteration = 0;
    /// Pose marginal after each update; entry 0 is the initialisation.
    std::vector<Eigen::MatrixXd> pose_snapshots;

    std::size_t size() const { return static_cast<std::size_t>(pose.cols()); }
    std::size_t factors() const { return pose_slots.size(); }
};

/// Every chain starts at `pose`. Chain i uses stream i of `seed`.
GibbsChainEnsemble init_chains(const GroupElement& pose, std::size_t param_dim,
                               const std::vector<std::size_t>& pose_slots, std::size_t n,
                               std::uint64_t seed);

/// Initial poses drawn from q_init(pose | x), one draw per chain from the
/// chain's own stream. Throws StructuralError if q_init is not ready or
/// does not produce one value per pose factor.
GibbsChainEnsemble init_chains(const ThetaConditional& q_init, const Eigen::VectorXd& x,
                               std::size_t param_dim, const std::vector<std::size_t>& pose_slots,
                               std::size_t n, std::uint64_t seed, std::size_t workers = 1);

struct GibbsEvent {
    std::size_t iteration;
    std::size_t chain;
    std::string message;
};

/// One blur-standardise-sample sweep over all chains:
///   g_hat = g^theta eps, x' = T_{g_hat^-1} x,
///   exact factors: theta = g_hat theta' with theta' ~ q(. | x'),
///   approximate factors: theta ~ q(. | x', g_hat).
/// Chains whose draw is not finite are returned to their initial pose and
/// reported through `events`.
void gibbs_iteration(GibbsChainEnsemble& ens, const ThetaConditional& q, const GnpeSpec& spec,
                     const Eigen::VectorXd& x, std::size_t workers = 1,
                     std::vector<GibbsEvent>* events = nullptr);

/// Largest per-factor histogram JS divergence between two pose snapshots.
JsDivergence convergence_js(const Eigen::MatrixXd& pose_a, const Eigen::MatrixXd& pose_b);

enum class IterationPolicyKind { fixed, js };

struct IterationPolicy {
    IterationPolicyKind kind = IterationPolicyKind::js;
    std::size_t iterations = 30;       // fixed policy
    double js_threshold = 0.01;        // nats
    std::size_t max_iterations = 100;  // js policy

    void validate() const;
};

struct ChainInit {
    const ThetaConditional* q_init = nullptr;
    std::optional<GroupElement> fixed_pose;
};

struct GnpeRunConfig {
    Kernel kernel = Kernel::gaussian({1.0});
    std::vector<EquivarianceMode> modes;  // empty: all exact
    IterationPolicy policy;
    std::size_t burn_in = 10;
    std::size_t thinning = 1;
    std::size_t chains = 10000;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
    ChainInit init;

    void validate() const;
};

struct GnpeResult {
    /// True when the final JS value is below the threshold.
    bool converged = false;
    /// First iteration whose JS value fell below the threshold.
    std::optional<std::size_t> converged_at;
    std::size_t iterations = 0;
    /// js_trace[j - 1] = JS(snapshot j-1, snapshot j) for j = 1..iterations.
    std::vector<double> js_trace;
    std::vector<std::uint8_t> js_degenerate;
    /// Kept samples after burn-in and thinning (rows), with their g_hat,
    /// chain id and iteration.
    Eigen::MatrixXd samples;
    Eigen::MatrixXd proxies;
    std::vector<std::size_t> chain_ids;
    std::vector<std::size_t> sample_iterations;
    std::vector<GibbsEvent> events;
    std::vector<Eigen::MatrixXd> pose_snapshots;
};

/// Full GNPE inference for one observation. Under the fixed policy exactly
/// `iterations` sweeps run; under the JS policy sweeps continue until the JS
/// value drops below the threshold after at least burn_in + 1 sweeps, or
/// max_iterations is reached (converged == false, partial samples kept).
/// Samples are kept from sweeps j > burn_in with (j - burn_in - 1) % thinning
/// == 0; if fewer sweeps ran, the final sweep is kept.
GnpeResult run_gnpe(const Eigen::VectorXd& x, const ThetaConditional& q, const ForwardModel& model,
                    const GnpeRunConfig& config);

/// Chained NPE: lambda ~ q_pose(. | x), x' = T_{lambda^-1} x,
/// rest ~ q_rest(. | x', lambda). Returns n x P samples.
Eigen::MatrixXd chained_npe_sample(const ThetaConditional& q_pose, const ThetaConditional& q_rest,
                                   const Eigen::VectorXd& x, const ForwardModel& model,
                                   std::size_t n, std::uint64_t seed, std::size_t workers = 1);

/// Plain NPE sampling: n x P draws from q(. | x), chain-style streams.
Eigen::MatrixXd npe_sample(const ThetaConditional& q, const Eigen::VectorXd& x, std::size_t n,
                           std::uint64_t seed, std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Analytic conditionals

/// Exact posterior of the pose-standardised Gaussian toy, p(tau' | x') with
/// tau' = tau - g_hat, x' = x - 2 g_hat. For kernel N(0, k^2):
///   tau' | x' ~ N((x' - 5) / (2 + 1/k^2), 1 / (2 + 1/k^2)),
/// a point mass at 0 for the delta kernel. The proxy-agnostic form
/// N((x' - 5) / 2, 1/2) is the wide-kernel limit.
class GaussianToyOracle final : public ThetaConditional {
public:
    static GaussianToyOracle kernel_aware(const Kernel& kernel);
    static GaussianToyOracle proxy_agnostic();

    std::size_t param_dim() const override { return 1; }
    std::size_t context_dim() const override { return 1; }
    double slope() const { return slope_; }
    double variance() const { return variance_; }
    Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                         std::span<Rng> rngs) const override;

private:
    GaussianToyOracle(double slope, double variance) : slope_(slope), variance_(variance) {}
    double slope_;
    double variance_;
};

/// Context-independent diagonal Gaussian; models a perfect (or deliberately
/// biased) pose estimator for one fixed observation.
class FixedGaussianConditional final : public ThetaConditional {
public:
    FixedGaussianConditional(Eigen::VectorXd mean, Eigen::VectorXd stddev, std::size_t context_dim,
                             std::size_t proxy_dim = 0);

    std::size_t param_dim() const override { return static_cast<std::size_t>(mean_.size()); }
    std::size_t context_dim() const override { return context_dim_; }
    std::size_t proxy_dim() const override { return proxy_dim_; }
    Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                         std::span<Rng> rngs) const override;

private:
    Eigen::VectorXd mean_, stddev_;
    std::size_t context_dim_, proxy_dim_;
};

/// Adds a constant offset to every draw of another conditional.
class OffsetConditional final : public ThetaConditional {
public:
    OffsetConditional(const ThetaConditional& base, Eigen::VectorXd offset);

    std::size_t param_dim() const override { return base_.param_dim(); }
    std::size_t context_dim() const override { return base_.context_dim(); }
    std::size_t proxy_dim() const override { return base_.proxy_dim(); }
    bool ready() const override { return base_.ready(); }
    Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                         std::span<Rng> rngs) const override;

private:
    const ThetaConditional& base_;
    Eigen::VectorXd offset_;
};

// ---------------------------------------------------------------------------
// Output

/// One row per kept sample: parameters, proxies, chain id, iteration.
void write_samples_csv(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                       const std::vector<std::string>& parameter_names,
                       const Eigen::MatrixXd& proxies = {},
                       const std::vector<std::string>& proxy_names = {},
                       const std::vector<std::size_t>& chain_ids = {},
                       const std::vector<std::size_t>& iterations = {},
                       const std::string& comment = {});

}  // namespace gnpe
