#pragma once

// Forward models with priors, pose definitions and analytic posteriors.

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/group.hpp"
#include "gnpe/random.hpp"

namespace gnpe {

enum class PriorKind { uniform, normal };

/// One scalar parameter. For uniform priors (a, b) are the bounds, for
/// normal priors the mean and standard deviation.
struct ParameterSpec {
    std::string name;
    std::string unit;
    PriorKind prior = PriorKind::uniform;
    double a = 0.0;
    double b = 1.0;

    double sample(Rng& rng) const;
    double prior_mean() const;
    double prior_stddev() const;
    bool in_support(double value) const;
};

/// Diagonal Gaussian posterior.
class GaussianPosterior {
public:
    GaussianPosterior(Eigen::VectorXd mean, Eigen::VectorXd variance);

    const Eigen::VectorXd& mean() const noexcept { return mean_; }
    const Eigen::VectorXd& variance() const noexcept { return variance_; }
    Eigen::VectorXd stddev() const { return variance_.cwiseSqrt(); }
    Eigen::Index dim() const noexcept { return mean_.size(); }

    /// n x dim matrix of independent draws.
    Eigen::MatrixXd sample(std::size_t n, Rng& rng) const;
    double log_density(const Eigen::VectorXd& theta) const;

private:
    Eigen::VectorXd mean_;
    Eigen::VectorXd variance_;
};

/// Output of a simulator. `theta_center` is the parameter vector the data
/// were generated from after parameter-space noise; the ground-truth
/// posterior of the noise-perturbed models is centred on it.
struct Simulation {
    Eigen::VectorXd x;
    Eigen::VectorXd theta_center;
};

class ForwardModel {
public:
    virtual ~ForwardModel() = default;

    virtual std::string_view name() const = 0;
    virtual const std::vector<ParameterSpec>& parameters() const = 0;
    /// Parameter index carrying each group factor of the pose.
    virtual std::vector<std::size_t> pose_slots() const = 0;
    /// Representation under which the posterior is (approximately) equivariant.
    virtual const DataRepresentation& posterior_representation() const = 0;
    /// Representation under which the likelihood is equivariant.
    virtual const DataRepresentation& likelihood_representation() const {
        return posterior_representation();
    }
    virtual Simulation simulate(const Eigen::VectorXd& theta, Rng& rng) const = 0;
    virtual std::optional<GaussianPosterior> oracle_posterior(const Simulation&) const {
        return std::nullopt;
    }

    std::size_t parameter_dim() const { return parameters().size(); }
    std::size_t data_size() const { return posterior_representation().data_size(); }
    std::size_t pose_factors() const { return pose_slots().size(); }
    std::vector<std::string> parameter_names() const;
    Eigen::VectorXd prior_stddevs() const;

    Eigen::VectorXd sample_prior(Rng& rng) const;
    /// Draw from the prior restricted to at least `margin` standard deviations
    /// of parameter noise inside each uniform box (evaluation observations).
    Eigen::VectorXd sample_prior_interior(Rng& rng, const Eigen::VectorXd& margin) const;
    bool in_support(const Eigen::VectorXd& theta) const;
    GroupElement pose(const Eigen::VectorXd& theta) const;
};

// ---------------------------------------------------------------------------
// Gaussian toy: tau ~ N(-5, 1), x | tau ~ N(tau, 1).

inline constexpr double kToyPriorMean = -5.0;

double gaussian_toy_simulate(double tau, Rng& rng);
GaussianPosterior gaussian_toy_posterior(double x);
/// log N(x; tau, 1)
double gaussian_toy_log_likelihood(double x, double tau);

class GaussianToyModel final : public ForwardModel {
public:
    GaussianToyModel();

    std::string_view name() const override { return "gaussian-toy"; }
    const std::vector<ParameterSpec>& parameters() const override { return params_; }
    std::vector<std::size_t> pose_slots() const override { return {0}; }
    /// x -> x + 2 dtau
    const DataRepresentation& posterior_representation() const override { return posterior_rep_; }
    /// x -> x + dtau
    const DataRepresentation& likelihood_representation() const override {
        return likelihood_rep_;
    }
    Simulation simulate(const Eigen::VectorXd& theta, Rng& rng) const override;
    std::optional<GaussianPosterior> oracle_posterior(const Simulation& sim) const override;

private:
    std::vector<ParameterSpec> params_;
    DataRepresentation posterior_rep_;
    DataRepresentation likelihood_rep_;
};

// ---------------------------------------------------------------------------
// Damped harmonic oscillator excited by an impulse at tau.

struct OscillatorParams {
    double omega0;
    double beta;
    double tau;
};

SamplingGrid oscillator_grid();  // 2000 bins on [-5, 5) s

/// Green's function solution sampled on the grid. Zero for t <= tau.
/// Throws DomainError unless 0 < beta < 1 and omega0 > 0.
Eigen::VectorXd oscillator_solution(const OscillatorParams& p, const SamplingGrid& grid);

enum class OscillatorVariant { exact, approximate };

struct OscillatorOptions {
    SamplingGrid grid = oscillator_grid();
    OscillatorVariant variant = OscillatorVariant::exact;
    double sigma_omega0 = 0.3;
    double sigma_beta = 0.03;
    double sigma_tau = 0.3;
    /// Approximate variant: sigma_tau * (1 + ramp * (tau + 2.5) / 2.5).
    double tau_noise_ramp = 0.5;
    double omega0_min = 3.0, omega0_max = 10.0;
    double beta_min = 0.2, beta_max = 0.5;
    double tau_min = -5.0, tau_max = 0.0;
    bool band_limited = true;
};

class OscillatorModel final : public ForwardModel {
public:
    explicit OscillatorModel(OscillatorOptions options = {});

    std::string_view name() const override {
        return options_.variant == OscillatorVariant::exact ? "oscillator" : "oscillator-approx";
    }
    const std::vector<ParameterSpec>& parameters() const override { return params_; }
    std::vector<std::size_t> pose_slots() const override { return {2}; }
    const DataRepresentation& posterior_representation() const override { return rep_; }
    Simulation simulate(const Eigen::VectorXd& theta, Rng& rng) const override;
    std::optional<GaussianPosterior> oracle_posterior(const Simulation& sim) const override;

    /// Simulation with the parameter noise fixed to `delta`.
    Simulation simulate_with_noise(const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& delta) const;
    /// Per-parameter noise scale used for theta (tau-dependent for the
    /// approximate variant).
    Eigen::VectorXd noise_stddev(const Eigen::VectorXd& theta) const;
    Eigen::VectorXd render(const Eigen::VectorXd& theta_center) const;
    const OscillatorOptions& options() const noexcept { return options_; }

private:
    OscillatorOptions options_;
    std::vector<ParameterSpec> params_;
    DataRepresentation rep_;
};

/// x = oscillator_solution(theta + dtheta), dtheta ~ N(0, diag(0.3, 0.03, 0.3)^2).
Simulation oscillator_simulate(const Eigen::VectorXd& theta, Rng& rng);
/// As oscillator_simulate with tau-dependent tau noise.
Simulation oscillator_simulate_approx(const Eigen::VectorXd& theta, Rng& rng);

// ---------------------------------------------------------------------------
// Two-channel analogue of a detector network: shared (omega0, beta), arrival
// time tau in channel 0 and tau + delta in channel 1, with a channel-1
// amplitude that depends on delta so relative shifts are only approximately
// equivariant. Group: G_abs x G_rel with coupling [[1, 0], [1, 1]].

struct MultichannelOptions {
    SamplingGrid grid = oscillator_grid();
    double sigma_omega0 = 0.3;
    double sigma_beta = 0.03;
    double sigma_tau = 0.3;
    double sigma_delta = 0.002;
    double delta_max = 0.01;
    double amplitude_coupling = 0.2;
    bool band_limited = true;
};

class MultichannelModel final : public ForwardModel {
public:
    explicit MultichannelModel(MultichannelOptions options = {});

    std::string_view name() const override { return "multichannel"; }
    const std::vector<ParameterSpec>& parameters() const override { return params_; }
    std::vector<std::size_t> pose_slots() const override { return {2, 3}; }
    const DataRepresentation& posterior_representation() const override { return rep_; }
    Simulation simulate(const Eigen::VectorXd& theta, Rng& rng) const override;
    std::optional<GaussianPosterior> oracle_posterior(const Simulation& sim) const override;

    Eigen::VectorXd render(const Eigen::VectorXd& theta_center) const;
    double channel1_amplitude(double delta) const;
    const MultichannelOptions& options() const noexcept { return options_; }

private:
    MultichannelOptions options_;
    std::vector<ParameterSpec> params_;
    DataRepresentation rep_;
};

Simulation multichannel_simulate(const Eigen::VectorXd& theta, Rng& rng);

/// Applies g to both the data (posterior representation) and theta_center.
Simulation transform_simulation(const ForwardModel& model, const GroupElement& g,
                                const Simulation& sim);

}  // namespace gnpe
