#include "gnpe/models.hpp"

#include <cmath>
#include <numbers>

#include "gnpe/errors.hpp"
#include "gnpe/fft.hpp"

namespace gnpe {

double ParameterSpec::sample(Rng& rng) const {
    return prior == PriorKind::uniform ? uniform(rng, a, b) : a + b * standard_normal(rng);
}

double ParameterSpec::prior_mean() const {
    return prior == PriorKind::uniform ? 0.5 * (a + b) : a;
}

double ParameterSpec::prior_stddev() const {
    return prior == PriorKind::uniform ? (b - a) / std::sqrt(12.0) : b;
}

bool ParameterSpec::in_support(double value) const {
    if (!std::isfinite(value)) return false;
    return prior == PriorKind::normal || (value >= a && value <= b);
}

GaussianPosterior::GaussianPosterior(Eigen::VectorXd mean, Eigen::VectorXd variance)
    : mean_(std::move(mean)), variance_(std::move(variance)) {
    if (mean_.size() != variance_.size())
        throw StructuralError("GaussianPosterior: mean/variance size mismatch");
    for (double v : variance_)
        if (!(v > 0.0) || !std::isfinite(v))
            throw DomainError("GaussianPosterior: variance must be strictly positive");
}

Eigen::MatrixXd GaussianPosterior::sample(std::size_t n, Rng& rng) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), mean_.size());
    const Eigen::VectorXd sd = stddev();
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index d = 0; d < out.cols(); ++d)
            out(i, d) = mean_[d] + sd[d] * standard_normal(rng);
    return out;
}

double GaussianPosterior::log_density(const Eigen::VectorXd& theta) const {
    double lp = 0.0;
    for (Eigen::Index d = 0; d < mean_.size(); ++d) {
        const double z = theta[d] - mean_[d];
        lp += -0.5 * z * z / variance_[d] - 0.5 * std::log(2.0 * std::numbers::pi * variance_[d]);
    }
    return lp;
}

std::vector<std::string> ForwardModel::parameter_names() const {
    std::vector<std::string> names;
    for (const auto& p : parameters()) names.push_back(p.name);
    return names;
}

Eigen::VectorXd ForwardModel::prior_stddevs() const {
    const auto& ps = parameters();
    Eigen::VectorXd out(static_cast<Eigen::Index>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) out[static_cast<Eigen::Index>(i)] = ps[i].prior_stddev();
    return out;
}

Eigen::VectorXd ForwardModel::sample_prior(Rng& rng) const {
    const auto& ps = parameters();
    Eigen::VectorXd theta(static_cast<Eigen::Index>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) theta[static_cast<Eigen::Index>(i)] = ps[i].sample(rng);
    return theta;
}

Eigen::VectorXd ForwardModel::sample_prior_interior(Rng& rng, const Eigen::VectorXd& margin) const {
    const auto& ps = parameters();
    if (static_cast<std::size_t>(margin.size()) != ps.size())
        throw StructuralError("sample_prior_interior: margin size mismatch");
    Eigen::VectorXd theta(static_cast<Eigen::Index>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto idx = static_cast<Eigen::Index>(i);
        const auto& p = ps[i];
        if (p.prior == PriorKind::normal) {
            theta[idx] = p.sample(rng);
            continue;
        }
        const double lo = p.a + margin[idx];
        const double hi = p.b - margin[idx];
        if (!(lo < hi))
            throw DomainError("sample_prior_interior: margin wider than prior of " + p.name);
        theta[idx] = uniform(rng, lo, hi);
    }
    return theta;
}

bool ForwardModel::in_support(const Eigen::VectorXd& theta) const {
    const auto& ps = parameters();
    if (static_cast<std::size_t>(theta.size()) != ps.size()) return false;
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (!ps[i].in_support(theta[static_cast<Eigen::Index>(i)])) return false;
    return true;
}

GroupElement ForwardModel::pose(const Eigen::VectorXd& theta) const {
    const auto slots = pose_slots();
    return pose_of(theta, slots);
}

// ---------------------------------------------------------------------------

double gaussian_toy_simulate(double tau, Rng& rng) { return tau + standard_normal(rng); }

GaussianPosterior gaussian_toy_posterior(double x) {
    return GaussianPosterior(Eigen::VectorXd::Constant(1, (x + kToyPriorMean) / 2.0),
                             Eigen::VectorXd::Constant(1, 0.5));
}

double gaussian_toy_log_likelihood(double x, double tau) {
    const double z = x - tau;
    return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

GaussianToyModel::GaussianToyModel()
    : params_{{"tau", "", PriorKind::normal, kToyPriorMean, 1.0}},
      posterior_rep_(DataRepresentation::affine_1d(2.0)),
      likelihood_rep_(DataRepresentation::affine_1d(1.0)) {}

Simulation GaussianToyModel::simulate(const Eigen::VectorXd& theta, Rng& rng) const {
    if (theta.size() != 1) throw StructuralError("gaussian-toy: theta must be 1-dimensional");
    return {Eigen::VectorXd::Constant(1, gaussian_toy_simulate(theta[0], rng)), theta};
}

std::optional<GaussianPosterior> GaussianToyModel::oracle_posterior(const Simulation& sim) const {
    return gaussian_toy_posterior(sim.x[0]);
}

// ---------------------------------------------------------------------------

SamplingGrid oscillator_grid() {
    SamplingGrid grid;
    grid.bins = 2000;
    grid.duration = 10.0;
    grid.start = -5.0;
    grid.channels = 1;
    grid.units = "s";
    return grid;
}

Eigen::VectorXd oscillator_solution(const OscillatorParams& p, const SamplingGrid& grid) {
    if (!(p.beta > 0.0 && p.beta < 1.0))
        throw DomainError("oscillator_solution: damping ratio must lie in (0, 1), got " +
                          std::to_string(p.beta));
    if (!(p.omega0 > 0.0)) throw DomainError("oscillator_solution: omega0 must be positive");
    if (!std::isfinite(p.tau)) throw DomainError("oscillator_solution: non-finite tau");
    const double damped = std::sqrt(1.0 - p.beta * p.beta) * p.omega0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(grid.bins));
    for (std::size_t i = 0; i < grid.bins; ++i) {
        const double t = grid.time(i);
        if (t <= p.tau) continue;
        const double s = t - p.tau;
        x[static_cast<Eigen::Index>(i)] = std::exp(-p.beta * p.omega0 * s) * std::sin(damped * s) / damped;
    }
    return x;
}

namespace {

std::vector<ParameterSpec> oscillator_params(const OscillatorOptions& o) {
    if (!(o.omega0_min < o.omega0_max) || !(o.omega0_min > 0.0))
        throw DomainError("oscillator: invalid omega0 prior range");
    if (!(o.beta_min < o.beta_max) || !(o.beta_min > 0.0) || !(o.beta_max < 1.0))
        throw DomainError("oscillator: beta prior must satisfy 0 < min < max < 1");
    if (!(o.tau_min < o.tau_max)) throw DomainError("oscillator: invalid tau prior range");
    return {{"omega0", "Hz", PriorKind::uniform, o.omega0_min, o.omega0_max},
            {"beta", "", PriorKind::uniform, o.beta_min, o.beta_max},
            {"tau", "s", PriorKind::uniform, o.tau_min, o.tau_max}};
}

Eigen::VectorXd finish_series(Eigen::VectorXd x, const SamplingGrid& grid, bool band_limited) {
    return band_limited ? band_limit(x, grid.bins, grid.channels) : x;
}

}  // namespace

OscillatorModel::OscillatorModel(OscillatorOptions options)
    : options_(std::move(options)),
      params_(oscillator_params(options_)),
      rep_(DataRepresentation::cyclic_time_shift(options_.grid)) {}

Eigen::VectorXd OscillatorModel::noise_stddev(const Eigen::VectorXd& theta) const {
    double sigma_tau = options_.sigma_tau;
    if (options_.variant == OscillatorVariant::approximate)
        sigma_tau *= 1.0 + options_.tau_noise_ramp * (theta[2] + 2.5) / 2.5;
    return Eigen::Vector3d(options_.sigma_omega0, options_.sigma_beta, sigma_tau);
}

Eigen::VectorXd OscillatorModel::render(const Eigen::VectorXd& theta_center) const {
    return finish_series(
        oscillator_solution({theta_center[0], theta_center[1], theta_center[2]}, options_.grid),
        options_.grid, options_.band_limited);
}

Simulation OscillatorModel::simulate_with_noise(const Eigen::VectorXd& theta,
                                                const Eigen::VectorXd& delta) const {
    if (theta.size() != 3 || delta.size() != 3)
        throw StructuralError("oscillator: theta and noise must be 3-dimensional");
    Eigen::VectorXd center = theta + delta;
    return {render(center), center};
}

Simulation OscillatorModel::simulate(const Eigen::VectorXd& theta, Rng& rng) const {
    if (theta.size() != 3) throw StructuralError("oscillator: theta must be 3-dimensional");
    const Eigen::VectorXd sd = noise_stddev(theta);
    Eigen::VectorXd delta(3);
    for (Eigen::Index i = 0; i < 3; ++i) delta[i] = sd[i] * standard_normal(rng);
    return simulate_with_noise(theta, delta);
}

std::optional<GaussianPosterior> OscillatorModel::oracle_posterior(const Simulation& sim) const {
    // With a flat prior and boundary effects neglected the posterior is the
    // noise distribution centred on theta_center; for the approximate variant
    // the width is evaluated at the centre.
    const Eigen::VectorXd sd = noise_stddev(sim.theta_center);
    return GaussianPosterior(sim.theta_center, sd.cwiseProduct(sd));
}

Simulation oscillator_simulate(const Eigen::VectorXd& theta, Rng& rng) {
    static const OscillatorModel model;
    return model.simulate(theta, rng);
}

Simulation oscillator_simulate_approx(const Eigen::VectorXd& theta, Rng& rng) {
    static const OscillatorModel model(OscillatorOptions{.variant = OscillatorVariant::approximate});
    return model.simulate(theta, rng);
}

// ---------------------------------------------------------------------------

namespace {

SamplingGrid two_channel(SamplingGrid grid) {
    grid.channels = 2;
    return grid;
}

}  // namespace

MultichannelModel::MultichannelModel(MultichannelOptions options)
    : options_(std::move(options)),
      params_{{"omega0", "Hz", PriorKind::uniform, 3.0, 10.0},
              {"beta", "", PriorKind::uniform, 0.2, 0.5},
              {"tau", "s", PriorKind::uniform, -5.0, 0.0},
              {"delta", "s", PriorKind::uniform, -options_.delta_max, options_.delta_max}},
      rep_(DataRepresentation::cyclic_time_shift(two_channel(options_.grid),
                                                 (Eigen::MatrixXd(2, 2) << 1, 0, 1, 1).finished())) {
    if (!(options_.delta_max > 0.0)) throw DomainError("multichannel: delta_max must be positive");
}

double MultichannelModel::channel1_amplitude(double delta) const {
    return 1.0 + options_.amplitude_coupling * delta / options_.delta_max;
}

Eigen::VectorXd MultichannelModel::render(const Eigen::VectorXd& c) const {
    const SamplingGrid& grid = options_.grid;
    const auto n = static_cast<Eigen::Index>(grid.bins);
    Eigen::VectorXd x(2 * n);
    x.head(n) = oscillator_solution({c[0], c[1], c[2]}, grid);
    x.tail(n) = channel1_amplitude(c[3]) * oscillator_solution({c[0], c[1], c[2] + c[3]}, grid);
    return finish_series(std::move(x), rep_.grid(), options_.band_limited);
}

Simulation MultichannelModel::simulate(const Eigen::VectorXd& theta, Rng& rng) const {
    if (theta.size() != 4) throw StructuralError("multichannel: theta must be 4-dimensional");
    const Eigen::Vector4d sd(options_.sigma_omega0, options_.sigma_beta, options_.sigma_tau,
                             options_.sigma_delta);
    Eigen::VectorXd center = theta;
    for (Eigen::Index i = 0; i < 4; ++i) center[i] += sd[i] * standard_normal(rng);
    return {render(center), center};
}

std::optional<GaussianPosterior> MultichannelModel::oracle_posterior(const Simulation& sim) const {
    const Eigen::Vector4d sd(options_.sigma_omega0, options_.sigma_beta, options_.sigma_tau,
                             options_.sigma_delta);
    return GaussianPosterior(sim.theta_center, sd.cwiseProduct(sd));
}

Simulation multichannel_simulate(const Eigen::VectorXd& theta, Rng& rng) {
    static const MultichannelModel model;
    return model.simulate(theta, rng);
}

Simulation transform_simulation(const ForwardModel& model, const GroupElement& g,
                                const Simulation& sim) {
    const auto slots = model.pose_slots();
    return {act_on_data(g, sim.x, model.posterior_representation()),
            act_on_params(g, sim.theta_center, slots).theta};
}

}  // namespace gnpe
