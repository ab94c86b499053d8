#include "gnpe/experiments.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "gnpe/errors.hpp"
#include "gnpe/parallel.hpp"

namespace gnpe {

std::string to_string(Method method) {
    switch (method) {
        case Method::npe: return "npe";
        case Method::npe_cnn: return "npe-cnn";
        case Method::gnpe: return "gnpe";
        case Method::chained_npe: return "chained-npe";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    if (s == "npe") return Method::npe;
    if (s == "npe-cnn") return Method::npe_cnn;
    if (s == "gnpe") return Method::gnpe;
    if (s == "chained-npe") return Method::chained_npe;
    throw ConfigError("unknown method '" + s + "' (expected npe, npe-cnn, gnpe or chained-npe)");
}

std::vector<std::string> method_roles(Method method) {
    switch (method) {
        case Method::npe:
        case Method::npe_cnn: return {"q"};
        case Method::gnpe: return {"q", "q_init"};
        case Method::chained_npe: return {"q_pose", "q_rest"};
    }
    return {};
}

EmbeddingKind default_embedding_kind(const ForwardModel& model) {
    return model.data_size() == 1 ? EmbeddingKind::identity : EmbeddingKind::mlp;
}

namespace {

EstimatorSpec role_spec(const ForwardModel& model, const MethodSettings& settings,
                        const TrainingDataset& data, bool conv) {
    EstimatorSpec spec;
    spec.context_dim = static_cast<std::size_t>(data.contexts.rows());
    spec.input_channels = model.posterior_representation().channels();
    spec.proxy_dim = static_cast<std::size_t>(data.proxies.rows());
    spec.param_dim = static_cast<std::size_t>(data.targets.rows());
    spec.embedding = settings.embedding;
    if (conv) spec.embedding.kind = EmbeddingKind::conv;
    spec.log_std_min = settings.log_std_min;
    spec.log_std_max = settings.log_std_max;
    return spec;
}

}  // namespace

std::vector<TrainedRole> train_method(const ForwardModel& model, const TrainingDataset& raw,
                                      const MethodSettings& settings, const EpochCallback& on_epoch) {
    raw.validate();
    if (static_cast<std::size_t>(raw.contexts.rows()) != model.data_size() ||
        static_cast<std::size_t>(raw.targets.rows()) != model.parameter_dim())
        throw StructuralError("train_method: dataset does not match model " + std::string(model.name()));

    const auto slots = model.pose_slots();
    const std::size_t workers = settings.training.workers;
    std::vector<std::pair<std::string, TrainingDataset>> plan;
    bool conv = false;
    switch (settings.method) {
        case Method::npe: plan.emplace_back("q", raw); break;
        case Method::npe_cnn:
            plan.emplace_back("q", raw);
            conv = true;
            break;
        case Method::gnpe: {
            const GnpeSpec spec = make_gnpe_spec(model, settings.kernel, settings.modes);
            plan.emplace_back("q", make_gnpe_dataset(raw, spec, derive_seed(settings.training.seed, 101),
                                                     workers));
            plan.emplace_back("q_init", make_pose_dataset(raw, slots));
            break;
        }
        case Method::chained_npe:
            plan.emplace_back("q_pose", make_pose_dataset(raw, slots));
            plan.emplace_back("q_rest", make_chained_rest_dataset(
                                            raw, slots, model.posterior_representation(), workers));
            break;
    }

    std::vector<TrainedRole> out;
    for (std::size_t r = 0; r < plan.size(); ++r) {
        const auto& [role, data] = plan[r];
        ConditionalGaussianEstimator est(role_spec(model, settings, data, conv && role == "q"));
        TrainingConfig cfg = settings.training;
        cfg.seed = derive_seed(settings.training.seed, r);
        std::function<void(const EpochRecord&)> cb;
        if (on_epoch) cb = [&, name = role](const EpochRecord& e) { on_epoch(name, e); };
        TrainingHistory history = train(est, data, cfg, cb);
        out.push_back({role, std::move(est), std::move(history)});
    }
    return out;
}

namespace {

const ThetaConditional& role(const RoleMap& roles, const std::string& name) {
    const auto it = roles.find(name);
    if (it == roles.end() || it->second == nullptr)
        throw StructuralError("missing estimator for role '" + name + "'");
    return *it->second;
}

}  // namespace

GnpeResult infer_method(const ForwardModel& model, const MethodSettings& settings,
                        const RoleMap& roles, const Eigen::VectorXd& x,
                        const SamplerSettings& sampler, std::uint64_t seed, std::size_t workers) {
    if (static_cast<std::size_t>(x.size()) != model.data_size())
        throw DataError("observation has " + std::to_string(x.size()) + " entries, model expects " +
                        std::to_string(model.data_size()));
    GnpeResult result;
    switch (settings.method) {
        case Method::npe:
        case Method::npe_cnn:
            result.samples = npe_sample(role(roles, "q"), x, sampler.samples, seed, workers);
            break;
        case Method::chained_npe:
            result.samples = chained_npe_sample(role(roles, "q_pose"), role(roles, "q_rest"), x, model,
                                                sampler.samples, seed, workers);
            break;
        case Method::gnpe: {
            GnpeRunConfig cfg;
            cfg.kernel = settings.kernel;
            cfg.modes = settings.modes;
            cfg.policy = sampler.policy;
            cfg.burn_in = sampler.burn_in;
            cfg.thinning = sampler.thinning;
            cfg.chains = sampler.samples;
            cfg.seed = seed;
            cfg.workers = workers;
            if (sampler.fixed_init) {
                if (sampler.init_pose.size() != model.pose_factors())
                    throw StructuralError("fixed initial pose needs " +
                                          std::to_string(model.pose_factors()) + " values");
                cfg.init.fixed_pose = GroupElement(sampler.init_pose);
            } else {
                cfg.init.q_init = &role(roles, "q_init");
            }
            return run_gnpe(x, role(roles, "q"), model, cfg);
        }
    }
    result.converged = true;
    return result;
}

Eigen::VectorXd evaluation_margin(const ForwardModel& model) {
    Eigen::VectorXd margin = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model.parameter_dim()));
    if (const auto* osc = dynamic_cast<const OscillatorModel*>(&model)) {
        const auto& o = osc->options();
        // Widest tau noise of the approximate variant is reached at tau = 0.
        const double ramp = o.variant == OscillatorVariant::approximate ? 1.0 + o.tau_noise_ramp : 1.0;
        margin << 3.0 * o.sigma_omega0, 3.0 * o.sigma_beta, 3.0 * o.sigma_tau * ramp;
    } else if (const auto* mc = dynamic_cast<const MultichannelModel*>(&model)) {
        const auto& o = mc->options();
        margin << 3.0 * o.sigma_omega0, 3.0 * o.sigma_beta, 3.0 * o.sigma_tau, 3.0 * o.sigma_delta;
        // The relative-shift prior is narrow; cap its margin at half the box.
        margin[3] = std::min(margin[3], 0.5 * o.delta_max);
    }
    return margin;
}

std::vector<Observation> make_observations(const ForwardModel& model, std::size_t count,
                                           std::uint64_t seed) {
    const Eigen::VectorXd margin = evaluation_margin(model);
    std::vector<Observation> out;
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = make_rng(seed, i);
        Eigen::VectorXd theta = model.sample_prior_interior(rng, margin);
        Simulation sim = model.simulate(theta, rng);
        auto posterior = model.oracle_posterior(sim);
        if (!posterior) throw StructuralError("model " + std::string(model.name()) + " has no oracle posterior");
        out.push_back({std::move(theta), std::move(sim), std::move(*posterior)});
    }
    return out;
}

// --- Toy study --------------------------------------------------------------

double ToyStudyResult::mean_c2st(Method method) const {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows)
        if (r.method == method) sum += r.c2st, ++n;
    return n ? sum / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

ToyStudyResult run_toy_study(const ForwardModel& model, const ToyStudySettings& s,
                             const ProgressCallback& progress) {
    const auto log = [&](const std::string& msg) {
        if (progress) progress(msg);
    };
    if (s.gnpe_iterations == 0) throw StructuralError("toy study: at least one GNPE iteration required");
    const auto observations = make_observations(model, s.observations, derive_seed(s.seed, 1));
    const Eigen::VectorXd prior_sd = model.prior_stddevs();

    ToyStudyResult result;
    for (std::size_t k = 0; k < s.seeds; ++k) {
        const std::uint64_t seed_k = derive_seed(s.seed, 1000 + k);
        const TrainingDataset raw =
            generate_npe_dataset(model, s.simulations, derive_seed(seed_k, 0), s.validation_fraction, s.workers);
        for (Method method : s.methods) {
            MethodSettings ms;
            ms.method = method;
            ms.embedding = s.embedding;
            ms.kernel = Kernel::gaussian(std::vector<double>(model.pose_factors(), s.kernel_width));
            ms.training = s.training;
            ms.training.seed = derive_seed(seed_k, 1);
            ms.training.workers = s.workers;
            const auto trained = train_method(model, raw, ms);
            RoleMap roles;
            for (const auto& t : trained) roles[t.role] = &t.estimator;
            const std::size_t epochs = trained.front().history.epochs.size();
            log("seed " + std::to_string(k) + " " + to_string(method) + ": trained (" +
                std::to_string(epochs) + " epochs, best validation loss " +
                std::to_string(trained.front().history.best_validation_loss) + ")");

            SamplerSettings sampler;
            sampler.samples = s.samples;
            sampler.policy.kind = IterationPolicyKind::fixed;
            sampler.policy.iterations = s.gnpe_iterations;
            sampler.burn_in = s.gnpe_iterations - 1;
            for (std::size_t o = 0; o < observations.size(); ++o) {
                const auto& obs = observations[o];
                const GnpeResult inferred = infer_method(model, ms, roles, obs.simulation.x, sampler,
                                                         derive_seed(seed_k, 10 + o), s.workers);
                Rng ref_rng = make_rng(derive_seed(seed_k, 20 + o));
                const Eigen::MatrixXd reference = obs.posterior.sample(s.samples, ref_rng);
                C2stConfig c2 = s.c2st;
                c2.seed = derive_seed(seed_k, 30 + o);
                c2.workers = s.workers;
                const double score = c2st(inferred.samples, reference, c2).score;
                const double mse = mse_of_means(inferred.samples, reference, prior_sd);
                result.rows.push_back({method, k, o, score, mse, epochs});
                log("seed " + std::to_string(k) + " " + to_string(method) + " observation " +
                    std::to_string(o) + ": c2st " + std::to_string(score));
            }
        }
    }
    return result;
}

// --- Spectra ----------------------------------------------------------------

SpectrumResult compare_spectra(const ForwardModel& model, const SpectrumSettings& s) {
    const TrainingDataset raw = generate_npe_dataset(model, s.simulations, derive_seed(s.seed, 0),
                                                     kDefaultValidationFraction, s.workers);
    const GnpeSpec spec = make_gnpe_spec(
        model, Kernel::gaussian(std::vector<double>(model.pose_factors(), s.kernel_width)));
    const TrainingDataset standardized = make_gnpe_dataset(raw, spec, derive_seed(s.seed, 1), s.workers);
    SpectrumResult out;
    out.raw = singular_spectrum(raw.contexts.transpose());
    out.standardized = singular_spectrum(standardized.contexts.transpose());
    out.raw_dimension = effective_dimension(out.raw, s.threshold);
    out.standardized_dimension = effective_dimension(out.standardized, s.threshold);
    return out;
}

// --- Gaussian worked example ------------------------------------------------

GaussianExampleResult run_gaussian_example(const GaussianExampleSettings& s) {
    if (s.bins == 0) throw StructuralError("Gaussian example: at least one histogram bin required");
    const GaussianToyModel model;
    const Kernel kernel = Kernel::gaussian({s.kernel_width});
    const GaussianToyOracle oracle = GaussianToyOracle::kernel_aware(kernel);
    GnpeRunConfig cfg;
    cfg.kernel = kernel;
    cfg.policy.kind = IterationPolicyKind::fixed;
    cfg.policy.iterations = s.iterations;
    cfg.burn_in = s.burn_in;
    cfg.chains = s.chains;
    cfg.seed = s.seed;
    cfg.workers = s.workers;
    cfg.init.fixed_pose = GroupElement{s.init};
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, s.observation);

    GaussianExampleResult out;
    out.run = run_gnpe(x, oracle, model, cfg);
    const Eigen::VectorXd tau = out.run.samples.col(0);
    out.mean = tau.mean();
    out.variance = (tau.array() - out.mean).square().sum() / static_cast<double>(tau.size() - 1);

    const GaussianPosterior exact = gaussian_toy_posterior(s.observation);
    const double mu = exact.mean()[0];
    const double sd = std::sqrt(exact.variance()[0]);
    const double lo = mu - 5.0 * sd;
    const double width = 10.0 * sd / static_cast<double>(s.bins);
    const auto bins = static_cast<Eigen::Index>(s.bins);
    out.bin_centers.resize(bins);
    out.sample_density = Eigen::VectorXd::Zero(bins);
    out.analytic_density.resize(bins);
    for (Eigen::Index b = 0; b < bins; ++b) {
        out.bin_centers[b] = lo + (static_cast<double>(b) + 0.5) * width;
        const double z = (out.bin_centers[b] - mu) / sd;
        out.analytic_density[b] = std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
    }
    for (Eigen::Index i = 0; i < tau.size(); ++i) {
        const double pos = (tau[i] - lo) / width;
        if (pos >= 0.0 && pos < static_cast<double>(s.bins))
            out.sample_density[static_cast<Eigen::Index>(pos)] += 1.0;
    }
    out.sample_density /= static_cast<double>(tau.size()) * width;
    return out;
}

}  // namespace gnpe
