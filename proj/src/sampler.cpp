#include "gnpe/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "gnpe/errors.hpp"
#include "gnpe/metrics.hpp"
#include "gnpe/parallel.hpp"

namespace gnpe {

namespace {

constexpr std::size_t kChunk = 512;

std::size_t chunk_count(std::size_t n) { return (n + kChunk - 1) / kChunk; }

std::vector<Rng> make_streams(std::uint64_t seed, std::size_t n) {
    std::vector<Rng> rngs;
    rngs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) rngs.push_back(make_rng(seed, i));
    return rngs;
}

Eigen::MatrixXd replicate(const Eigen::VectorXd& x, std::size_t n) {
    return x.replicate(1, static_cast<Eigen::Index>(n));
}

std::vector<std::size_t> rest_slots(std::size_t param_dim, const std::vector<std::size_t>& pose_slots) {
    std::vector<std::size_t> rest;
    for (std::size_t p = 0; p < param_dim; ++p)
        if (std::find(pose_slots.begin(), pose_slots.end(), p) == pose_slots.end()) rest.push_back(p);
    return rest;
}

GibbsChainEnsemble empty_ensemble(std::size_t param_dim, const std::vector<std::size_t>& pose_slots,
                                  std::size_t n, std::uint64_t seed) {
    if (n == 0) throw StructuralError("init_chains: at least one chain required");
    for (std::size_t s : pose_slots)
        if (s >= param_dim) throw StructuralError("init_chains: pose slot out of range");
    GibbsChainEnsemble ens;
    ens.pose_slots = pose_slots;
    ens.param_dim = param_dim;
    const auto N = static_cast<Eigen::Index>(n);
    const auto K = static_cast<Eigen::Index>(pose_slots.size());
    ens.theta = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(param_dim), N,
                                          std::numeric_limits<double>::quiet_NaN());
    ens.proxy = Eigen::MatrixXd::Constant(K, N, std::numeric_limits<double>::quiet_NaN());
    ens.rngs = make_streams(seed, n);
    ens.valid.assign(n, 1);
    return ens;
}

void finish_init(GibbsChainEnsemble& ens) {
    ens.initial_pose = ens.pose;
    ens.pose_snapshots.assign(1, ens.pose);
}

}  // namespace

GibbsChainEnsemble init_chains(const GroupElement& pose, std::size_t param_dim,
                               const std::vector<std::size_t>& pose_slots, std::size_t n,
                               std::uint64_t seed) {
    if (pose.factors() != pose_slots.size())
        throw StructuralError("init_chains: initial pose has the wrong number of factors");
    GibbsChainEnsemble ens = empty_ensemble(param_dim, pose_slots, n, seed);
    const Eigen::Map<const Eigen::VectorXd> p(pose.shifts().data(),
                                              static_cast<Eigen::Index>(pose.factors()));
    ens.pose = p.replicate(1, static_cast<Eigen::Index>(n));
    finish_init(ens);
    return ens;
}

GibbsChainEnsemble init_chains(const ThetaConditional& q_init, const Eigen::VectorXd& x,
                               std::size_t param_dim, const std::vector<std::size_t>& pose_slots,
                               std::size_t n, std::uint64_t seed, std::size_t workers) {
    if (!q_init.ready()) throw StructuralError("init_chains: q_init has not been trained");
    if (q_init.param_dim() != pose_slots.size() || q_init.proxy_dim() != 0)
        throw StructuralError("init_chains: q_init must model exactly the pose factors");
    if (q_init.context_dim() != static_cast<std::size_t>(x.size()))
        throw StructuralError("init_chains: observation length does not match q_init");
    GibbsChainEnsemble ens = empty_ensemble(param_dim, pose_slots, n, seed);
    ens.pose.resize(static_cast<Eigen::Index>(pose_slots.size()), static_cast<Eigen::Index>(n));
    parallel_for(chunk_count(n), workers, [&](std::size_t c) {
        const std::size_t start = c * kChunk;
        const std::size_t len = std::min(kChunk, n - start);
        const Eigen::MatrixXd draws =
            q_init.draw(replicate(x, len), Eigen::MatrixXd(0, static_cast<Eigen::Index>(len)),
                        std::span<Rng>(ens.rngs).subspan(start, len));
        ens.pose.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) = draws;
    });
    if (!ens.pose.allFinite()) throw DataError("init_chains: q_init produced non-finite poses");
    finish_init(ens);
    return ens;
}

void gibbs_iteration(GibbsChainEnsemble& ens, const ThetaConditional& q, const GnpeSpec& spec,
                     const Eigen::VectorXd& x, std::size_t workers,
                     std::vector<GibbsEvent>* events) {
    spec.validate();
    if (spec.pose_slots != ens.pose_slots)
        throw StructuralError("gibbs_iteration: ensemble and GNPE spec disagree on pose slots");
    if (q.param_dim() != ens.param_dim || q.proxy_dim() != spec.proxy_dim())
        throw StructuralError("gibbs_iteration: estimator does not match the GNPE mode");
    if (q.context_dim() != static_cast<std::size_t>(x.size()))
        throw StructuralError("gibbs_iteration: observation length does not match the estimator");
    if (!q.ready()) throw StructuralError("gibbs_iteration: estimator has not been trained");

    const std::size_t n = ens.size();
    const std::size_t K = ens.factors();
    const std::size_t next_iteration = ens.iteration + 1;
    std::vector<std::vector<GibbsEvent>> chunk_events(chunk_count(n));

    parallel_for(chunk_count(n), workers, [&](std::size_t c) {
        const std::size_t start = c * kChunk;
        const std::size_t len = std::min(kChunk, n - start);
        Eigen::MatrixXd contexts(x.size(), static_cast<Eigen::Index>(len));
        Eigen::MatrixXd proxies(static_cast<Eigen::Index>(spec.proxy_dim()), static_cast<Eigen::Index>(len));
        std::vector<GroupElement> g_hats(len);
        for (std::size_t j = 0; j < len; ++j) {
            const auto i = static_cast<Eigen::Index>(start + j);
            std::vector<double> pose(K);
            for (std::size_t f = 0; f < K; ++f) pose[f] = ens.pose(static_cast<Eigen::Index>(f), i);
            g_hats[j] = compose(GroupElement(std::move(pose)), sample_kernel(spec.kernel, ens.rngs[start + j]));
            contexts.col(static_cast<Eigen::Index>(j)) =
                act_on_data(inverse(g_hats[j]), x, spec.representation);
            Eigen::Index k = 0;
            for (std::size_t f = 0; f < K; ++f) {
                ens.proxy(static_cast<Eigen::Index>(f), i) = g_hats[j][f];
                if (spec.modes[f] == EquivarianceMode::approximate)
                    proxies(k++, static_cast<Eigen::Index>(j)) = g_hats[j][f];
            }
        }
        Eigen::MatrixXd draws = q.draw(contexts, proxies, std::span<Rng>(ens.rngs).subspan(start, len));
        for (std::size_t j = 0; j < len; ++j) {
            const auto i = static_cast<Eigen::Index>(start + j);
            auto theta = draws.col(static_cast<Eigen::Index>(j));
            for (std::size_t f = 0; f < K; ++f)
                if (spec.modes[f] == EquivarianceMode::exact)
                    theta[static_cast<Eigen::Index>(spec.pose_slots[f])] += g_hats[j][f];
            if (theta.allFinite()) {
                ens.theta.col(i) = theta;
                for (std::size_t f = 0; f < K; ++f)
                    ens.pose(static_cast<Eigen::Index>(f), i) =
                        theta[static_cast<Eigen::Index>(spec.pose_slots[f])];
                ens.valid[start + j] = 1;
            } else {
                ens.theta.col(i).setConstant(std::numeric_limits<double>::quiet_NaN());
                ens.pose.col(i) = ens.initial_pose.col(i);
                ens.valid[start + j] = 0;
                chunk_events[c].push_back(
                    {next_iteration, start + j, "non-finite draw; chain reset to its initial pose"});
            }
        }
    });
    ens.iteration = next_iteration;
    ens.pose_snapshots.push_back(ens.pose);
    if (events != nullptr)
        for (auto& ce : chunk_events) events->insert(events->end(), ce.begin(), ce.end());
}

JsDivergence convergence_js(const Eigen::MatrixXd& pose_a, const Eigen::MatrixXd& pose_b) {
    if (pose_a.rows() != pose_b.rows() || pose_a.rows() == 0)
        throw StructuralError("convergence_js: snapshots have different factor counts");
    JsDivergence worst;
    for (Eigen::Index f = 0; f < pose_a.rows(); ++f) {
        const Eigen::VectorXd a = pose_a.row(f).transpose();
        const Eigen::VectorXd b = pose_b.row(f).transpose();
        const JsDivergence js = js_divergence(std::span<const double>(a.data(), static_cast<std::size_t>(a.size())),
                                              std::span<const double>(b.data(), static_cast<std::size_t>(b.size())));
        if (f == 0 || js.value > worst.value) worst = js;
        worst.degenerate = worst.degenerate || js.degenerate;
    }
    return worst;
}

void IterationPolicy::validate() const {
    if (kind == IterationPolicyKind::fixed && iterations == 0)
        throw StructuralError("iteration policy: fixed policy needs at least one iteration");
    if (kind == IterationPolicyKind::js && (!(js_threshold > 0.0) || max_iterations == 0))
        throw StructuralError("iteration policy: JS threshold must be positive");
}

void GnpeRunConfig::validate() const {
    policy.validate();
    if (thinning == 0) throw StructuralError("GNPE run: thinning stride must be at least 1");
    if (chains == 0) throw StructuralError("GNPE run: at least one chain required");
    if (init.q_init == nullptr && !init.fixed_pose)
        throw StructuralError("GNPE run: no chain initialisation given");
}

GnpeResult run_gnpe(const Eigen::VectorXd& x, const ThetaConditional& q, const ForwardModel& model,
                    const GnpeRunConfig& config) {
    config.validate();
    const GnpeSpec spec = make_gnpe_spec(model, config.kernel, config.modes);
    const auto slots = model.pose_slots();
    const std::size_t P = model.parameter_dim();
    GibbsChainEnsemble ens =
        config.init.fixed_pose
            ? init_chains(*config.init.fixed_pose, P, slots, config.chains, config.seed)
            : init_chains(*config.init.q_init, x, P, slots, config.chains, config.seed, config.workers);

    GnpeResult result;
    std::vector<Eigen::MatrixXd> kept_theta, kept_proxy;
    std::vector<std::size_t> kept_iteration;
    const auto& policy = config.policy;
    const std::size_t limit =
        policy.kind == IterationPolicyKind::fixed ? policy.iterations : policy.max_iterations;

    const auto keep = [&](std::size_t j) {
        kept_theta.push_back(ens.theta);
        kept_proxy.push_back(ens.proxy);
        kept_iteration.push_back(j);
    };

    for (std::size_t j = 1; j <= limit; ++j) {
        gibbs_iteration(ens, q, spec, x, config.workers, &result.events);
        const JsDivergence js = convergence_js(ens.pose_snapshots[j - 1], ens.pose_snapshots[j]);
        result.js_trace.push_back(js.value);
        result.js_degenerate.push_back(js.degenerate ? 1 : 0);
        const bool below = !js.degenerate && js.value < policy.js_threshold;
        if (below && !result.converged_at) result.converged_at = j;
        result.iterations = j;
        if (j > config.burn_in && (j - config.burn_in - 1) % config.thinning == 0) keep(j);
        if (policy.kind == IterationPolicyKind::js && below && j > config.burn_in) break;
    }
    if (kept_theta.empty()) keep(result.iterations);
    result.converged = !result.js_degenerate.back() && result.js_trace.back() < policy.js_threshold;

    std::size_t rows = 0;
    for (const auto& block : kept_theta)
        for (Eigen::Index i = 0; i < block.cols(); ++i)
            if (block.col(i).allFinite()) ++rows;
    result.samples.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(P));
    result.proxies.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(slots.size()));
    Eigen::Index r = 0;
    for (std::size_t b = 0; b < kept_theta.size(); ++b)
        for (Eigen::Index i = 0; i < kept_theta[b].cols(); ++i) {
            if (!kept_theta[b].col(i).allFinite()) continue;
            result.samples.row(r) = kept_theta[b].col(i).transpose();
            result.proxies.row(r) = kept_proxy[b].col(i).transpose();
            result.chain_ids.push_back(static_cast<std::size_t>(i));
            result.sample_iterations.push_back(kept_iteration[b]);
            ++r;
        }
    result.pose_snapshots = std::move(ens.pose_snapshots);
    return result;
}

Eigen::MatrixXd chained_npe_sample(const ThetaConditional& q_pose, const ThetaConditional& q_rest,
                                   const Eigen::VectorXd& x, const ForwardModel& model,
                                   std::size_t n, std::uint64_t seed, std::size_t workers) {
    const auto slots = model.pose_slots();
    const std::size_t P = model.parameter_dim();
    const auto rest = rest_slots(P, slots);
    if (!q_pose.ready() || !q_rest.ready())
        throw StructuralError("chained NPE: estimators have not been trained");
    if (q_pose.param_dim() != slots.size() || q_rest.param_dim() != rest.size() ||
        q_rest.proxy_dim() != slots.size())
        throw StructuralError("chained NPE: estimator dimensions do not match the model");
    const auto& rep = model.posterior_representation();
    std::vector<Rng> rngs = make_streams(seed, n);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(P));
    parallel_for(chunk_count(n), workers, [&](std::size_t c) {
        const std::size_t start = c * kChunk;
        const std::size_t len = std::min(kChunk, n - start);
        const auto streams = std::span<Rng>(rngs).subspan(start, len);
        const Eigen::MatrixXd lambda = q_pose.draw(
            replicate(x, len), Eigen::MatrixXd(0, static_cast<Eigen::Index>(len)), streams);
        Eigen::MatrixXd aligned(x.size(), static_cast<Eigen::Index>(len));
        for (Eigen::Index j = 0; j < aligned.cols(); ++j) {
            const Eigen::VectorXd l = lambda.col(j);
            aligned.col(j) = act_on_data(inverse(GroupElement(std::vector<double>(l.data(), l.data() + l.size()))),
                                         x, rep);
        }
        const Eigen::MatrixXd phi = q_rest.draw(aligned, lambda, streams);
        for (Eigen::Index j = 0; j < aligned.cols(); ++j) {
            const auto row = static_cast<Eigen::Index>(start) + j;
            for (std::size_t f = 0; f < slots.size(); ++f)
                out(row, static_cast<Eigen::Index>(slots[f])) = lambda(static_cast<Eigen::Index>(f), j);
            for (std::size_t k = 0; k < rest.size(); ++k)
                out(row, static_cast<Eigen::Index>(rest[k])) = phi(static_cast<Eigen::Index>(k), j);
        }
    });
    return out;
}

Eigen::MatrixXd npe_sample(const ThetaConditional& q, const Eigen::VectorXd& x, std::size_t n,
                           std::uint64_t seed, std::size_t workers) {
    if (!q.ready()) throw StructuralError("npe_sample: estimator has not been trained");
    if (q.proxy_dim() != 0) throw StructuralError("npe_sample: estimator expects proxy features");
    std::vector<Rng> rngs = make_streams(seed, n);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q.param_dim()));
    parallel_for(chunk_count(n), workers, [&](std::size_t c) {
        const std::size_t start = c * kChunk;
        const std::size_t len = std::min(kChunk, n - start);
        out.middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(len)) =
            q.draw(replicate(x, len), Eigen::MatrixXd(0, static_cast<Eigen::Index>(len)),
                   std::span<Rng>(rngs).subspan(start, len))
                .transpose();
    });
    return out;
}

// --- Analytic conditionals --------------------------------------------------

GaussianToyOracle GaussianToyOracle::kernel_aware(const Kernel& kernel) {
    if (kernel.factors() != 1) throw StructuralError("Gaussian toy oracle: one pose factor expected");
    if (kernel.kind() == KernelKind::delta) return {0.0, 0.0};
    if (kernel.kind() != KernelKind::gaussian)
        throw StructuralError("Gaussian toy oracle: closed form needs a Gaussian or delta kernel");
    const double k = kernel.widths()[0];
    const double v = 1.0 / (2.0 + 1.0 / (k * k));
    return {v, v};
}

GaussianToyOracle GaussianToyOracle::proxy_agnostic() { return {0.5, 0.5}; }

Eigen::MatrixXd GaussianToyOracle::draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd&,
                                        std::span<Rng> rngs) const {
    if (contexts.rows() != 1 || rngs.size() != static_cast<std::size_t>(contexts.cols()))
        throw StructuralError("Gaussian toy oracle: scalar contexts and one stream per column");
    const double sd = std::sqrt(variance_);
    Eigen::MatrixXd out(1, contexts.cols());
    for (Eigen::Index b = 0; b < contexts.cols(); ++b) {
        const double z = standard_normal(rngs[static_cast<std::size_t>(b)]);
        out(0, b) = slope_ * (contexts(0, b) + kToyPriorMean) + sd * z;
    }
    return out;
}

FixedGaussianConditional::FixedGaussianConditional(Eigen::VectorXd mean, Eigen::VectorXd stddev,
                                                   std::size_t context_dim, std::size_t proxy_dim)
    : mean_(std::move(mean)), stddev_(std::move(stddev)), context_dim_(context_dim), proxy_dim_(proxy_dim) {
    if (mean_.size() != stddev_.size() || (stddev_.array() < 0.0).any())
        throw StructuralError("FixedGaussianConditional: invalid mean/stddev");
}

Eigen::MatrixXd FixedGaussianConditional::draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd&,
                                               std::span<Rng> rngs) const {
    if (rngs.size() != static_cast<std::size_t>(contexts.cols()))
        throw StructuralError("FixedGaussianConditional: one stream per column required");
    Eigen::MatrixXd out(mean_.size(), contexts.cols());
    for (Eigen::Index b = 0; b < contexts.cols(); ++b)
        for (Eigen::Index p = 0; p < mean_.size(); ++p)
            out(p, b) = mean_[p] + stddev_[p] * standard_normal(rngs[static_cast<std::size_t>(b)]);
    return out;
}

OffsetConditional::OffsetConditional(const ThetaConditional& base, Eigen::VectorXd offset)
    : base_(base), offset_(std::move(offset)) {
    if (static_cast<std::size_t>(offset_.size()) != base_.param_dim())
        throw StructuralError("OffsetConditional: offset dimension mismatch");
}

Eigen::MatrixXd OffsetConditional::draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                                        std::span<Rng> rngs) const {
    return base_.draw(contexts, proxies, rngs).colwise() + offset_;
}

// --- Output -----------------------------------------------------------------

void write_samples_csv(const std::filesystem::path& path, const Eigen::MatrixXd& samples,
                       const std::vector<std::string>& parameter_names, const Eigen::MatrixXd& proxies,
                       const std::vector<std::string>& proxy_names,
                       const std::vector<std::size_t>& chain_ids,
                       const std::vector<std::size_t>& iterations, const std::string& comment) {
    const auto n = static_cast<std::size_t>(samples.rows());
    if (parameter_names.size() != static_cast<std::size_t>(samples.cols()) ||
        (proxies.size() > 0 && (static_cast<std::size_t>(proxies.rows()) != n ||
                                proxy_names.size() != static_cast<std::size_t>(proxies.cols()))) ||
        (!chain_ids.empty() && chain_ids.size() != n) || (!iterations.empty() && iterations.size() != n))
        throw StructuralError("write_samples_csv: column counts do not match");
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    if (!comment.empty()) os << "# " << comment << '\n';
    bool first = true;
    const auto sep = [&] {
        if (!first) os << ',';
        first = false;
    };
    for (const auto& name : parameter_names) sep(), os << name;
    if (proxies.size() > 0)
        for (const auto& name : proxy_names) sep(), os << name;
    if (!chain_ids.empty()) sep(), os << "chain";
    if (!iterations.empty()) sep(), os << "iteration";
    os << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        for (Eigen::Index c = 0; c < samples.cols(); ++c) os << (c ? "," : "") << samples(r, c);
        if (proxies.size() > 0)
            for (Eigen::Index c = 0; c < proxies.cols(); ++c) os << ',' << proxies(r, c);
        if (!chain_ids.empty()) os << ',' << chain_ids[i];
        if (!iterations.empty()) os << ',' << iterations[i];
        os << '\n';
    }
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace gnpe
