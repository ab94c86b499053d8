// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 1 5 9      run a subset
//
// The lines are also written to acceptance_report.txt in the working
// directory, since ctest hides the output of passing tests.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gnpe/config.hpp"
#include "gnpe/dataset.hpp"
#include "gnpe/estimator.hpp"
#include "gnpe/experiments.hpp"
#include "gnpe/metrics.hpp"
#include "gnpe/models.hpp"
#include "gnpe/sampler.hpp"
#include "support.hpp"

using namespace gnpe;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

void progress(const std::string& line) { std::cerr << "  .. " << line << '\n'; }

double normal_cdf(double x, double mean, double var) {
    return test::normal_cdf((x - mean) / std::sqrt(var));
}

const GaussianToyModel& toy() {
    static const GaussianToyModel model;
    return model;
}

const OscillatorModel& oscillator() {
    static const OscillatorModel model;
    return model;
}

// GNPE and chained NPE trained once on the oscillator, shared by criteria
// 4, 5 and 10.
struct OscillatorEstimators {
    std::vector<TrainedRole> gnpe;
    std::vector<TrainedRole> chained;
    MethodSettings gnpe_settings;
    MethodSettings chained_settings;

    const ThetaConditional& role(const std::vector<TrainedRole>& roles, const std::string& name) const {
        for (const auto& r : roles)
            if (r.role == name) return r.estimator;
        throw std::runtime_error("missing role " + name);
    }
};

const OscillatorEstimators& oscillator_estimators() {
    static std::unique_ptr<OscillatorEstimators> cache;
    if (cache) return *cache;
    const auto t0 = Clock::now();
    cache = std::make_unique<OscillatorEstimators>();
    const TrainingDataset raw = generate_npe_dataset(oscillator(), 10000, 9001);
    MethodSettings s;
    s.method = Method::gnpe;
    s.kernel = Kernel::gaussian({0.1});
    s.training.seed = 9002;
    cache->gnpe_settings = s;
    cache->gnpe = train_method(oscillator(), raw, s);
    s.method = Method::chained_npe;
    cache->chained_settings = s;
    cache->chained = train_method(oscillator(), raw, s);
    progress(fmt("trained oscillator GNPE and chained NPE estimators (%.0f s)", seconds_since(t0)));
    return *cache;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    const auto t0 = Clock::now();
    GaussianExampleSettings s;  // x = 3, N(0, 1) kernel, init 0, 10^4 chains, 11 sweeps
    const GaussianExampleResult r = run_gaussian_example(s);
    const double elapsed = seconds_since(t0);
    const auto n = r.run.samples.rows();
    const bool pass = n == 10000 && std::abs(r.mean + 1.0) < 0.02 && std::abs(r.variance / 0.5 - 1.0) < 0.05 &&
                      elapsed < 10.0;
    return {pass, fmt("n=%ld mean=%.4f (|+1|<0.02) var=%.4f (0.5 +-5%%) %.2fs (<10s)", static_cast<long>(n), r.mean,
                      r.variance, elapsed)};
}

Outcome criterion2() {
    const auto t0 = Clock::now();
    const auto posterior = gaussian_toy_posterior(3.0);
    std::size_t good = 0;
    std::ostringstream ps;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const std::uint64_t base = derive_seed(2000, seed);
        const TrainingDataset raw = generate_npe_dataset(toy(), 100000, derive_seed(base, 0));
        const GnpeSpec spec = make_gnpe_spec(toy(), Kernel::gaussian({1.0}));
        const TrainingDataset data = make_gnpe_dataset(raw, spec, derive_seed(base, 1));
        EstimatorSpec es;
        es.context_dim = 1;
        es.param_dim = 1;
        es.embedding.kind = EmbeddingKind::identity;
        ConditionalGaussianEstimator q(es);
        TrainingConfig tc;
        tc.seed = derive_seed(base, 2);
        train(q, data, tc);

        GnpeRunConfig rc;
        rc.kernel = spec.kernel;
        rc.policy.kind = IterationPolicyKind::fixed;
        rc.policy.iterations = 11;
        rc.burn_in = 10;
        rc.chains = 10000;
        rc.seed = derive_seed(base, 3);
        rc.init.fixed_pose = GroupElement{0.0};
        const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, 3.0), q, toy(), rc);
        std::vector<double> tau(r.samples.col(0).data(), r.samples.col(0).data() + r.samples.rows());
        const KsResult ks = ks_statistic(tau, [&](double t) {
            return normal_cdf(t, posterior.mean()[0], posterior.variance()[0]);
        });
        if (ks.p_value > 0.01) ++good;
        ps << (seed ? "," : "") << fmt("%.3f", ks.p_value);
    }
    const double elapsed = seconds_since(t0);
    return {good >= 8 && elapsed < 120.0,
            fmt("KS p>0.01 on %zu/10 seeds (>=8) p=[%s] %.1fs (<120s)", good, ps.str().c_str(), elapsed)};
}

Outcome criterion3() {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg = parse_config(default_config());
    const ToyStudyResult r = run_toy_study(oscillator(), cfg.toy_study, [](const std::string& line) {
        if (line.find("trained") != std::string::npos) progress(line);
    });
    const double elapsed = seconds_since(t0);
    const double npe = r.mean_c2st(Method::npe);
    const double cnn = r.mean_c2st(Method::npe_cnn);
    const double gnpe = r.mean_c2st(Method::gnpe);
    const bool pass = gnpe < npe - 0.05 && std::abs(gnpe - cnn) < 0.05 && elapsed < 1800.0;
    return {pass, fmt("c2st NPE=%.4f NPE-CNN=%.4f GNPE=%.4f (GNPE<NPE-0.05, |GNPE-CNN|<0.05) %.0fs (<1800s)", npe,
                      cnn, gnpe, elapsed)};
}

Outcome criterion4() {
    const auto& est = oscillator_estimators();
    const auto observations = make_observations(oscillator(), 10, 4000);
    SamplerSettings ss;
    ss.samples = 10000;
    ss.policy.kind = IterationPolicyKind::fixed;
    ss.policy.iterations = 2;
    ss.burn_in = 1;
    const RoleMap roles{{"q", &est.role(est.gnpe, "q")}, {"q_init", &est.role(est.gnpe, "q_init")}};
    std::size_t good = 0;
    std::ostringstream js;
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const GnpeResult r = infer_method(oscillator(), est.gnpe_settings, roles, observations[i].simulation.x, ss,
                                          derive_seed(4001, i));
        const double v = r.js_trace.at(1);
        if (v < 0.01 && !r.js_degenerate.at(1)) ++good;
        js << (i ? "," : "") << fmt("%.4f", v);
    }
    return {good >= 9, fmt("JS(iter 1, iter 2) < 0.01 on %zu/10 seeds (>=9) js=[%s]", good, js.str().c_str())};
}

Outcome criterion5() {
    const auto& est = oscillator_estimators();
    const ThetaConditional& q = est.role(est.gnpe, "q");
    const auto observations = make_observations(oscillator(), 5, 5000);
    const auto t0 = Clock::now();
    double worst = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        Rng rng = make_rng(5001, i);
        const Eigen::VectorXd& x = observations[i].simulation.x;
        const double h = uniform(rng, -1.0, 1.0);
        GnpeRunConfig rc;
        rc.kernel = est.gnpe_settings.kernel;
        rc.policy.kind = IterationPolicyKind::fixed;
        rc.policy.iterations = 5;
        rc.burn_in = 2;
        rc.chains = 1000;
        rc.seed = derive_seed(5002, i);
        rc.init.fixed_pose = GroupElement{observations[i].theta[2]};
        const GnpeResult a = run_gnpe(x, q, oscillator(), rc);
        rc.init.fixed_pose = GroupElement{observations[i].theta[2] + h};
        const Eigen::VectorXd hx = act_on_data(GroupElement{h}, x, oscillator().posterior_representation());
        const GnpeResult b = run_gnpe(hx, q, oscillator(), rc);
        if (a.samples.rows() != b.samples.rows()) return {false, "sample counts differ"};
        Eigen::MatrixXd moved = a.samples;
        moved.col(2).array() += h;
        worst = std::max(worst, test::max_abs_diff(moved, b.samples));
    }
    const double elapsed = seconds_since(t0);
    return {worst < 1e-9 && elapsed < 60.0,
            fmt("max |h.theta(x) - theta(T_h x)| = %.2e (<1e-9) over 5 h, %.1fs (<60s)", worst, elapsed)};
}

Outcome criterion6() {
    const double x = 3.0;
    const auto post = gaussian_toy_posterior(x);
    const double m = post.mean()[0], v = post.variance()[0], sd = std::sqrt(v);
    const std::size_t n = 10000;
    const double se_mean = std::sqrt(v / n);
    const double se_var = v * std::sqrt(2.0 / (n - 1));
    bool pass = true;
    std::ostringstream out;
    for (double factor : {0.3, 1.0, 3.0}) {
        GnpeRunConfig rc;
        rc.kernel = Kernel::gaussian({factor * sd});
        rc.policy.kind = IterationPolicyKind::fixed;
        rc.policy.iterations = 5;
        rc.burn_in = 4;
        rc.chains = n;
        rc.seed = derive_seed(6000, static_cast<std::uint64_t>(factor * 10));
        const FixedGaussianConditional start(Eigen::VectorXd::Constant(1, m), Eigen::VectorXd::Constant(1, sd), 1);
        rc.init.q_init = &start;
        const auto oracle = GaussianToyOracle::kernel_aware(rc.kernel);
        const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, x), oracle, toy(), rc);
        const Eigen::VectorXd pose = r.pose_snapshots.back().row(0).transpose();
        const double dm = std::abs(pose.mean() - m) / se_mean;
        const double dv = std::abs(test::sample_variance(pose) - v) / se_var;
        pass = pass && dm < 3.0 && dv < 3.0;
        out << fmt("k=%.1fsd: %.2f/%.2f SE ", factor, dm, dv);
    }
    return {pass, out.str() + "(mean/var deviation in MC standard errors, <3)"};
}

Outcome criterion7() {
    const double x = 3.0;
    const double truth = gaussian_toy_posterior(x).mean()[0];
    const double offset = 1.5;
    GnpeRunConfig rc;
    rc.kernel = Kernel::delta(1);
    rc.policy.kind = IterationPolicyKind::js;
    rc.policy.max_iterations = 50;
    rc.burn_in = 10;
    rc.chains = 10000;
    rc.seed = 7000;
    rc.init.fixed_pose = GroupElement{truth + offset};
    const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, x), GaussianToyOracle::kernel_aware(rc.kernel), toy(), rc);
    const double bias = r.samples.col(0).mean() - truth;
    const bool pass = !r.converged && std::abs(bias - offset) <= 0.1 * offset;
    return {pass, fmt("converged=%s after %zu sweeps, tau bias=%.3f vs init offset %.3f (within 10%%)",
                      r.converged ? "true" : "false", r.iterations, bias, offset)};
}

// Central differences against the analytic gradient for every weight.
double gradient_error(ConditionalGaussianEstimator& est, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const auto& s = est.spec();
    const auto random = [&](std::size_t rows) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), 5);
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = standard_normal(rng);
        return m;
    };
    const Eigen::MatrixXd t = random(s.param_dim), c = random(s.context_dim), p = random(s.proxy_dim);
    std::vector<double> grad;
    est.loss_and_gradient(t, c, p, grad);
    const double h = 1e-5;
    double worst = 0.0;
    auto w = est.weights();
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double keep = w[i];
        w[i] = keep + h;
        const double up = est.loss(t, c, p);
        w[i] = keep - h;
        const double down = est.loss(t, c, p);
        w[i] = keep;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-3}));
    }
    return worst;
}

Outcome criterion8() {
    double worst = 0.0;
    std::size_t networks = 0, weights = 0;
    for (std::uint64_t i = 0; i < 10; ++i) {
        Rng rng = make_rng(8000, i);
        EstimatorSpec spec;
        spec.param_dim = 1 + i % 3;
        spec.proxy_dim = i % 2;
        if (i % 3 == 2) {
            spec.input_channels = 1 + i % 2;
            spec.context_dim = spec.input_channels * 12;
            spec.embedding.kind = EmbeddingKind::conv;
            spec.embedding.conv = ConvStackSpec{{3}, {2}, 3, 3};
            spec.embedding.hidden = {4};
        } else {
            spec.context_dim = 2 + i % 4;
            spec.embedding.hidden = {4 + i % 3, 3};
        }
        ConditionalGaussianEstimator est(spec);
        est.initialize(derive_seed(8001, i));
        weights += est.weight_count();
        worst = std::max(worst, gradient_error(est, derive_seed(8002, i)));
        ++networks;
        (void)rng;
    }
    return {worst < 1e-4, fmt("%zu networks, %zu weights, worst relative error %.2e (<1e-4)", networks, weights, worst)};
}

Outcome criterion9() {
    SpectrumSettings s;  // 512 simulations, kernel 0.1 s, threshold 1e-2
    const SpectrumResult r = compare_spectra(oscillator(), s);
    return {r.standardized_dimension < r.raw_dimension,
            fmt("effective dimension standardized=%zu < raw=%zu", r.standardized_dimension, r.raw_dimension)};
}

Outcome criterion10() {
    const auto& est = oscillator_estimators();
    const ThetaConditional& q = est.role(est.gnpe, "q");
    const ThetaConditional& q_rest = est.role(est.chained, "q_rest");
    const auto observations = make_observations(oscillator(), 3, 10000);
    const std::size_t n = 5000;
    C2stConfig cc;
    double c2st_gnpe = 0.0, c2st_chained = 0.0, bias_gnpe = 0.0, bias_chained = 0.0;
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const auto& obs = observations[i];
        const double tau = obs.posterior.mean()[2];
        const double tau_sd = obs.posterior.stddev()[2];
        const FixedGaussianConditional oracle_pose(Eigen::VectorXd::Constant(1, tau), Eigen::VectorXd::Constant(1, tau_sd),
                                                   oscillator().data_size());
        const OffsetConditional biased_pose(oracle_pose, Eigen::VectorXd::Constant(1, 0.3));
        Rng ref_rng = make_rng(10001, i);
        const Eigen::MatrixXd reference = obs.posterior.sample(n, ref_rng);

        const auto gnpe_run = [&](const ThetaConditional& init) {
            GnpeRunConfig rc;
            rc.kernel = est.gnpe_settings.kernel;
            rc.policy.kind = IterationPolicyKind::fixed;
            rc.policy.iterations = 31;
            rc.burn_in = 30;
            rc.chains = n;
            rc.seed = derive_seed(10002, i);
            rc.init.q_init = &init;
            return run_gnpe(obs.simulation.x, q, oscillator(), rc).samples;
        };
        cc.seed = derive_seed(10003, i);
        const Eigen::MatrixXd g = gnpe_run(oracle_pose);
        const Eigen::MatrixXd c = chained_npe_sample(oracle_pose, q_rest, obs.simulation.x, oscillator(), n,
                                                     derive_seed(10004, i));
        c2st_gnpe += c2st(g, reference, cc).score;
        c2st_chained += c2st(c, reference, cc).score;

        const Eigen::MatrixXd gb = gnpe_run(biased_pose);
        const Eigen::MatrixXd cb = chained_npe_sample(biased_pose, q_rest, obs.simulation.x, oscillator(), n,
                                                      derive_seed(10005, i));
        bias_gnpe += gb.col(2).mean() - tau;
        bias_chained += cb.col(2).mean() - tau;
        progress(fmt("criterion 10 observation %zu done", i));
    }
    const double k = static_cast<double>(observations.size());
    c2st_gnpe /= k;
    c2st_chained /= k;
    bias_gnpe /= k;
    bias_chained /= k;
    const bool pass = std::abs(c2st_chained - c2st_gnpe) < 0.03 && std::abs(bias_chained) > 0.2 &&
                      std::abs(bias_gnpe) < 0.05;
    return {pass, fmt("oracle pose: c2st chained=%.4f GNPE=%.4f (|diff|<0.03); +0.3s pose: tau bias chained=%.3f "
                      "(>0.2) GNPE=%.3f (<0.05)",
                      c2st_chained, c2st_gnpe, bias_chained, bias_gnpe)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"Gaussian example with the analytic conditional", criterion1},
        {"Gaussian example with a trained estimator", criterion2},
        {"toy study ordering (NPE, NPE-CNN, GNPE)", criterion3},
        {"one-iteration convergence on the oscillator", criterion4},
        {"exact equivariance for a fixed initialisation", criterion5},
        {"fixed point of the Gibbs sweep", criterion6},
        {"delta-kernel non-convergence", criterion7},
        {"gradient check", criterion8},
        {"effective-dimension ordering", criterion9},
        {"chained NPE sensitivity to the pose estimate", criterion10},
    };
    std::vector<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        const int id = std::atoi(argv[i]);
        if (id < 1 || id > static_cast<int>(criteria.size())) {
            std::cerr << "usage: acceptance [criterion ...] (1-" << criteria.size() << ")\n";
            return 2;
        }
        selected.push_back(static_cast<std::size_t>(id));
    }
    if (selected.empty())
        for (std::size_t i = 1; i <= criteria.size(); ++i) selected.push_back(i);

    std::ofstream report("acceptance_report.txt");
    const auto emit = [&](const std::string& line) {
        std::cout << line << std::endl;
        report << line << std::endl;
    };
    std::size_t failed = 0;
    for (std::size_t id : selected) {
        const auto& [name, fn] = criteria[id - 1];
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failed;
        emit(std::string(o.pass ? "PASS" : "FAIL") + "  " + std::to_string(id) + ". " + name + ": " + o.detail +
             fmt(" [%.1fs]", seconds_since(t0)));
    }
    emit(std::to_string(selected.size() - failed) + "/" + std::to_string(selected.size()) + " criteria passed");
    return failed == 0 ? 0 : 1;
}
