#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "gnpe/errors.hpp"
#include "gnpe/models.hpp"
#include "gnpe/sampler.hpp"
#include "support.hpp"

using namespace gnpe;

namespace {

GnpeRunConfig toy_run(double k, std::size_t iterations, double init, std::size_t chains = 10000) {
    GnpeRunConfig cfg;
    cfg.kernel = Kernel::gaussian({k});
    cfg.policy.kind = IterationPolicyKind::fixed;
    cfg.policy.iterations = iterations;
    cfg.burn_in = iterations - 1;
    cfg.chains = chains;
    cfg.seed = 60;
    cfg.init.fixed_pose = GroupElement{init};
    return cfg;
}

double mean_of(const Eigen::MatrixXd& samples) { return samples.col(0).mean(); }

// Returns the pose-shifted first context entry as parameter 0 and the proxy
// as parameter 1, so callers can see what the sampler fed in.
class EchoConditional final : public ThetaConditional {
public:
    explicit EchoConditional(std::size_t context_dim) : context_dim_(context_dim) {}
    std::size_t param_dim() const override { return 2; }
    std::size_t context_dim() const override { return context_dim_; }
    std::size_t proxy_dim() const override { return 1; }
    Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                         std::span<Rng>) const override {
        Eigen::MatrixXd out(2, contexts.cols());
        out.row(0) = contexts.row(100);
        out.row(1) = proxies.row(0);
        return out;
    }

private:
    std::size_t context_dim_;
};

// Fails for chain 0 only.
class BrokenConditional final : public ThetaConditional {
public:
    std::size_t param_dim() const override { return 1; }
    std::size_t context_dim() const override { return 1; }
    Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd&,
                         std::span<Rng> rngs) const override {
        Eigen::MatrixXd out(1, contexts.cols());
        for (Eigen::Index b = 0; b < contexts.cols(); ++b) out(0, b) = 0.1 * standard_normal(rngs[b]);
        if (contexts.cols() > 0 && first_) out(0, 0) = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    bool first_ = true;
};

}  // namespace

TEST_CASE("chain initialisation") {
    SUBCASE("fixed pose") {
        const GibbsChainEnsemble ens = init_chains(GroupElement{-2.5}, 3, {2}, 50, 61);
        CHECK(ens.size() == 50);
        CHECK((ens.pose.array() == -2.5).all());
        CHECK(ens.theta.array().isNaN().all());
        REQUIRE(ens.pose_snapshots.size() == 1);
        CHECK(ens.pose_snapshots[0] == ens.pose);
        CHECK(ens.iteration == 0);
    }
    SUBCASE("from q_init") {
        const FixedGaussianConditional q_init(Eigen::VectorXd::Constant(1, -2.0),
                                              Eigen::VectorXd::Constant(1, 0.5), 7);
        const Eigen::VectorXd x = Eigen::VectorXd::Zero(7);
        const GibbsChainEnsemble ens = init_chains(q_init, x, 3, {2}, 20000, 62);
        CHECK(std::abs(ens.pose.row(0).mean() + 2.0) < 0.02);
        CHECK(std::sqrt(test::sample_variance(ens.pose.row(0).transpose())) == doctest::Approx(0.5).epsilon(0.03));
        const GibbsChainEnsemble again = init_chains(q_init, x, 3, {2}, 20000, 62, 4);
        CHECK(again.pose == ens.pose);
    }
    SUBCASE("untrained or mismatched q_init") {
        EstimatorSpec spec;
        spec.context_dim = 7;
        spec.param_dim = 1;
        const ConditionalGaussianEstimator untrained(spec);
        CHECK_THROWS_AS(init_chains(untrained, Eigen::VectorXd::Zero(7), 3, {2}, 5, 1), StructuralError);
        const FixedGaussianConditional wide(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2), 7);
        CHECK_THROWS_AS(init_chains(wide, Eigen::VectorXd::Zero(7), 3, {2}, 5, 1), StructuralError);
    }
}

TEST_CASE("delta kernel with an exact pose-standardised posterior leaves chains in place") {
    const GaussianToyModel model;
    GnpeRunConfig cfg = toy_run(1.0, 15, 0.75, 500);
    cfg.kernel = Kernel::delta(1);
    const auto oracle = GaussianToyOracle::kernel_aware(cfg.kernel);
    const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, 3.0), oracle, model, cfg);
    for (const auto& snap : r.pose_snapshots) CHECK((snap.array() == 0.75).all());
    CHECK((r.samples.array() == 0.75).all());
    CHECK(!r.converged);
}

TEST_CASE("the exact posterior is the stationary distribution") {
    const GaussianToyModel model;
    for (double k : {0.5, 1.0, 2.0}) {
        CAPTURE(k);
        const GnpeRunConfig cfg = toy_run(k, 40, 0.0);
        const auto oracle = GaussianToyOracle::kernel_aware(cfg.kernel);
        CHECK(oracle.slope() == doctest::Approx(1.0 / (2.0 + 1.0 / (k * k))));
        const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, 3.0), oracle, model, cfg);
        CHECK(r.samples.rows() == 10000);
        CHECK(std::abs(mean_of(r.samples) + 1.0) < 0.03);
        CHECK(test::sample_variance(r.samples.col(0)) == doctest::Approx(0.5).epsilon(0.05));
    }
}

TEST_CASE("contraction per sweep is 1 / (1 + 2 k^2)") {
    // E[tau_new | tau] = -1 + (tau + 1) / (1 + 2 k^2) for x = 3.
    const GaussianToyModel model;
    double previous = std::numeric_limits<double>::infinity();
    for (double k : {0.3, 1.0, 3.0}) {
        CAPTURE(k);
        const GnpeRunConfig cfg = toy_run(k, 3, 5.0);
        const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, 3.0),
                                      GaussianToyOracle::kernel_aware(cfg.kernel), model, cfg);
        const double expected = -1.0 + 6.0 * std::pow(1.0 / (1.0 + 2 * k * k), 3);
        CHECK(std::abs(mean_of(r.samples) - expected) < 0.03);
        const double distance = std::abs(mean_of(r.samples) + 1.0);
        CHECK(distance < previous);
        previous = distance;
    }
}

TEST_CASE("iteration policies") {
    const GaussianToyModel model;
    const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 3.0);
    SUBCASE("thinning keeps the scheduled sweeps") {
        GnpeRunConfig cfg = toy_run(1.0, 20, -1.0, 100);
        cfg.burn_in = 10;
        cfg.thinning = 3;
        const GnpeResult r = run_gnpe(x, GaussianToyOracle::kernel_aware(cfg.kernel), model, cfg);
        CHECK(r.iterations == 20);
        CHECK(r.samples.rows() == 400);
        std::vector<std::size_t> seen(r.sample_iterations);
        seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
        CHECK(seen == std::vector<std::size_t>{11, 14, 17, 20});
        CHECK(r.js_trace.size() == 20);
        CHECK(r.pose_snapshots.size() == 21);
    }
    SUBCASE("JS policy stops at the first quiet sweep after burn-in") {
        GnpeRunConfig cfg = toy_run(1.0, 1, -1.0);
        cfg.policy.kind = IterationPolicyKind::js;
        cfg.policy.js_threshold = 0.01;
        cfg.policy.max_iterations = 60;
        cfg.burn_in = 5;
        const GnpeResult r = run_gnpe(x, GaussianToyOracle::kernel_aware(cfg.kernel), model, cfg);
        CHECK(r.converged);
        CHECK(r.iterations > 5);
        CHECK(r.js_trace.back() < 0.01);
        for (std::size_t j = 6; j < r.iterations; ++j) CHECK(r.js_trace[j - 1] >= 0.01);
        REQUIRE(r.converged_at);
        CHECK(*r.converged_at <= r.iterations);
    }
    SUBCASE("degenerate pose marginals never converge") {
        GnpeRunConfig cfg = toy_run(1.0, 1, 0.5, 200);
        cfg.kernel = Kernel::delta(1);
        cfg.policy.kind = IterationPolicyKind::js;
        cfg.policy.max_iterations = 12;
        cfg.burn_in = 2;
        const GnpeResult r = run_gnpe(x, GaussianToyOracle::kernel_aware(cfg.kernel), model, cfg);
        CHECK(!r.converged);
        CHECK(!r.converged_at);
        CHECK(r.iterations == 12);
        for (double v : r.js_trace) CHECK(v == doctest::Approx(std::log(2.0)));
        CHECK(r.samples.rows() == 200 * 10);
    }
    SUBCASE("invalid settings") {
        GnpeRunConfig cfg = toy_run(1.0, 3, 0.0, 10);
        cfg.thinning = 0;
        CHECK_THROWS_AS(run_gnpe(x, GaussianToyOracle::proxy_agnostic(), model, cfg), StructuralError);
    }
}

TEST_CASE("convergence JS") {
    Rng rng = make_rng(63);
    Eigen::MatrixXd a(1, 5000), b(1, 5000);
    for (Eigen::Index i = 0; i < 5000; ++i) {
        a(0, i) = standard_normal(rng);
        b(0, i) = standard_normal(rng) + 20.0;
    }
    CHECK(convergence_js(a, a).value == 0.0);
    CHECK(convergence_js(a, b).value == doctest::Approx(std::log(2.0)));
    const JsDivergence d = convergence_js(Eigen::MatrixXd::Constant(1, 10, 1.0), a);
    CHECK(d.degenerate);
    CHECK(d.value == doctest::Approx(std::log(2.0)));
    // The larger factor wins.
    Eigen::MatrixXd two_a(2, 5000), two_b(2, 5000);
    two_a << a, a;
    two_b << a, b;
    CHECK(convergence_js(two_a, two_b).value == doctest::Approx(std::log(2.0)));
}

TEST_CASE("GNPE sampling is equivariant for a fixed initialisation") {
    const GaussianToyModel model;
    const auto oracle = GaussianToyOracle::kernel_aware(Kernel::gaussian({1.0}));
    for (std::uint64_t i = 0; i < 5; ++i) {
        Rng rng = test::case_rng(64, i);
        const double x = uniform(rng, -8.0, 2.0);
        const double d = uniform(rng, -3.0, 3.0);
        const GnpeRunConfig a = toy_run(1.0, 5, -4.0, 500);
        GnpeRunConfig b = a;
        b.init.fixed_pose = GroupElement{-4.0 + d};
        const GnpeResult ra = run_gnpe(Eigen::VectorXd::Constant(1, x), oracle, model, a);
        const GnpeResult rb = run_gnpe(Eigen::VectorXd::Constant(1, x + 2 * d), oracle, model, b);
        REQUIRE(ra.samples.rows() == rb.samples.rows());
        CHECK(test::max_abs_diff(ra.samples.array() + d, rb.samples) < 1e-9);
    }
}

TEST_CASE("results do not depend on the worker count") {
    const GaussianToyModel model;
    GnpeRunConfig cfg = toy_run(1.0, 6, 0.0, 3000);
    const auto oracle = GaussianToyOracle::kernel_aware(cfg.kernel);
    const GnpeResult one = run_gnpe(Eigen::VectorXd::Constant(1, 3.0), oracle, model, cfg);
    cfg.workers = 3;
    const GnpeResult three = run_gnpe(Eigen::VectorXd::Constant(1, 3.0), oracle, model, cfg);
    CHECK(one.samples == three.samples);
    CHECK(one.js_trace == three.js_trace);
    CHECK(npe_sample(oracle, Eigen::VectorXd::Constant(1, 3.0), 100, 1, 1) ==
          npe_sample(oracle, Eigen::VectorXd::Constant(1, 3.0), 100, 1, 4));
}

TEST_CASE("non-finite draws reset the chain and are reported") {
    const GaussianToyModel model;
    BrokenConditional q;
    GnpeRunConfig cfg = toy_run(1.0, 2, -1.0, 20);
    cfg.burn_in = 0;
    const GnpeResult r = run_gnpe(Eigen::VectorXd::Constant(1, 3.0), q, model, cfg);
    CHECK(r.events.size() == 2);
    CHECK(r.events.front().chain == 0);
    CHECK(r.samples.rows() == 2 * 19);
    CHECK(r.samples.allFinite());
}

TEST_CASE("chained NPE aligns the data with the sampled pose") {
    const OscillatorModel model;
    Rng rng = make_rng(65);
    const Simulation sim = model.simulate(Eigen::Vector3d(6.0, 0.3, -2.0), rng);
    const FixedGaussianConditional q_pose(Eigen::VectorXd::Constant(1, -2.0), Eigen::VectorXd::Constant(1, 0.3),
                                          model.data_size());
    const EchoConditional q_rest(model.data_size());
    const Eigen::MatrixXd s = chained_npe_sample(q_pose, q_rest, sim.x, model, 50, 66);
    REQUIRE(s.rows() == 50);
    REQUIRE(s.cols() == 3);
    for (Eigen::Index i = 0; i < 50; ++i) {
        const double lambda = s(i, 2);
        CHECK(s(i, 1) == lambda);
        const Eigen::VectorXd aligned = act_on_data(GroupElement{-lambda}, sim.x, model.posterior_representation());
        CHECK(s(i, 0) == doctest::Approx(aligned[100]).epsilon(1e-12));
    }
    CHECK(chained_npe_sample(q_pose, q_rest, sim.x, model, 50, 66, 3) == s);
}

TEST_CASE("analytic conditionals") {
    Rng rng = make_rng(67);
    const FixedGaussianConditional f(Eigen::Vector2d(1.0, -1.0), Eigen::Vector2d(0.5, 2.0), 3);
    const OffsetConditional o(f, Eigen::Vector2d(0.3, 0.0));
    std::vector<Rng> a(20000, make_rng(1)), b;
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = make_rng(68, i);
    b = a;
    const Eigen::MatrixXd d1 = f.draw(Eigen::MatrixXd::Zero(3, 20000), Eigen::MatrixXd(0, 20000), a);
    const Eigen::MatrixXd d2 = o.draw(Eigen::MatrixXd::Zero(3, 20000), Eigen::MatrixXd(0, 20000), b);
    CHECK(test::max_abs_diff(d2.row(0).array() - 0.3, d1.row(0)) < 1e-12);
    CHECK(d2.row(1) == d1.row(1));
    CHECK(std::abs(d1.row(0).mean() - 1.0) < 0.02);
    CHECK(std::sqrt(test::sample_variance(d1.row(1).transpose())) == doctest::Approx(2.0).epsilon(0.03));
    const auto agnostic = GaussianToyOracle::proxy_agnostic();
    CHECK(agnostic.slope() == 0.5);
    CHECK(agnostic.variance() == 0.5);
    const auto delta = GaussianToyOracle::kernel_aware(Kernel::delta(1));
    CHECK(delta.variance() == 0.0);
    (void)rng;
}

TEST_CASE("samples CSV") {
    const auto path = std::filesystem::temp_directory_path() / "gnpe_test_samples.csv";
    Eigen::MatrixXd s(2, 2);
    s << 1.5, -2.0, 3.0, 0.25;
    Eigen::MatrixXd p(2, 1);
    p << -1.0, -1.5;
    write_samples_csv(path, s, {"a", "b"}, p, {"b_hat"}, {0, 1}, {11, 11}, "config_hash=abc");
    std::ifstream in(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) lines.push_back(line);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "# config_hash=abc");
    CHECK(lines[1] == "a,b,b_hat,chain,iteration");
    CHECK(lines[2].rfind("1.5,-2,-1,0,11", 0) == 0);
    std::filesystem::remove(path);
}
