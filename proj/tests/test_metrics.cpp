#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gnpe/errors.hpp"
#include "gnpe/metrics.hpp"
#include "gnpe/random.hpp"
#include "support.hpp"

using namespace gnpe;
using gnpe::test::normal_cdf;

namespace {

Eigen::MatrixXd gaussian_samples(std::size_t n, const Eigen::VectorXd& mean, Rng& rng) {
    Eigen::MatrixXd s(static_cast<Eigen::Index>(n), mean.size());
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) = mean[j] + standard_normal(rng);
    return s;
}

// sup |F_n - F| evaluated on both sides of every jump, with the empirical
// cdf counted directly.
double brute_force_ks(const std::vector<double>& xs, const std::function<double(double)>& cdf) {
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (double x : xs) {
        double below = 0.0, at_or_below = 0.0;
        for (double y : xs) {
            if (y < x) below += 1.0;
            if (y <= x) at_or_below += 1.0;
        }
        d = std::max({d, std::abs(at_or_below / n - cdf(x)), std::abs(below / n - cdf(x))});
    }
    return d;
}

}  // namespace

TEST_CASE("c2st on identical distributions is at chance") {
    Rng rng = make_rng(70);
    const Eigen::MatrixXd p = gaussian_samples(2000, Eigen::VectorXd::Zero(2), rng);
    const Eigen::MatrixXd q = gaussian_samples(2000, Eigen::VectorXd::Zero(2), rng);
    const C2stResult r = c2st(p, q);
    CHECK(r.repetitions.size() == 5);
    CHECK(r.score >= 0.48);
    CHECK(r.score <= 0.54);
}

TEST_CASE("c2st on separated distributions") {
    Rng rng = make_rng(71);
    const Eigen::MatrixXd p = gaussian_samples(1000, Eigen::VectorXd::Zero(3), rng);
    const Eigen::MatrixXd q = gaussian_samples(1000, Eigen::VectorXd::Constant(3, 10.0), rng);
    CHECK(c2st(p, q).score > 0.99);
}

TEST_CASE("c2st approaches the Bayes accuracy") {
    // N(0, 1) against N(0.5, 1): optimal accuracy Phi(0.25).
    Rng rng = make_rng(72);
    const Eigen::MatrixXd p = gaussian_samples(5000, Eigen::VectorXd::Zero(1), rng);
    const Eigen::MatrixXd q = gaussian_samples(5000, Eigen::VectorXd::Constant(1, 0.5), rng);
    const double bayes = normal_cdf(0.25);
    CHECK(bayes == doctest::Approx(0.5987).epsilon(1e-4));
    CHECK(std::abs(c2st(p, q).score - bayes) < 0.03);
}

TEST_CASE("c2st symmetry, monotonicity and determinism") {
    Rng rng = make_rng(73);
    const Eigen::MatrixXd p = gaussian_samples(1500, Eigen::VectorXd::Zero(2), rng);
    const Eigen::MatrixXd base = gaussian_samples(1500, Eigen::VectorXd::Zero(2), rng);
    C2stConfig cfg;
    cfg.seed = 5;
    const double pq = c2st(p, base.rowwise() + Eigen::RowVector2d(0.6, 0.0), cfg).score;
    const double qp = c2st(base.rowwise() + Eigen::RowVector2d(0.6, 0.0), p, cfg).score;
    CHECK(std::abs(pq - qp) < 0.03);

    double previous = 0.0;
    for (double shift : {0.0, 0.5, 1.0, 2.0, 4.0}) {
        const double s = c2st(p, base.rowwise() + Eigen::RowVector2d(shift, 0.0), cfg).score;
        CAPTURE(shift);
        CHECK(s >= previous - 0.01);
        previous = s;
    }
    CHECK(c2st(p, base, cfg).repetitions == c2st(p, base, cfg).repetitions);
    C2stConfig parallel = cfg;
    parallel.workers = 3;
    CHECK(c2st(p, base, cfg).repetitions == c2st(p, base, parallel).repetitions);
}

TEST_CASE("c2st input validation") {
    Rng rng = make_rng(74);
    const Eigen::MatrixXd small = gaussian_samples(100, Eigen::VectorXd::Zero(1), rng);
    CHECK_THROWS_AS(c2st(small, small), StructuralError);
    const Eigen::MatrixXd a = gaussian_samples(600, Eigen::VectorXd::Zero(1), rng);
    const Eigen::MatrixXd b = gaussian_samples(600, Eigen::VectorXd::Zero(2), rng);
    CHECK_THROWS_AS(c2st(a, b), StructuralError);
}

TEST_CASE("mse of means") {
    Eigen::MatrixXd s(2, 2), r(2, 2);
    s << 1.0, 4.0, 3.0, 6.0;   // means (2, 5)
    r << 0.0, 0.0, 0.0, 2.0;   // means (0, 1)
    const Eigen::Vector2d stds(2.0, 4.0);
    CHECK(mse_of_means(s, r, stds) == doctest::Approx(1.0 + 1.0));
    CHECK(mse_of_means(s, s, stds) == 0.0);
    CHECK(mse_of_means(s, r, stds) == mse_of_means(r, s, stds));
}

TEST_CASE("singular spectrum") {
    Rng rng = make_rng(75);
    SUBCASE("matches the eigenvalues of the scatter matrix") {
        const Eigen::MatrixXd d = gaussian_samples(40, Eigen::VectorXd::Zero(6), rng);
        const Eigen::VectorXd sv = singular_spectrum(d);
        const Eigen::MatrixXd c = d.rowwise() - d.colwise().mean();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c.transpose() * c);
        Eigen::VectorXd expected = eig.eigenvalues().reverse().cwiseMax(0.0).cwiseSqrt();
        REQUIRE(sv.size() == expected.size());
        CHECK(test::max_abs_diff(sv, expected) < 1e-9);
        for (Eigen::Index i = 1; i < sv.size(); ++i) CHECK(sv[i] <= sv[i - 1]);
    }
    SUBCASE("rank-r data has r non-negligible values") {
        const Eigen::MatrixXd a = gaussian_samples(50, Eigen::VectorXd::Zero(3), rng);
        const Eigen::MatrixXd b = gaussian_samples(3, Eigen::VectorXd::Zero(20), rng);
        const Eigen::VectorXd sv = singular_spectrum(a * b);
        CHECK(effective_dimension(sv, 1e-6) == 3);
    }
    SUBCASE("effective dimension counts against the largest value") {
        Eigen::VectorXd v(5);
        v << 10.0, 1.0, 0.1, 0.05, 0.0;
        CHECK(effective_dimension(v, 1e-2) == 3);
        CHECK(effective_dimension(v, 0.2) == 1);
        CHECK(effective_dimension(v, 0.0) == 5);
    }
}

TEST_CASE("Kolmogorov-Smirnov") {
    const auto cdf = [](double x) { return normal_cdf(x); };
    SUBCASE("statistic matches brute force") {
        for (std::uint64_t i = 0; i < 20; ++i) {
            Rng rng = test::case_rng(76, i);
            std::vector<double> xs(50 + 10 * i);
            for (auto& x : xs) x = 0.3 * (i % 3) + standard_normal(rng);
            CHECK(ks_statistic(xs, cdf).statistic == doctest::Approx(brute_force_ks(xs, cdf)).epsilon(1e-12));
        }
    }
    SUBCASE("survival function") {
        CHECK(kolmogorov_survival(1.3581) == doctest::Approx(0.05).epsilon(1e-3));
        CHECK(kolmogorov_survival(1.6276) == doctest::Approx(0.01).epsilon(1e-3));
        CHECK(kolmogorov_survival(0.0) == 1.0);
        CHECK(kolmogorov_survival(10.0) < 1e-12);
    }
    SUBCASE("p-values are calibrated under the null") {
        Rng rng = make_rng(77);
        std::size_t rejected = 0;
        const std::size_t runs = 1000;
        for (std::size_t r = 0; r < runs; ++r) {
            std::vector<double> xs(200);
            for (auto& x : xs) x = standard_normal(rng);
            if (ks_statistic(xs, cdf).p_value < 0.05) ++rejected;
        }
        const double rate = static_cast<double>(rejected) / runs;
        CHECK(rate >= 0.03);
        CHECK(rate <= 0.07);
    }
    SUBCASE("shifted samples are rejected") {
        Rng rng = make_rng(78);
        std::vector<double> xs(500);
        for (auto& x : xs) x = 0.5 + standard_normal(rng);
        CHECK(ks_statistic(xs, cdf).p_value < 1e-6);
    }
}

TEST_CASE("histogram JS divergence") {
    Rng rng = make_rng(79);
    std::vector<double> a(3000), b(3000), far(3000);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = standard_normal(rng);
        b[i] = standard_normal(rng);
        far[i] = 50.0 + standard_normal(rng);
    }
    CHECK(js_divergence(a, a).value == 0.0);
    CHECK(js_divergence(a, b).value < 0.01);
    CHECK(js_divergence(a, far).value == doctest::Approx(std::log(2.0)));
    CHECK(js_divergence(a, b).value == doctest::Approx(js_divergence(b, a).value).epsilon(1e-12));
    const double mid = js_divergence(a, std::vector<double>(b.begin(), b.end())).value;
    std::vector<double> shifted(b);
    for (auto& v : shifted) v += 1.0;
    const double moved = js_divergence(a, shifted).value;
    CHECK(moved > mid);
    CHECK(moved < std::log(2.0));
    const std::vector<double> constant(100, 2.0);
    const JsDivergence d = js_divergence(constant, constant);
    CHECK(d.degenerate);
    CHECK(d.value == doctest::Approx(std::log(2.0)));
}
