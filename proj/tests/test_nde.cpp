#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "gnpe/dataset.hpp"
#include "gnpe/errors.hpp"
#include "gnpe/estimator.hpp"
#include "gnpe/models.hpp"
#include "support.hpp"

using namespace gnpe;
using gnpe::test::case_rng;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = standard_normal(rng);
    return m;
}

// Central differences of the mean NLL against the analytic gradient.
double worst_gradient_error(ConditionalGaussianEstimator& est, std::uint64_t seed) {
    Rng rng = make_rng(seed);
    const auto& s = est.spec();
    const Eigen::MatrixXd t = random_matrix(static_cast<Eigen::Index>(s.param_dim), 6, rng);
    const Eigen::MatrixXd c = random_matrix(static_cast<Eigen::Index>(s.context_dim), 6, rng);
    const Eigen::MatrixXd p = random_matrix(static_cast<Eigen::Index>(s.proxy_dim), 6, rng);
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
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-3});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
    }
    return worst;
}

TrainingDataset toy_dataset(std::size_t n, std::uint64_t seed) {
    return generate_npe_dataset(GaussianToyModel(), n, seed);
}

EstimatorSpec toy_spec() {
    EstimatorSpec spec;
    spec.context_dim = 1;
    spec.param_dim = 1;
    spec.embedding.kind = EmbeddingKind::identity;
    return spec;
}

}  // namespace

TEST_CASE("analytic gradients match finite differences") {
    SUBCASE("dense embedding with proxy features") {
        EstimatorSpec spec;
        spec.context_dim = 4;
        spec.proxy_dim = 1;
        spec.param_dim = 2;
        spec.embedding.hidden = {6, 5};
        ConditionalGaussianEstimator est(spec);
        REQUIRE(est.weight_count() <= 200);
        for (std::uint64_t k = 0; k < 5; ++k) {
            est.initialize(k);
            CHECK(worst_gradient_error(est, 100 + k) < 1e-4);
        }
    }
    SUBCASE("convolutional embedding") {
        EstimatorSpec spec;
        spec.context_dim = 2 * 12;
        spec.input_channels = 2;
        spec.param_dim = 2;
        spec.embedding.kind = EmbeddingKind::conv;
        spec.embedding.conv = ConvStackSpec{{3}, {2}, 3, 3};
        spec.embedding.hidden = {3};
        ConditionalGaussianEstimator est(spec);
        REQUIRE(est.weight_count() <= 200);
        for (std::uint64_t k = 0; k < 5; ++k) {
            est.initialize(k);
            CHECK(worst_gradient_error(est, 200 + k) < 1e-4);
        }
    }
    SUBCASE("identity embedding") {
        ConditionalGaussianEstimator est(toy_spec());
        est.initialize(3);
        CHECK(worst_gradient_error(est, 300) < 1e-4);
    }
}

TEST_CASE("fused conv block equals the separate layers") {
    const std::size_t in_ch = 2, out_ch = 3, k = 5, len = 20, pk = 4, ps = 3;
    nn::ConvBlock block(in_ch, out_ch, k, len, pk, ps);
    nn::Sequential separate(in_ch * len);
    separate.add(std::make_unique<nn::CircularConv1d>(in_ch, out_ch, k, len));
    separate.add(std::make_unique<nn::Relu>(out_ch * len));
    separate.add(std::make_unique<nn::AvgPool1d>(out_ch, len, pk, ps));
    REQUIRE(block.parameter_count() == separate.parameter_count());
    REQUIRE(block.out_dim() == separate.out_dim());

    for (std::uint64_t i = 0; i < 10; ++i) {
        Rng rng = case_rng(40, i);
        std::vector<double> params(block.parameter_count());
        block.initialize(params, rng);
        const nn::Matrix in = random_matrix(static_cast<Eigen::Index>(in_ch * len), 4, rng);
        nn::Matrix out;
        block.forward(params, in, out);
        std::vector<nn::Matrix> acts;
        separate.forward(params, in, acts);
        CHECK(test::max_abs_diff(out, acts.back()) < 1e-12);

        const nn::Matrix dout = random_matrix(out.rows(), out.cols(), rng);
        std::vector<double> g1(params.size(), 0.0), g2(params.size(), 0.0);
        nn::Matrix d1, d2;
        block.backward(params, in, out, dout, g1, &d1);
        separate.backward(params, acts, dout, g2, &d2);
        CHECK(test::max_abs_diff(d1, d2) < 1e-12);
        double worst = 0.0;
        for (std::size_t j = 0; j < g1.size(); ++j) worst = std::max(worst, std::abs(g1[j] - g2[j]));
        CHECK(worst < 1e-12);
    }
}

TEST_CASE("circular convolution commutes with circular shifts") {
    const std::size_t in_ch = 2, out_ch = 3, len = 16;
    nn::ConvBlock block(in_ch, out_ch, 5, len, 2, 2);
    for (std::uint64_t i = 0; i < 20; ++i) {
        Rng rng = case_rng(41, i);
        std::vector<double> params(block.parameter_count());
        block.initialize(params, rng);
        const Eigen::VectorXd x = test::random_series(rng, in_ch * len);
        const std::size_t m = static_cast<std::size_t>(uniform(rng, 0.0, static_cast<double>(len)));
        const Eigen::VectorXd shifted = test::roll(x, static_cast<long>(m), len, in_ch);
        const nn::Matrix a = block.pre_pool(params, x);
        const nn::Matrix b = block.pre_pool(params, shifted);
        CHECK(test::max_abs_diff(test::roll(a.col(0), static_cast<long>(m), len, out_ch), b.col(0)) < 1e-12);
    }
}

TEST_CASE("zero weights give a standard normal head") {
    EstimatorSpec spec;
    spec.context_dim = 3;
    spec.param_dim = 1;
    spec.embedding.hidden = {4};
    ConditionalGaussianEstimator est(spec);
    std::fill(est.weights().begin(), est.weights().end(), 0.0);
    Rng rng = make_rng(42);
    const Eigen::MatrixXd c = random_matrix(3, 5, rng);
    const auto out = est.forward_standardized(c, Eigen::MatrixXd(0, 5));
    CHECK(out.mean.cwiseAbs().maxCoeff() == 0.0);
    CHECK(out.log_std.cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd nll = est.nll(Eigen::MatrixXd::Zero(1, 5), c, Eigen::MatrixXd(0, 5));
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(nll[i] == doctest::Approx(0.9189385332).epsilon(1e-9));
    CHECK(0.5 * std::log(2 * std::numbers::pi) == doctest::Approx(0.9189).epsilon(1e-4));
}

TEST_CASE("batch loss is a mean") {
    EstimatorSpec spec;
    spec.context_dim = 3;
    spec.param_dim = 2;
    spec.embedding.hidden = {5};
    ConditionalGaussianEstimator est(spec);
    est.initialize(7);
    Rng rng = make_rng(43);
    const Eigen::MatrixXd t = random_matrix(2, 8, rng), c = random_matrix(3, 8, rng);
    Eigen::MatrixXd t2(2, 16), c2(3, 16);
    t2 << t, t;
    c2 << c, c;
    std::vector<double> g1, g2;
    const double l1 = est.loss_and_gradient(t, c, Eigen::MatrixXd(0, 8), g1);
    const double l2 = est.loss_and_gradient(t2, c2, Eigen::MatrixXd(0, 16), g2);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-10));
}

TEST_CASE("log-std is clamped") {
    EstimatorSpec spec = toy_spec();
    spec.log_std_min = -1.0;
    spec.log_std_max = 1.0;
    ConditionalGaussianEstimator est(spec);
    std::fill(est.weights().begin(), est.weights().end(), 0.0);
    // Head bias for the log-std row is the last weight.
    est.weights().back() = 50.0;
    auto out = est.forward_standardized(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 1));
    CHECK(out.log_std(0, 0) == 1.0);
    est.weights().back() = -50.0;
    out = est.forward_standardized(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd(0, 1));
    CHECK(out.log_std(0, 0) == -1.0);
}

TEST_CASE("training recovers the Gaussian toy posterior") {
    const TrainingDataset data = toy_dataset(100000, 44);
    ConditionalGaussianEstimator est(toy_spec());
    TrainingConfig cfg;
    cfg.seed = 45;
    const TrainingHistory history = train(est, data, cfg);
    CHECK(est.ready());
    CHECK(history.best_epoch >= 1);
    Eigen::MatrixXd xs(1, 2);
    xs << -7.0, -3.0;
    const GaussianPrediction pred = est.predict(xs, Eigen::MatrixXd(0, 2));
    const double slope = (pred.mean(0, 1) - pred.mean(0, 0)) / 4.0;
    CHECK(std::abs(slope - 0.5) < 0.03);
    for (Eigen::Index j = 0; j < 2; ++j) {
        const auto oracle = gaussian_toy_posterior(xs(0, j));
        CHECK(std::abs(pred.mean(0, j) - oracle.mean()[0]) < 0.05);
        CHECK(std::abs(pred.stddev(0, j) - oracle.stddev()[0]) < 0.03);
    }

    SUBCASE("draws follow the prediction") {
        Rng rng = make_rng(46);
        const Eigen::MatrixXd draws = est.sample(Eigen::VectorXd::Constant(1, -3.0), Eigen::VectorXd(), 100000, rng);
        const double se = pred.stddev(0, 1) / std::sqrt(100000.0);
        CHECK(std::abs(draws.col(0).mean() - pred.mean(0, 1)) < 5 * se);
        CHECK(std::sqrt(test::sample_variance(draws.col(0))) == doctest::Approx(pred.stddev(0, 1)).epsilon(0.02));
    }
}

TEST_CASE("early stopping and determinism") {
    // Targets independent of the context: validation loss stops improving.
    Rng rng = make_rng(47);
    TrainingDataset data;
    data.targets = random_matrix(1, 400, rng);
    data.contexts = random_matrix(4, 400, rng);
    data.proxies = Eigen::MatrixXd(0, 400);
    data.is_validation.assign(400, 0);
    for (std::size_t i = 300; i < 400; ++i) data.is_validation[i] = 1;

    EstimatorSpec spec;
    spec.context_dim = 4;
    spec.param_dim = 1;
    spec.embedding.hidden = {32, 32};
    TrainingConfig cfg;
    cfg.patience = 5;
    cfg.max_epochs = 300;
    cfg.batch_size = 16;
    cfg.learning_rate = 1e-2;
    cfg.seed = 48;
    ConditionalGaussianEstimator a(spec), b(spec);
    const TrainingHistory ha = train(a, data, cfg);
    const TrainingHistory hb = train(b, data, cfg);
    CHECK(ha.stopped_early);
    CHECK(ha.epochs.size() == ha.best_epoch + cfg.patience);
    double best = ha.epochs.front().validation_loss;
    for (const auto& e : ha.epochs) best = std::min(best, e.validation_loss);
    CHECK(ha.best_validation_loss == best);
    CHECK(ha.epochs[ha.best_epoch - 1].validation_loss == best);
    // Returned weights are those of the best epoch.
    CHECK(a.loss(a.target_standardizer().forward(data.targets.rightCols(100)),
                 a.context_standardizer().forward(data.contexts.rightCols(100)),
                 Eigen::MatrixXd(0, 100)) == doctest::Approx(best).epsilon(1e-12));
    CHECK(ha.epochs.size() == hb.epochs.size());
    CHECK(std::equal(a.weights().begin(), a.weights().end(), b.weights().begin()));

    cfg.workers = 2;
    ConditionalGaussianEstimator c(spec);
    train(c, data, cfg);
    double worst = 0.0;
    for (std::size_t i = 0; i < a.weight_count(); ++i)
        worst = std::max(worst, std::abs(a.weights()[i] - c.weights()[i]));
    CHECK(worst < 1e-9);
}

TEST_CASE("training reports divergence") {
    // Adam moves each weight by about the learning rate per step, so the
    // squared residual overflows after the first update.
    const TrainingDataset data = toy_dataset(200, 49);
    ConditionalGaussianEstimator est(toy_spec());
    TrainingConfig cfg;
    cfg.learning_rate = 1e200;
    CHECK_THROWS_AS(train(est, data, cfg), TrainingError);
}

TEST_CASE("standardizer") {
    Rng rng = make_rng(50);
    Eigen::MatrixXd d = random_matrix(3, 50, rng);
    d.row(2).setConstant(4.0);
    std::vector<std::size_t> cols(40);
    std::iota(cols.begin(), cols.end(), 0);
    const Standardizer s = Standardizer::fit(d, cols);
    CHECK(s.scale[2] > 0.0);
    CHECK(s.shift[2] == 4.0);
    const Eigen::MatrixXd z = s.forward(d.leftCols(40));
    CHECK(std::abs(z.row(0).mean()) < 1e-12);
    CHECK(test::max_abs_diff(s.inverse(s.forward(d)), d) < 1e-12);
}

TEST_CASE("NPE dataset split") {
    const TrainingDataset data = toy_dataset(1000, 51);
    CHECK(data.size() == 1000);
    CHECK(data.validation_indices().size() == 20);
    CHECK(data.train_indices().size() == 980);
    CHECK(data.validation_indices().front() == 980);
    const TrainingDataset again = toy_dataset(1000, 51);
    CHECK(again.contexts == data.contexts);
    CHECK(generate_npe_dataset(GaussianToyModel(), 1000, 51, 0.02, 3).contexts == data.contexts);
}

TEST_CASE("GNPE training examples") {
    SUBCASE("Gaussian toy") {
        const GaussianToyModel model;
        const GnpeSpec spec = make_gnpe_spec(model, Kernel::gaussian({0.1}));
        const GnpeExample ex = gnpe_standardize(spec, Eigen::VectorXd::Constant(1, -4.0),
                                                Eigen::VectorXd::Constant(1, -3.0), GroupElement{-4.25});
        CHECK(ex.target[0] == 0.25);
        CHECK(ex.context[0] == -3.0 + 2 * 4.25);
        CHECK(ex.proxy.size() == 0);
    }
    SUBCASE("oscillator, exact and approximate") {
        const OscillatorModel model;
        Rng rng = make_rng(52);
        const Eigen::VectorXd theta = model.sample_prior(rng);
        const Simulation sim = model.simulate(theta, rng);
        const GroupElement g{theta[2] + 0.05};
        const GnpeExample ex = gnpe_standardize(make_gnpe_spec(model, Kernel::gaussian({0.1})), theta, sim.x, g);
        CHECK(ex.target[0] == theta[0]);
        CHECK(ex.target[2] == doctest::Approx(-0.05).epsilon(1e-12));
        CHECK(test::max_abs_diff(ex.context, act_on_data(inverse(g), sim.x, model.posterior_representation())) == 0.0);

        const GnpeSpec approx = make_gnpe_spec(model, Kernel::gaussian({0.1}), {EquivarianceMode::approximate});
        CHECK(approx.proxy_dim() == 1);
        const GnpeExample ea = gnpe_standardize(approx, theta, sim.x, g);
        CHECK(ea.target == theta);
        CHECK(ea.proxy[0] == g[0]);
        CHECK(ea.context == ex.context);
    }
    SUBCASE("proxies follow the kernel") {
        const GaussianToyModel model;
        const GnpeSpec spec = make_gnpe_spec(model, Kernel::gaussian({0.1}));
        const TrainingDataset raw = toy_dataset(20000, 53);
        const TrainingDataset g = make_gnpe_dataset(raw, spec, 54);
        // target' = theta - g_hat = -eps
        CHECK(std::abs(g.targets.row(0).mean()) < 0.005);
        CHECK(std::sqrt(test::sample_variance(g.targets.row(0).transpose())) == doctest::Approx(0.1).epsilon(0.03));
        CHECK(g.is_validation == raw.is_validation);
        CHECK(make_gnpe_dataset(raw, spec, 54, 3).contexts == g.contexts);
    }
    SUBCASE("pose and chained datasets") {
        const OscillatorModel model;
        const TrainingDataset raw = generate_npe_dataset(model, 50, 55);
        const TrainingDataset pose = make_pose_dataset(raw, model.pose_slots());
        CHECK(pose.targets.rows() == 1);
        CHECK(pose.targets.row(0) == raw.targets.row(2));
        const TrainingDataset rest = make_chained_rest_dataset(raw, model.pose_slots(), model.posterior_representation());
        CHECK(rest.targets.rows() == 2);
        CHECK(rest.proxies.row(0) == raw.targets.row(2));
        const Eigen::VectorXd aligned = act_on_data(GroupElement{-raw.targets(2, 7)}, raw.contexts.col(7),
                                                    model.posterior_representation());
        CHECK(test::max_abs_diff(rest.contexts.col(7), aligned) == 0.0);
    }
}

TEST_CASE("checkpoint and dataset files round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "gnpe_test_nde";
    std::filesystem::create_directories(dir);
    const TrainingDataset data = toy_dataset(500, 56);
    ConditionalGaussianEstimator est(toy_spec());
    TrainingConfig cfg;
    cfg.max_epochs = 3;
    train(est, data, cfg);
    write_checkpoint(dir / "q.ckpt", est, R"({"role":"q"})");
    const Checkpoint ck = read_checkpoint(dir / "q.ckpt");
    CHECK(std::equal(est.weights().begin(), est.weights().end(), ck.estimator.weights().begin()));
    CHECK(ck.estimator.ready());
    CHECK(ck.header_json.find("\"role\"") != std::string::npos);
    Eigen::MatrixXd xs(1, 3);
    xs << -6, -5, 1;
    CHECK(ck.estimator.predict(xs, Eigen::MatrixXd(0, 3)).mean == est.predict(xs, Eigen::MatrixXd(0, 3)).mean);

    write_dataset(dir / "d.bin", data, R"({"model":"gaussian-toy"})");
    const DatasetFile df = read_dataset(dir / "d.bin");
    CHECK(df.data.targets == data.targets);
    CHECK(df.data.contexts == data.contexts);
    CHECK(df.data.theta_centers == data.theta_centers);
    CHECK(df.data.is_validation == data.is_validation);

    {
        std::ofstream bad(dir / "bad.ckpt", std::ios::binary);
        bad << "NOTACKPT and some bytes";
    }
    CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), IoError);
    CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), IoError);
    CHECK_THROWS_AS(read_dataset(dir / "q.ckpt"), IoError);
    std::filesystem::remove_all(dir);
}
