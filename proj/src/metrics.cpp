#include "gnpe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "gnpe/errors.hpp"
#include "gnpe/network.hpp"
#include "gnpe/parallel.hpp"
#include "gnpe/random.hpp"

namespace gnpe {

// --- c2st -------------------------------------------------------------------

void C2stConfig::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw StructuralError("c2st: train fraction must lie in (0, 1)");
    if (repetitions == 0) throw StructuralError("c2st: at least one repetition required");
    if (batch_size == 0 || max_epochs == 0) throw StructuralError("c2st: empty training budget");
}

namespace {

double softplus(double v) { return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v)); }

double classifier_accuracy(const Eigen::MatrixXd& features, const Eigen::VectorXd& labels,
                           const C2stConfig& cfg, std::uint64_t stream) {
    const auto d = static_cast<std::size_t>(features.rows());
    const auto n = static_cast<std::size_t>(features.cols());
    Rng rng = make_rng(cfg.seed, stream);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n))), 1, n - 1);
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));

    std::vector<std::size_t> hidden;
    for (std::size_t m : cfg.hidden_multipliers) hidden.push_back(m * d);
    const nn::Sequential net = nn::make_mlp(d, hidden, 1);
    std::vector<double> w(net.parameter_count());
    net.initialize(w, rng);
    nn::Adam adam(w.size(), {cfg.learning_rate, 0.9, 0.999, 1e-8});
    std::vector<double> grad(w.size());
    std::vector<nn::Matrix> acts;

    double best = std::numeric_limits<double>::infinity();
    std::size_t stale = 0;
    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(train.begin(), train.end(), rng);
        double total = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t len = std::min(cfg.batch_size, n_train - start);
            nn::Matrix x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(len));
            Eigen::RowVectorXd y(static_cast<Eigen::Index>(len));
            for (std::size_t i = 0; i < len; ++i) {
                x.col(static_cast<Eigen::Index>(i)) = features.col(static_cast<Eigen::Index>(train[start + i]));
                y[static_cast<Eigen::Index>(i)] = labels[static_cast<Eigen::Index>(train[start + i])];
            }
            net.forward(w, x, acts);
            const Eigen::RowVectorXd logit = acts.back().row(0);
            nn::Matrix dlogit(1, static_cast<Eigen::Index>(len));
            for (Eigen::Index i = 0; i < logit.size(); ++i) {
                total += softplus(logit[i]) - y[i] * logit[i];
                const double prob = 1.0 / (1.0 + std::exp(-logit[i]));
                dlogit(0, i) = (prob - y[i]) / static_cast<double>(len);
            }
            std::fill(grad.begin(), grad.end(), 0.0);
            net.backward(w, acts, dlogit, grad, nullptr);
            adam.step(w, grad);
        }
        const double mean_loss = total / static_cast<double>(n_train);
        if (mean_loss > best - cfg.tolerance) {
            if (++stale >= cfg.patience) break;
        } else {
            stale = 0;
        }
        best = std::min(best, mean_loss);
    }

    std::size_t correct = 0;
    const std::size_t n_test = n - n_train;
    nn::Matrix x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n_test));
    for (std::size_t i = 0; i < n_test; ++i)
        x.col(static_cast<Eigen::Index>(i)) = features.col(static_cast<Eigen::Index>(order[n_train + i]));
    const nn::Matrix logits = net.forward(w, x);
    for (std::size_t i = 0; i < n_test; ++i) {
        const double predicted = logits(0, static_cast<Eigen::Index>(i)) > 0.0 ? 1.0 : 0.0;
        if (predicted == labels[static_cast<Eigen::Index>(order[n_train + i])]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n_test);
}

}  // namespace

C2stResult c2st(const Eigen::MatrixXd& p, const Eigen::MatrixXd& q, const C2stConfig& config) {
    config.validate();
    if (p.cols() != q.cols() || p.cols() == 0)
        throw StructuralError("c2st: sample sets have different dimensions");
    if (static_cast<std::size_t>(std::min(p.rows(), q.rows())) < config.min_samples)
        throw StructuralError("c2st: at least " + std::to_string(config.min_samples) +
                              " samples per set required");
    if (!p.allFinite() || !q.allFinite()) throw DataError("c2st: non-finite samples");

    Eigen::MatrixXd pooled(p.cols(), p.rows() + q.rows());
    pooled << p.transpose(), q.transpose();
    const Eigen::VectorXd mean = pooled.rowwise().mean();
    pooled.colwise() -= mean;
    Eigen::VectorXd sd = (pooled.cwiseAbs2().rowwise().sum() / static_cast<double>(pooled.cols())).cwiseSqrt();
    for (Eigen::Index i = 0; i < sd.size(); ++i)
        if (!(sd[i] > 0.0)) sd[i] = 1.0;
    pooled = sd.cwiseInverse().asDiagonal() * pooled;
    Eigen::VectorXd labels(pooled.cols());
    labels.head(p.rows()).setZero();
    labels.tail(q.rows()).setOnes();

    C2stResult result;
    result.repetitions.assign(config.repetitions, 0.0);
    parallel_for(config.repetitions, config.workers, [&](std::size_t r) {
        result.repetitions[r] = classifier_accuracy(pooled, labels, config, r);
    });
    result.score = std::accumulate(result.repetitions.begin(), result.repetitions.end(), 0.0) /
                   static_cast<double>(config.repetitions);
    return result;
}

// --- Moments and spectra ----------------------------------------------------

double mse_of_means(const Eigen::MatrixXd& samples, const Eigen::MatrixXd& reference,
                    const Eigen::VectorXd& prior_stds) {
    if (samples.cols() != reference.cols() || samples.cols() != prior_stds.size())
        throw StructuralError("mse_of_means: dimension mismatch");
    if (samples.rows() == 0 || reference.rows() == 0)
        throw StructuralError("mse_of_means: empty sample set");
    const Eigen::ArrayXd diff = (samples.colwise().mean() - reference.colwise().mean()).transpose().array() /
                                prior_stds.array();
    return diff.square().sum();
}

Eigen::VectorXd singular_spectrum(const Eigen::MatrixXd& data) {
    if (data.size() == 0) throw StructuralError("singular_spectrum: empty matrix");
    const Eigen::MatrixXd centred = data.rowwise() - data.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centred);
    return svd.singularValues();  // already descending
}

std::size_t effective_dimension(const Eigen::VectorXd& values, double rel_threshold) {
    if (values.size() == 0) throw StructuralError("effective_dimension: no singular values");
    const double cut = rel_threshold * values.maxCoeff();
    return static_cast<std::size_t>((values.array() >= cut).count());
}

// --- Kolmogorov-Smirnov -----------------------------------------------------

double kolmogorov_survival(double lambda) {
    if (lambda <= 0.0) return 1.0;
    if (lambda < 1.18) {
        // Theta-function form, fast for small lambda.
        const double pi2_8l2 = std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda);
        double sum = 0.0;
        for (int k = 1; k < 40; k += 2) sum += std::exp(-static_cast<double>(k * k) * pi2_8l2);
        return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * sum, 0.0, 1.0);
    }
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k < 100; ++k) {
        const double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += sign * term;
        if (term < 1e-18) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
    if (samples.empty()) throw StructuralError("ks_statistic: no samples");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const double f = cdf(sorted[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    const double sn = std::sqrt(n);
    return {d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d)};
}

// --- Jensen-Shannon ---------------------------------------------------------

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

bool single_point(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

JsDivergence js_divergence(std::span<const double> a, std::span<const double> b) {
    if (a.empty() || b.empty()) throw StructuralError("js_divergence: empty sample set");
    const auto finite = [](double x) { return std::isfinite(x); };
    if (!std::all_of(a.begin(), a.end(), finite) || !std::all_of(b.begin(), b.end(), finite))
        throw DataError("js_divergence: non-finite samples");
    if (single_point(a) || single_point(b)) return {std::numbers::ln2, true, 0};

    std::vector<double> pooled(a.begin(), a.end());
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    const double lo = pooled.front();
    const double hi = pooled.back();
    const double iqr = quantile_sorted(pooled, 0.75) - quantile_sorted(pooled, 0.25);
    const double n = static_cast<double>(pooled.size());
    double width = 2.0 * iqr / std::cbrt(n);
    if (!(width > 0.0)) width = (hi - lo) / std::sqrt(n);
    constexpr std::size_t kMaxBins = 10000;
    const auto bins = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil((hi - lo) / width)), 1, kMaxBins);

    const auto histogram = [&](std::span<const double> v) {
        std::vector<double> h(bins, 0.0);
        const double scale = static_cast<double>(bins) / (hi - lo);
        for (double x : v) {
            auto k = static_cast<std::size_t>((x - lo) * scale);
            h[std::min(k, bins - 1)] += 1.0;
        }
        for (double& c : h) c /= static_cast<double>(v.size());
        return h;
    };
    const auto pa = histogram(a);
    const auto pb = histogram(b);
    double js = 0.0;
    for (std::size_t k = 0; k < bins; ++k) {
        if (pa[k] == pb[k]) continue;  // contributes exactly zero
        const double m = 0.5 * (pa[k] + pb[k]);
        if (pa[k] > 0.0) js += 0.5 * pa[k] * std::log(pa[k] / m);
        if (pb[k] > 0.0) js += 0.5 * pb[k] * std::log(pb[k] / m);
    }
    return {std::clamp(js, 0.0, std::numbers::ln2), false, bins};
}

}  // namespace gnpe
