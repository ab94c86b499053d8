#pragma once

// Seeded generators and small numerical oracles shared by the test suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/fft.hpp"
#include "gnpe/group.hpp"
#include "gnpe/random.hpp"

namespace gnpe::test {

/// Independent stream for case `i` of property `property`.
inline Rng case_rng(std::uint64_t property, std::uint64_t i) {
    return make_rng(0x5eed0000ULL + property, i);
}

/// Shifts that are multiples of 2^-10 in [-scale, scale]; sums of such values
/// are exact in double precision.
inline GroupElement dyadic_element(Rng& rng, std::size_t factors, double scale) {
    std::vector<double> s(factors);
    const auto steps = static_cast<long>(scale * 1024.0);
    std::uniform_int_distribution<long> d(-steps, steps);
    for (auto& v : s) v = static_cast<double>(d(rng)) / 1024.0;
    return GroupElement(s);
}

inline GroupElement random_element(Rng& rng, std::size_t factors, double scale) {
    std::vector<double> s(factors);
    for (auto& v : s) v = uniform(rng, -scale, scale);
    return GroupElement(s);
}

inline Eigen::VectorXd random_series(Rng& rng, std::size_t n) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = standard_normal(rng);
    return x;
}

/// White noise with the Nyquist coefficient of every channel removed.
inline Eigen::VectorXd random_band_limited(Rng& rng, std::size_t bins, std::size_t channels = 1) {
    return band_limit(random_series(rng, bins * channels), bins, channels);
}

/// y[i] = x[(i - m) mod n] per channel: integer circular delay by m bins.
inline Eigen::VectorXd roll(const Eigen::VectorXd& x, long m, std::size_t bins, std::size_t channels = 1) {
    Eigen::VectorXd y(x.size());
    const long n = static_cast<long>(bins);
    for (std::size_t c = 0; c < channels; ++c)
        for (long i = 0; i < n; ++i) {
            const long src = ((i - m) % n + n) % n;
            y[static_cast<Eigen::Index>(c * bins) + i] = x[static_cast<Eigen::Index>(c * bins) + src];
        }
    return y;
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

inline double normal_cdf(double x, double mean = 0.0, double sd = 1.0) {
    return 0.5 * std::erfc(-(x - mean) / (sd * std::numbers::sqrt2));
}

inline double sample_mean(const Eigen::VectorXd& v) { return v.mean(); }

inline double sample_variance(const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().sum() / static_cast<double>(v.size() - 1);
}

}  // namespace gnpe::test
