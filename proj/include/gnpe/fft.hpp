#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include <Eigen/Dense>

namespace gnpe {

/// Real-to-complex transform of fixed length backed by a cached FFTW plan.
/// Execution is thread-safe; plans are shared across threads.
class RealFft {
public:
    static const RealFft& of_size(std::size_t n);

    std::size_t size() const noexcept { return n_; }
    std::size_t spectrum_size() const noexcept { return n_ / 2 + 1; }

    /// Unnormalised forward transform, out.size() == spectrum_size().
    void forward(std::span<const double> in, std::span<std::complex<double>> out) const;
    /// Inverse transform including the 1/n normalisation.
    void inverse(std::span<const std::complex<double>> in, std::span<double> out) const;

    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;
    ~RealFft();

private:
    explicit RealFft(std::size_t n);

    std::size_t n_;
    void* forward_plan_;
    void* inverse_plan_;
};

/// Time series (channel-major) to the interleaved one-sided spectrum layout of
/// the frequency-phase-shift representation, and back.
Eigen::VectorXd to_frequency_layout(const Eigen::VectorXd& x, std::size_t bins,
                                    std::size_t channels = 1);
Eigen::VectorXd from_frequency_layout(const Eigen::VectorXd& spectrum, std::size_t bins,
                                      std::size_t channels = 1);

/// Removes the Nyquist component of each channel of a real series with an
/// even number of bins. Such band-limited series form the subspace on which
/// the cyclic-shift representation is an exact homomorphism.
Eigen::VectorXd band_limit(const Eigen::VectorXd& x, std::size_t bins, std::size_t channels = 1);

}  // namespace gnpe
