#include "gnpe/fft.hpp"

#include <fftw3.h>

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "gnpe/errors.hpp"

namespace gnpe {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
    // Planning is not thread-safe in FFTW; callers hold planner_mutex().
    std::vector<double> real(n);
    std::vector<std::complex<double>> spec(n / 2 + 1);
    auto* c = reinterpret_cast<fftw_complex*>(spec.data());
    const int len = static_cast<int>(n);
    forward_plan_ = fftw_plan_dft_r2c_1d(len, real.data(), c, FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_plan_ = fftw_plan_dft_c2r_1d(len, c, real.data(),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED | FFTW_DESTROY_INPUT);
    if (forward_plan_ == nullptr || inverse_plan_ == nullptr)
        throw StructuralError("FFTW planning failed for length " + std::to_string(n));
}

RealFft::~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
    fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

const RealFft& RealFft::of_size(std::size_t n) {
    if (n == 0) throw StructuralError("FFT length must be positive");
    // The mutex is constructed before the cache so it outlives it at exit.
    auto& mutex = planner_mutex();
    static std::map<std::size_t, std::unique_ptr<RealFft>> cache;
    std::lock_guard lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end())
        it = cache.emplace(n, std::unique_ptr<RealFft>(new RealFft(n))).first;
    return *it->second;
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    if (in.size() != n_ || out.size() != spectrum_size())
        throw StructuralError("RealFft::forward: buffer size mismatch");
    // r2c does not modify its input, the const_cast only satisfies the C API.
    fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) const {
    if (in.size() != spectrum_size() || out.size() != n_)
        throw StructuralError("RealFft::inverse: buffer size mismatch");
    std::vector<std::complex<double>> scratch(in.begin(), in.end());
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                         reinterpret_cast<fftw_complex*>(scratch.data()), out.data());
    const double norm = 1.0 / static_cast<double>(n_);
    for (double& v : out) v *= norm;
}

Eigen::VectorXd to_frequency_layout(const Eigen::VectorXd& x, std::size_t bins,
                                    std::size_t channels) {
    if (static_cast<std::size_t>(x.size()) != bins * channels)
        throw StructuralError("to_frequency_layout: length mismatch");
    const auto& fft = RealFft::of_size(bins);
    const std::size_t k = fft.spectrum_size();
    Eigen::VectorXd out(2 * k * channels);
    std::vector<std::complex<double>> spec(k);
    for (std::size_t c = 0; c < channels; ++c) {
        fft.forward(std::span<const double>(x.data() + c * bins, bins), spec);
        for (std::size_t i = 0; i < k; ++i) {
            out[2 * k * c + i] = spec[i].real();
            out[2 * k * c + k + i] = spec[i].imag();
        }
    }
    return out;
}

Eigen::VectorXd from_frequency_layout(const Eigen::VectorXd& spectrum, std::size_t bins,
                                      std::size_t channels) {
    const auto& fft = RealFft::of_size(bins);
    const std::size_t k = fft.spectrum_size();
    if (static_cast<std::size_t>(spectrum.size()) != 2 * k * channels)
        throw StructuralError("from_frequency_layout: length mismatch");
    Eigen::VectorXd out(bins * channels);
    std::vector<std::complex<double>> spec(k);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < k; ++i)
            spec[i] = {spectrum[2 * k * c + i], spectrum[2 * k * c + k + i]};
        fft.inverse(spec, std::span<double>(out.data() + c * bins, bins));
    }
    return out;
}

Eigen::VectorXd band_limit(const Eigen::VectorXd& x, std::size_t bins, std::size_t channels) {
    if (static_cast<std::size_t>(x.size()) != bins * channels)
        throw StructuralError("band_limit: length mismatch");
    if (bins % 2 != 0) return x;
    Eigen::VectorXd out = x;
    // The Nyquist coefficient is the alternating sum; subtracting its
    // projection avoids a full transform pair.
    for (std::size_t c = 0; c < channels; ++c) {
        double alternating = 0.0;
        for (std::size_t i = 0; i < bins; ++i)
            alternating += (i % 2 == 0 ? 1.0 : -1.0) * x[c * bins + i];
        const double amplitude = alternating / static_cast<double>(bins);
        for (std::size_t i = 0; i < bins; ++i)
            out[c * bins + i] -= (i % 2 == 0 ? 1.0 : -1.0) * amplitude;
    }
    return out;
}

}  // namespace gnpe
