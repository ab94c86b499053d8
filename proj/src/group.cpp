#include "gnpe/group.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>

#include "gnpe/errors.hpp"
#include "gnpe/fft.hpp"

namespace gnpe {

bool GroupElement::is_identity() const noexcept {
    for (double s : shifts_)
        if (s != 0.0) return false;
    return true;
}

GroupElement compose(const GroupElement& g, const GroupElement& h) {
    if (g.factors() != h.factors())
        throw StructuralError("compose: factor count mismatch (" + std::to_string(g.factors()) +
                              " vs " + std::to_string(h.factors()) + ")");
    std::vector<double> out(g.factors());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = g[i] + h[i];
    return GroupElement(std::move(out));
}

GroupElement inverse(const GroupElement& g) {
    std::vector<double> out(g.factors());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = -g[i];
    return GroupElement(std::move(out));
}

ParameterAction act_on_params(const GroupElement& g, const Eigen::VectorXd& theta,
                              std::span<const std::size_t> pose_slots) {
    if (pose_slots.size() != g.factors())
        throw StructuralError("act_on_params: one pose slot per group factor required");
    ParameterAction out{theta, {}};
    for (std::size_t f = 0; f < pose_slots.size(); ++f) {
        if (pose_slots[f] >= static_cast<std::size_t>(theta.size()))
            throw StructuralError("act_on_params: pose slot " + std::to_string(pose_slots[f]) +
                                  " out of range for parameter dimension " +
                                  std::to_string(theta.size()));
        out.theta[static_cast<Eigen::Index>(pose_slots[f])] += g[f];
    }
    return out;
}

GroupElement pose_of(const Eigen::VectorXd& theta, std::span<const std::size_t> pose_slots) {
    std::vector<double> shifts;
    shifts.reserve(pose_slots.size());
    for (std::size_t slot : pose_slots) {
        if (slot >= static_cast<std::size_t>(theta.size()))
            throw StructuralError("pose_of: pose slot out of range");
        shifts.push_back(theta[static_cast<Eigen::Index>(slot)]);
    }
    return GroupElement(std::move(shifts));
}

std::string to_string(RepresentationKind kind) {
    switch (kind) {
        case RepresentationKind::cyclic_time_shift: return "cyclic-time-shift";
        case RepresentationKind::frequency_phase_shift: return "frequency-phase-shift";
        case RepresentationKind::affine_1d: return "affine-1d";
    }
    return "unknown";
}

DataRepresentation::DataRepresentation(RepresentationKind kind, SamplingGrid grid, double scale,
                                       Eigen::MatrixXd coupling)
    : kind_(kind), grid_(std::move(grid)), scale_(scale), coupling_(std::move(coupling)) {
    if (coupling_.size() == 0) coupling_ = Eigen::MatrixXd::Ones(1, 1);
    if (static_cast<std::size_t>(coupling_.rows()) != grid_.channels)
        throw StructuralError("DataRepresentation: coupling rows must equal channel count");
    if (grid_.bins == 0) throw StructuralError("DataRepresentation: empty grid");
    if (kind_ != RepresentationKind::affine_1d && !(grid_.duration > 0.0))
        throw StructuralError("DataRepresentation: grid duration must be positive");
}

DataRepresentation DataRepresentation::cyclic_time_shift(SamplingGrid grid,
                                                         Eigen::MatrixXd coupling) {
    if (coupling.size() == 0) coupling = Eigen::MatrixXd::Ones(grid.channels, 1);
    return {RepresentationKind::cyclic_time_shift, std::move(grid), 1.0, std::move(coupling)};
}

DataRepresentation DataRepresentation::frequency_phase_shift(SamplingGrid grid,
                                                             Eigen::MatrixXd coupling) {
    if (coupling.size() == 0) coupling = Eigen::MatrixXd::Ones(grid.channels, 1);
    return {RepresentationKind::frequency_phase_shift, std::move(grid), 1.0, std::move(coupling)};
}

DataRepresentation DataRepresentation::affine_1d(double scale, std::size_t entries,
                                                 Eigen::MatrixXd coupling) {
    if (coupling.size() == 0) coupling = Eigen::MatrixXd::Ones(1, 1);
    SamplingGrid grid;
    grid.bins = entries;
    grid.duration = 0.0;
    grid.channels = static_cast<std::size_t>(coupling.rows());
    grid.units = "";
    return {RepresentationKind::affine_1d, std::move(grid), scale, std::move(coupling)};
}

std::size_t DataRepresentation::channel_size() const {
    if (kind_ == RepresentationKind::frequency_phase_shift) return 2 * (grid_.bins / 2 + 1);
    return grid_.bins;
}

Eigen::VectorXd DataRepresentation::channel_shifts(const GroupElement& g) const {
    if (g.factors() != factors())
        throw StructuralError("channel_shifts: group element has " + std::to_string(g.factors()) +
                              " factors, representation expects " + std::to_string(factors()));
    Eigen::VectorXd out = Eigen::VectorXd::Zero(coupling_.rows());
    for (Eigen::Index c = 0; c < coupling_.rows(); ++c)
        for (Eigen::Index f = 0; f < coupling_.cols(); ++f)
            if (coupling_(c, f) != 0.0) out[c] += coupling_(c, f) * g[static_cast<std::size_t>(f)];
    return out;
}

namespace {

// Multiplies the one-sided spectrum of a real series by exp(-2 pi i k m / n),
// m the shift in bins. On even n the Nyquist coefficient of a real signal
// must stay real, so it receives cos(pi m), the real part of its phase. That
// reproduces index rolling for integer m and keeps band-limited signals
// band-limited.
void shift_real_channel(const double* in, double* out, std::size_t n, double shift_bins) {
    const auto& fft = RealFft::of_size(n);
    std::vector<std::complex<double>> spec(fft.spectrum_size());
    fft.forward(std::span<const double>(in, n), spec);
    const double nd = static_cast<double>(n);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        if (n % 2 == 0 && k == n / 2) {
            spec[k] *= std::cos(std::numbers::pi * shift_bins);
            continue;
        }
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) * shift_bins / nd;
        spec[k] *= std::complex<double>(std::cos(phase), std::sin(phase));
    }
    fft.inverse(spec, std::span<double>(out, n));
}

void shift_spectrum_channel(const double* in, double* out, std::size_t n, double shift_bins) {
    const std::size_t k_count = n / 2 + 1;
    const double nd = static_cast<double>(n);
    for (std::size_t k = 0; k < k_count; ++k) {
        const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) * shift_bins / nd;
        const std::complex<double> z(in[k], in[k_count + k]);
        const std::complex<double> r = z * std::complex<double>(std::cos(phase), std::sin(phase));
        out[k] = r.real();
        out[k_count + k] = r.imag();
    }
}

}  // namespace

Eigen::VectorXd act_on_data(const GroupElement& g, const Eigen::VectorXd& x,
                            const DataRepresentation& rep) {
    if (static_cast<std::size_t>(x.size()) != rep.data_size())
        throw StructuralError("act_on_data: data length " + std::to_string(x.size()) +
                              " does not match representation size " +
                              std::to_string(rep.data_size()));
    if (!x.allFinite()) throw DataError("act_on_data: non-finite entries in data");
    const Eigen::VectorXd shifts = rep.channel_shifts(g);
    if (g.is_identity()) return x;

    Eigen::VectorXd out(x.size());
    const std::size_t block = rep.channel_size();
    for (std::size_t c = 0; c < rep.channels(); ++c) {
        const double* in = x.data() + c * block;
        double* dst = out.data() + c * block;
        const double s = shifts[static_cast<Eigen::Index>(c)];
        if (s == 0.0) {
            std::copy(in, in + block, dst);
            continue;
        }
        switch (rep.kind()) {
            case RepresentationKind::affine_1d:
                for (std::size_t i = 0; i < block; ++i) dst[i] = in[i] + rep.scale() * s;
                break;
            case RepresentationKind::cyclic_time_shift:
                shift_real_channel(in, dst, rep.grid().bins, s / rep.grid().dt());
                break;
            case RepresentationKind::frequency_phase_shift:
                shift_spectrum_channel(in, dst, rep.grid().bins, s / rep.grid().dt());
                break;
        }
    }
    return out;
}

Kernel::Kernel(KernelKind kind, std::vector<double> widths)
    : kind_(kind), widths_(std::move(widths)) {
    if (kind_ != KernelKind::delta)
        for (double w : widths_)
            if (!(w > 0.0) || !std::isfinite(w))
                throw StructuralError("Kernel: widths must be positive and finite");
}

Kernel Kernel::gaussian(std::vector<double> sigmas) {
    return {KernelKind::gaussian, std::move(sigmas)};
}

Kernel Kernel::uniform(std::vector<double> half_widths) {
    return {KernelKind::uniform, std::move(half_widths)};
}

Kernel Kernel::delta(std::size_t factors) {
    return {KernelKind::delta, std::vector<double>(factors, 0.0)};
}

double Kernel::stddev(std::size_t factor) const {
    switch (kind_) {
        case KernelKind::gaussian: return widths_.at(factor);
        case KernelKind::uniform: return widths_.at(factor) / std::sqrt(3.0);
        case KernelKind::delta: return 0.0;
    }
    return 0.0;
}

std::string to_string(KernelKind kind) {
    switch (kind) {
        case KernelKind::gaussian: return "gaussian";
        case KernelKind::uniform: return "uniform";
        case KernelKind::delta: return "delta";
    }
    return "unknown";
}

GroupElement sample_kernel(const Kernel& kernel, Rng& rng) {
    std::vector<double> eps(kernel.factors(), 0.0);
    for (std::size_t f = 0; f < eps.size(); ++f) {
        switch (kernel.kind()) {
            case KernelKind::gaussian: eps[f] = kernel.widths()[f] * standard_normal(rng); break;
            case KernelKind::uniform:
                eps[f] = uniform(rng, -kernel.widths()[f], kernel.widths()[f]);
                break;
            case KernelKind::delta: break;
        }
    }
    return GroupElement(std::move(eps));
}

double kernel_density(const Kernel& kernel, const GroupElement& eps) {
    if (eps.factors() != kernel.factors())
        throw StructuralError("kernel_density: factor count mismatch");
    double density = 1.0;
    for (std::size_t f = 0; f < eps.factors(); ++f) {
        const double e = eps[f];
        const double w = kernel.widths()[f];
        switch (kernel.kind()) {
            case KernelKind::gaussian:
                density *= std::exp(-0.5 * e * e / (w * w)) / (std::sqrt(2.0 * std::numbers::pi) * w);
                break;
            case KernelKind::uniform:
                if (std::abs(e) > w) return 0.0;
                density *= 0.5 / w;
                break;
            case KernelKind::delta:
                if (e != 0.0) return 0.0;
                density = std::numeric_limits<double>::infinity();
                break;
        }
    }
    return density;
}

GroupElement make_proxy(const GroupElement& g_pose, const Kernel& kernel, Rng& rng) {
    if (g_pose.factors() != kernel.factors())
        throw StructuralError("make_proxy: pose and kernel factor counts differ");
    return compose(g_pose, sample_kernel(kernel, rng));
}

}  // namespace gnpe
