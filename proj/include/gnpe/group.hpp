#pragma once

// Translation groups (and direct products of them) acting on parameters and
// data, blurring kernels over group elements, and pose proxies.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/random.hpp"

namespace gnpe {

/// Element of a product of one-dimensional translation groups. One shift per
/// independent factor; composition is component-wise addition.
class GroupElement {
public:
    GroupElement() = default;
    explicit GroupElement(std::vector<double> shifts) : shifts_(std::move(shifts)) {}
    GroupElement(std::initializer_list<double> shifts) : shifts_(shifts) {}

    static GroupElement identity(std::size_t factors) {
        return GroupElement(std::vector<double>(factors, 0.0));
    }

    std::size_t factors() const noexcept { return shifts_.size(); }
    double operator[](std::size_t i) const { return shifts_[i]; }
    std::span<const double> shifts() const noexcept { return shifts_; }
    bool is_identity() const noexcept;

    friend bool operator==(const GroupElement&, const GroupElement&) = default;

private:
    std::vector<double> shifts_;
};

GroupElement compose(const GroupElement& g, const GroupElement& h);
GroupElement inverse(const GroupElement& g);

/// log|det J_g| of a parameter action. Zero for every translation, carried so
/// density transformations stay explicit.
struct LogDetJacobian {
    double value = 0.0;
};

struct ParameterAction {
    Eigen::VectorXd theta;
    LogDetJacobian log_det;
};

/// Shifts theta[pose_slots[f]] by g[f]; all other components are untouched.
ParameterAction act_on_params(const GroupElement& g, const Eigen::VectorXd& theta,
                              std::span<const std::size_t> pose_slots);

/// Extracts the pose g^theta from the pose slots of theta.
GroupElement pose_of(const Eigen::VectorXd& theta, std::span<const std::size_t> pose_slots);

struct SamplingGrid {
    std::size_t bins = 1;      // samples per channel
    double duration = 1.0;     // length of the cyclic window
    double start = 0.0;        // time of the first sample
    std::size_t channels = 1;
    std::string units = "s";

    double dt() const { return duration / static_cast<double>(bins); }
    double time(std::size_t i) const { return start + dt() * static_cast<double>(i); }
};

enum class RepresentationKind { cyclic_time_shift, frequency_phase_shift, affine_1d };

std::string to_string(RepresentationKind kind);

/// How a group element acts on a data vector.
///
/// Data vectors are channel-major: channel c occupies a contiguous block.
/// `coupling` maps group factors to per-channel shifts (channels x factors);
/// for a single factor and channel it is [[1]]. The product group
/// G_abs x G_rel of a two-detector setup uses [[1, 0], [1, 1]].
///
///  - cyclic_time_shift: real time series of `grid.bins` samples per channel,
///    shifted circularly by multiplying the spectrum with exp(-2 pi i f s).
///  - frequency_phase_shift: complex one-sided spectra of a `grid.bins`-sample
///    series, stored per channel as [re_0..re_K, im_0..im_K] with
///    K = bins / 2; time shifts act by the same phase multiplication.
///  - affine_1d: x -> x + scale * s per entry of a channel.
class DataRepresentation {
public:
    static DataRepresentation cyclic_time_shift(SamplingGrid grid, Eigen::MatrixXd coupling = {});
    static DataRepresentation frequency_phase_shift(SamplingGrid grid,
                                                    Eigen::MatrixXd coupling = {});
    static DataRepresentation affine_1d(double scale, std::size_t entries = 1,
                                        Eigen::MatrixXd coupling = {});

    RepresentationKind kind() const noexcept { return kind_; }
    const SamplingGrid& grid() const noexcept { return grid_; }
    double scale() const noexcept { return scale_; }
    const Eigen::MatrixXd& coupling() const noexcept { return coupling_; }
    std::size_t factors() const { return static_cast<std::size_t>(coupling_.cols()); }
    std::size_t channels() const { return static_cast<std::size_t>(coupling_.rows()); }

    /// Entries per channel in the stored data vector.
    std::size_t channel_size() const;
    std::size_t data_size() const { return channel_size() * channels(); }

    Eigen::VectorXd channel_shifts(const GroupElement& g) const;

private:
    DataRepresentation(RepresentationKind kind, SamplingGrid grid, double scale,
                       Eigen::MatrixXd coupling);

    RepresentationKind kind_;
    SamplingGrid grid_;
    double scale_ = 1.0;
    Eigen::MatrixXd coupling_;
};

/// T_g x. The identity element returns x unchanged bit for bit.
Eigen::VectorXd act_on_data(const GroupElement& g, const Eigen::VectorXd& x,
                            const DataRepresentation& rep);

enum class KernelKind { gaussian, uniform, delta };

/// Symmetric blurring distribution over group elements, independent per factor.
/// `widths` holds the standard deviation (gaussian) or half-width (uniform).
class Kernel {
public:
    static Kernel gaussian(std::vector<double> sigmas);
    static Kernel uniform(std::vector<double> half_widths);
    static Kernel delta(std::size_t factors);

    KernelKind kind() const noexcept { return kind_; }
    std::size_t factors() const noexcept { return widths_.size(); }
    std::span<const double> widths() const noexcept { return widths_; }
    /// Per-factor standard deviation of the kernel.
    double stddev(std::size_t factor) const;

private:
    Kernel(KernelKind kind, std::vector<double> widths);

    KernelKind kind_;
    std::vector<double> widths_;
};

std::string to_string(KernelKind kind);

GroupElement sample_kernel(const Kernel& kernel, Rng& rng);

/// Product density of eps under the kernel. For the delta kernel this is +inf
/// at the identity and 0 elsewhere.
double kernel_density(const Kernel& kernel, const GroupElement& eps);

/// g_hat = g_pose * eps, eps ~ kernel.
GroupElement make_proxy(const GroupElement& g_pose, const Kernel& kernel, Rng& rng);

}  // namespace gnpe
