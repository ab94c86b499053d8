#pragma once

// Training sets for NPE / GNPE / chained NPE and their on-disk container.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/group.hpp"
#include "gnpe/models.hpp"

namespace gnpe {

/// Examples are stored column-wise: targets is (P x N), contexts (D x N),
/// proxies (K x N, K may be 0).
struct TrainingDataset {
    Eigen::MatrixXd targets;
    Eigen::MatrixXd contexts;
    Eigen::MatrixXd proxies;
    /// theta_center of each example when generated from a simulator (P x N);
    /// kept for evaluation, never used in training.
    Eigen::MatrixXd theta_centers;
    std::vector<std::uint8_t> is_validation;

    std::size_t size() const { return static_cast<std::size_t>(targets.cols()); }
    std::vector<std::size_t> train_indices() const;
    std::vector<std::size_t> validation_indices() const;
    /// Throws StructuralError when counts disagree.
    void validate() const;
};

inline constexpr double kDefaultValidationFraction = 0.02;

/// N prior draws with their simulations; the last round(N * fraction)
/// examples (at least one) form the validation split.
TrainingDataset generate_npe_dataset(const ForwardModel& model, std::size_t n, std::uint64_t seed,
                                     double validation_fraction = kDefaultValidationFraction,
                                     std::size_t workers = 1);

enum class EquivarianceMode { exact, approximate };

std::string to_string(EquivarianceMode mode);
EquivarianceMode equivariance_mode_from_string(const std::string& s);

/// Everything needed to move between (theta, x) and pose-standardised
/// (theta', x') coordinates.
struct GnpeSpec {
    std::vector<std::size_t> pose_slots;
    DataRepresentation representation;
    Kernel kernel;
    std::vector<EquivarianceMode> modes;

    std::size_t factors() const { return pose_slots.size(); }
    /// Number of approximate factors, i.e. proxies appended to the context.
    std::size_t proxy_dim() const;
    void validate() const;
};

GnpeSpec make_gnpe_spec(const ForwardModel& model, Kernel kernel,
                        std::vector<EquivarianceMode> modes = {});

struct GnpeExample {
    Eigen::VectorXd target;
    Eigen::VectorXd context;
    Eigen::VectorXd proxy;  // g_hat of approximate factors
    GroupElement g_hat;
};

/// Draws g_hat = g^theta eps and returns the standardised example:
/// exact factors use target pose g_hat^-1 theta, approximate factors keep
/// theta and append g_hat to the proxy features; context is T_{g_hat^-1} x.
GnpeExample gnpe_transform_example(const GnpeSpec& spec, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& x, Rng& rng);

/// Same, with the proxy fixed.
GnpeExample gnpe_standardize(const GnpeSpec& spec, const Eigen::VectorXd& theta,
                             const Eigen::VectorXd& x, const GroupElement& g_hat);

/// Applies gnpe_transform_example to every example of a raw NPE dataset,
/// keeping the split. Example i uses stream i of `seed`.
TrainingDataset make_gnpe_dataset(const TrainingDataset& raw, const GnpeSpec& spec,
                                  std::uint64_t seed, std::size_t workers = 1);

/// Pose-only targets (q_init): the pose slots of theta, raw contexts.
TrainingDataset make_pose_dataset(const TrainingDataset& raw,
                                  const std::vector<std::size_t>& pose_slots);

/// Chained NPE second stage: targets are the non-pose parameters, contexts
/// are aligned with the true pose lambda, and lambda is the proxy feature.
TrainingDataset make_chained_rest_dataset(const TrainingDataset& raw,
                                          const std::vector<std::size_t>& pose_slots,
                                          const DataRepresentation& representation,
                                          std::size_t workers = 1);

// ---------------------------------------------------------------------------
// Binary container
//
//   offset 0   8 bytes   magic "GNPEDSET"
//          8   u32 LE    format version (1)
//         12   u64 LE    header length H
//         20   H bytes   JSON header: model, parameter schema, grid, counts,
//                        provenance (seed, config hash)
//      20+H   u8[N]      validation flags
//             f64[P*N]   targets, column-major (example-major)
//             f64[D*N]   contexts
//             f64[K*N]   proxies
//             f64[P*N]   theta centers (P*N or 0 doubles, per header)
//
// All multi-byte values are little endian.

inline constexpr char kDatasetMagic[8] = {'G', 'N', 'P', 'E', 'D', 'S', 'E', 'T'};
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetFile {
    TrainingDataset data;
    std::string header_json;  // serialized header, including caller metadata
};

/// `metadata_json` must be a JSON object; shape fields are added to it.
void write_dataset(const std::filesystem::path& path, const TrainingDataset& data,
                   const std::string& metadata_json);
DatasetFile read_dataset(const std::filesystem::path& path);

/// One row per example: split, targets, theta centers and the first
/// `max_context_columns` context values.
void write_dataset_csv(const std::filesystem::path& path, const TrainingDataset& data,
                       const std::vector<std::string>& parameter_names,
                       std::size_t max_context_columns = 16,
                       const std::string& comment = {});

}  // namespace gnpe
