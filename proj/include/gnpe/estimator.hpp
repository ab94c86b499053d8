#pragma once

// Diagonal-Gaussian conditional density estimator q(theta | x[, proxy]).
//
// Pipeline: standardised context -> embedding -> [features ; standardised
// proxy] -> dense head -> (mean, log-std) in standardised parameter space.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/dataset.hpp"
#include "gnpe/network.hpp"
#include "gnpe/random.hpp"

namespace gnpe {

/// Anything that can draw theta given a batch of contexts. Implemented by the
/// trained estimator and by analytic oracles used in tests.
class ThetaConditional {
public:
    virtual ~ThetaConditional() = default;
    virtual std::size_t param_dim() const = 0;
    virtual std::size_t context_dim() const = 0;
    virtual std::size_t proxy_dim() const { return 0; }
    /// False for an estimator that has neither been trained nor loaded.
    virtual bool ready() const { return true; }
    /// contexts (D x B), proxies (K x B) -> draws (P x B); column b uses rngs[b].
    virtual Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                                 std::span<Rng> rngs) const = 0;
};

/// Per-row affine map z = (v - shift) / scale.
struct Standardizer {
    Eigen::VectorXd shift;
    Eigen::VectorXd scale;

    static Standardizer identity(std::size_t dim);
    /// Mean and standard deviation over the given columns. Rows whose spread
    /// is below `relative_floor` times the RMS spread get that floor instead.
    static Standardizer fit(const Eigen::MatrixXd& data, const std::vector<std::size_t>& columns,
                            double relative_floor = 1e-3);

    std::size_t dim() const { return static_cast<std::size_t>(shift.size()); }
    Eigen::MatrixXd forward(const Eigen::MatrixXd& v) const;
    Eigen::MatrixXd inverse(const Eigen::MatrixXd& z) const;
    double log_det() const { return scale.array().log().sum(); }
    void validate() const;
};

enum class EmbeddingKind { identity, mlp, conv };

std::string to_string(EmbeddingKind kind);
EmbeddingKind embedding_kind_from_string(const std::string& s);

struct ConvStackSpec {
    std::vector<std::size_t> kernel_sizes{5, 5, 5};
    std::vector<std::size_t> channels{6, 12, 12};
    std::size_t pool_kernel = 7;
    std::size_t pool_stride = 7;
};

struct EmbeddingSpec {
    EmbeddingKind kind = EmbeddingKind::mlp;
    /// Dense/ReLU widths (after the conv stack for kind == conv).
    std::vector<std::size_t> hidden{128, 32, 16};
    ConvStackSpec conv;
};

struct EstimatorSpec {
    std::size_t context_dim = 0;
    std::size_t input_channels = 1;  // conv embedding: context = channels x length
    std::size_t proxy_dim = 0;
    std::size_t param_dim = 0;
    EmbeddingSpec embedding;
    double log_std_min = -7.0;
    double log_std_max = 5.0;

    void validate() const;
};

/// Standardised-space output of the head.
struct GaussianHeadOutput {
    Eigen::MatrixXd mean;     // P x B
    Eigen::MatrixXd log_std;  // P x B, clamped
};

/// Physical-space output.
struct GaussianPrediction {
    Eigen::MatrixXd mean;    // P x B
    Eigen::MatrixXd stddev;  // P x B
};

class ConditionalGaussianEstimator final : public ThetaConditional {
public:
    explicit ConditionalGaussianEstimator(EstimatorSpec spec);

    const EstimatorSpec& spec() const noexcept { return spec_; }
    std::size_t param_dim() const override { return spec_.param_dim; }
    std::size_t context_dim() const override { return spec_.context_dim; }
    std::size_t proxy_dim() const override { return spec_.proxy_dim; }
    bool ready() const override { return trained_; }
    void mark_trained(bool trained = true) { trained_ = trained; }

    std::size_t weight_count() const { return weights_.size(); }
    std::span<double> weights() { return weights_; }
    std::span<const double> weights() const { return weights_; }
    /// Uniform fan-in initialisation from `seed`.
    void initialize(std::uint64_t seed);
    std::vector<std::string> describe() const;

    const Standardizer& context_standardizer() const { return ctx_std_; }
    const Standardizer& proxy_standardizer() const { return proxy_std_; }
    const Standardizer& target_standardizer() const { return target_std_; }
    void set_standardizers(Standardizer context, Standardizer proxy, Standardizer target);
    /// Fits all three maps on the training split of `data`.
    void fit_standardization(const TrainingDataset& data);

    /// Network on already-standardised inputs.
    GaussianHeadOutput forward_standardized(const Eigen::MatrixXd& contexts,
                                            const Eigen::MatrixXd& proxies) const;
    /// Network on physical inputs (standardisation applied here).
    GaussianHeadOutput forward(const Eigen::MatrixXd& contexts,
                               const Eigen::MatrixXd& proxies) const;

    /// Per-example negative log density of physical targets, including the
    /// log-determinant of the target standardisation.
    Eigen::VectorXd nll(const Eigen::MatrixXd& targets, const Eigen::MatrixXd& contexts,
                        const Eigen::MatrixXd& proxies) const;

    /// Mean NLL over a batch of standardised inputs and gradient of that mean
    /// with respect to the weights (written into `grad`, which is resized).
    double loss_and_gradient(const Eigen::MatrixXd& targets_std,
                             const Eigen::MatrixXd& contexts_std,
                             const Eigen::MatrixXd& proxies_std, std::vector<double>& grad) const;
    /// Mean NLL without gradient, on standardised inputs.
    double loss(const Eigen::MatrixXd& targets_std, const Eigen::MatrixXd& contexts_std,
                const Eigen::MatrixXd& proxies_std) const;

    /// Physical-space posterior mean and standard deviation per column.
    GaussianPrediction predict(const Eigen::MatrixXd& contexts,
                               const Eigen::MatrixXd& proxies) const;

    /// n x P draws for a single context.
    Eigen::MatrixXd sample(const Eigen::VectorXd& context, const Eigen::VectorXd& proxy,
                           std::size_t n, Rng& rng) const;
    Eigen::MatrixXd draw(const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies,
                         std::span<Rng> rngs) const override;

private:
    double constant_term() const;

    EstimatorSpec spec_;
    nn::Sequential embedding_;
    nn::Dense head_;
    std::vector<double> weights_;
    Standardizer ctx_std_, proxy_std_, target_std_;
    bool trained_ = false;
};

// ---------------------------------------------------------------------------
// Training

struct TrainingConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    std::size_t batch_size = 128;
    std::size_t patience = 20;
    std::size_t max_epochs = 500;
    /// Rescale the batch gradient to at most this Euclidean norm; 0 disables.
    double clip_max_norm = 5.0;
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct EpochRecord {
    std::size_t epoch;  // 1-based
    double train_loss;
    double validation_loss;
};

struct TrainingHistory {
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;
    double best_validation_loss = 0.0;
    bool stopped_early = false;
};

/// Mini-batch training with early stopping on the validation loss. Fits the
/// standardisation on the training split, initialises weights from
/// config.seed and returns the weights of the best validation epoch.
/// Throws TrainingError on a non-finite loss.
TrainingHistory train(ConditionalGaussianEstimator& est, const TrainingDataset& data,
                      const TrainingConfig& config,
                      const std::function<void(const EpochRecord&)>& on_epoch = {});

void write_loss_history_csv(const std::filesystem::path& path, const TrainingHistory& history,
                            const std::string& comment = {});

// ---------------------------------------------------------------------------
// Checkpoint
//
//   offset 0   8 bytes   magic "GNPECKPT"
//          8   u32 LE    format version (1)
//         12   u64 LE    header length H
//         20   H bytes   JSON header: estimator spec, training config echo,
//                        caller metadata
//      20+H   f64[]      context shift, context scale, proxy shift, proxy
//                        scale, target shift, target scale, weights
//
// Array lengths follow from the spec in the header.

inline constexpr char kCheckpointMagic[8] = {'G', 'N', 'P', 'E', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ConditionalGaussianEstimator estimator;
    std::string header_json;
};

void write_checkpoint(const std::filesystem::path& path, const ConditionalGaussianEstimator& est,
                      const std::string& metadata_json);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace gnpe
