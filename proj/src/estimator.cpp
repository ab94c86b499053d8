#include "gnpe/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <numeric>

#include <json.hpp>

#include "binary_io.hpp"
#include "gnpe/errors.hpp"

namespace gnpe {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2 pi)
constexpr Eigen::Index kInferenceChunk = 1024;

Eigen::MatrixXd gather(const Eigen::MatrixXd& m, std::span<const std::size_t> cols) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < cols.size(); ++i)
        out.col(static_cast<Eigen::Index>(i)) = m.col(static_cast<Eigen::Index>(cols[i]));
    return out;
}

}  // namespace

// --- Standardizer -----------------------------------------------------------

Standardizer Standardizer::identity(std::size_t dim) {
    const auto d = static_cast<Eigen::Index>(dim);
    return {Eigen::VectorXd::Zero(d), Eigen::VectorXd::Ones(d)};
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& data, const std::vector<std::size_t>& columns,
                               double relative_floor) {
    const auto rows = data.rows();
    Standardizer s = identity(static_cast<std::size_t>(rows));
    if (rows == 0) return s;
    if (columns.empty()) throw StructuralError("Standardizer::fit: no columns");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows);
    for (std::size_t c : columns) sum += data.col(static_cast<Eigen::Index>(c));
    const double n = static_cast<double>(columns.size());
    s.shift = sum / n;
    Eigen::VectorXd sq = Eigen::VectorXd::Zero(rows);
    for (std::size_t c : columns)
        sq += (data.col(static_cast<Eigen::Index>(c)) - s.shift).cwiseAbs2();
    s.scale = (sq / n).cwiseSqrt();
    const double rms = std::sqrt(s.scale.squaredNorm() / static_cast<double>(rows));
    const double floor = rms > 0.0 ? relative_floor * rms : 1.0;
    for (Eigen::Index r = 0; r < rows; ++r)
        if (!(s.scale[r] > floor)) s.scale[r] = floor;
    return s;
}

Eigen::MatrixXd Standardizer::forward(const Eigen::MatrixXd& v) const {
    if (v.rows() != shift.size()) throw StructuralError("Standardizer: dimension mismatch");
    return (v.colwise() - shift).array().colwise() / scale.array();
}

Eigen::MatrixXd Standardizer::inverse(const Eigen::MatrixXd& z) const {
    if (z.rows() != shift.size()) throw StructuralError("Standardizer: dimension mismatch");
    return (z.array().colwise() * scale.array()).matrix().colwise() + shift;
}

void Standardizer::validate() const {
    if (shift.size() != scale.size()) throw StructuralError("Standardizer: shift/scale size mismatch");
    if (!shift.allFinite() || !scale.allFinite() || (scale.array() <= 0.0).any())
        throw StructuralError("Standardizer: scales must be finite and positive");
}

// --- Spec -------------------------------------------------------------------

std::string to_string(EmbeddingKind kind) {
    switch (kind) {
        case EmbeddingKind::identity: return "identity";
        case EmbeddingKind::mlp: return "mlp";
        case EmbeddingKind::conv: return "conv";
    }
    return "?";
}

EmbeddingKind embedding_kind_from_string(const std::string& s) {
    if (s == "identity") return EmbeddingKind::identity;
    if (s == "mlp") return EmbeddingKind::mlp;
    if (s == "conv") return EmbeddingKind::conv;
    throw StructuralError("unknown embedding kind '" + s + "'");
}

void EstimatorSpec::validate() const {
    if (context_dim == 0 || param_dim == 0)
        throw StructuralError("EstimatorSpec: context and parameter dimensions must be positive");
    if (!(log_std_min < log_std_max)) throw StructuralError("EstimatorSpec: empty log-std range");
    if (embedding.kind == EmbeddingKind::conv) {
        const auto& c = embedding.conv;
        if (input_channels == 0 || context_dim % input_channels != 0)
            throw StructuralError("EstimatorSpec: context not divisible into input channels");
        if (c.kernel_sizes.size() != c.channels.size() || c.kernel_sizes.empty())
            throw StructuralError("EstimatorSpec: conv kernel/channel lists differ in length");
    }
}

// --- Estimator --------------------------------------------------------------

namespace {

nn::Sequential build_embedding(const EstimatorSpec& spec) {
    const auto& e = spec.embedding;
    switch (e.kind) {
        case EmbeddingKind::identity: return nn::Sequential(spec.context_dim);
        case EmbeddingKind::mlp: return nn::make_mlp(spec.context_dim, e.hidden);
        case EmbeddingKind::conv: break;
    }
    nn::Sequential net(spec.context_dim);
    std::size_t channels = spec.input_channels;
    std::size_t length = spec.context_dim / spec.input_channels;
    for (std::size_t i = 0; i < e.conv.channels.size(); ++i) {
        const std::size_t out = e.conv.channels[i];
        auto block = std::make_unique<nn::ConvBlock>(channels, out, e.conv.kernel_sizes[i], length,
                                                     e.conv.pool_kernel, e.conv.pool_stride);
        length = block->out_length();
        net.add(std::move(block));
        channels = out;
    }
    std::size_t width = channels * length;
    for (std::size_t h : e.hidden) {
        net.add(std::make_unique<nn::Dense>(width, h));
        net.add(std::make_unique<nn::Relu>(h));
        width = h;
    }
    return net;
}

const EstimatorSpec& validated(const EstimatorSpec& spec) {
    spec.validate();
    return spec;
}

}  // namespace

ConditionalGaussianEstimator::ConditionalGaussianEstimator(EstimatorSpec spec)
    : spec_(validated(spec)),
      embedding_(build_embedding(spec_)),
      head_(embedding_.out_dim() + spec_.proxy_dim, 2 * spec_.param_dim),
      weights_(embedding_.parameter_count() + head_.parameter_count(), 0.0),
      ctx_std_(Standardizer::identity(spec_.context_dim)),
      proxy_std_(Standardizer::identity(spec_.proxy_dim)),
      target_std_(Standardizer::identity(spec_.param_dim)) {}

void ConditionalGaussianEstimator::initialize(std::uint64_t seed) {
    Rng rng = make_rng(seed, 0);
    const std::span<double> all(weights_);
    embedding_.initialize(all.first(embedding_.parameter_count()), rng);
    head_.initialize(all.subspan(embedding_.parameter_count()), rng);
}

std::vector<std::string> ConditionalGaussianEstimator::describe() const {
    auto out = embedding_.describe();
    out.push_back(head_.describe() + " -> (mean, log-std)");
    return out;
}

void ConditionalGaussianEstimator::set_standardizers(Standardizer context, Standardizer proxy,
                                                     Standardizer target) {
    context.validate();
    proxy.validate();
    target.validate();
    if (context.dim() != spec_.context_dim || proxy.dim() != spec_.proxy_dim ||
        target.dim() != spec_.param_dim)
        throw StructuralError("set_standardizers: dimension mismatch");
    ctx_std_ = std::move(context);
    proxy_std_ = std::move(proxy);
    target_std_ = std::move(target);
}

void ConditionalGaussianEstimator::fit_standardization(const TrainingDataset& data) {
    data.validate();
    const auto train = data.train_indices();
    set_standardizers(Standardizer::fit(data.contexts, train), Standardizer::fit(data.proxies, train),
                      Standardizer::fit(data.targets, train));
}

GaussianHeadOutput ConditionalGaussianEstimator::forward_standardized(
    const Eigen::MatrixXd& contexts, const Eigen::MatrixXd& proxies) const {
    if (static_cast<std::size_t>(contexts.rows()) != spec_.context_dim)
        throw StructuralError("estimator: context length " + std::to_string(contexts.rows()) +
                              " does not match " + std::to_string(spec_.context_dim));
    if (static_cast<std::size_t>(proxies.rows()) != spec_.proxy_dim ||
        (spec_.proxy_dim > 0 && proxies.cols() != contexts.cols()))
        throw StructuralError("estimator: proxy features do not match the estimator");
    const std::span<const double> all(weights_);
    const auto P = static_cast<Eigen::Index>(spec_.param_dim);
    Eigen::MatrixXd features = embedding_.forward(all.first(embedding_.parameter_count()), contexts);
    if (spec_.proxy_dim > 0) {
        Eigen::MatrixXd joined(features.rows() + proxies.rows(), features.cols());
        joined << features, proxies;
        features = std::move(joined);
    }
    Eigen::MatrixXd out;
    head_.forward(all.subspan(embedding_.parameter_count()), features, out);
    return {out.topRows(P),
            out.bottomRows(P).cwiseMax(spec_.log_std_min).cwiseMin(spec_.log_std_max)};
}

GaussianHeadOutput ConditionalGaussianEstimator::forward(const Eigen::MatrixXd& contexts,
                                                         const Eigen::MatrixXd& proxies) const {
    if (static_cast<std::size_t>(contexts.rows()) != spec_.context_dim)
        throw StructuralError("estimator: context length " + std::to_string(contexts.rows()) +
                              " does not match " + std::to_string(spec_.context_dim));
    return forward_standardized(ctx_std_.forward(contexts), proxy_std_.forward(proxies));
}

double ConditionalGaussianEstimator::constant_term() const {
    return static_cast<double>(spec_.param_dim) * kHalfLog2Pi + target_std_.log_det();
}

Eigen::VectorXd ConditionalGaussianEstimator::nll(const Eigen::MatrixXd& targets,
                                                  const Eigen::MatrixXd& contexts,
                                                  const Eigen::MatrixXd& proxies) const {
    const auto out = forward(contexts, proxies);
    const Eigen::MatrixXd t = target_std_.forward(targets);
    const Eigen::ArrayXXd z = (t - out.mean).array() * (-out.log_std.array()).exp();
    return (out.log_std.array() + 0.5 * z.square()).colwise().sum().transpose() + constant_term();
}

double ConditionalGaussianEstimator::loss(const Eigen::MatrixXd& targets_std,
                                          const Eigen::MatrixXd& contexts_std,
                                          const Eigen::MatrixXd& proxies_std) const {
    const auto out = forward_standardized(contexts_std, proxies_std);
    const Eigen::ArrayXXd z = (targets_std - out.mean).array() * (-out.log_std.array()).exp();
    const double total = (out.log_std.array() + 0.5 * z.square()).sum();
    return total / static_cast<double>(targets_std.cols()) + constant_term();
}

double ConditionalGaussianEstimator::loss_and_gradient(const Eigen::MatrixXd& targets_std,
                                                       const Eigen::MatrixXd& contexts_std,
                                                       const Eigen::MatrixXd& proxies_std,
                                                       std::vector<double>& grad) const {
    const auto B = contexts_std.cols();
    if (B == 0) throw StructuralError("loss_and_gradient: empty batch");
    if (targets_std.rows() != static_cast<Eigen::Index>(spec_.param_dim) || targets_std.cols() != B)
        throw StructuralError("loss_and_gradient: target shape mismatch");
    grad.assign(weights_.size(), 0.0);
    const std::span<const double> all(weights_);
    const std::span<double> gall(grad);
    const std::size_t emb_n = embedding_.parameter_count();
    const auto P = static_cast<Eigen::Index>(spec_.param_dim);

    std::vector<nn::Matrix> acts;
    embedding_.forward(all.first(emb_n), contexts_std, acts);
    const Eigen::Index F = acts.back().rows();
    Eigen::MatrixXd features(F + proxies_std.rows(), B);
    features.topRows(F) = acts.back();
    if (proxies_std.rows() > 0) features.bottomRows(proxies_std.rows()) = proxies_std;
    Eigen::MatrixXd out;
    head_.forward(all.subspan(emb_n), features, out);

    const Eigen::ArrayXXd raw_ls = out.bottomRows(P).array();
    const Eigen::ArrayXXd ls = raw_ls.cwiseMax(spec_.log_std_min).cwiseMin(spec_.log_std_max);
    const Eigen::ArrayXXd inv_sigma = (-ls).exp();
    const Eigen::ArrayXXd z = (targets_std.array() - out.topRows(P).array()) * inv_sigma;
    const double inv_b = 1.0 / static_cast<double>(B);
    const double loss = (ls + 0.5 * z.square()).sum() * inv_b + constant_term();

    Eigen::MatrixXd dout(2 * P, B);
    dout.topRows(P) = (-z * inv_sigma * inv_b).matrix();
    const Eigen::ArrayXXd inside =
        ((raw_ls > spec_.log_std_min) && (raw_ls < spec_.log_std_max)).cast<double>();
    dout.bottomRows(P) = ((1.0 - z.square()) * inv_b * inside).matrix();

    Eigen::MatrixXd dfeatures;
    head_.backward(all.subspan(emb_n), features, out, dout, gall.subspan(emb_n),
                   embedding_.size() > 0 ? &dfeatures : nullptr);
    if (embedding_.size() > 0)
        embedding_.backward(all.first(emb_n), acts, dfeatures.topRows(F), gall.first(emb_n),
                            nullptr);
    return loss;
}

GaussianPrediction ConditionalGaussianEstimator::predict(const Eigen::MatrixXd& contexts,
                                                         const Eigen::MatrixXd& proxies) const {
    GaussianPrediction result;
    result.mean.resize(static_cast<Eigen::Index>(spec_.param_dim), contexts.cols());
    result.stddev.resize(result.mean.rows(), contexts.cols());
    for (Eigen::Index start = 0; start < contexts.cols(); start += kInferenceChunk) {
        const auto len = std::min(kInferenceChunk, contexts.cols() - start);
        const Eigen::MatrixXd prox =
            spec_.proxy_dim > 0 ? Eigen::MatrixXd(proxies.middleCols(start, len))
                                : Eigen::MatrixXd(0, len);
        const auto out = forward(contexts.middleCols(start, len), prox);
        result.mean.middleCols(start, len) = target_std_.inverse(out.mean);
        result.stddev.middleCols(start, len) =
            (out.log_std.array().exp().colwise() * target_std_.scale.array()).matrix();
    }
    return result;
}

Eigen::MatrixXd ConditionalGaussianEstimator::sample(const Eigen::VectorXd& context,
                                                     const Eigen::VectorXd& proxy, std::size_t n,
                                                     Rng& rng) const {
    const Eigen::MatrixXd prox = spec_.proxy_dim > 0 ? Eigen::MatrixXd(proxy)
                                                     : Eigen::MatrixXd(0, 1);
    const auto out = forward(context, prox);
    const auto P = static_cast<Eigen::Index>(spec_.param_dim);
    Eigen::MatrixXd z(P, static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < z.cols(); ++j)
        for (Eigen::Index p = 0; p < P; ++p)
            z(p, j) = out.mean(p, 0) + std::exp(out.log_std(p, 0)) * standard_normal(rng);
    return target_std_.inverse(z).transpose();
}

Eigen::MatrixXd ConditionalGaussianEstimator::draw(const Eigen::MatrixXd& contexts,
                                                   const Eigen::MatrixXd& proxies,
                                                   std::span<Rng> rngs) const {
    if (rngs.size() != static_cast<std::size_t>(contexts.cols()))
        throw StructuralError("draw: one generator per column required");
    const auto pred = predict(contexts, proxies);
    Eigen::MatrixXd out(pred.mean.rows(), pred.mean.cols());
    for (Eigen::Index b = 0; b < out.cols(); ++b)
        for (Eigen::Index p = 0; p < out.rows(); ++p)
            out(p, b) = pred.mean(p, b) +
                        pred.stddev(p, b) * standard_normal(rngs[static_cast<std::size_t>(b)]);
    return out;
}

// --- Training ---------------------------------------------------------------

namespace {

double evaluate_loss(const ConditionalGaussianEstimator& est, const Eigen::MatrixXd& t,
                     const Eigen::MatrixXd& c, const Eigen::MatrixXd& p,
                     std::span<const std::size_t> idx) {
    double total = 0.0;
    for (std::size_t start = 0; start < idx.size(); start += kInferenceChunk) {
        const auto part = idx.subspan(start, std::min<std::size_t>(kInferenceChunk, idx.size() - start));
        total += est.loss(gather(t, part), gather(c, part), gather(p, part)) *
                 static_cast<double>(part.size());
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace

TrainingHistory train(ConditionalGaussianEstimator& est, const TrainingDataset& data,
                      const TrainingConfig& config,
                      const std::function<void(const EpochRecord&)>& on_epoch) {
    data.validate();
    if (static_cast<std::size_t>(data.targets.rows()) != est.param_dim() ||
        static_cast<std::size_t>(data.contexts.rows()) != est.context_dim() ||
        static_cast<std::size_t>(data.proxies.rows()) != est.proxy_dim())
        throw StructuralError("train: dataset shape does not match the estimator");
    if (config.batch_size == 0 || config.max_epochs == 0)
        throw StructuralError("train: batch size and epoch budget must be positive");
    auto train_idx = data.train_indices();
    const auto val_idx = data.validation_indices();
    if (train_idx.empty() || val_idx.empty())
        throw StructuralError("train: both splits must be non-empty");

    est.fit_standardization(data);
    est.initialize(config.seed);
    const Eigen::MatrixXd t = est.target_standardizer().forward(data.targets);
    const Eigen::MatrixXd c = est.context_standardizer().forward(data.contexts);
    const Eigen::MatrixXd p = est.proxy_standardizer().forward(data.proxies);

    nn::Adam adam(est.weight_count(), {config.learning_rate, config.beta1, config.beta2, 1e-8});
    Rng shuffle_rng = make_rng(config.seed, 1);
    std::vector<double> grad;
    std::vector<double> best(est.weights().begin(), est.weights().end());
    TrainingHistory history;
    history.best_validation_loss = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(train_idx.begin(), train_idx.end(), shuffle_rng);
        double train_total = 0.0;
        for (std::size_t start = 0; start < train_idx.size(); start += config.batch_size) {
            const auto batch = std::span<const std::size_t>(train_idx).subspan(
                start, std::min(config.batch_size, train_idx.size() - start));
            const double l = est.loss_and_gradient(gather(t, batch), gather(c, batch),
                                                   gather(p, batch), grad);
            if (!std::isfinite(l) ||
                !std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); }))
                throw TrainingError("non-finite training loss in epoch " + std::to_string(epoch),
                                    epoch, history.epochs.empty() ? 0 : epoch - 1);
            if (config.clip_max_norm > 0.0) {
                double sq = 0.0;
                for (double g : grad) sq += g * g;
                const double norm = std::sqrt(sq);
                if (norm > config.clip_max_norm)
                    for (double& g : grad) g *= config.clip_max_norm / norm;
            }
            adam.step(est.weights(), grad);
            train_total += l * static_cast<double>(batch.size());
        }
        const double val = evaluate_loss(est, t, c, p, val_idx);
        if (!std::isfinite(val))
            throw TrainingError("non-finite validation loss in epoch " + std::to_string(epoch),
                                epoch, epoch - 1);
        const EpochRecord rec{epoch, train_total / static_cast<double>(train_idx.size()), val};
        history.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (val < history.best_validation_loss) {
            history.best_validation_loss = val;
            history.best_epoch = epoch;
            std::copy(est.weights().begin(), est.weights().end(), best.begin());
            since_best = 0;
        } else if (++since_best >= config.patience) {
            history.stopped_early = true;
            break;
        }
    }
    std::copy(best.begin(), best.end(), est.weights().begin());
    est.mark_trained();
    return history;
}

void write_loss_history_csv(const std::filesystem::path& path, const TrainingHistory& history,
                            const std::string& comment) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    if (!comment.empty()) os << "# " << comment << '\n';
    os << "epoch,train_loss,validation_loss,is_best\n" << std::setprecision(17);
    for (const auto& e : history.epochs)
        os << e.epoch << ',' << e.train_loss << ',' << e.validation_loss << ','
           << (e.epoch == history.best_epoch ? 1 : 0) << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

// --- Checkpoint -------------------------------------------------------------

namespace {

nlohmann::json spec_to_json(const EstimatorSpec& s) {
    return {{"context_dim", s.context_dim},
            {"input_channels", s.input_channels},
            {"proxy_dim", s.proxy_dim},
            {"param_dim", s.param_dim},
            {"log_std_min", s.log_std_min},
            {"log_std_max", s.log_std_max},
            {"embedding",
             {{"kind", to_string(s.embedding.kind)},
              {"hidden", s.embedding.hidden},
              {"conv",
               {{"kernel_sizes", s.embedding.conv.kernel_sizes},
                {"channels", s.embedding.conv.channels},
                {"pool_kernel", s.embedding.conv.pool_kernel},
                {"pool_stride", s.embedding.conv.pool_stride}}}}}};
}

EstimatorSpec spec_from_json(const nlohmann::json& j) {
    EstimatorSpec s;
    s.context_dim = j.at("context_dim").get<std::size_t>();
    s.input_channels = j.at("input_channels").get<std::size_t>();
    s.proxy_dim = j.at("proxy_dim").get<std::size_t>();
    s.param_dim = j.at("param_dim").get<std::size_t>();
    s.log_std_min = j.at("log_std_min").get<double>();
    s.log_std_max = j.at("log_std_max").get<double>();
    const auto& e = j.at("embedding");
    s.embedding.kind = embedding_kind_from_string(e.at("kind").get<std::string>());
    s.embedding.hidden = e.at("hidden").get<std::vector<std::size_t>>();
    const auto& c = e.at("conv");
    s.embedding.conv.kernel_sizes = c.at("kernel_sizes").get<std::vector<std::size_t>>();
    s.embedding.conv.channels = c.at("channels").get<std::vector<std::size_t>>();
    s.embedding.conv.pool_kernel = c.at("pool_kernel").get<std::size_t>();
    s.embedding.conv.pool_stride = c.at("pool_stride").get<std::size_t>();
    return s;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const ConditionalGaussianEstimator& est,
                      const std::string& metadata_json) {
    nlohmann::json header = metadata_json.empty() ? nlohmann::json::object()
                                                  : nlohmann::json::parse(metadata_json);
    if (!header.is_object()) throw StructuralError("write_checkpoint: metadata must be a JSON object");
    header["estimator"] = spec_to_json(est.spec());
    header["architecture"] = est.describe();
    header["weight_count"] = est.weight_count();
    const std::string text = header.dump();

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    detail::write_preamble(os, kCheckpointMagic, kCheckpointVersion, text);
    for (const Standardizer* s :
         {&est.context_standardizer(), &est.proxy_standardizer(), &est.target_standardizer()}) {
        detail::write_block(os, s->shift);
        detail::write_block(os, s->scale);
    }
    const auto w = est.weights();
    os.write(reinterpret_cast<const char*>(w.data()),
             static_cast<std::streamsize>(w.size() * sizeof(double)));
    if (!os) throw IoError("failed writing " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint " + path.string());
    std::string text = detail::read_preamble(is, kCheckpointMagic, kCheckpointVersion, "checkpoint");
    nlohmann::json header;
    EstimatorSpec spec;
    try {
        header = nlohmann::json::parse(text);
        spec = spec_from_json(header.at("estimator"));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: malformed header: ") + e.what());
    }
    ConditionalGaussianEstimator est(spec);
    if (header.value("weight_count", std::size_t{0}) != est.weight_count())
        throw IoError("checkpoint: weight count does not match the architecture");
    Standardizer s[3];
    const std::size_t dims[3] = {spec.context_dim, spec.proxy_dim, spec.param_dim};
    for (int i = 0; i < 3; ++i) {
        const auto d = static_cast<Eigen::Index>(dims[i]);
        detail::read_block(is, s[i].shift, d, 1, "checkpoint");
        detail::read_block(is, s[i].scale, d, 1, "checkpoint");
    }
    est.set_standardizers(s[0], s[1], s[2]);
    auto w = est.weights();
    is.read(reinterpret_cast<char*>(w.data()), static_cast<std::streamsize>(w.size() * sizeof(double)));
    if (!is) throw IoError("checkpoint: truncated weights");
    est.mark_trained();
    return {std::move(est), std::move(text)};
}

}  // namespace gnpe
