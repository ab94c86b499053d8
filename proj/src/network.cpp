#include "gnpe/network.hpp"

#include <cmath>

#include "gnpe/errors.hpp"

namespace gnpe::nn {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

void uniform_fill(std::span<double> values, double bound, Rng& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : values) v = dist(rng);
}

void check_rows(const Matrix& m, std::size_t rows, const char* who) {
    if (static_cast<std::size_t>(m.rows()) != rows)
        throw StructuralError(std::string(who) + ": expected " + std::to_string(rows) +
                              " input rows, got " + std::to_string(m.rows()));
}

}  // namespace

// --- Dense ------------------------------------------------------------------

void Dense::initialize(std::span<double> params, Rng& rng) const {
    uniform_fill(params, 1.0 / std::sqrt(static_cast<double>(in_)), rng);
}

void Dense::forward(std::span<const double> params, const Matrix& in, Matrix& out) const {
    check_rows(in, in_, "Dense");
    const ConstMap w(params.data(), static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    const ConstVec b(params.data() + out_ * in_, static_cast<Eigen::Index>(out_));
    out.noalias() = w * in;
    out.colwise() += b;
}

void Dense::backward(std::span<const double> params, const Matrix& in, const Matrix&,
                     const Matrix& dout, std::span<double> grad, Matrix* din) const {
    const auto o = static_cast<Eigen::Index>(out_);
    const auto i = static_cast<Eigen::Index>(in_);
    MutMap dw(grad.data(), o, i);
    MutVec db(grad.data() + out_ * in_, o);
    dw.noalias() += dout * in.transpose();
    db += dout.rowwise().sum();
    if (din != nullptr) {
        const ConstMap w(params.data(), o, i);
        din->noalias() = w.transpose() * dout;
    }
}

std::string Dense::describe() const {
    return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
}

// --- Relu -------------------------------------------------------------------

void Relu::forward(std::span<const double>, const Matrix& in, Matrix& out) const {
    out = in.cwiseMax(0.0);
}

void Relu::backward(std::span<const double>, const Matrix& in, const Matrix&, const Matrix& dout,
                    std::span<double>, Matrix* din) const {
    if (din == nullptr) return;
    din->resize(in.rows(), in.cols());
    const double* x = in.data();
    const double* g = dout.data();
    double* d = din->data();
    for (Eigen::Index i = 0; i < in.size(); ++i) d[i] = x[i] > 0.0 ? g[i] : 0.0;
}

std::string Relu::describe() const { return "relu"; }

// --- CircularConv1d ---------------------------------------------------------

CircularConv1d::CircularConv1d(std::size_t in_channels, std::size_t out_channels,
                               std::size_t kernel, std::size_t length)
    : in_ch_(in_channels), out_ch_(out_channels), k_(kernel), length_(length) {
    if (k_ % 2 == 0) throw StructuralError("CircularConv1d: kernel size must be odd");
    if (length_ < k_) throw StructuralError("CircularConv1d: input shorter than kernel");
}

void CircularConv1d::initialize(std::span<double> params, Rng& rng) const {
    uniform_fill(params, 1.0 / std::sqrt(static_cast<double>(in_ch_ * k_)), rng);
}

namespace {

// Calls fn(dst_begin, src_begin, len) for the contiguous pieces of
// dst[t] <-> src[(t + shift) mod L], t in [0, L), with |shift| < L.
template <typename Fn>
void for_circular_pieces(Eigen::Index L, Eigen::Index shift, Fn&& fn) {
    if (shift >= 0) {
        fn(0, shift, L - shift);
        if (shift > 0) fn(L - shift, 0, shift);
    } else {
        fn(-shift, 0, L + shift);
        fn(0, L + shift, -shift);
    }
}

}  // namespace

void CircularConv1d::forward(std::span<const double> params, const Matrix& in, Matrix& out) const {
    check_rows(in, in_dim(), "CircularConv1d");
    const auto L = static_cast<Eigen::Index>(length_);
    const auto K = static_cast<Eigen::Index>(k_);
    const auto ic = static_cast<Eigen::Index>(in_ch_);
    const auto oc = static_cast<Eigen::Index>(out_ch_);
    const ConstMap w(params.data(), oc, ic * K);
    const double* bias = params.data() + out_ch_ * in_ch_ * k_;
    out.resize(oc * L, in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b) {
        const double* src = in.col(b).data();
        for (Eigen::Index o = 0; o < oc; ++o) {
            auto dst = out.col(b).segment(o * L, L);
            dst.setConstant(bias[o]);
            for (Eigen::Index c = 0; c < ic; ++c)
                for (Eigen::Index j = 0; j < K; ++j) {
                    const double wv = w(o, c * K + j);
                    const Eigen::Map<const Eigen::VectorXd> channel(src + c * L, L);
                    for_circular_pieces(L, j - K / 2, [&](Eigen::Index d0, Eigen::Index s0, Eigen::Index len) {
                        dst.segment(d0, len) += wv * channel.segment(s0, len);
                    });
                }
        }
    }
}

void CircularConv1d::backward(std::span<const double> params, const Matrix& in, const Matrix&,
                              const Matrix& dout, std::span<double> grad, Matrix* din) const {
    const auto L = static_cast<Eigen::Index>(length_);
    const auto K = static_cast<Eigen::Index>(k_);
    const auto ic = static_cast<Eigen::Index>(in_ch_);
    const auto oc = static_cast<Eigen::Index>(out_ch_);
    const ConstMap w(params.data(), oc, ic * K);
    MutMap dw(grad.data(), oc, ic * K);
    double* dbias = grad.data() + out_ch_ * in_ch_ * k_;
    if (din != nullptr) din->setZero(in.rows(), in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b) {
        const double* src = in.col(b).data();
        for (Eigen::Index o = 0; o < oc; ++o) {
            const auto g = dout.col(b).segment(o * L, L);
            dbias[o] += g.sum();
            for (Eigen::Index c = 0; c < ic; ++c) {
                const Eigen::Map<const Eigen::VectorXd> channel(src + c * L, L);
                for (Eigen::Index j = 0; j < K; ++j) {
                    double acc = 0.0;
                    const double wv = w(o, c * K + j);
                    for_circular_pieces(L, j - K / 2, [&](Eigen::Index d0, Eigen::Index s0, Eigen::Index len) {
                        acc += g.segment(d0, len).dot(channel.segment(s0, len));
                        if (din != nullptr)
                            din->col(b).segment(c * L + s0, len) += wv * g.segment(d0, len);
                    });
                    dw(o, c * K + j) += acc;
                }
            }
        }
    }
}

std::string CircularConv1d::describe() const {
    return "conv1d(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) +
           ", k=" + std::to_string(k_) + ", L=" + std::to_string(length_) + ", circular)";
}

// --- AvgPool1d --------------------------------------------------------------

AvgPool1d::AvgPool1d(std::size_t channels, std::size_t length, std::size_t kernel,
                     std::size_t stride)
    : ch_(channels), length_(length), k_(kernel), stride_(stride) {
    if (k_ == 0 || stride_ == 0 || length_ < k_)
        throw StructuralError("AvgPool1d: invalid kernel/stride for input length");
}

void AvgPool1d::forward(std::span<const double>, const Matrix& in, Matrix& out) const {
    check_rows(in, in_dim(), "AvgPool1d");
    const auto lo = static_cast<Eigen::Index>(out_length());
    const auto L = static_cast<Eigen::Index>(length_);
    const auto K = static_cast<Eigen::Index>(k_);
    const auto S = static_cast<Eigen::Index>(stride_);
    const double inv = 1.0 / static_cast<double>(k_);
    out.resize(static_cast<Eigen::Index>(ch_) * lo, in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b)
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ch_); ++c)
            for (Eigen::Index i = 0; i < lo; ++i)
                out(c * lo + i, b) = in.col(b).segment(c * L + i * S, K).sum() * inv;
}

void AvgPool1d::backward(std::span<const double>, const Matrix& in, const Matrix&,
                         const Matrix& dout, std::span<double>, Matrix* din) const {
    if (din == nullptr) return;
    const auto lo = static_cast<Eigen::Index>(out_length());
    const auto L = static_cast<Eigen::Index>(length_);
    const auto K = static_cast<Eigen::Index>(k_);
    const auto S = static_cast<Eigen::Index>(stride_);
    const double inv = 1.0 / static_cast<double>(k_);
    din->setZero(in.rows(), in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b)
        for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(ch_); ++c)
            for (Eigen::Index i = 0; i < lo; ++i)
                din->col(b).segment(c * L + i * S, K).array() += dout(c * lo + i, b) * inv;
}

std::string AvgPool1d::describe() const {
    return "avgpool(k=" + std::to_string(k_) + ", s=" + std::to_string(stride_) + ")";
}

// --- ConvBlock --------------------------------------------------------------

ConvBlock::ConvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                     std::size_t length, std::size_t pool_kernel, std::size_t pool_stride)
    : in_ch_(in_channels), out_ch_(out_channels), k_(kernel), length_(length),
      pk_(pool_kernel), ps_(pool_stride) {
    if (k_ % 2 == 0) throw StructuralError("ConvBlock: kernel size must be odd");
    if (length_ < k_) throw StructuralError("ConvBlock: input shorter than kernel");
    if (pk_ == 0 || ps_ == 0 || length_ < pk_)
        throw StructuralError("ConvBlock: invalid pooling for input length");
}

void ConvBlock::initialize(std::span<double> params, Rng& rng) const {
    uniform_fill(params, 1.0 / std::sqrt(static_cast<double>(in_ch_ * k_)), rng);
}

// xpad[c][u] = x[c][(u - k/2) mod L] for u in [0, L + k - 1).
void ConvBlock::pad(const double* x, double* xpad) const {
    const std::size_t h = k_ / 2;
    const std::size_t lp = length_ + k_ - 1;
    for (std::size_t c = 0; c < in_ch_; ++c) {
        const double* src = x + c * length_;
        double* dst = xpad + c * lp;
        for (std::size_t u = 0; u < h; ++u) dst[u] = src[length_ - h + u];
        std::copy(src, src + length_, dst + h);
        for (std::size_t u = 0; u < h; ++u) dst[h + length_ + u] = src[u];
    }
}

// pre[t] = bias + sum_{c,j} w[o, c*k + j] xpad[c][t + j]; weights column-major.
void ConvBlock::convolve(const double* w, double bias, const double* xpad, std::size_t o,
                         double* pre) const {
    const std::size_t lp = length_ + k_ - 1;
    const auto L = static_cast<Eigen::Index>(length_);
    MutVec out(pre, L);
    out.setConstant(bias);
    for (std::size_t c = 0; c < in_ch_; ++c)
        for (std::size_t j = 0; j < k_; ++j)
            out += w[(c * k_ + j) * out_ch_ + o] * ConstVec(xpad + c * lp + j, L);
}

void ConvBlock::forward(std::span<const double> params, const Matrix& in, Matrix& out) const {
    check_rows(in, in_dim(), "ConvBlock");
    const std::size_t lo = out_length();
    const double* w = params.data();
    const double* bias = w + out_ch_ * in_ch_ * k_;
    const double inv = 1.0 / static_cast<double>(pk_);
    std::vector<double> xpad(in_ch_ * (length_ + k_ - 1));
    std::vector<double> pre(length_);
    out.resize(static_cast<Eigen::Index>(out_dim()), in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b) {
        pad(in.col(b).data(), xpad.data());
        double* dst = out.col(b).data();
        for (std::size_t o = 0; o < out_ch_; ++o) {
            convolve(w, bias[o], xpad.data(), o, pre.data());
            for (std::size_t i = 0; i < lo; ++i) {
                double acc = 0.0;
                for (std::size_t m = 0; m < pk_; ++m) acc += std::max(pre[i * ps_ + m], 0.0);
                dst[o * lo + i] = acc * inv;
            }
        }
    }
}

void ConvBlock::backward(std::span<const double> params, const Matrix& in, const Matrix&,
                         const Matrix& dout, std::span<double> grad, Matrix* din) const {
    const std::size_t lo = out_length();
    const std::size_t lp = length_ + k_ - 1;
    const std::size_t h = k_ / 2;
    const auto L = static_cast<Eigen::Index>(length_);
    const double* w = params.data();
    const double* bias = w + out_ch_ * in_ch_ * k_;
    double* dw = grad.data();
    double* dbias = dw + out_ch_ * in_ch_ * k_;
    const double inv = 1.0 / static_cast<double>(pk_);
    std::vector<double> xpad(in_ch_ * lp), dxpad(in_ch_ * lp);
    std::vector<double> pre(length_), g(length_);
    if (din != nullptr) din->resize(in.rows(), in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b) {
        pad(in.col(b).data(), xpad.data());
        std::fill(dxpad.begin(), dxpad.end(), 0.0);
        const double* gout = dout.col(b).data();
        for (std::size_t o = 0; o < out_ch_; ++o) {
            convolve(w, bias[o], xpad.data(), o, pre.data());
            std::fill(g.begin(), g.end(), 0.0);
            for (std::size_t i = 0; i < lo; ++i) {
                const double gi = gout[o * lo + i] * inv;
                for (std::size_t m = 0; m < pk_; ++m) g[i * ps_ + m] += gi;
            }
            for (std::size_t t = 0; t < length_; ++t) g[t] = pre[t] > 0.0 ? g[t] : 0.0;
            const ConstVec gv(g.data(), L);
            dbias[o] += gv.sum();
            for (std::size_t c = 0; c < in_ch_; ++c)
                for (std::size_t j = 0; j < k_; ++j) {
                    const std::size_t widx = (c * k_ + j) * out_ch_ + o;
                    dw[widx] += gv.dot(ConstVec(xpad.data() + c * lp + j, L));
                    if (din != nullptr) MutVec(dxpad.data() + c * lp + j, L) += w[widx] * gv;
                }
        }
        if (din == nullptr) continue;
        double* dx = din->col(b).data();
        for (std::size_t c = 0; c < in_ch_; ++c) {
            const double* dp = dxpad.data() + c * lp;
            double* d = dx + c * length_;
            for (std::size_t t = 0; t < length_; ++t) d[t] = dp[t + h];
            for (std::size_t u = 0; u < h; ++u) {
                d[length_ - h + u] += dp[u];
                d[u] += dp[h + length_ + u];
            }
        }
    }
}

std::string ConvBlock::describe() const {
    return "conv1d(" + std::to_string(in_ch_) + "->" + std::to_string(out_ch_) +
           ", k=" + std::to_string(k_) + ", L=" + std::to_string(length_) +
           ", circular) -> relu -> avgpool(k=" + std::to_string(pk_) + ", s=" + std::to_string(ps_) + ")";
}

Matrix ConvBlock::pre_pool(std::span<const double> params, const Matrix& in) const {
    check_rows(in, in_dim(), "ConvBlock");
    const double* w = params.data();
    const double* bias = w + out_ch_ * in_ch_ * k_;
    std::vector<double> xpad(in_ch_ * (length_ + k_ - 1));
    Matrix out(static_cast<Eigen::Index>(out_ch_ * length_), in.cols());
    for (Eigen::Index b = 0; b < in.cols(); ++b) {
        pad(in.col(b).data(), xpad.data());
        for (std::size_t o = 0; o < out_ch_; ++o) {
            double* pre = out.col(b).data() + o * length_;
            convolve(w, bias[o], xpad.data(), o, pre);
            for (std::size_t t = 0; t < length_; ++t) pre[t] = std::max(pre[t], 0.0);
        }
    }
    return out;
}

// --- Sequential -------------------------------------------------------------

void Sequential::add(std::unique_ptr<Layer> layer) {
    if (layer->in_dim() != out_dim())
        throw StructuralError("Sequential: layer " + layer->describe() + " expects " +
                              std::to_string(layer->in_dim()) + " inputs, previous output is " +
                              std::to_string(out_dim()));
    offsets_.push_back(parameter_count_);
    parameter_count_ += layer->parameter_count();
    layers_.push_back(std::move(layer));
}

void Sequential::initialize(std::span<double> params, Rng& rng) const {
    for (std::size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->initialize(params.subspan(offsets_[i], layers_[i]->parameter_count()), rng);
}

void Sequential::forward(std::span<const double> params, const Matrix& in,
                         std::vector<Matrix>& activations) const {
    activations.resize(layers_.size() + 1);
    activations[0] = in;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        layers_[i]->forward(params.subspan(offsets_[i], layers_[i]->parameter_count()),
                            activations[i], activations[i + 1]);
}

Matrix Sequential::forward(std::span<const double> params, const Matrix& in) const {
    Matrix current = in;
    Matrix next;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        layers_[i]->forward(params.subspan(offsets_[i], layers_[i]->parameter_count()), current,
                            next);
        std::swap(current, next);
    }
    return current;
}

void Sequential::backward(std::span<const double> params, const std::vector<Matrix>& activations,
                          const Matrix& dout, std::span<double> grad, Matrix* din) const {
    Matrix delta = dout;
    Matrix prev;
    for (std::size_t i = layers_.size(); i-- > 0;) {
        const bool need_input_grad = i > 0 || din != nullptr;
        layers_[i]->backward(params.subspan(offsets_[i], layers_[i]->parameter_count()),
                             activations[i], activations[i + 1], delta,
                             grad.subspan(offsets_[i], layers_[i]->parameter_count()),
                             need_input_grad ? &prev : nullptr);
        if (need_input_grad) std::swap(delta, prev);
    }
    if (din != nullptr) *din = std::move(delta);
}

std::vector<std::string> Sequential::describe() const {
    std::vector<std::string> out;
    for (const auto& l : layers_) out.push_back(l->describe());
    return out;
}

Sequential make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
    Sequential net(in);
    std::size_t width = in;
    for (std::size_t h : hidden) {
        net.add(std::make_unique<Dense>(width, h));
        net.add(std::make_unique<Relu>(h));
        width = h;
    }
    if (out > 0) net.add(std::make_unique<Dense>(width, out));
    return net;
}

// --- Adam -------------------------------------------------------------------

Adam::Adam(std::size_t parameter_count, Options options)
    : opt_(options), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw StructuralError("Adam::step: parameter count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = opt_.beta1 * m_[i] + (1.0 - opt_.beta1) * grad[i];
        v_[i] = opt_.beta2 * v_[i] + (1.0 - opt_.beta2) * grad[i] * grad[i];
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= opt_.learning_rate * m_hat / (std::sqrt(v_hat) + opt_.epsilon);
    }
}

}  // namespace gnpe::nn
