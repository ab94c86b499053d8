#pragma once

// Minimal feed-forward layers with hand-written reverse-mode gradients.
//
// Batches are column-major: each column is one example. Layers own no
// weights; they read from and accumulate gradients into slices of a flat
// parameter vector owned by the caller, which keeps the optimiser and the
// finite-difference checks trivial.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gnpe/random.hpp"

namespace gnpe::nn {

using Matrix = Eigen::MatrixXd;

class Layer {
public:
    virtual ~Layer() = default;

    virtual std::size_t in_dim() const = 0;
    virtual std::size_t out_dim() const = 0;
    virtual std::size_t parameter_count() const { return 0; }
    virtual void initialize(std::span<double> /*params*/, Rng& /*rng*/) const {}
    virtual void forward(std::span<const double> params, const Matrix& in, Matrix& out) const = 0;
    /// Accumulates parameter gradients into `grad`; writes the input gradient
    /// into `din` unless it is null.
    virtual void backward(std::span<const double> params, const Matrix& in, const Matrix& out,
                          const Matrix& dout, std::span<double> grad, Matrix* din) const = 0;
    virtual std::string describe() const = 0;
};

/// y = W x + b with W (out x in) stored column-major followed by b.
/// Initialised U(-1/sqrt(in), 1/sqrt(in)).
class Dense final : public Layer {
public:
    Dense(std::size_t in, std::size_t out) : in_(in), out_(out) {}
    std::size_t in_dim() const override { return in_; }
    std::size_t out_dim() const override { return out_; }
    std::size_t parameter_count() const override { return out_ * in_ + out_; }
    void initialize(std::span<double> params, Rng& rng) const override;
    void forward(std::span<const double> params, const Matrix& in, Matrix& out) const override;
    void backward(std::span<const double> params, const Matrix& in, const Matrix& out,
                  const Matrix& dout, std::span<double> grad, Matrix* din) const override;
    std::string describe() const override;

private:
    std::size_t in_, out_;
};

class Relu final : public Layer {
public:
    explicit Relu(std::size_t dim) : dim_(dim) {}
    std::size_t in_dim() const override { return dim_; }
    std::size_t out_dim() const override { return dim_; }
    void forward(std::span<const double>, const Matrix& in, Matrix& out) const override;
    void backward(std::span<const double>, const Matrix& in, const Matrix& out, const Matrix& dout,
                  std::span<double>, Matrix* din) const override;
    std::string describe() const override;

private:
    std::size_t dim_;
};

/// Stride-1 convolution with circular "same" padding, so a circular shift of
/// the input circularly shifts the output. Input and output are laid out
/// channel-major (channel c occupies rows [c*L, (c+1)*L)). Kernel size must
/// be odd. Weights (out_ch x in_ch*k) column-major, then bias.
class CircularConv1d final : public Layer {
public:
    CircularConv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                   std::size_t length);
    std::size_t in_dim() const override { return in_ch_ * length_; }
    std::size_t out_dim() const override { return out_ch_ * length_; }
    std::size_t parameter_count() const override { return out_ch_ * in_ch_ * k_ + out_ch_; }
    void initialize(std::span<double> params, Rng& rng) const override;
    void forward(std::span<const double> params, const Matrix& in, Matrix& out) const override;
    void backward(std::span<const double> params, const Matrix& in, const Matrix& out,
                  const Matrix& dout, std::span<double> grad, Matrix* din) const override;
    std::string describe() const override;

private:
    std::size_t in_ch_, out_ch_, k_, length_;
};

/// Per-channel average pooling without padding: L_out = (L - k) / s + 1.
class AvgPool1d final : public Layer {
public:
    AvgPool1d(std::size_t channels, std::size_t length, std::size_t kernel, std::size_t stride);
    std::size_t in_dim() const override { return ch_ * length_; }
    std::size_t out_dim() const override { return ch_ * out_length(); }
    std::size_t out_length() const { return (length_ - k_) / stride_ + 1; }
    void forward(std::span<const double>, const Matrix& in, Matrix& out) const override;
    void backward(std::span<const double>, const Matrix& in, const Matrix& out, const Matrix& dout,
                  std::span<double>, Matrix* din) const override;
    std::string describe() const override;

private:
    std::size_t ch_, length_, k_, stride_;
};

/// CircularConv1d -> ReLU -> AvgPool1d fused into one pass per example so
/// the wide intermediate maps never leave cache; backward recomputes them.
/// Numerically identical in exact arithmetic to the three separate layers
/// with the same parameter layout as CircularConv1d.
class ConvBlock final : public Layer {
public:
    ConvBlock(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
              std::size_t length, std::size_t pool_kernel, std::size_t pool_stride);
    std::size_t in_dim() const override { return in_ch_ * length_; }
    std::size_t out_dim() const override { return out_ch_ * out_length(); }
    std::size_t out_length() const { return (length_ - pk_) / ps_ + 1; }
    std::size_t parameter_count() const override { return out_ch_ * in_ch_ * k_ + out_ch_; }
    void initialize(std::span<double> params, Rng& rng) const override;
    void forward(std::span<const double> params, const Matrix& in, Matrix& out) const override;
    void backward(std::span<const double> params, const Matrix& in, const Matrix& out,
                  const Matrix& dout, std::span<double> grad, Matrix* din) const override;
    std::string describe() const override;
    /// Feature maps before pooling (after the ReLU), channel-major.
    Matrix pre_pool(std::span<const double> params, const Matrix& in) const;

private:
    void pad(const double* x, double* xpad) const;
    void convolve(const double* w, double bias, const double* xpad, std::size_t o, double* pre) const;

    std::size_t in_ch_, out_ch_, k_, length_, pk_, ps_;
};

/// Chain of layers over one contiguous parameter block.
class Sequential {
public:
    Sequential() = default;
    explicit Sequential(std::size_t in_dim) : in_dim_(in_dim) {}

    void add(std::unique_ptr<Layer> layer);
    std::size_t in_dim() const { return in_dim_; }
    std::size_t out_dim() const { return layers_.empty() ? in_dim_ : layers_.back()->out_dim(); }
    std::size_t parameter_count() const { return parameter_count_; }
    std::size_t size() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_[i]; }

    void initialize(std::span<double> params, Rng& rng) const;
    /// activations[0] = in, activations[i + 1] = output of layer i.
    void forward(std::span<const double> params, const Matrix& in,
                 std::vector<Matrix>& activations) const;
    Matrix forward(std::span<const double> params, const Matrix& in) const;
    void backward(std::span<const double> params, const std::vector<Matrix>& activations,
                  const Matrix& dout, std::span<double> grad, Matrix* din) const;
    std::vector<std::string> describe() const;

private:
    std::size_t in_dim_ = 0;
    std::size_t parameter_count_ = 0;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::vector<std::size_t> offsets_;
};

/// Dense/ReLU stack: hidden layers with ReLU, then an optional linear output.
Sequential make_mlp(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out = 0);

/// Bias-corrected adaptive-moment optimiser over a flat parameter vector.
class Adam {
public:
    struct Options {
        double learning_rate = 1e-3;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
    };

    Adam(std::size_t parameter_count, Options options);
    void step(std::span<double> params, std::span<const double> grad);
    std::size_t steps() const { return t_; }

private:
    Options opt_;
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace gnpe::nn
