#pragma once

#include <cstdint>
#include <string_view>

#include <Eigen/Core>

#include "idspace/tensor.hpp"

namespace idspace {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

enum class LayerKind : std::uint8_t { Convolution = 1, Dense = 2, Activation = 3 };
enum class Activation : std::uint8_t { Tanh = 1, Sigmoid = 2 };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation activation);
Activation parse_activation(std::string_view name);

struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t in_height = 0;
  std::size_t in_width = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (in_height + 2 * padding - kernel) / stride + 1; }
  std::size_t out_width() const { return (in_width + 2 * padding - kernel) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel * kernel; }
  std::size_t input_size() const { return in_channels * in_height * in_width; }
  std::size_t output_size() const { return out_channels * out_height() * out_width(); }

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

// Weights: convolution [out_channels, in_channels, k, k], dense [out, in].
// Bias: [out_channels] / [out]. Activation layers carry no tensors.
template <typename Scalar>
struct LayerParams {
  LayerKind kind = LayerKind::Dense;
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
  ConvGeometry conv;
  Activation activation = Activation::Tanh;
  std::size_t width = 0;  // element count passed through an activation layer

  static LayerParams convolution(const ConvGeometry& geometry);
  static LayerParams dense(std::size_t in_dim, std::size_t out_dim);
  static LayerParams activation_layer(Activation activation, std::size_t width);

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const { return weights.size() + bias.size(); }
  bool has_parameters() const { return kind != LayerKind::Activation; }

  /// Throws ConfigError if tensor shapes disagree with the hyperparameters.
  void validate() const;

  template <typename Other>
  LayerParams<Other> cast() const {
    LayerParams<Other> out;
    out.kind = kind;
    out.weights = weights.template cast<Other>();
    out.bias = bias.template cast<Other>();
    out.conv = conv;
    out.activation = activation;
    out.width = width;
    return out;
  }

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

template <typename Scalar>
struct LayerGradient {
  Tensor<Scalar> weights;
  Tensor<Scalar> bias;
};

// Batched kernels. Each column of `in` / `out` is one sample, flattened
// row-major (channel, y, x).
template <typename Scalar>
void layer_forward(const LayerParams<Scalar>& layer, const Matrix<Scalar>& in, Matrix<Scalar>& out);

/// Accumulates parameter gradients into `grad` (if non-null) and writes the
/// input gradient into `din` (if non-null).
template <typename Scalar>
void layer_backward(const LayerParams<Scalar>& layer, const Matrix<Scalar>& in,
                    const Matrix<Scalar>& out, const Matrix<Scalar>& dout,
                    LayerGradient<Scalar>* grad, Matrix<Scalar>* din);

// Single-sample forms.
template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params);
template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params);
template <typename Scalar>
Tensor<Scalar> activation_forward(const Tensor<Scalar>& input, Activation activation);

}  // namespace idspace
