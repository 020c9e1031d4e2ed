#pragma once

#include <span>
#include <vector>

#include "idspace/layers.hpp"
#include "idspace/random.hpp"

namespace idspace {

/// Declarative layer description used to build a network from an input shape.
struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  std::size_t units = 0;  // dense outputs or convolution filters
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  Activation activation = Activation::Tanh;

  static LayerSpec conv(std::size_t filters, std::size_t kernel, std::size_t stride, std::size_t padding) {
    return {LayerKind::Convolution, filters, kernel, stride, padding, Activation::Tanh};
  }
  static LayerSpec dense(std::size_t units) { return {LayerKind::Dense, units, 0, 1, 0, Activation::Tanh}; }
  static LayerSpec act(Activation a) { return {LayerKind::Activation, 0, 0, 1, 0, a}; }
};

/// Activations of every layer boundary for one batch: entry 0 is the input,
/// entry i+1 the output of layer i.
template <typename Scalar>
struct ForwardRecord {
  std::vector<Matrix<Scalar>> activations;

  bool empty() const { return activations.empty(); }
  const Matrix<Scalar>& output() const { return activations.back(); }
};

/// Per-parameter gradients, aligned 1:1 with Network::layers(). Activation
/// layers get empty entries.
template <typename Scalar>
struct GradientTape {
  std::vector<LayerGradient<Scalar>> layers;
  Matrix<Scalar> input;  // dLoss/dInput, only filled on request

  bool all_finite() const;
  /// Sum of squares over every parameter gradient.
  double squared_norm() const;
};

template <typename Scalar>
class Network {
 public:
  Network() = default;
  explicit Network(std::vector<LayerParams<Scalar>> layers);

  /// Glorot-uniform weights, zero biases. `input_shape` is [C, H, W] or [n].
  static Network build(const Shape& input_shape, std::span<const LayerSpec> specs, Rng& rng);

  const std::vector<LayerParams<Scalar>>& layers() const { return layers_; }
  std::vector<LayerParams<Scalar>>& mutable_layers() { return layers_; }
  bool empty() const { return layers_.empty(); }
  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t parameter_count() const;

  /// Pure forward pass; columns are samples.
  Matrix<Scalar> forward(const Matrix<Scalar>& inputs) const;
  /// Forward pass that keeps the activations needed by backward().
  const Matrix<Scalar>& forward(const Matrix<Scalar>& inputs, ForwardRecord<Scalar>& record) const;

  /// Reverse-mode gradients of a loss whose gradient w.r.t. the output is
  /// `upstream`. Throws UsageError if `record` holds no forward pass.
  GradientTape<Scalar> backward(const ForwardRecord<Scalar>& record, const Matrix<Scalar>& upstream,
                                bool input_gradient = false) const;

  /// theta <- theta - lr * grad. Throws NumericalError on non-finite gradients.
  void sgd_step(const GradientTape<Scalar>& tape, Scalar lr);

  bool all_finite() const;

  template <typename Other>
  Network<Other> cast() const {
    std::vector<LayerParams<Other>> out;
    out.reserve(layers_.size());
    for (const auto& layer : layers_) out.push_back(layer.template cast<Other>());
    return Network<Other>(std::move(out));
  }

  friend bool operator==(const Network&, const Network&) = default;

 private:
  std::vector<LayerParams<Scalar>> layers_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace idspace
