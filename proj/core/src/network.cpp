#include "idspace/network.hpp"

#include <cmath>
#include <string>

#include "idspace/errors.hpp"

namespace idspace {

template <typename Scalar>
bool GradientTape<Scalar>::all_finite() const {
  for (const auto& g : layers) {
    if (!g.weights.all_finite() || !g.bias.all_finite()) return false;
  }
  return input.size() == 0 || input.allFinite();
}

template <typename Scalar>
double GradientTape<Scalar>::squared_norm() const {
  double total = 0.0;
  for (const auto& g : layers) {
    for (Scalar v : g.weights.values()) total += static_cast<double>(v) * v;
    for (Scalar v : g.bias.values()) total += static_cast<double>(v) * v;
  }
  return total;
}

template <typename Scalar>
Network<Scalar>::Network(std::vector<LayerParams<Scalar>> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].validate();
    if (i > 0 && layers_[i].input_size() != layers_[i - 1].output_size()) {
      throw ConfigError("layer " + std::to_string(i) + " expects " +
                        std::to_string(layers_[i].input_size()) + " inputs but layer " +
                        std::to_string(i - 1) + " produces " +
                        std::to_string(layers_[i - 1].output_size()));
    }
  }
}

template <typename Scalar>
Network<Scalar> Network<Scalar>::build(const Shape& input_shape, std::span<const LayerSpec> specs, Rng& rng) {
  if (input_shape.empty() || shape_size(input_shape) == 0) throw ConfigError("network input shape is empty");
  Shape shape = input_shape;
  std::vector<LayerParams<Scalar>> layers;
  auto glorot = [&rng](Tensor<Scalar>& w, std::size_t fan_in, std::size_t fan_out) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (Scalar& v : w.values()) v = static_cast<Scalar>(rng.uniform(-limit, limit));
  };
  for (const LayerSpec& spec : specs) {
    switch (spec.kind) {
      case LayerKind::Convolution: {
        if (shape.size() != 3) {
          throw ConfigError("convolution needs a [C,H,W] input, got " + shape_string(shape));
        }
        ConvGeometry g{shape[0], shape[1], shape[2], spec.units, spec.kernel, spec.stride, spec.padding};
        auto layer = LayerParams<Scalar>::convolution(g);
        glorot(layer.weights, g.patch_size(), g.out_channels * g.kernel * g.kernel);
        shape = {g.out_channels, g.out_height(), g.out_width()};
        layers.push_back(std::move(layer));
        break;
      }
      case LayerKind::Dense: {
        const std::size_t in = shape_size(shape);
        auto layer = LayerParams<Scalar>::dense(in, spec.units);
        glorot(layer.weights, in, spec.units);
        shape = {spec.units};
        layers.push_back(std::move(layer));
        break;
      }
      case LayerKind::Activation:
        layers.push_back(LayerParams<Scalar>::activation_layer(spec.activation, shape_size(shape)));
        break;
    }
  }
  return Network(std::move(layers));
}

template <typename Scalar>
std::size_t Network<Scalar>::input_size() const {
  return layers_.empty() ? 0 : layers_.front().input_size();
}

template <typename Scalar>
std::size_t Network<Scalar>::output_size() const {
  return layers_.empty() ? 0 : layers_.back().output_size();
}

template <typename Scalar>
std::size_t Network<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.parameter_count();
  return n;
}

template <typename Scalar>
Matrix<Scalar> Network<Scalar>::forward(const Matrix<Scalar>& inputs) const {
  if (layers_.empty()) throw UsageError("forward on an empty network");
  Matrix<Scalar> a = inputs;
  Matrix<Scalar> b;
  for (const auto& layer : layers_) {
    layer_forward(layer, a, b);
    a.swap(b);
  }
  return a;
}

template <typename Scalar>
const Matrix<Scalar>& Network<Scalar>::forward(const Matrix<Scalar>& inputs, ForwardRecord<Scalar>& record) const {
  if (layers_.empty()) throw UsageError("forward on an empty network");
  record.activations.resize(layers_.size() + 1);
  record.activations[0] = inputs;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layer_forward(layers_[i], record.activations[i], record.activations[i + 1]);
  }
  return record.activations.back();
}

template <typename Scalar>
GradientTape<Scalar> Network<Scalar>::backward(const ForwardRecord<Scalar>& record, const Matrix<Scalar>& upstream,
                                               bool input_gradient) const {
  if (record.activations.size() != layers_.size() + 1 || layers_.empty()) {
    throw UsageError("backward called without a matching forward record");
  }
  const Matrix<Scalar>& out = record.output();
  if (upstream.rows() != out.rows() || upstream.cols() != out.cols()) {
    throw ConfigError("upstream gradient is " + std::to_string(upstream.rows()) + "x" +
                      std::to_string(upstream.cols()) + ", network output is " +
                      std::to_string(out.rows()) + "x" + std::to_string(out.cols()));
  }
  GradientTape<Scalar> tape;
  tape.layers.resize(layers_.size());
  Matrix<Scalar> grad = upstream;
  Matrix<Scalar> next;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_input = i > 0 || input_gradient;
    layer_backward(layers_[i], record.activations[i], record.activations[i + 1], grad,
                   &tape.layers[i], need_input ? &next : nullptr);
    if (need_input) grad.swap(next);
  }
  if (input_gradient) tape.input = std::move(grad);
  return tape;
}

template <typename Scalar>
void Network<Scalar>::sgd_step(const GradientTape<Scalar>& tape, Scalar lr) {
  if (!(lr > Scalar(0))) throw ConfigError("learning rate must be positive");
  if (tape.layers.size() != layers_.size()) throw ConfigError("gradient tape does not match network");
  if (!tape.all_finite()) throw NumericalError("non-finite gradient in sgd_step");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    auto& layer = layers_[i];
    if (!layer.has_parameters()) continue;
    const auto& g = tape.layers[i];
    if (g.weights.shape() != layer.weights.shape() || g.bias.shape() != layer.bias.shape()) {
      throw ConfigError("gradient shape mismatch at layer " + std::to_string(i));
    }
    for (std::size_t k = 0; k < layer.weights.size(); ++k) layer.weights[k] -= lr * g.weights[k];
    for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] -= lr * g.bias[k];
  }
}

template <typename Scalar>
bool Network<Scalar>::all_finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weights.all_finite() || !layer.bias.all_finite()) return false;
  }
  return true;
}

template struct GradientTape<float>;
template struct GradientTape<double>;
template class Network<float>;
template class Network<double>;

}  // namespace idspace
