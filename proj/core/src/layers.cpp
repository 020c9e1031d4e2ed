#include "idspace/layers.hpp"

#include <string>

#include "idspace/errors.hpp"

namespace idspace {

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Convolution: return "convolution";
    case LayerKind::Dense: return "dense";
    case LayerKind::Activation: return "activation";
  }
  return "unknown";
}

std::string_view to_string(Activation activation) {
  switch (activation) {
    case Activation::Tanh: return "tanh";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "unknown";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unsupported activation '" + std::string(name) + "'");
}

template <typename Scalar>
LayerParams<Scalar> LayerParams<Scalar>::convolution(const ConvGeometry& g) {
  if (g.in_channels == 0 || g.out_channels == 0 || g.kernel == 0 || g.stride == 0) {
    throw ConfigError("convolution needs positive channels, kernel and stride");
  }
  if (g.in_height + 2 * g.padding < g.kernel || g.in_width + 2 * g.padding < g.kernel) {
    throw ConfigError("convolution kernel larger than padded input");
  }
  LayerParams p;
  p.kind = LayerKind::Convolution;
  p.conv = g;
  p.weights = Tensor<Scalar>({g.out_channels, g.in_channels, g.kernel, g.kernel});
  p.bias = Tensor<Scalar>({g.out_channels});
  return p;
}

template <typename Scalar>
LayerParams<Scalar> LayerParams<Scalar>::dense(std::size_t in_dim, std::size_t out_dim) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("dense layer needs positive dimensions");
  LayerParams p;
  p.kind = LayerKind::Dense;
  p.weights = Tensor<Scalar>({out_dim, in_dim});
  p.bias = Tensor<Scalar>({out_dim});
  return p;
}

template <typename Scalar>
LayerParams<Scalar> LayerParams<Scalar>::activation_layer(Activation activation, std::size_t width) {
  if (width == 0) throw ConfigError("activation layer needs a positive width");
  LayerParams p;
  p.kind = LayerKind::Activation;
  p.activation = activation;
  p.width = width;
  return p;
}

template <typename Scalar>
std::size_t LayerParams<Scalar>::input_size() const {
  switch (kind) {
    case LayerKind::Convolution: return conv.input_size();
    case LayerKind::Dense: return weights.shape().at(1);
    case LayerKind::Activation: return width;
  }
  return 0;
}

template <typename Scalar>
std::size_t LayerParams<Scalar>::output_size() const {
  switch (kind) {
    case LayerKind::Convolution: return conv.output_size();
    case LayerKind::Dense: return weights.shape().at(0);
    case LayerKind::Activation: return width;
  }
  return 0;
}

template <typename Scalar>
void LayerParams<Scalar>::validate() const {
  switch (kind) {
    case LayerKind::Convolution: {
      const Shape expected{conv.out_channels, conv.in_channels, conv.kernel, conv.kernel};
      if (weights.shape() != expected || bias.shape() != Shape{conv.out_channels}) {
        throw ConfigError("convolution weights " + shape_string(weights.shape()) + " / bias " +
                          shape_string(bias.shape()) + " do not match " + shape_string(expected));
      }
      if (conv.stride == 0 || conv.in_height + 2 * conv.padding < conv.kernel ||
          conv.in_width + 2 * conv.padding < conv.kernel) {
        throw ConfigError("convolution geometry yields empty output");
      }
      break;
    }
    case LayerKind::Dense:
      if (weights.rank() != 2 || bias.shape() != Shape{weights.shape()[0]}) {
        throw ConfigError("dense weights " + shape_string(weights.shape()) + " / bias " +
                          shape_string(bias.shape()) + " are inconsistent");
      }
      break;
    case LayerKind::Activation:
      if (width == 0 || !weights.empty() || !bias.empty()) {
        throw ConfigError("activation layer must have a width and no parameters");
      }
      if (activation != Activation::Tanh && activation != Activation::Sigmoid) {
        throw ConfigError("unsupported activation");
      }
      break;
  }
}

namespace {

template <typename Scalar>
using ColMap = Eigen::Map<Matrix<Scalar>>;
template <typename Scalar>
using ConstColMap = Eigen::Map<const Matrix<Scalar>>;
template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// patches(p, r): p = output pixel, r = (c, i, j) flattened like the weights.
template <typename Scalar>
void im2col(const ConvGeometry& g, const Scalar* x, Matrix<Scalar>& patches) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  patches.resize(static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(g.patch_size()));
  Scalar* dst = patches.data();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const Scalar* plane = x + c * g.in_height * g.in_width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_height);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            *dst++ = (row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_width))
                         ? plane[iy * static_cast<std::ptrdiff_t>(g.in_width) + ix]
                         : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const ConvGeometry& g, const Matrix<Scalar>& patches, Scalar* dx) {
  const std::size_t oh = g.out_height();
  const std::size_t ow = g.out_width();
  const Scalar* src = patches.data();
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    Scalar* plane = dx + c * g.in_height * g.in_width;
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          const bool row_ok = iy >= 0 && iy < static_cast<std::ptrdiff_t>(g.in_height);
          for (std::size_t ox = 0; ox < ow; ++ox, ++src) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.padding);
            if (row_ok && ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.in_width)) {
              plane[iy * static_cast<std::ptrdiff_t>(g.in_width) + ix] += *src;
            }
          }
        }
      }
    }
  }
}

template <typename Scalar>
void check_rows(const LayerParams<Scalar>& layer, Eigen::Index rows) {
  if (static_cast<std::size_t>(rows) != layer.input_size()) {
    throw ConfigError(std::string(to_string(layer.kind)) + " layer expects " +
                      std::to_string(layer.input_size()) + " inputs, got " + std::to_string(rows));
  }
}

}  // namespace

template <typename Scalar>
void layer_forward(const LayerParams<Scalar>& layer, const Matrix<Scalar>& in, Matrix<Scalar>& out) {
  check_rows(layer, in.rows());
  const Eigen::Index batch = in.cols();
  switch (layer.kind) {
    case LayerKind::Convolution: {
      const ConvGeometry& g = layer.conv;
      const auto pixels = static_cast<Eigen::Index>(g.out_height() * g.out_width());
      const auto filters = static_cast<Eigen::Index>(g.out_channels);
      ConstColMap<Scalar> wt(layer.weights.data(), static_cast<Eigen::Index>(g.patch_size()), filters);
      Eigen::Map<const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> bias(layer.bias.data(), filters);
      out.resize(static_cast<Eigen::Index>(g.output_size()), batch);
      Matrix<Scalar> patches;
      for (Eigen::Index b = 0; b < batch; ++b) {
        im2col(g, in.col(b).data(), patches);
        ColMap<Scalar> y(out.col(b).data(), pixels, filters);
        y.noalias() = patches * wt;
        y.rowwise() += bias;
      }
      break;
    }
    case LayerKind::Dense: {
      const auto rows = static_cast<Eigen::Index>(layer.weights.shape()[0]);
      const auto cols = static_cast<Eigen::Index>(layer.weights.shape()[1]);
      Eigen::Map<const RowMajorMatrix<Scalar>> w(layer.weights.data(), rows, cols);
      Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> bias(layer.bias.data(), rows);
      out.noalias() = w * in;
      out.colwise() += bias;
      break;
    }
    case LayerKind::Activation:
      if (layer.activation == Activation::Tanh) {
        out = in.array().tanh().matrix();
      } else {
        out = (Scalar(1) / (Scalar(1) + (-in.array()).exp())).matrix();
      }
      break;
  }
}

template <typename Scalar>
void layer_backward(const LayerParams<Scalar>& layer, const Matrix<Scalar>& in,
                    const Matrix<Scalar>& out, const Matrix<Scalar>& dout,
                    LayerGradient<Scalar>* grad, Matrix<Scalar>* din) {
  check_rows(layer, in.rows());
  if (dout.rows() != out.rows() || dout.cols() != in.cols() ||
      static_cast<std::size_t>(dout.rows()) != layer.output_size()) {
    throw ConfigError("upstream gradient shape does not match layer output");
  }
  const Eigen::Index batch = in.cols();
  if (grad != nullptr && layer.has_parameters()) {
    if (grad->weights.shape() != layer.weights.shape()) grad->weights = Tensor<Scalar>(layer.weights.shape());
    if (grad->bias.shape() != layer.bias.shape()) grad->bias = Tensor<Scalar>(layer.bias.shape());
  }
  switch (layer.kind) {
    case LayerKind::Convolution: {
      const ConvGeometry& g = layer.conv;
      const auto pixels = static_cast<Eigen::Index>(g.out_height() * g.out_width());
      const auto filters = static_cast<Eigen::Index>(g.out_channels);
      const auto patch = static_cast<Eigen::Index>(g.patch_size());
      ConstColMap<Scalar> wt(layer.weights.data(), patch, filters);
      if (din != nullptr) din->setZero(in.rows(), batch);
      Matrix<Scalar> patches;
      Matrix<Scalar> dpatches;
      for (Eigen::Index b = 0; b < batch; ++b) {
        ConstColMap<Scalar> dy(dout.col(b).data(), pixels, filters);
        if (grad != nullptr) {
          im2col(g, in.col(b).data(), patches);
          ColMap<Scalar> dwt(grad->weights.data(), patch, filters);
          dwt.noalias() += patches.transpose() * dy;
          Eigen::Map<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> db(grad->bias.data(), filters);
          db += dy.colwise().sum();
        }
        if (din != nullptr) {
          dpatches.noalias() = dy * wt.transpose();
          col2im_add(g, dpatches, din->col(b).data());
        }
      }
      break;
    }
    case LayerKind::Dense: {
      const auto rows = static_cast<Eigen::Index>(layer.weights.shape()[0]);
      const auto cols = static_cast<Eigen::Index>(layer.weights.shape()[1]);
      if (grad != nullptr) {
        Eigen::Map<RowMajorMatrix<Scalar>> dw(grad->weights.data(), rows, cols);
        dw.noalias() += dout * in.transpose();
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> db(grad->bias.data(), rows);
        db += dout.rowwise().sum();
      }
      if (din != nullptr) {
        Eigen::Map<const RowMajorMatrix<Scalar>> w(layer.weights.data(), rows, cols);
        din->noalias() = w.transpose() * dout;
      }
      break;
    }
    case LayerKind::Activation:
      if (din != nullptr) {
        if (layer.activation == Activation::Tanh) {
          *din = (dout.array() * (Scalar(1) - out.array().square())).matrix();
        } else {
          *din = (dout.array() * out.array() * (Scalar(1) - out.array())).matrix();
        }
      }
      break;
  }
}

namespace {

template <typename Scalar>
Tensor<Scalar> run_single(const Tensor<Scalar>& input, const LayerParams<Scalar>& params,
                          Shape out_shape) {
  params.validate();
  if (input.size() != params.input_size()) {
    throw ConfigError(std::string(to_string(params.kind)) + " input " +
                      shape_string(input.shape()) + " does not match layer input size " +
                      std::to_string(params.input_size()));
  }
  Matrix<Scalar> in = ConstColMap<Scalar>(input.data(), static_cast<Eigen::Index>(input.size()), 1);
  Matrix<Scalar> out;
  layer_forward(params, in, out);
  return Tensor<Scalar>(std::move(out_shape), std::vector<Scalar>(out.data(), out.data() + out.size()));
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> conv2d_forward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params) {
  if (params.kind != LayerKind::Convolution) throw ConfigError("conv2d_forward needs a convolution layer");
  const ConvGeometry& g = params.conv;
  if (input.shape() != Shape{g.in_channels, g.in_height, g.in_width}) {
    throw ConfigError("conv2d input " + shape_string(input.shape()) + " does not match filter geometry");
  }
  return run_single(input, params, {g.out_channels, g.out_height(), g.out_width()});
}

template <typename Scalar>
Tensor<Scalar> dense_forward(const Tensor<Scalar>& input, const LayerParams<Scalar>& params) {
  if (params.kind != LayerKind::Dense) throw ConfigError("dense_forward needs a dense layer");
  return run_single(input, params, {params.output_size()});
}

template <typename Scalar>
Tensor<Scalar> activation_forward(const Tensor<Scalar>& input, Activation activation) {
  auto layer = LayerParams<Scalar>::activation_layer(activation, input.size());
  return run_single(input, layer, input.shape());
}

#define IDSPACE_INSTANTIATE_LAYERS(S)                                                            \
  template struct LayerParams<S>;                                                                \
  template void layer_forward<S>(const LayerParams<S>&, const Matrix<S>&, Matrix<S>&);           \
  template void layer_backward<S>(const LayerParams<S>&, const Matrix<S>&, const Matrix<S>&,     \
                                  const Matrix<S>&, LayerGradient<S>*, Matrix<S>*);              \
  template Tensor<S> conv2d_forward<S>(const Tensor<S>&, const LayerParams<S>&);                 \
  template Tensor<S> dense_forward<S>(const Tensor<S>&, const LayerParams<S>&);                  \
  template Tensor<S> activation_forward<S>(const Tensor<S>&, Activation);

IDSPACE_INSTANTIATE_LAYERS(float)
IDSPACE_INSTANTIATE_LAYERS(double)

}  // namespace idspace
