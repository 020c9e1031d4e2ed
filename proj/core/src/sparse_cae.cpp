#include "idspace/sparse_cae.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "idspace/model_io.hpp"
#include "idspace/random.hpp"

namespace idspace {

void CaeArchitecture::validate() const {
  if (channels == 0 || height == 0 || width == 0) throw ConfigError("CAE input shape must be positive");
  if (descriptor_dim == 0) throw ConfigError("descriptor dimension must be positive");
  if (conv_filters == 0 || conv_kernel == 0 || conv_stride == 0) throw ConfigError("CAE convolution must be positive");
  for (std::size_t h : encoder_hidden) {
    if (h == 0) throw ConfigError("encoder hidden sizes must be positive");
  }
  for (std::size_t h : decoder_hidden) {
    if (h == 0) throw ConfigError("decoder hidden sizes must be positive");
  }
}

template <typename Scalar>
CaeModelT<Scalar> make_cae(const CaeArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  std::vector<LayerSpec> enc{LayerSpec::conv(arch.conv_filters, arch.conv_kernel, arch.conv_stride, arch.conv_padding),
                             LayerSpec::act(Activation::Tanh)};
  for (std::size_t h : arch.encoder_hidden) {
    enc.push_back(LayerSpec::dense(h));
    enc.push_back(LayerSpec::act(Activation::Tanh));
  }
  enc.push_back(LayerSpec::dense(arch.descriptor_dim));
  if (arch.bounded_descriptor) enc.push_back(LayerSpec::act(Activation::Tanh));

  std::vector<LayerSpec> dec;
  for (std::size_t h : arch.decoder_hidden) {
    dec.push_back(LayerSpec::dense(h));
    dec.push_back(LayerSpec::act(Activation::Tanh));
  }
  dec.push_back(LayerSpec::dense(arch.input_size()));
  dec.push_back(LayerSpec::act(Activation::Sigmoid));

  Rng rng(mix_seed(seed, 0xCAE));
  CaeModelT<Scalar> model;
  model.arch = arch;
  model.encoder = Network<Scalar>::build(arch.input_shape(), enc, rng);
  model.decoder = Network<Scalar>::build({arch.descriptor_dim}, dec, rng);
  return model;
}

double Descriptor::norm() const {
  double s = 0.0;
  for (float v : values) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

template <typename Scalar>
double sparsity_ratio(std::span<const Scalar> v) {
  double l1 = 0.0;
  double l2 = 0.0;
  for (Scalar x : v) {
    l1 += std::fabs(static_cast<double>(x));
    l2 += static_cast<double>(x) * static_cast<double>(x);
  }
  if (l2 == 0.0) return 0.0;
  return l1 * l1 / l2;
}

template <typename Scalar>
std::vector<Scalar> sparsity_ratio_gradient(std::span<const Scalar> v) {
  double l1 = 0.0;
  double sq = 0.0;
  for (Scalar x : v) {
    l1 += std::fabs(static_cast<double>(x));
    sq += static_cast<double>(x) * static_cast<double>(x);
  }
  std::vector<Scalar> g(v.size(), Scalar(0));
  if (sq == 0.0) return g;
  // f = a^2 / q with a = ||v||_1 and q = ||v||_2^2.
  const double d_l1 = 2.0 * l1 / sq;
  const double d_sq = -2.0 * l1 * l1 / (sq * sq);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = static_cast<double>(v[i]);
    const double sign = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
    g[i] = static_cast<Scalar>(d_l1 * sign + d_sq * x);
  }
  return g;
}

Matrix<float> images_to_matrix(std::span<const InteractionImage> images) {
  Matrix<float> m(static_cast<Eigen::Index>(kImageValues), static_cast<Eigen::Index>(images.size()));
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].pixels.size() != kImageValues) throw ConfigError("interaction image must hold 3x32x32 values");
    std::copy(images[i].pixels.begin(), images[i].pixels.end(), m.col(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

namespace {

constexpr std::size_t kEvalChunk = 256;

void check_image_model(const CaeModel& model) {
  if (model.arch.input_size() != kImageValues || model.encoder.input_size() != kImageValues) {
    throw ConfigError("CAE does not take 3x32x32 interaction images");
  }
}

}  // namespace

Matrix<float> encode_batch(const CaeModel& model, std::span<const InteractionImage> images) {
  check_image_model(model);
  Matrix<float> out(static_cast<Eigen::Index>(model.encoder.output_size()), static_cast<Eigen::Index>(images.size()));
  for (std::size_t start = 0; start < images.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, images.size() - start);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        model.encoder.forward(images_to_matrix(images.subspan(start, n)));
  }
  return out;
}

Matrix<float> decode_batch(const CaeModel& model, const Matrix<float>& descriptors) {
  if (static_cast<std::size_t>(descriptors.rows()) != model.decoder.input_size()) {
    throw ConfigError("descriptor dimension " + std::to_string(descriptors.rows()) + " does not match decoder input " +
                      std::to_string(model.decoder.input_size()));
  }
  return model.decoder.forward(descriptors);
}

Descriptor encode(const CaeModel& model, const InteractionImage& image) {
  const Matrix<float> z = encode_batch(model, std::span<const InteractionImage>(&image, 1));
  return Descriptor{std::vector<float>(z.data(), z.data() + z.size())};
}

InteractionImage decode(const CaeModel& model, const Descriptor& descriptor) {
  const Matrix<float> z = Eigen::Map<const Matrix<float>>(descriptor.values.data(),
                                                         static_cast<Eigen::Index>(descriptor.values.size()), 1);
  const Matrix<float> y = decode_batch(model, z);
  if (static_cast<std::size_t>(y.rows()) != kImageValues) throw ConfigError("decoder does not emit 3x32x32 images");
  InteractionImage image;
  std::copy(y.data(), y.data() + y.size(), image.pixels.begin());
  return image;
}

double combine_costs(double reconstruction, double sparseness, double beta, double lambda) {
  if (beta < 0.0 || lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
  return beta * reconstruction + lambda * sparseness;
}

template <typename Scalar>
CostTerms cae_cost(const CaeModelT<Scalar>& model, const Matrix<Scalar>& inputs, double beta, double lambda,
                   SparsityPenalty penalty, CaeGradients<Scalar>* gradients) {
  if (beta < 0.0 || lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
  ForwardRecord<Scalar> enc_record;
  ForwardRecord<Scalar> dec_record;
  const Matrix<Scalar>& z = model.encoder.forward(inputs, enc_record);
  const Matrix<Scalar>& y = model.decoder.forward(z, dec_record);
  const Matrix<Scalar> diff = y - inputs;

  CostTerms terms;
  for (Eigen::Index b = 0; b < diff.cols(); ++b) {
    double col = 0.0;
    for (Eigen::Index r = 0; r < diff.rows(); ++r) col += static_cast<double>(diff(r, b)) * diff(r, b);
    terms.reconstruction += col;
  }
  const auto d = static_cast<std::size_t>(z.rows());
  for (Eigen::Index b = 0; b < z.cols(); ++b) {
    std::span<const Scalar> v(z.col(b).data(), d);
    if (penalty == SparsityPenalty::Ratio) {
      terms.sparseness += sparsity_ratio(v);
    } else {
      for (Scalar x : v) terms.sparseness += std::fabs(static_cast<double>(x));
    }
  }
  terms.total = combine_costs(terms.reconstruction, terms.sparseness, beta, lambda);

  if (gradients != nullptr) {
    const Matrix<Scalar> dy = (Scalar(2 * beta) * diff).eval();
    gradients->decoder = model.decoder.backward(dec_record, dy, true);
    Matrix<Scalar> dz = gradients->decoder.input;
    if (lambda > 0.0) {
      for (Eigen::Index b = 0; b < z.cols(); ++b) {
        std::span<const Scalar> v(z.col(b).data(), d);
        if (penalty == SparsityPenalty::Ratio) {
          const std::vector<Scalar> g = sparsity_ratio_gradient(v);
          for (std::size_t i = 0; i < d; ++i) dz(static_cast<Eigen::Index>(i), b) += static_cast<Scalar>(lambda) * g[i];
        } else {
          for (std::size_t i = 0; i < d; ++i) {
            const Scalar x = v[i];
            dz(static_cast<Eigen::Index>(i), b) += static_cast<Scalar>(lambda) * (x > 0 ? Scalar(1) : (x < 0 ? Scalar(-1) : Scalar(0)));
          }
        }
      }
    }
    gradients->encoder = model.encoder.backward(enc_record, dz, false);
  }
  return terms;
}

namespace {

CostTerms evaluate_costs(const CaeModel& model, std::span<const InteractionImage> batch, double beta, double lambda,
                         SparsityPenalty penalty) {
  check_image_model(model);
  if (batch.empty()) throw ConfigError("cost of an empty batch");
  CostTerms sum;
  for (std::size_t start = 0; start < batch.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, batch.size() - start);
    const CostTerms part =
        cae_cost<float>(model, images_to_matrix(batch.subspan(start, n)), 1.0, 0.0, penalty, nullptr);
    sum.reconstruction += part.reconstruction;
    sum.sparseness += part.sparseness;
  }
  sum.total = combine_costs(sum.reconstruction, sum.sparseness, beta, lambda);
  return sum;
}

}  // namespace

double reconstruction_cost(const CaeModel& model, std::span<const InteractionImage> batch) {
  return evaluate_costs(model, batch, 1.0, 0.0, SparsityPenalty::Ratio).reconstruction;
}

double sparseness_cost(const CaeModel& model, std::span<const InteractionImage> batch) {
  return evaluate_costs(model, batch, 1.0, 0.0, SparsityPenalty::Ratio).sparseness;
}

double l1_penalty_cost(const CaeModel& model, std::span<const InteractionImage> batch) {
  return evaluate_costs(model, batch, 1.0, 0.0, SparsityPenalty::L1).sparseness;
}

double total_cost(const CaeModel& model, std::span<const InteractionImage> batch, double beta, double lambda) {
  if (beta < 0.0 || lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
  return evaluate_costs(model, batch, beta, lambda, SparsityPenalty::Ratio).total;
}

void TrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << "epoch,c_err,c_sparse,c,lr\n" << std::setprecision(9);
  for (const auto& e : epochs) os << e.epoch << ',' << e.c_err << ',' << e.c_sparse << ',' << e.c << ',' << e.lr << '\n';
  if (!os) throw IoError("failed writing " + path.string());
}

void CaeTrainConfig::validate() const {
  if (beta < 0.0 || lambda < 0.0) throw ConfigError("beta and lambda must be non-negative");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (decay_every <= 0 || !(lr_decay > 0.0)) throw ConfigError("invalid learning-rate schedule");
}

namespace {

// Sets the last decoder bias to logit(mean image) so training does not spend
// its first epochs (and its saturation budget) fitting the mean.
void init_output_bias(CaeModel& model, std::span<const InteractionImage> data) {
  auto& layers = model.decoder.mutable_layers();
  auto last = std::find_if(layers.rbegin(), layers.rend(), [](const auto& l) { return l.has_parameters(); });
  if (last == layers.rend() || last->bias.size() != kImageValues) return;
  std::vector<double> mean(kImageValues, 0.0);
  for (const auto& item : data) {
    for (std::size_t k = 0; k < kImageValues; ++k) mean[k] += item.pixels[k];
  }
  for (std::size_t k = 0; k < kImageValues; ++k) {
    const double m = std::clamp(mean[k] / static_cast<double>(data.size()), 0.01, 0.99);
    last->bias[k] = static_cast<float>(std::log(m / (1.0 - m)));
  }
}

}  // namespace

CaeTrainResult train_cae(std::span<const InteractionImage> data, const CaeArchitecture& arch,
                         const CaeTrainConfig& config) {
  config.validate();
  if (data.empty()) throw ConfigError("training set is empty");
  const auto started = std::chrono::steady_clock::now();
  CaeTrainResult result{make_cae<float>(arch, config.seed), {}};
  check_image_model(result.model);
  if (config.init_output_bias) init_output_bias(result.model, data);

  const auto report_epoch = [&](const EpochLog& log) {
    result.report.epochs.push_back(log);
    if (config.on_epoch) config.on_epoch(log);
  };
  {
    const CostTerms initial = evaluate_costs(result.model, data, config.beta, config.lambda, config.penalty);
    report_epoch({0, initial.reconstruction, initial.sparseness, initial.total, config.lr});
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  CaeModel checkpoint = result.model;
  std::vector<InteractionImage> batch_images;
  Matrix<float> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr * std::pow(config.lr_decay, (epoch - 1) / config.decay_every);
    Rng rng(mix_seed(config.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order);
    EpochLog log{epoch, 0.0, 0.0, 0.0, lr};
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t n = std::min(config.batch, order.size() - start);
      batch.resize(static_cast<Eigen::Index>(kImageValues), static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const auto& px = data[order[start + i]].pixels;
        std::copy(px.begin(), px.end(), batch.col(static_cast<Eigen::Index>(i)).data());
      }
      CaeGradients<float> grads;
      const CostTerms terms = cae_cost(result.model, batch, config.beta, config.lambda, config.penalty, &grads);
      if (!std::isfinite(terms.total) || !grads.encoder.all_finite() || !grads.decoder.all_finite()) {
        result.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        throw TrainingAborted("non-finite cost in epoch " + std::to_string(epoch), std::move(checkpoint),
                              std::move(result.report));
      }
      log.c_err += terms.reconstruction;
      log.c_sparse += terms.sparseness;
      result.model.encoder.sgd_step(grads.encoder, static_cast<float>(lr));
      result.model.decoder.sgd_step(grads.decoder, static_cast<float>(lr));
    }
    log.c = combine_costs(log.c_err, log.c_sparse, config.beta, config.lambda);
    report_epoch(log);
    checkpoint = result.model;
  }
  result.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void save_cae(const CaeModel& model, const std::filesystem::path& directory) {
  std::filesystem::create_directories(directory);
  save_model(directory / "encoder.idsm", model.encoder, ModelRole::Encoder);
  save_model(directory / "decoder.idsm", model.decoder, ModelRole::Decoder);
}

CaeModel load_cae(const std::filesystem::path& directory) {
  ModelFile enc = load_model(directory / "encoder.idsm");
  ModelFile dec = load_model(directory / "decoder.idsm");
  if (enc.role != ModelRole::Encoder || dec.role != ModelRole::Decoder) {
    throw FormatError("model files in " + directory.string() + " carry the wrong role tags");
  }
  const auto& first = enc.network.layers().front();
  if (first.kind != LayerKind::Convolution) throw FormatError("encoder must start with a convolution");
  if (enc.network.output_size() != dec.network.input_size()) {
    throw FormatError("encoder output and decoder input dimensions differ");
  }
  CaeModel model;
  model.arch.channels = first.conv.in_channels;
  model.arch.height = first.conv.in_height;
  model.arch.width = first.conv.in_width;
  model.arch.conv_filters = first.conv.out_channels;
  model.arch.conv_kernel = first.conv.kernel;
  model.arch.conv_stride = first.conv.stride;
  model.arch.conv_padding = first.conv.padding;
  model.arch.descriptor_dim = enc.network.output_size();
  model.arch.encoder_hidden.clear();
  model.arch.decoder_hidden.clear();
  const auto& el = enc.network.layers();
  for (std::size_t i = 1; i + 2 < el.size(); ++i) {
    if (el[i].kind == LayerKind::Dense) model.arch.encoder_hidden.push_back(el[i].output_size());
  }
  const auto& dl = dec.network.layers();
  for (std::size_t i = 0; i + 2 < dl.size(); ++i) {
    if (dl[i].kind == LayerKind::Dense) model.arch.decoder_hidden.push_back(dl[i].output_size());
  }
  model.encoder = std::move(enc.network);
  model.decoder = std::move(dec.network);
  return model;
}

template CaeModelT<float> make_cae<float>(const CaeArchitecture&, std::uint64_t);
template CaeModelT<double> make_cae<double>(const CaeArchitecture&, std::uint64_t);
template double sparsity_ratio<float>(std::span<const float>);
template double sparsity_ratio<double>(std::span<const double>);
template std::vector<float> sparsity_ratio_gradient<float>(std::span<const float>);
template std::vector<double> sparsity_ratio_gradient<double>(std::span<const double>);
template CostTerms cae_cost<float>(const CaeModelT<float>&, const Matrix<float>&, double, double, SparsityPenalty,
                                   CaeGradients<float>*);
template CostTerms cae_cost<double>(const CaeModelT<double>&, const Matrix<double>&, double, double, SparsityPenalty,
                                    CaeGradients<double>*);

}  // namespace idspace
