#include "idspace/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>

#include "idspace/descriptor_metrics.hpp"
#include "idspace/errors.hpp"
#include "idspace/model_io.hpp"
#include "idspace/random.hpp"

namespace idspace {

namespace {

constexpr std::size_t kEvalChunk = 256;

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

}  // namespace

void InferenceArchitecture::validate() const {
  if (conv1_filters == 0 || conv2_filters == 0 || hidden == 0 || descriptor_dim == 0) {
    throw ConfigError("inference model layer sizes must be positive");
  }
  if (conv1_kernel == 0 || conv2_kernel == 0 || conv1_stride == 0 || conv2_stride == 0) {
    throw ConfigError("inference model kernels and strides must be positive");
  }
}

InferenceModel make_inference_model(const InferenceArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  const std::vector<LayerSpec> specs{
      LayerSpec::conv(arch.conv1_filters, arch.conv1_kernel, arch.conv1_stride, arch.conv1_padding),
      LayerSpec::act(Activation::Tanh),
      LayerSpec::conv(arch.conv2_filters, arch.conv2_kernel, arch.conv2_stride, arch.conv2_padding),
      LayerSpec::act(Activation::Tanh),
      LayerSpec::dense(arch.hidden),
      LayerSpec::act(Activation::Tanh),
      LayerSpec::dense(arch.descriptor_dim)};
  Rng rng(mix_seed(seed, 0x1F3));
  return {arch, Network<float>::build({1, kImageSide, kImageSide}, specs, rng), seed};
}

void InferenceTrainReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_output(path);
  os << "epoch,loss,positive_loss,negative_loss,lr\n" << std::setprecision(9);
  for (const auto& e : epochs) {
    os << e.epoch << ',' << e.loss << ',' << e.positive_loss << ',' << e.negative_loss << ',' << e.lr << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

void InferenceTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (decay_every <= 0 || !(lr_decay > 0.0)) throw ConfigError("invalid learning-rate schedule");
}

Matrix<float> inputs_to_matrix(std::span<const ObjectInput> inputs) {
  Matrix<float> m(static_cast<Eigen::Index>(kChannelPixels), static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    std::copy(inputs[i].begin(), inputs[i].end(), m.col(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

namespace {

struct Sample {
  const ObjectInput* input;
  Eigen::Index target;  // column of targets, -1 for the zero vector
};

void check_input_model(const InferenceModel& model) {
  if (model.network.input_size() != kChannelPixels) throw ConfigError("inference model does not take 32x32 inputs");
}

// Sum of squared errors over the listed samples; split into the part owed to
// positives and to negatives.
std::pair<double, double> evaluate_loss(const InferenceModel& model, std::span<const Sample> samples,
                                        const Matrix<float>& targets) {
  double pos = 0.0;
  double neg = 0.0;
  std::vector<ObjectInput> chunk;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, samples.size() - start);
    chunk.clear();
    for (std::size_t i = 0; i < n; ++i) chunk.push_back(*samples[start + i].input);
    const Matrix<float> out = model.network.forward(inputs_to_matrix(chunk));
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index t = samples[start + i].target;
      const auto col = out.col(static_cast<Eigen::Index>(i)).cast<double>();
      if (t >= 0) {
        pos += (col - targets.col(t).cast<double>()).squaredNorm();
      } else {
        neg += col.squaredNorm();
      }
    }
  }
  return {pos, neg};
}

}  // namespace

InferenceTrainResult train_inference(std::span<const ObjectInput> positives, const Matrix<float>& targets,
                                     std::span<const ObjectInput> negatives, const InferenceArchitecture& arch,
                                     const InferenceTrainConfig& config) {
  config.validate();
  arch.validate();
  if (static_cast<std::size_t>(targets.rows()) != arch.descriptor_dim) {
    throw ConfigError("descriptor dimension " + std::to_string(targets.rows()) + " does not match d = " +
                      std::to_string(arch.descriptor_dim));
  }
  if (static_cast<std::size_t>(targets.cols()) != positives.size()) {
    throw ConfigError("one target descriptor is needed per positive sample");
  }
  if (positives.empty() && negatives.empty()) throw ConfigError("inference training set is empty");
  const auto started = std::chrono::steady_clock::now();

  std::vector<Sample> samples;
  samples.reserve(positives.size() + negatives.size());
  for (std::size_t i = 0; i < positives.size(); ++i) samples.push_back({&positives[i], static_cast<Eigen::Index>(i)});
  for (const auto& n : negatives) samples.push_back({&n, -1});

  // Training runs on targets divided by their RMS component so the step size
  // does not depend on the descriptor scale; the output layer is multiplied
  // back afterwards, and losses are reported in the original units.
  const double rms = targets.size() == 0 ? 0.0 : std::sqrt(targets.cast<double>().squaredNorm() / targets.size());
  const double scale = rms > 1e-12 ? rms : 1.0;
  const Matrix<float> scaled = (targets.cast<double>() / scale).cast<float>();
  const double loss_unit = scale * scale;

  InferenceTrainResult result{make_inference_model(arch, config.seed), {}};
  const auto report_epoch = [&](InferenceEpochLog log) {
    log.loss *= loss_unit;
    log.positive_loss *= loss_unit;
    log.negative_loss *= loss_unit;
    result.report.epochs.push_back(log);
    if (config.on_epoch) config.on_epoch(log);
  };
  {
    const auto [pos, neg] = evaluate_loss(result.model, samples, scaled);
    report_epoch({0, pos + neg, pos, neg, config.lr});
  }

  const auto d = static_cast<Eigen::Index>(arch.descriptor_dim);
  Matrix<float> batch;
  Matrix<float> target_batch;
  ForwardRecord<float> record;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr * std::pow(config.lr_decay, (epoch - 1) / config.decay_every);
    Rng rng(mix_seed(config.seed, 0x1F30000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(samples);
    InferenceEpochLog log{epoch, 0.0, 0.0, 0.0, lr};
    for (std::size_t start = 0; start < samples.size(); start += config.batch) {
      const std::size_t n = std::min(config.batch, samples.size() - start);
      batch.resize(static_cast<Eigen::Index>(kChannelPixels), static_cast<Eigen::Index>(n));
      target_batch.setZero(d, static_cast<Eigen::Index>(n));
      for (std::size_t i = 0; i < n; ++i) {
        const Sample& s = samples[start + i];
        std::copy(s.input->begin(), s.input->end(), batch.col(static_cast<Eigen::Index>(i)).data());
        if (s.target >= 0) target_batch.col(static_cast<Eigen::Index>(i)) = scaled.col(s.target);
      }
      const Matrix<float>& out = result.model.network.forward(batch, record);
      const Matrix<float> diff = out - target_batch;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = diff.col(static_cast<Eigen::Index>(i)).cast<double>().squaredNorm();
        (samples[start + i].target >= 0 ? log.positive_loss : log.negative_loss) += e;
      }
      const GradientTape<float> tape = result.model.network.backward(record, (2.0f * diff).eval());
      if (!tape.all_finite()) {
        throw NumericalError("non-finite inference-model gradient in epoch " + std::to_string(epoch));
      }
      result.model.network.sgd_step(tape, static_cast<float>(lr));
    }
    log.loss = log.positive_loss + log.negative_loss;
    if (!std::isfinite(log.loss)) throw NumericalError("non-finite inference loss in epoch " + std::to_string(epoch));
    report_epoch(log);
  }
  auto& out_layer = result.model.network.mutable_layers().back();
  for (std::size_t k = 0; k < out_layer.weights.size(); ++k) {
    out_layer.weights[k] = static_cast<float>(out_layer.weights[k] * scale);
  }
  for (std::size_t k = 0; k < out_layer.bias.size(); ++k) out_layer.bias[k] = static_cast<float>(out_layer.bias[k] * scale);
  result.report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

void save_inference(const InferenceModel& model, const std::filesystem::path& path) {
  save_model(path, model.network, ModelRole::Inference);
}

InferenceModel load_inference(const std::filesystem::path& path) {
  ModelFile file = load_model(path);
  if (file.role != ModelRole::Inference) throw FormatError(path.string() + " is not an inference model");
  const auto& layers = file.network.layers();
  std::vector<const LayerParams<float>*> convs;
  std::vector<const LayerParams<float>*> dense;
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Convolution) convs.push_back(&l);
    if (l.kind == LayerKind::Dense) dense.push_back(&l);
  }
  if (convs.size() != 2 || dense.size() != 2) throw FormatError(path.string() + " has an unexpected layer layout");
  InferenceModel model;
  model.arch.conv1_filters = convs[0]->conv.out_channels;
  model.arch.conv1_kernel = convs[0]->conv.kernel;
  model.arch.conv1_stride = convs[0]->conv.stride;
  model.arch.conv1_padding = convs[0]->conv.padding;
  model.arch.conv2_filters = convs[1]->conv.out_channels;
  model.arch.conv2_kernel = convs[1]->conv.kernel;
  model.arch.conv2_stride = convs[1]->conv.stride;
  model.arch.conv2_padding = convs[1]->conv.padding;
  model.arch.hidden = dense[0]->weights.shape()[0];
  model.arch.descriptor_dim = dense[1]->weights.shape()[0];
  model.network = std::move(file.network);
  check_input_model(model);
  return model;
}

Matrix<float> infer_batch(const InferenceModel& model, std::span<const ObjectInput> inputs) {
  check_input_model(model);
  Matrix<float> out(static_cast<Eigen::Index>(model.descriptor_dim()), static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t start = 0; start < inputs.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, inputs.size() - start);
    out.middleCols(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(n)) =
        model.network.forward(inputs_to_matrix(inputs.subspan(start, n)));
  }
  return out;
}

Descriptor infer_descriptor(const InferenceModel& model, const ObjectInput& input) {
  const Matrix<float> out = infer_batch(model, std::span<const ObjectInput>(&input, 1));
  return {std::vector<float>(out.data(), out.data() + out.size())};
}

std::vector<double> descriptor_norms(const InferenceModel& model, std::span<const ObjectInput> inputs) {
  const Matrix<float> out = infer_batch(model, inputs);
  std::vector<double> norms(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    norms[i] = out.col(static_cast<Eigen::Index>(i)).cast<double>().norm();
  }
  return norms;
}

NormDensityPair estimate_norm_densities(const InferenceModel& model, std::span<const ObjectInput> positives,
                                        std::span<const ObjectInput> negatives) {
  if (positives.empty() || negatives.empty()) throw DomainError("norm densities need positive and negative samples");
  const std::vector<double> pos = descriptor_norms(model, positives);
  const std::vector<double> neg = descriptor_norms(model, negatives);
  return estimate_norm_densities(pos, neg);
}

double likelihood(const InferenceModel& model, const NormDensityPair& densities, const ObjectInput& input) {
  return densities.likelihood(infer_descriptor(model, input).norm());
}

InteractionImage infer_interaction_image(const CaeModel& cae, const InferenceModel& model, const ObjectInput& input) {
  if (cae.decoder.input_size() != model.descriptor_dim()) {
    throw ConfigError("inference model emits d = " + std::to_string(model.descriptor_dim()) +
                      " but the decoder expects d = " + std::to_string(cae.decoder.input_size()));
  }
  return decode(cae, infer_descriptor(model, input));
}

WindowGrid window_grid(const Scene& scene, std::size_t stride) {
  if (stride == 0) throw ConfigError("window stride must be positive");
  if (scene.height < kImageSide || scene.width < kImageSide) throw ConfigError("scene is smaller than one window");
  return {(scene.height - kImageSide) / stride + 1, (scene.width - kImageSide) / stride + 1, stride};
}

std::vector<ObjectInput> window_inputs(const Scene& scene, const WindowGrid& grid) {
  std::vector<ObjectInput> inputs;
  inputs.reserve(grid.size());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      inputs.push_back(object_input(crop_scene(scene, grid.x0(c), grid.y0(r), true)));
    }
  }
  return inputs;
}

double LikelihoodMap::fraction_above(const RegionBox& box) const {
  std::size_t inside = 0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      if (!box.contains(grid.center_x(c), grid.center_y(r))) continue;
      ++inside;
      if (above(r, c)) ++hits;
    }
  }
  return inside == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(inside);
}

void LikelihoodMap::write_pgm(const std::filesystem::path& path) const {
  std::vector<float> values(f.begin(), f.end());
  idspace::write_pgm(path, values, grid.cols, grid.rows);
}

void LikelihoodMap::write_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_output(path);
  os << "cx,cy,f\n" << std::setprecision(9);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) os << grid.center_x(c) << ',' << grid.center_y(r) << ',' << at(r, c) << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

LikelihoodMap likelihood_map(const InferenceModel& model, const NormDensityPair& densities, const Scene& scene,
                             std::size_t stride) {
  LikelihoodMap map;
  map.grid = window_grid(scene, stride);
  const std::vector<double> norms = descriptor_norms(model, window_inputs(scene, map.grid));
  map.f.reserve(norms.size());
  for (double n : norms) map.f.push_back(densities.likelihood(n));
  return map;
}

ObjectInput rotate_input(const ObjectInput& input, double angle) {
  ObjectInput out{};
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const double mid = 0.5 * static_cast<double>(kImageSide) - 0.5;
  for (std::size_t y = 0; y < kImageSide; ++y) {
    for (std::size_t x = 0; x < kImageSide; ++x) {
      // Inverse map: output pixel -> source pixel.
      const double dx = static_cast<double>(x) - mid;
      const double dy = static_cast<double>(y) - mid;
      const double sx = c * dx + s * dy + mid;
      const double sy = -s * dx + c * dy + mid;
      const auto ix = static_cast<long>(std::lround(sx));
      const auto iy = static_cast<long>(std::lround(sy));
      if (ix < 0 || iy < 0 || ix >= static_cast<long>(kImageSide) || iy >= static_cast<long>(kImageSide)) continue;
      out[y * kImageSide + x] = input[static_cast<std::size_t>(iy) * kImageSide + static_cast<std::size_t>(ix)];
    }
  }
  return out;
}

RotationResult rotation_sweep_infer(const InferenceModel& model, const NormDensityPair& densities,
                                    const ObjectInput& input, std::size_t n_angles) {
  if (n_angles == 0) throw ConfigError("rotation sweep needs at least one angle");
  std::vector<ObjectInput> rotated;
  rotated.reserve(n_angles);
  for (std::size_t k = 0; k < n_angles; ++k) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_angles);
    rotated.push_back(k == 0 ? input : rotate_input(input, angle));
  }
  const Matrix<float> out = infer_batch(model, rotated);
  RotationResult best;
  best.f = -1.0;
  for (std::size_t k = 0; k < n_angles; ++k) {
    const auto col = out.col(static_cast<Eigen::Index>(k));
    const double f = densities.likelihood(col.cast<double>().norm());
    if (f > best.f) {
      best.f = f;
      best.angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_angles);
      best.descriptor.values.assign(col.data(), col.data() + col.size());
    }
  }
  return best;
}

PsnrValue psnr(std::span<const float> reference, std::span<const float> estimate) {
  if (reference.size() != estimate.size() || reference.empty()) throw ConfigError("PSNR needs equal, non-empty inputs");
  double se = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference[i]) - static_cast<double>(estimate[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(reference.size());
  if (mse <= 0.0) return {kPsnrCap, true};
  return {std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse)), false};
}

PsnrSummary psnr_eval(const CaeModel& cae, const InferenceModel& model, std::span<const PsnrPair> pairs) {
  if (pairs.empty()) throw DomainError("PSNR evaluation needs at least one pair");
  if (cae.decoder.input_size() != model.descriptor_dim()) {
    throw ConfigError("inference model and decoder disagree on the descriptor dimension");
  }
  std::vector<ObjectInput> inputs;
  inputs.reserve(pairs.size());
  for (const auto& p : pairs) inputs.push_back(p.input);
  const Matrix<float> decoded = decode_batch(cae, infer_batch(model, inputs));
  PsnrSummary summary;
  summary.n = pairs.size();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::span<const float> estimate(decoded.col(static_cast<Eigen::Index>(i)).data(), kImageValues);
    for (std::size_t ch = 0; ch < kImageChannels; ++ch) {
      const PsnrValue v = psnr(pairs[i].truth.channel(static_cast<Channel>(ch)),
                               estimate.subspan(ch * kChannelPixels, kChannelPixels));
      summary.mean_db[ch] += v.db;
      if (v.capped) ++summary.capped[ch];
    }
  }
  for (double& m : summary.mean_db) m /= static_cast<double>(pairs.size());
  return summary;
}

void write_psnr_csv(const std::filesystem::path& path, std::span<const std::pair<std::string, PsnrSummary>> rows) {
  static constexpr const char* kChannelNames[] = {"appearance", "hand_mask", "object_mask"};
  std::ofstream os = open_output(path);
  os << "split,channel,mean_psnr_db,n,capped_count\n" << std::setprecision(9);
  for (const auto& [split, s] : rows) {
    for (std::size_t ch = 0; ch < kImageChannels; ++ch) {
      os << split << ',' << kChannelNames[ch] << ',' << s.mean_db[ch] << ',' << s.n << ',' << s.capped[ch] << '\n';
    }
  }
  if (!os) throw IoError("failed writing " + path.string());
}

int ClusterMap::majority_in(const RegionBox& box) const {
  std::map<int, std::size_t> counts;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      if (box.contains(grid.center_x(c), grid.center_y(r))) ++counts[at(r, c)];
    }
  }
  int best = -1;
  std::size_t best_count = 0;
  for (const auto& [id, n] : counts) {
    if (n > best_count) {
      best = id;
      best_count = n;
    }
  }
  return best;
}

void ClusterMap::write_pgm(const std::filesystem::path& path) const {
  const int top = cluster.empty() ? 0 : *std::max_element(cluster.begin(), cluster.end());
  std::vector<float> values(cluster.size());
  for (std::size_t i = 0; i < cluster.size(); ++i) {
    values[i] = top == 0 ? 0.0f : static_cast<float>(cluster[i]) / static_cast<float>(top);
  }
  idspace::write_pgm(path, values, grid.cols, grid.rows);
}

void ClusterMap::write_csv(const std::filesystem::path& path) const {
  std::ofstream os = open_output(path);
  os << "cx,cy,cluster_id\n";
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) os << grid.center_x(c) << ',' << grid.center_y(r) << ',' << at(r, c) << '\n';
  }
  if (!os) throw IoError("failed writing " + path.string());
}

ClusterMap position_descriptor_cluster(const InferenceModel& model, const Scene& scene, std::size_t stride,
                                       double position_weight, double bandwidth) {
  ClusterMap map;
  map.grid = window_grid(scene, stride);
  const Matrix<float> descriptors = infer_batch(model, window_inputs(scene, map.grid));
  std::vector<Vector> desc = columns_of(descriptors);
  std::vector<Vector> pos;
  pos.reserve(map.grid.size());
  for (std::size_t r = 0; r < map.grid.rows; ++r) {
    for (std::size_t c = 0; c < map.grid.cols; ++c) pos.push_back({map.grid.center_x(c), map.grid.center_y(r)});
  }
  if (position_weight < 0.0) {
    // default_bandwidth is half the median pairwise distance.
    const double pos_spread = default_bandwidth(pos);
    position_weight = desc.size() > 1 && pos_spread > 1e-6 ? default_bandwidth(desc) / pos_spread : 0.0;
  }
  std::vector<Vector> joint(desc.size());
  for (std::size_t i = 0; i < desc.size(); ++i) {
    joint[i] = desc[i];
    joint[i].push_back(position_weight * pos[i][0]);
    joint[i].push_back(position_weight * pos[i][1]);
  }
  map.position_weight = position_weight;
  // Half of default_bandwidth: with two parts of similar size the median
  // distance is about their separation, and a kernel half that wide already
  // merges them into one mode.
  map.bandwidth = bandwidth > 0.0 ? bandwidth : kMapBandwidthFactor * default_bandwidth(joint);
  MeanShiftOptions options;
  options.bandwidth = map.bandwidth;
  map.cluster = mean_shift(joint, options).cluster;
  return map;
}

}  // namespace idspace
