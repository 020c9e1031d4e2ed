#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "idspace/density.hpp"
#include "idspace/interaction_data.hpp"
#include "idspace/network.hpp"
#include "idspace/sparse_cae.hpp"

namespace idspace {

/// Object appearance masked by the object silhouette, 32 x 32.
using ObjectInput = std::array<float, kChannelPixels>;

/// conv -> tanh -> conv -> tanh -> dense -> tanh -> dense(d), linear output.
struct InferenceArchitecture {
  std::size_t conv1_filters = 16;
  std::size_t conv1_kernel = 5;
  std::size_t conv1_stride = 2;
  std::size_t conv1_padding = 2;
  std::size_t conv2_filters = 32;
  std::size_t conv2_kernel = 3;
  std::size_t conv2_stride = 2;
  std::size_t conv2_padding = 1;
  std::size_t hidden = 256;
  std::size_t descriptor_dim = 24;

  void validate() const;
};

struct InferenceModel {
  InferenceArchitecture arch;
  Network<float> network;
  std::uint64_t seed = 0;

  std::size_t descriptor_dim() const { return network.output_size(); }
  friend bool operator==(const InferenceModel& a, const InferenceModel& b) { return a.network == b.network; }
};

InferenceModel make_inference_model(const InferenceArchitecture& arch, std::uint64_t seed);

struct InferenceEpochLog {
  int epoch = 0;
  double loss = 0.0;           // sum over samples of ||R(O) - target||^2
  double positive_loss = 0.0;
  double negative_loss = 0.0;
  double lr = 0.0;
};

struct InferenceTrainReport {
  std::vector<InferenceEpochLog> epochs;  // entry 0 is the untrained model
  double seconds = 0.0;

  void write_csv(const std::filesystem::path& path) const;
};

struct InferenceTrainConfig {
  int epochs = 20;
  double lr = 2e-4;
  double lr_decay = 0.5;
  int decay_every = 20;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  std::function<void(const InferenceEpochLog&)> on_epoch;

  void validate() const;
};

struct InferenceTrainResult {
  InferenceModel model;
  InferenceTrainReport report;
};

/// Regresses R(O) onto the paired descriptors (columns of `targets`) for
/// positives and onto the zero vector for negatives, by mini-batch SGD.
InferenceTrainResult train_inference(std::span<const ObjectInput> positives, const Matrix<float>& targets,
                                     std::span<const ObjectInput> negatives, const InferenceArchitecture& arch,
                                     const InferenceTrainConfig& config);

void save_inference(const InferenceModel& model, const std::filesystem::path& path);
InferenceModel load_inference(const std::filesystem::path& path);

Matrix<float> inputs_to_matrix(std::span<const ObjectInput> inputs);
Descriptor infer_descriptor(const InferenceModel& model, const ObjectInput& input);
/// Descriptors as columns (d x n).
Matrix<float> infer_batch(const InferenceModel& model, std::span<const ObjectInput> inputs);
std::vector<double> descriptor_norms(const InferenceModel& model, std::span<const ObjectInput> inputs);

NormDensityPair estimate_norm_densities(const InferenceModel& model, std::span<const ObjectInput> positives,
                                        std::span<const ObjectInput> negatives);
double likelihood(const InferenceModel& model, const NormDensityPair& densities, const ObjectInput& input);

/// D(R(O)). Throws ConfigError when R and the decoder disagree on d.
InteractionImage infer_interaction_image(const CaeModel& cae, const InferenceModel& model, const ObjectInput& input);

/// Window origins of a 32 x 32 sliding window at `stride`, row-major.
struct WindowGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 1;

  std::size_t size() const { return rows * cols; }
  std::size_t x0(std::size_t col) const { return col * stride; }
  std::size_t y0(std::size_t row) const { return row * stride; }
  double center_x(std::size_t col) const { return static_cast<double>(x0(col)) + 0.5 * kImageSide; }
  double center_y(std::size_t row) const { return static_cast<double>(y0(row)) + 0.5 * kImageSide; }
};

WindowGrid window_grid(const Scene& scene, std::size_t stride);
/// Object-only inputs of every window, row-major.
std::vector<ObjectInput> window_inputs(const Scene& scene, const WindowGrid& grid);

inline constexpr double kLikelihoodThreshold = 0.9;

struct LikelihoodMap {
  WindowGrid grid;
  std::vector<double> f;  // row-major over window centers
  double threshold = kLikelihoodThreshold;

  double at(std::size_t row, std::size_t col) const { return f[row * grid.cols + col]; }
  bool above(std::size_t row, std::size_t col) const { return at(row, col) > threshold; }
  /// Fraction of window centers inside `box` whose f exceeds the threshold;
  /// 0 when no center falls inside.
  double fraction_above(const RegionBox& box) const;

  void write_pgm(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;  // cx,cy,f
};

LikelihoodMap likelihood_map(const InferenceModel& model, const NormDensityPair& densities, const Scene& scene,
                             std::size_t stride);

/// Rotation about the image center, nearest-neighbour with zero fill.
ObjectInput rotate_input(const ObjectInput& input, double angle);

struct RotationResult {
  double angle = 0.0;  // radians in [0, 2 pi)
  Descriptor descriptor;
  double f = 0.0;
};

/// Evaluates R on the input rotated by k * 2 pi / n_angles and keeps the
/// rotation with the largest f (the smallest angle on ties).
RotationResult rotation_sweep_infer(const InferenceModel& model, const NormDensityPair& densities,
                                    const ObjectInput& input, std::size_t n_angles = 16);

inline constexpr double kPsnrCap = 99.0;

struct PsnrValue {
  double db = 0.0;
  bool capped = false;
};

/// 10 log10(1 / MSE) for values with peak 1; kPsnrCap when MSE is zero.
PsnrValue psnr(std::span<const float> reference, std::span<const float> estimate);

struct PsnrPair {
  ObjectInput input;
  InteractionImage truth;
};

struct PsnrSummary {
  std::array<double, kImageChannels> mean_db{};
  std::array<std::size_t, kImageChannels> capped{};
  std::size_t n = 0;
};

/// Mean per-channel PSNR between the truth and D(R(O)).
PsnrSummary psnr_eval(const CaeModel& cae, const InferenceModel& model, std::span<const PsnrPair> pairs);

/// Rows `split,channel,mean_psnr_db,n,capped_count`.
void write_psnr_csv(const std::filesystem::path& path,
                    std::span<const std::pair<std::string, PsnrSummary>> rows);

struct ClusterMap {
  WindowGrid grid;
  std::vector<int> cluster;  // row-major over window centers
  double position_weight = 0.0;
  double bandwidth = 0.0;

  int at(std::size_t row, std::size_t col) const { return cluster[row * grid.cols + col]; }
  /// Most frequent cluster among centers inside `box`, -1 when none.
  int majority_in(const RegionBox& box) const;

  void write_pgm(const std::filesystem::path& path) const;
  void write_csv(const std::filesystem::path& path) const;  // cx,cy,cluster_id
};

/// Map bandwidth as a fraction of default_bandwidth (0.25 x median pairwise
/// distance of the joint vectors).
inline constexpr double kMapBandwidthFactor = 0.5;

/// Mean-shift over [R(O) ; w * (cx, cy)] per window. A negative
/// position_weight matches the median pairwise spreads of the two parts; a
/// non-positive bandwidth selects kMapBandwidthFactor * default_bandwidth.
ClusterMap position_descriptor_cluster(const InferenceModel& model, const Scene& scene, std::size_t stride,
                                       double position_weight = -1.0, double bandwidth = 0.0);

}  // namespace idspace
