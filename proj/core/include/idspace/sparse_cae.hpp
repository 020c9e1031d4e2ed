#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "idspace/errors.hpp"
#include "idspace/interaction_data.hpp"
#include "idspace/network.hpp"

namespace idspace {

/// Encoder: conv -> tanh -> dense/tanh stages -> dense(d), optionally tanh.
/// Decoder: dense/tanh stages -> dense(C*H*W) -> sigmoid.
struct CaeArchitecture {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t conv_filters = 16;
  std::size_t conv_kernel = 5;
  std::size_t conv_stride = 2;
  std::size_t conv_padding = 2;
  std::vector<std::size_t> encoder_hidden{512, 128};
  std::size_t descriptor_dim = 24;
  std::vector<std::size_t> decoder_hidden{128, 512};
  bool bounded_descriptor = false;  // tanh on the descriptor layer

  std::size_t input_size() const { return channels * height * width; }
  Shape input_shape() const { return {channels, height, width}; }
  void validate() const;
};

template <typename Scalar>
struct CaeModelT {
  CaeArchitecture arch;
  Network<Scalar> encoder;
  Network<Scalar> decoder;

  template <typename Other>
  CaeModelT<Other> cast() const {
    return {arch, encoder.template cast<Other>(), decoder.template cast<Other>()};
  }
  friend bool operator==(const CaeModelT& a, const CaeModelT& b) {
    return a.encoder == b.encoder && a.decoder == b.decoder;
  }
};

using CaeModel = CaeModelT<float>;

template <typename Scalar>
CaeModelT<Scalar> make_cae(const CaeArchitecture& arch, std::uint64_t seed);

struct Descriptor {
  std::vector<float> values;

  std::size_t size() const { return values.size(); }
  double norm() const;
  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

/// (||v||_1 / ||v||_2)^2; 0 for the zero vector.
template <typename Scalar>
double sparsity_ratio(std::span<const Scalar> v);
/// Analytic gradient of sparsity_ratio with sign(0) = 0.
template <typename Scalar>
std::vector<Scalar> sparsity_ratio_gradient(std::span<const Scalar> v);

/// Packs images as network input columns.
Matrix<float> images_to_matrix(std::span<const InteractionImage> images);

Descriptor encode(const CaeModel& model, const InteractionImage& image);
InteractionImage decode(const CaeModel& model, const Descriptor& descriptor);
/// Descriptors as columns (d x n), evaluated in chunks.
Matrix<float> encode_batch(const CaeModel& model, std::span<const InteractionImage> images);
Matrix<float> decode_batch(const CaeModel& model, const Matrix<float>& descriptors);

/// Sum over the batch of the squared per-pixel reconstruction error.
double reconstruction_cost(const CaeModel& model, std::span<const InteractionImage> batch);
/// Sum over the batch of sparsity_ratio(E(I)).
double sparseness_cost(const CaeModel& model, std::span<const InteractionImage> batch);
/// Sum over the batch of ||E(I)||_1 (plain L1 baseline).
double l1_penalty_cost(const CaeModel& model, std::span<const InteractionImage> batch);
/// beta * reconstruction + lambda * sparseness; negative weights are rejected.
double total_cost(const CaeModel& model, std::span<const InteractionImage> batch, double beta, double lambda);
double combine_costs(double reconstruction, double sparseness, double beta, double lambda);

enum class SparsityPenalty { Ratio, L1 };

struct CostTerms {
  double reconstruction = 0.0;
  double sparseness = 0.0;
  double total = 0.0;
};

template <typename Scalar>
struct CaeGradients {
  GradientTape<Scalar> encoder;
  GradientTape<Scalar> decoder;
};

/// Costs of one batch (columns of `inputs`) and, when `gradients` is given,
/// the full gradient of the total cost through decoder and encoder.
template <typename Scalar>
CostTerms cae_cost(const CaeModelT<Scalar>& model, const Matrix<Scalar>& inputs, double beta, double lambda,
                   SparsityPenalty penalty, CaeGradients<Scalar>* gradients);

struct EpochLog {
  int epoch = 0;
  double c_err = 0.0;
  double c_sparse = 0.0;
  double c = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;  // entry 0 is the untrained model
  double seconds = 0.0;

  void write_csv(const std::filesystem::path& path) const;
};

struct CaeTrainConfig {
  double beta = 1.0;
  double lambda = 0.0;
  int epochs = 20;
  double lr = 5e-4;
  double lr_decay = 0.5;
  int decay_every = 20;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
  SparsityPenalty penalty = SparsityPenalty::Ratio;
  bool init_output_bias = true;  // start the decoder at the training-set mean image
  std::function<void(const EpochLog&)> on_epoch;

  void validate() const;
};

struct CaeTrainResult {
  CaeModel model;
  TrainReport report;
};

/// Thrown when the loss turns non-finite; carries the last completed epoch.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, CaeModel checkpoint, TrainReport report)
      : NumericalError(what), checkpoint(std::move(checkpoint)), report(std::move(report)) {}
  CaeModel checkpoint;
  TrainReport report;
};

CaeTrainResult train_cae(std::span<const InteractionImage> data, const CaeArchitecture& arch,
                         const CaeTrainConfig& config);

/// Writes encoder.idsm and decoder.idsm into `directory`.
void save_cae(const CaeModel& model, const std::filesystem::path& directory);
CaeModel load_cae(const std::filesystem::path& directory);

}  // namespace idspace
