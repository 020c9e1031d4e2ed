#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "idspace/descriptor_metrics.hpp"
#include "idspace/inference.hpp"
#include "idspace/interaction_data.hpp"
#include "idspace/sparse_cae.hpp"

namespace idspace {

/// Every knob of an experiment. Serialises to flat `key = value` text; a
/// config plus the code version determines all outputs.
struct ExperimentConfig {
  std::string profile = "paper";
  std::uint64_t seed = 1;

  // Corpus.
  std::size_t scenes = 1680;
  std::size_t crops_per_scene = 4;
  std::size_t test_scenes = 800;
  std::size_t calibration_scenes = 200;
  std::size_t negatives = 2000;
  std::size_t heldout_negatives = 200;
  double min_hand_fraction = 0.1;
  std::size_t crop_offset = kDefaultCropOffset;

  // Autoencoder.
  std::size_t d = 24;
  double beta = 1.0;
  double lambda = 1.0;
  double lr = 5e-4;
  int epochs = 30;
  std::size_t batch = 64;
  double lr_decay = 0.5;
  int decay_every = 20;
  bool bounded_descriptor = false;

  // Inference model.
  int inference_epochs = 30;
  double inference_lr = 2e-4;
  std::size_t inference_batch = 64;

  // Metrics and maps.
  double bandwidth = 0.0;  // mean-shift bandwidth; 0 selects 0.5 x median pairwise distance
  std::size_t map_stride = 2;
  std::size_t map_canvas = 96;
  std::size_t map_scenes = 20;
  std::size_t cluster_scenes = 10;
  double position_weight = -1.0;  // negative: match descriptor and position spreads
  double map_bandwidth = 0.0;     // cluster-map bandwidth; 0 selects 0.25 x median pairwise distance
  std::size_t rotation_angles = 16;
  bool rotation_sweep = false;
  std::vector<double> sweep_lambdas{0.0, 0.1, 0.3, 1.0, 3.0, 10.0};

  std::filesystem::path out = "out";

  /// Built-in profiles: "paper" and "smoke". Throws ConfigError otherwise.
  static ExperimentConfig from_profile(std::string_view name);

  /// Applies one `key = value` assignment; unknown keys and malformed values
  /// raise ConfigError.
  void set(std::string_view key, std::string_view value);
  /// Reads `key = value` lines ('#' starts a comment).
  void load_file(const std::filesystem::path& path);
  /// One `key = value` line per key. Without `with_out` the output
  /// directory is left out, so copies written into different directories
  /// stay byte-identical.
  std::string serialize(bool with_out = true) const;
  static std::vector<std::string> keys();

  void validate() const;

  CaeArchitecture cae_architecture() const;
  CaeTrainConfig cae_train_config() const;
  InferenceArchitecture inference_architecture() const;
  InferenceTrainConfig inference_train_config() const;
};

/// All datasets of one experiment. Object-only companions are aligned 1:1
/// with the interaction crops they were cut alongside.
struct Corpus {
  Dataset train;
  Dataset train_objects;
  Dataset test;
  Dataset test_objects;
  Dataset calibration;
  Dataset calibration_objects;
  Dataset negatives;
  Dataset heldout_negatives;
  Dataset test_negatives;
};

Corpus generate_corpus(const ExperimentConfig& config);

std::vector<ObjectInput> object_inputs(std::span<const InteractionImage> images);
std::vector<int> labels_of(std::span<const InteractionImage> images);

/// Scene seeds used for maps and cluster audits, disjoint from the corpus.
Scene audit_scene(const ExperimentConfig& config, int prototype, std::size_t index, bool object_canvas);

// ---- lambda sweep --------------------------------------------------------

struct DescriptorQuality {
  double c_sparse = 0.0;  // mean sparsity ratio over the evaluation set
  double mu_dia = 0.0;
  double bandwidth = 0.0;
  std::size_t clusters = 0;
  Purity purity;
};

/// Mean diameter and mean-shift purity of E over labelled images.
DescriptorQuality descriptor_quality(const CaeModel& model, std::span<const InteractionImage> images,
                                     std::span<const int> labels, double bandwidth = 0.0);

struct SweepRow {
  double lambda = 0.0;
  double c_err = 0.0;     // final training epoch, summed over the training set
  double c_sparse = 0.0;  // final training epoch, summed over the training set
  double mu_dia = 0.0;
  double purity_macro = 0.0;
  double purity_micro = 0.0;
  std::size_t clusters = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
};

/// Trains one autoencoder per lambda (needs >= 2 values including 0) and
/// scores it on the held-out images. A training abort marks its row
/// "failed" and the sweep continues. `on_model` sees every trained model.
std::vector<SweepRow> lambda_sweep(std::span<const InteractionImage> train, std::span<const InteractionImage> heldout,
                                   std::span<const int> labels, std::span<const double> lambdas,
                                   const CaeArchitecture& arch, const CaeTrainConfig& base, double bandwidth = 0.0,
                                   const std::function<void(const SweepRow&, const CaeModel&)>& on_model = {});

/// Header `lambda,c_err,c_sparse,mu_dia,purity_macro,purity_micro,seed,status`.
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);
/// Scatter of (C_sparse, mu_dia), one labelled point per lambda.
void write_sweep_svg(const std::filesystem::path& path, std::span<const SweepRow> rows);

// ---- audits ---------------------------------------------------------------

struct NormSeparation {
  std::size_t positives = 0;
  std::size_t negatives = 0;
  double mean_norm_positive = 0.0;
  double mean_norm_negative = 0.0;
  MannWhitney test;
  double mean_f_positive = 0.0;
  double mean_f_negative = 0.0;
};

NormSeparation norm_separation(const InferenceModel& model, const NormDensityPair& densities,
                               std::span<const ObjectInput> positives, std::span<const ObjectInput> negatives);

/// Mean IoU between decoded and true hand masks, both thresholded at 0.5.
double hand_mask_iou(const CaeModel& model, std::span<const InteractionImage> images);

struct RegionContrast {
  std::uint64_t scene_seed = 0;
  int prototype = 0;
  double grip = 0.0;   // share of f > 0.9 centers inside the grip box
  double blade = 0.0;  // same inside the blade box
};

struct ClusterSplit {
  std::uint64_t scene_seed = 0;
  int handle_cluster = -1;
  int bottom_cluster = -1;
  std::size_t clusters = 0;

  bool separated() const { return handle_cluster >= 0 && bottom_cluster >= 0 && handle_cluster != bottom_cluster; }
};

/// Prototypes with both a "grip" and a "blade" region.
std::vector<int> grip_tool_prototypes();
/// First prototype with both a "handle" and a "bottom" region.
int cup_prototype();

RegionContrast likelihood_region_contrast(const InferenceModel& model, const NormDensityPair& densities,
                                          const Scene& scene, std::size_t stride, LikelihoodMap* map = nullptr);
ClusterSplit cup_cluster_split(const InferenceModel& model, const Scene& scene, std::size_t stride,
                               double position_weight = -1.0, double bandwidth = 0.0, ClusterMap* map = nullptr);

/// Hit count of a per-item audit.
struct AuditCount {
  std::size_t hits = 0;
  std::size_t trials = 0;

  double fraction() const { return trials == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(trials); }
};

/// R(O) of each held-out object image is nearest (L2) to the centroid of its
/// own type among the per-type centroids of E over the training crops.
AuditCount centroid_assignment(const CaeModel& cae, const InferenceModel& model,
                               std::span<const InteractionImage> train, std::span<const InteractionImage> objects);

/// Hand-mask center of mass of D(R(O)) on each scene's canonical object crop
/// falls inside the scene's grip box.
AuditCount hand_in_grip(const CaeModel& cae, const InferenceModel& model, std::span<const Scene> scenes);

/// Scenes without a single window above the likelihood threshold.
AuditCount background_clean(const InferenceModel& model, const NormDensityPair& densities,
                            std::span<const Scene> scenes, std::size_t stride);

/// Each input is turned by +90 degrees and the rotation sweep should find
/// the undoing turn (270 degrees) within half a step of 22.5 degrees.
AuditCount rotation_recovery(const InferenceModel& model, const NormDensityPair& densities,
                             std::span<const ObjectInput> inputs, std::size_t n_angles = 16);

// ---- commands -------------------------------------------------------------

/// Files written by a command, relative to the output directory.
using ArtifactList = std::vector<std::filesystem::path>;

/// Merges the artifacts' SHA-256 digests (and optional item counts) into
/// <out>/manifest.json.
void update_manifest(const ExperimentConfig& config, std::string_view command, const ArtifactList& artifacts,
                     const std::map<std::string, std::size_t>& counts = {});
std::string sha256_file(const std::filesystem::path& path);

ArtifactList cmd_generate(const ExperimentConfig& config);
ArtifactList cmd_train_cae(const ExperimentConfig& config);
ArtifactList cmd_train_inference(const ExperimentConfig& config);
ArtifactList cmd_eval(const ExperimentConfig& config);
ArtifactList cmd_sweep_lambda(const ExperimentConfig& config);

struct InferOutcome {
  Descriptor descriptor;
  double f = 0.0;
  double angle = 0.0;
  ArtifactList artifacts;
};

/// Object image (32 x 32 PGM, or a dataset file plus index) -> descriptor,
/// decoded interaction image and likelihood.
InferOutcome cmd_infer(const ExperimentConfig& config, const std::filesystem::path& input, std::size_t index = 0);

/// Log sink for progress lines; defaults to stderr.
void set_log_sink(std::function<void(const std::string&)> sink);

}  // namespace idspace
