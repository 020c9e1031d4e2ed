#include "idspace/experiment.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numbers>
#include <numeric>
#include <sstream>

#include "idspace/errors.hpp"
#include "idspace/random.hpp"
#include "json.hpp"

namespace idspace {

namespace fs = std::filesystem;

namespace {

std::function<void(const std::string&)>& log_sink() {
  static std::function<void(const std::string&)> sink = [](const std::string& line) { std::cerr << line << '\n'; };
  return sink;
}

void log(const std::string& line) {
  if (log_sink()) log_sink()(line);
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  T value{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("invalid value '" + t + "' for " + std::string(key));
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("invalid boolean '" + t + "' for " + std::string(key));
}

std::vector<double> parse_list(std::string_view key, std::string_view text) {
  std::vector<double> out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) out.push_back(parse_number<double>(key, item));
  return out;
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Key table: one parser and one printer per field, in serialisation order.
struct Field {
  const char* key;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field number_field(const char* key, T ExperimentConfig::*member) {
  return {key, [key, member](ExperimentConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); },
          [member](const ExperimentConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*member);
            } else {
              return std::to_string(c.*member);
            }
          }};
}

const std::vector<Field>& fields() {
  using C = ExperimentConfig;
  static const std::vector<Field> table = {
      {"profile", [](C& c, std::string_view v) { c.profile = trim(v); }, [](const C& c) { return c.profile; }},
      number_field("seed", &C::seed),
      number_field("scenes", &C::scenes),
      number_field("crops_per_scene", &C::crops_per_scene),
      number_field("test_scenes", &C::test_scenes),
      number_field("calibration_scenes", &C::calibration_scenes),
      number_field("negatives", &C::negatives),
      number_field("heldout_negatives", &C::heldout_negatives),
      number_field("min_hand_fraction", &C::min_hand_fraction),
      number_field("crop_offset", &C::crop_offset),
      number_field("d", &C::d),
      number_field("beta", &C::beta),
      number_field("lambda", &C::lambda),
      number_field("lr", &C::lr),
      number_field("epochs", &C::epochs),
      number_field("batch", &C::batch),
      number_field("lr_decay", &C::lr_decay),
      number_field("decay_every", &C::decay_every),
      {"bounded_descriptor", [](C& c, std::string_view v) { c.bounded_descriptor = parse_bool("bounded_descriptor", v); },
       [](const C& c) { return std::string(c.bounded_descriptor ? "true" : "false"); }},
      number_field("inference_epochs", &C::inference_epochs),
      number_field("inference_lr", &C::inference_lr),
      number_field("inference_batch", &C::inference_batch),
      number_field("bandwidth", &C::bandwidth),
      number_field("map_stride", &C::map_stride),
      number_field("map_canvas", &C::map_canvas),
      number_field("map_scenes", &C::map_scenes),
      number_field("cluster_scenes", &C::cluster_scenes),
      number_field("position_weight", &C::position_weight),
      number_field("map_bandwidth", &C::map_bandwidth),
      number_field("rotation_angles", &C::rotation_angles),
      {"rotation_sweep", [](C& c, std::string_view v) { c.rotation_sweep = parse_bool("rotation_sweep", v); },
       [](const C& c) { return std::string(c.rotation_sweep ? "true" : "false"); }},
      {"sweep_lambdas", [](C& c, std::string_view v) { c.sweep_lambdas = parse_list("sweep_lambdas", v); },
       [](const C& c) {
         std::string s;
         for (std::size_t i = 0; i < c.sweep_lambdas.size(); ++i) s += (i ? "," : "") + format_double(c.sweep_lambdas[i]);
         return s;
       }},
      {"out", [](C& c, std::string_view v) { c.out = trim(v); }, [](const C& c) { return c.out.string(); }},
  };
  return table;
}

}  // namespace

void set_log_sink(std::function<void(const std::string&)> sink) { log_sink() = std::move(sink); }

// ---- configuration ----------------------------------------------------------

ExperimentConfig ExperimentConfig::from_profile(std::string_view name) {
  ExperimentConfig c;
  if (name == "paper") return c;
  if (name == "smoke") {
    c.profile = "smoke";
    c.scenes = 50;
    c.crops_per_scene = 4;
    c.test_scenes = 48;
    c.calibration_scenes = 24;
    c.negatives = 100;
    c.heldout_negatives = 24;
    c.d = 8;
    c.epochs = 5;
    c.inference_epochs = 5;
    c.map_scenes = 2;
    c.cluster_scenes = 2;
    c.map_stride = 8;
    c.sweep_lambdas = {0.0, 1.0};
    return c;
  }
  throw ConfigError("unknown profile '" + std::string(name) + "' (expected paper or smoke)");
}

void ExperimentConfig::set(std::string_view key, std::string_view value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + std::string(key) + "'");
}

void ExperimentConfig::load_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read config file " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    set(trim(std::string_view(line).substr(0, eq)), std::string_view(line).substr(eq + 1));
  }
}

std::string ExperimentConfig::serialize(bool with_out) const {
  std::string out;
  for (const auto& f : fields()) {
    if (!with_out && std::string_view(f.key) == "out") continue;
    out += std::string(f.key) + " = " + f.get(*this) + "\n";
  }
  return out;
}

std::vector<std::string> ExperimentConfig::keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.emplace_back(f.key);
  return out;
}

void ExperimentConfig::validate() const {
  if (scenes == 0 || crops_per_scene == 0) throw ConfigError("scenes and crops_per_scene must be positive");
  if (test_scenes == 0 || calibration_scenes == 0) throw ConfigError("held-out scene counts must be positive");
  if (negatives == 0 || heldout_negatives == 0) throw ConfigError("negative counts must be positive");
  if (min_hand_fraction < 0.0 || min_hand_fraction >= 1.0) throw ConfigError("min_hand_fraction must lie in [0, 1)");
  if (map_canvas < kImageSide) throw ConfigError("map_canvas must be at least 32");
  if (map_stride == 0) throw ConfigError("map_stride must be positive");
  if (rotation_angles == 0) throw ConfigError("rotation_angles must be positive");
  if (bandwidth < 0.0 || map_bandwidth < 0.0) throw ConfigError("bandwidths must be non-negative");
  if (inference_epochs < 0) throw ConfigError("inference_epochs must be non-negative");
  if (!(inference_lr > 0.0) || inference_batch == 0) throw ConfigError("invalid inference training settings");
  if (out.empty()) throw ConfigError("output directory must be set");
  if (sweep_lambdas.size() < 2 || std::find(sweep_lambdas.begin(), sweep_lambdas.end(), 0.0) == sweep_lambdas.end() ||
      std::any_of(sweep_lambdas.begin(), sweep_lambdas.end(), [](double l) { return !(l >= 0.0); })) {
    throw ConfigError("sweep_lambdas needs at least two non-negative values including 0");
  }
  cae_architecture().validate();
  cae_train_config().validate();
}

CaeArchitecture ExperimentConfig::cae_architecture() const {
  CaeArchitecture arch;
  arch.descriptor_dim = d;
  arch.bounded_descriptor = bounded_descriptor;
  return arch;
}

CaeTrainConfig ExperimentConfig::cae_train_config() const {
  CaeTrainConfig t;
  t.beta = beta;
  t.lambda = lambda;
  t.epochs = epochs;
  t.lr = lr;
  t.lr_decay = lr_decay;
  t.decay_every = decay_every;
  t.batch = batch;
  t.seed = seed;
  return t;
}

InferenceArchitecture ExperimentConfig::inference_architecture() const {
  InferenceArchitecture arch;
  arch.descriptor_dim = d;
  return arch;
}

InferenceTrainConfig ExperimentConfig::inference_train_config() const {
  InferenceTrainConfig t;
  t.epochs = inference_epochs;
  t.lr = inference_lr;
  t.batch = inference_batch;
  t.lr_decay = lr_decay;
  t.decay_every = decay_every;
  t.seed = mix_seed(seed, 0x1F);
  return t;
}

// ---- corpus -----------------------------------------------------------------

namespace {

// Independent seed streams per corpus part.
enum class Stream : std::uint64_t { Train = 1, Test = 2, Calibration = 3, Negatives = 4, Heldout = 5, TestNeg = 6, Audit = 7 };

// Audit-stream index ranges kept apart from the map scenes.
constexpr std::size_t kHandAuditOffset = 100000;
constexpr std::size_t kBackgroundAuditOffset = 200000;

std::uint64_t scene_seed(std::uint64_t seed, Stream stream, std::size_t index) {
  return mix_seed(mix_seed(seed, static_cast<std::uint64_t>(stream)), index);
}

}  // namespace

Corpus generate_corpus(const ExperimentConfig& config) {
  config.validate();
  Corpus corpus;
  const auto tag = [&](Dataset& d, Split split) {
    d.split = split;
    d.seed = config.seed;
  };
  for (Dataset* d : {&corpus.train, &corpus.train_objects, &corpus.negatives}) tag(*d, Split::Train);
  for (Dataset* d : {&corpus.test, &corpus.test_objects, &corpus.calibration, &corpus.calibration_objects,
                     &corpus.heldout_negatives, &corpus.test_negatives}) {
    tag(*d, Split::Test);
  }

  for (std::size_t i = 0; i < config.scenes; ++i) {
    const auto seed = scene_seed(config.seed, Stream::Train, i);
    const Scene scene = generate_scene(static_cast<int>(i % kPrototypeCount), seed);
    for (auto& crop : extract_subimages(scene, config.crops_per_scene, config.min_hand_fraction, seed, config.crop_offset)) {
      corpus.train_objects.items.push_back(object_view(scene, crop));
      corpus.train.items.push_back(std::move(crop));
    }
  }
  const auto held_out = [&](Stream stream, std::size_t count, Dataset& crops, Dataset& objects) {
    for (std::size_t i = 0; i < count; ++i) {
      const Scene scene = generate_scene(static_cast<int>(i % kPrototypeCount), scene_seed(config.seed, stream, i));
      InteractionImage crop = canonical_crop(scene);
      objects.items.push_back(object_view(scene, crop));
      crops.items.push_back(std::move(crop));
    }
  };
  held_out(Stream::Test, config.test_scenes, corpus.test, corpus.test_objects);
  held_out(Stream::Calibration, config.calibration_scenes, corpus.calibration, corpus.calibration_objects);
  corpus.negatives.items = make_negative_images(mix_seed(config.seed, static_cast<std::uint64_t>(Stream::Negatives)),
                                                config.negatives);
  corpus.heldout_negatives.items = make_negative_images(
      mix_seed(config.seed, static_cast<std::uint64_t>(Stream::Heldout)), config.heldout_negatives);
  corpus.test_negatives.items = make_negative_images(
      mix_seed(config.seed, static_cast<std::uint64_t>(Stream::TestNeg)), config.heldout_negatives);
  return corpus;
}

std::vector<ObjectInput> object_inputs(std::span<const InteractionImage> images) {
  std::vector<ObjectInput> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(object_input(image));
  return out;
}

std::vector<int> labels_of(std::span<const InteractionImage> images) {
  std::vector<int> out;
  out.reserve(images.size());
  for (const auto& image : images) out.push_back(image.label);
  return out;
}

Scene audit_scene(const ExperimentConfig& config, int prototype, std::size_t index, bool object_canvas) {
  SceneOptions options;
  if (object_canvas) options.height = options.width = config.map_canvas;
  return generate_scene(prototype, scene_seed(config.seed, Stream::Audit, index * kPrototypeCount +
                                                                            static_cast<std::size_t>(prototype)),
                        options);
}

// ---- lambda sweep -------------------------------------------------------------

DescriptorQuality descriptor_quality(const CaeModel& model, std::span<const InteractionImage> images,
                                     std::span<const int> labels, double bandwidth) {
  if (images.size() != labels.size()) throw ConfigError("labels do not match images");
  const std::vector<Vector> points = columns_of(encode_batch(model, images));
  DescriptorQuality q;
  for (const auto& p : points) q.c_sparse += sparsity_ratio<double>(p);
  q.c_sparse /= static_cast<double>(points.size());
  q.mu_dia = mean_diameter(points, labels, kPrototypeCount);
  q.bandwidth = bandwidth > 0.0 ? bandwidth : default_bandwidth(points);
  MeanShiftOptions options;
  options.bandwidth = q.bandwidth;
  const ClusterAssignment clusters = mean_shift(points, options);
  for (const auto& w : clusters.warnings) log("mean shift: " + w);
  q.clusters = clusters.cluster_count();
  q.purity = purity(clusters, labels);
  return q;
}

std::vector<SweepRow> lambda_sweep(std::span<const InteractionImage> train, std::span<const InteractionImage> heldout,
                                   std::span<const int> labels, std::span<const double> lambdas,
                                   const CaeArchitecture& arch, const CaeTrainConfig& base, double bandwidth,
                                   const std::function<void(const SweepRow&, const CaeModel&)>& on_model) {
  if (lambdas.size() < 2 || std::find(lambdas.begin(), lambdas.end(), 0.0) == lambdas.end()) {
    throw ConfigError("a lambda sweep needs at least two values including 0");
  }
  std::vector<double> ordered(lambdas.begin(), lambdas.end());
  std::sort(ordered.begin(), ordered.end());
  std::vector<SweepRow> rows;
  for (double lambda : ordered) {
    SweepRow row;
    row.lambda = lambda;
    row.seed = base.seed;
    CaeTrainConfig config = base;
    config.lambda = lambda;
    try {
      const CaeTrainResult result = train_cae(train, arch, config);
      row.c_err = result.report.epochs.back().c_err;
      row.c_sparse = result.report.epochs.back().c_sparse;
      const DescriptorQuality q = descriptor_quality(result.model, heldout, labels, bandwidth);
      row.mu_dia = q.mu_dia;
      row.purity_macro = q.purity.macro;
      row.purity_micro = q.purity.micro;
      row.clusters = q.clusters;
      if (on_model) on_model(row, result.model);
    } catch (const NumericalError& e) {
      row.status = "failed";
      log("lambda " + format_double(lambda) + " aborted: " + e.what());
    }
    log("lambda " + format_double(lambda) + ": c_sparse " + format_double(row.c_sparse) + ", mu_dia " +
        format_double(row.mu_dia) + ", purity " + format_double(row.purity_macro) + " (" + row.status + ")");
    rows.push_back(row);
  }
  return rows;
}

namespace {

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  return os;
}

void finish(std::ofstream& os, const fs::path& path) {
  os.flush();
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

void write_sweep_csv(const fs::path& path, std::span<const SweepRow> rows) {
  std::ofstream os = open_output(path);
  os << "lambda,c_err,c_sparse,mu_dia,purity_macro,purity_micro,seed,status\n" << std::setprecision(9);
  for (const auto& r : rows) {
    os << r.lambda << ',' << r.c_err << ',' << r.c_sparse << ',' << r.mu_dia << ',' << r.purity_macro << ','
       << r.purity_micro << ',' << r.seed << ',' << r.status << '\n';
  }
  finish(os, path);
}

void write_sweep_svg(const fs::path& path, std::span<const SweepRow> rows) {
  constexpr double kW = 480.0, kH = 360.0, kPad = 50.0;
  double x_max = 1e-12, y_max = 1e-12;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    x_max = std::max(x_max, r.c_sparse);
    y_max = std::max(y_max, r.mu_dia);
  }
  std::ofstream os = open_output(path);
  os << std::setprecision(6);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<line x1=\"" << kPad << "\" y1=\"" << kH - kPad << "\" x2=\"" << kW - 10 << "\" y2=\"" << kH - kPad
     << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << kPad << "\" y1=\"10\" x2=\"" << kPad << "\" y2=\"" << kH - kPad << "\" stroke=\"black\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12 << "\" font-size=\"12\">C_sparse</text>\n"
     << "<text x=\"8\" y=\"" << kH / 2 << "\" font-size=\"12\">mu_dia</text>\n";
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    const double x = kPad + (kW - kPad - 20) * r.c_sparse / x_max;
    const double y = kH - kPad - (kH - kPad - 20) * r.mu_dia / y_max;
    os << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"4\" fill=\"steelblue\"/>\n"
       << "<text x=\"" << x + 6 << "\" y=\"" << y - 6 << "\" font-size=\"10\">lambda=" << r.lambda << "</text>\n";
  }
  os << "</svg>\n";
  finish(os, path);
}

// ---- audits -------------------------------------------------------------------

NormSeparation norm_separation(const InferenceModel& model, const NormDensityPair& densities,
                               std::span<const ObjectInput> positives, std::span<const ObjectInput> negatives) {
  NormSeparation s;
  const std::vector<double> pos = descriptor_norms(model, positives);
  const std::vector<double> neg = descriptor_norms(model, negatives);
  s.positives = pos.size();
  s.negatives = neg.size();
  s.test = mann_whitney_u(pos, neg);
  for (double n : pos) {
    s.mean_norm_positive += n;
    s.mean_f_positive += densities.likelihood(n);
  }
  for (double n : neg) {
    s.mean_norm_negative += n;
    s.mean_f_negative += densities.likelihood(n);
  }
  s.mean_norm_positive /= static_cast<double>(pos.size());
  s.mean_f_positive /= static_cast<double>(pos.size());
  s.mean_norm_negative /= static_cast<double>(neg.size());
  s.mean_f_negative /= static_cast<double>(neg.size());
  return s;
}

double hand_mask_iou(const CaeModel& model, std::span<const InteractionImage> images) {
  if (images.empty()) throw DomainError("IoU over an empty set");
  const Matrix<float> decoded = decode_batch(model, encode_batch(model, images));
  double total = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto truth = images[i].channel(Channel::HandMask);
    const float* est = decoded.col(static_cast<Eigen::Index>(i)).data() + kChannelPixels;
    std::size_t inter = 0, uni = 0;
    for (std::size_t k = 0; k < kChannelPixels; ++k) {
      const bool a = truth[k] >= 0.5f;
      const bool b = est[k] >= 0.5f;
      inter += a && b;
      uni += a || b;
    }
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(images.size());
}

namespace {

std::vector<std::string> region_names(int prototype) {
  std::vector<std::string> names;
  for (const auto& r : generate_scene(prototype, 0).regions) names.push_back(r.name);
  return names;
}

bool has_regions(int prototype, std::initializer_list<const char*> wanted) {
  const std::vector<std::string> names = region_names(prototype);
  return std::all_of(wanted.begin(), wanted.end(),
                     [&](const char* w) { return std::find(names.begin(), names.end(), w) != names.end(); });
}

}  // namespace

std::vector<int> grip_tool_prototypes() {
  std::vector<int> out;
  for (int p = 0; p < kPrototypeCount; ++p) {
    if (has_regions(p, {"grip", "blade"})) out.push_back(p);
  }
  return out;
}

int cup_prototype() {
  for (int p = 0; p < kPrototypeCount; ++p) {
    if (has_regions(p, {"handle", "bottom"})) return p;
  }
  throw ConfigError("no prototype has handle and bottom regions");
}

RegionContrast likelihood_region_contrast(const InferenceModel& model, const NormDensityPair& densities,
                                          const Scene& scene, std::size_t stride, LikelihoodMap* map) {
  const RegionBox* grip = scene.region("grip");
  const RegionBox* blade = scene.region("blade");
  if (grip == nullptr || blade == nullptr) throw ConfigError("scene has no grip/blade regions");
  LikelihoodMap m = likelihood_map(model, densities, scene, stride);
  RegionContrast c{scene.seed, scene.prototype, m.fraction_above(*grip), m.fraction_above(*blade)};
  if (map != nullptr) *map = std::move(m);
  return c;
}

ClusterSplit cup_cluster_split(const InferenceModel& model, const Scene& scene, std::size_t stride,
                               double position_weight, double bandwidth, ClusterMap* map) {
  const RegionBox* handle = scene.region("handle");
  const RegionBox* bottom = scene.region("bottom");
  if (handle == nullptr || bottom == nullptr) throw ConfigError("scene has no handle/bottom regions");
  ClusterMap m = position_descriptor_cluster(model, scene, stride, position_weight, bandwidth);
  ClusterSplit s;
  s.scene_seed = scene.seed;
  s.handle_cluster = m.majority_in(*handle);
  s.bottom_cluster = m.majority_in(*bottom);
  s.clusters = m.cluster.empty() ? 0 : static_cast<std::size_t>(*std::max_element(m.cluster.begin(), m.cluster.end())) + 1;
  if (map != nullptr) *map = std::move(m);
  return s;
}

AuditCount centroid_assignment(const CaeModel& cae, const InferenceModel& model,
                               std::span<const InteractionImage> train, std::span<const InteractionImage> objects) {
  if (train.empty() || objects.empty()) throw DomainError("centroid audit needs training and held-out images");
  const Matrix<float> e = encode_batch(cae, train);
  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(e.rows(), kPrototypeCount);
  std::vector<std::size_t> counts(kPrototypeCount, 0);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto label = static_cast<std::size_t>(train[i].label);
    centroids.col(static_cast<Eigen::Index>(label)) += e.col(static_cast<Eigen::Index>(i)).cast<double>();
    ++counts[label];
  }
  for (std::size_t t = 0; t < counts.size(); ++t) {
    if (counts[t] == 0) throw DomainError("no training crops of type " + std::to_string(t));
    centroids.col(static_cast<Eigen::Index>(t)) /= static_cast<double>(counts[t]);
  }
  const Matrix<float> r = infer_batch(model, object_inputs(objects));
  AuditCount a;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    Eigen::Index nearest = 0;
    (centroids.colwise() - r.col(static_cast<Eigen::Index>(i)).cast<double>()).colwise().squaredNorm().minCoeff(&nearest);
    a.hits += nearest == objects[i].label;
    ++a.trials;
  }
  return a;
}

AuditCount hand_in_grip(const CaeModel& cae, const InferenceModel& model, std::span<const Scene> scenes) {
  AuditCount a;
  for (const Scene& scene : scenes) {
    const RegionBox* grip = scene.region("grip");
    if (grip == nullptr) throw ConfigError("scene has no grip region");
    const InteractionImage crop = canonical_crop(scene);
    const InteractionImage decoded =
        infer_interaction_image(cae, model, object_input(object_view(scene, crop)));
    const auto hand = decoded.channel(Channel::HandMask);
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t y = 0; y < kImageSide; ++y) {
      for (std::size_t x = 0; x < kImageSide; ++x) {
        const double w = hand[y * kImageSide + x];
        mass += w;
        mx += w * (static_cast<double>(x) + 0.5);
        my += w * (static_cast<double>(y) + 0.5);
      }
    }
    a.hits += mass > 0.0 && grip->contains(crop.pose.tx + mx / mass, crop.pose.ty + my / mass);
    ++a.trials;
  }
  return a;
}

AuditCount background_clean(const InferenceModel& model, const NormDensityPair& densities,
                            std::span<const Scene> scenes, std::size_t stride) {
  AuditCount a;
  for (const Scene& scene : scenes) {
    const LikelihoodMap map = likelihood_map(model, densities, scene, stride);
    a.hits += std::none_of(map.f.begin(), map.f.end(), [&](double f) { return f > map.threshold; });
    ++a.trials;
  }
  return a;
}

AuditCount rotation_recovery(const InferenceModel& model, const NormDensityPair& densities,
                             std::span<const ObjectInput> inputs, std::size_t n_angles) {
  constexpr double kTarget = 1.5 * std::numbers::pi;
  constexpr double kTolerance = std::numbers::pi / 8.0 + 1e-9;
  AuditCount a;
  for (const ObjectInput& input : inputs) {
    const RotationResult r = rotation_sweep_infer(model, densities, rotate_input(input, 0.5 * std::numbers::pi), n_angles);
    const double gap = std::abs(std::remainder(r.angle - kTarget, 2.0 * std::numbers::pi));
    a.hits += gap <= kTolerance;
    ++a.trials;
  }
  return a;
}

// ---- manifest -------------------------------------------------------------------

std::string sha256_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("SHA-256 unavailable");
  std::vector<char> buffer(1 << 16);
  while (is) {
    is.read(buffer.data(), static_cast<std::streamsize>(buffer.size()));
    if (is.gcount() > 0) EVP_DigestUpdate(ctx.get(), buffer.data(), static_cast<std::size_t>(is.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &length);
  std::ostringstream hex;
  for (unsigned int i = 0; i < length; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void update_manifest(const ExperimentConfig& config, std::string_view command, const ArtifactList& artifacts,
                     const std::map<std::string, std::size_t>& counts) {
  const fs::path path = config.out / "manifest.json";
  nlohmann::json manifest = nlohmann::json::object();
  if (fs::exists(path)) {
    std::ifstream is(path);
    try {
      manifest = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("unreadable manifest " + path.string() + ": " + e.what());
    }
  }
  manifest["profile"] = config.profile;
  manifest["seed"] = config.seed;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& a : artifacts) {
    const fs::path full = config.out / a;
    nlohmann::json entry;
    entry["sha256"] = sha256_file(full);
    entry["bytes"] = fs::file_size(full);
    manifest["artifacts"][a.generic_string()] = entry;
    list.push_back(a.generic_string());
  }
  manifest["commands"][std::string(command)] = list;
  for (const auto& [name, n] : counts) manifest["counts"][name] = n;
  std::ofstream os = open_output(path);
  os << manifest.dump(2) << '\n';
  finish(os, path);
}

// ---- commands -------------------------------------------------------------------

namespace {

const fs::path kDataDir = "data";
const char* const kDatasetNames[] = {"train",        "train_objects",     "test",
                                     "test_objects", "calibration",       "calibration_objects",
                                     "negatives",    "heldout_negatives", "test_negatives"};

std::array<Dataset*, 9> corpus_parts(Corpus& c) {
  return {&c.train,        &c.train_objects,     &c.test,
          &c.test_objects, &c.calibration,       &c.calibration_objects,
          &c.negatives,    &c.heldout_negatives, &c.test_negatives};
}

fs::path dataset_path(const std::string& name) { return kDataDir / (name + ".iids"); }

Dataset require_dataset(const ExperimentConfig& config, const std::string& name) {
  const fs::path path = config.out / dataset_path(name);
  if (!fs::exists(path)) throw IoError("missing dataset: expected " + path.string() + " (run generate first)");
  return load_dataset(path);
}

Corpus load_corpus(const ExperimentConfig& config) {
  Corpus c;
  const auto parts = corpus_parts(c);
  for (std::size_t i = 0; i < parts.size(); ++i) *parts[i] = require_dataset(config, kDatasetNames[i]);
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os = open_output(path);
  os << text;
  finish(os, path);
}

ArtifactList write_config(const ExperimentConfig& config) {
  write_text(config.out / "config.txt", config.serialize(false));
  return {"config.txt"};
}

CaeModel require_cae(const ExperimentConfig& config) {
  const fs::path dir = config.out / "cae";
  if (!fs::exists(dir / "encoder.idsm")) throw IoError("missing model: expected " + (dir / "encoder.idsm").string());
  return load_cae(dir);
}

InferenceModel require_inference(const ExperimentConfig& config, const CaeModel& cae) {
  const fs::path path = config.out / "inference" / "model.idsm";
  if (!fs::exists(path)) throw IoError("missing model: expected " + path.string());
  InferenceModel model = load_inference(path);
  if (model.descriptor_dim() != cae.decoder.input_size()) {
    throw ConfigError("inference model emits d = " + std::to_string(model.descriptor_dim()) +
                      " but the autoencoder uses d = " + std::to_string(cae.decoder.input_size()));
  }
  return model;
}

NormDensityPair calibrate(const InferenceModel& model, const Corpus& corpus) {
  return estimate_norm_densities(model, object_inputs(corpus.calibration_objects.items),
                                 object_inputs(corpus.heldout_negatives.items));
}

void write_densities(const fs::path& path, const NormDensityPair& densities) {
  std::ofstream os = open_output(path);
  os << "population,norm,density,bandwidth\n" << std::setprecision(9);
  for (const auto& [name, d] : {std::pair{"positive", &densities.positive}, std::pair{"negative", &densities.negative}}) {
    for (std::size_t i = 0; i < d->grid.size(); ++i) {
      os << name << ',' << d->grid[i] << ',' << d->values[i] << ',' << d->bandwidth << '\n';
    }
  }
  finish(os, path);
}

std::string lambda_tag(double lambda) {
  std::ostringstream os;
  os << "lambda_" << lambda;
  return os.str();
}

}  // namespace

ArtifactList cmd_generate(const ExperimentConfig& config) {
  Corpus corpus = generate_corpus(config);
  ArtifactList artifacts = write_config(config);
  const auto parts = corpus_parts(corpus);
  std::map<std::string, std::size_t> counts{{"scenes", config.scenes}};
  fs::create_directories(config.out / kDataDir);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const fs::path rel = dataset_path(kDatasetNames[i]);
    save_dataset(*parts[i], config.out / rel);
    artifacts.push_back(rel);
    counts[kDatasetNames[i]] = parts[i]->items.size();
    log(std::string(kDatasetNames[i]) + ": " + std::to_string(parts[i]->items.size()) + " images");
  }
  update_manifest(config, "generate", artifacts, counts);
  return artifacts;
}

ArtifactList cmd_train_cae(const ExperimentConfig& config) {
  config.validate();
  const Dataset train = require_dataset(config, "train");
  CaeTrainConfig t = config.cae_train_config();
  t.on_epoch = [](const EpochLog& e) {
    log("cae epoch " + std::to_string(e.epoch) + ": C_err " + format_double(e.c_err) + ", C_sparse " +
        format_double(e.c_sparse));
  };
  ArtifactList artifacts = write_config(config);
  try {
    const CaeTrainResult result = train_cae(train.items, config.cae_architecture(), t);
    save_cae(result.model, config.out / "cae");
    result.report.write_csv(config.out / "cae" / "train.csv");
  } catch (const TrainingAborted& e) {
    save_cae(e.checkpoint, config.out / "cae_checkpoint");
    e.report.write_csv(config.out / "cae_checkpoint" / "train.csv");
    update_manifest(config, "train-cae",
                    {"config.txt", "cae_checkpoint/encoder.idsm", "cae_checkpoint/decoder.idsm", "cae_checkpoint/train.csv"});
    throw;
  }
  artifacts.insert(artifacts.end(), {"cae/encoder.idsm", "cae/decoder.idsm", "cae/train.csv"});
  update_manifest(config, "train-cae", artifacts);
  return artifacts;
}

ArtifactList cmd_train_inference(const ExperimentConfig& config) {
  config.validate();
  const CaeModel cae = require_cae(config);
  if (cae.decoder.input_size() != config.d) {
    throw ConfigError("config d = " + std::to_string(config.d) + " but the trained autoencoder uses d = " +
                      std::to_string(cae.decoder.input_size()));
  }
  const Corpus corpus = load_corpus(config);
  const Matrix<float> targets = encode_batch(cae, corpus.train.items);
  InferenceTrainConfig t = config.inference_train_config();
  t.on_epoch = [](const InferenceEpochLog& e) {
    log("inference epoch " + std::to_string(e.epoch) + ": loss " + format_double(e.loss));
  };
  const InferenceTrainResult result =
      train_inference(object_inputs(corpus.train_objects.items), targets, object_inputs(corpus.negatives.items),
                      config.inference_architecture(), t);
  ArtifactList artifacts = write_config(config);
  fs::create_directories(config.out / "inference");
  save_inference(result.model, config.out / "inference" / "model.idsm");
  result.report.write_csv(config.out / "inference" / "train.csv");
  write_densities(config.out / "inference" / "densities.csv", calibrate(result.model, corpus));
  artifacts.insert(artifacts.end(), {"inference/model.idsm", "inference/train.csv", "inference/densities.csv"});
  update_manifest(config, "train-inference", artifacts);
  return artifacts;
}

ArtifactList cmd_eval(const ExperimentConfig& config) {
  config.validate();
  const CaeModel cae = require_cae(config);
  const InferenceModel model = require_inference(config, cae);
  const Corpus corpus = load_corpus(config);
  const fs::path dir = config.out / "eval";
  fs::create_directories(dir / "maps");
  ArtifactList artifacts = write_config(config);

  // Descriptor-space quality on the held-out crops.
  const std::vector<int> labels = labels_of(corpus.test.items);
  const DescriptorQuality q = descriptor_quality(cae, corpus.test.items, labels, config.bandwidth);
  {
    std::ofstream os = open_output(dir / "purity.csv");
    os << "lambda,n,bandwidth,clusters,purity_macro,purity_micro,mu_dia,c_sparse_mean\n" << std::setprecision(9);
    os << config.lambda << ',' << labels.size() << ',' << q.bandwidth << ',' << q.clusters << ',' << q.purity.macro
       << ',' << q.purity.micro << ',' << q.mu_dia << ',' << q.c_sparse << '\n';
    finish(os, dir / "purity.csv");
    artifacts.push_back("eval/purity.csv");
  }

  // Two highest-variance descriptor dimensions with labels.
  {
    const Matrix<float> e = encode_batch(cae, corpus.test.items);
    const Eigen::VectorXd mean = e.cast<double>().rowwise().mean();
    const Eigen::VectorXd var = (e.cast<double>().colwise() - mean).array().square().rowwise().mean();
    std::vector<Eigen::Index> dims(static_cast<std::size_t>(var.size()));
    std::iota(dims.begin(), dims.end(), Eigen::Index{0});
    std::stable_sort(dims.begin(), dims.end(), [&](Eigen::Index a, Eigen::Index b) { return var(a) > var(b); });
    const Eigen::Index a = dims[0];
    const Eigen::Index b = dims.size() > 1 ? dims[1] : dims[0];
    std::ofstream os = open_output(dir / "dims.csv");
    os << "label,prototype,dim_" << a << ",dim_" << b << '\n' << std::setprecision(9);
    for (Eigen::Index i = 0; i < e.cols(); ++i) {
      const int label = labels[static_cast<std::size_t>(i)];
      os << label << ',' << prototype_name(label) << ',' << e(a, i) << ',' << e(b, i) << '\n';
    }
    finish(os, dir / "dims.csv");
    artifacts.push_back("eval/dims.csv");

    // Scatter coloured by type, hue spread evenly over the prototypes.
    const float xmin = e.row(a).minCoeff(), xmax = e.row(a).maxCoeff();
    const float ymin = e.row(b).minCoeff(), ymax = e.row(b).maxCoeff();
    const auto scale = [](float v, float lo, float hi, double px) {
      return 20.0 + px * (hi > lo ? (v - lo) / (hi - lo) : 0.5);
    };
    std::ofstream svg = open_output(dir / "dims.svg");
    svg << std::setprecision(6) << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"440\" height=\"440\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (Eigen::Index i = 0; i < e.cols(); ++i) {
      const int label = labels[static_cast<std::size_t>(i)];
      svg << "<circle cx=\"" << scale(e(a, i), xmin, xmax, 400) << "\" cy=\"" << 420 - scale(e(b, i), ymin, ymax, 400)
          << "\" r=\"2\" fill=\"hsl(" << 360 * label / kPrototypeCount << ",70%,45%)\"/>\n";
    }
    svg << "</svg>\n";
    finish(svg, dir / "dims.svg");
    artifacts.push_back("eval/dims.svg");
  }

  // Reconstruction and PSNR.
  const std::size_t n_pairs = std::min(corpus.train.items.size(), corpus.test.items.size());
  {
    const std::size_t n = std::min<std::size_t>(200, corpus.train.items.size());
    const double iou = hand_mask_iou(cae, std::span(corpus.train.items).first(n));
    std::ofstream os = open_output(dir / "reconstruction.csv");
    os << "n,mean_hand_iou\n" << std::setprecision(9) << n << ',' << iou << '\n';
    finish(os, dir / "reconstruction.csv");
    artifacts.push_back("eval/reconstruction.csv");
  }
  {
    const auto pairs_of = [&](const Dataset& crops, const Dataset& objects) {
      std::vector<PsnrPair> pairs;
      for (std::size_t i = 0; i < n_pairs; ++i) pairs.push_back({object_input(objects.items[i]), crops.items[i]});
      return pairs;
    };
    const std::vector<std::pair<std::string, PsnrSummary>> rows = {
        {"train", psnr_eval(cae, model, pairs_of(corpus.train, corpus.train_objects))},
        {"test", psnr_eval(cae, model, pairs_of(corpus.test, corpus.test_objects))}};
    write_psnr_csv(dir / "psnr.csv", rows);
    artifacts.push_back("eval/psnr.csv");
  }

  // Norm separation on held-out positives and negatives.
  const NormDensityPair densities = calibrate(model, corpus);
  {
    const NormSeparation s = norm_separation(model, densities, object_inputs(corpus.test_objects.items),
                                             object_inputs(corpus.test_negatives.items));
    std::ofstream os = open_output(dir / "separation.csv");
    os << "positives,negatives,mean_norm_positive,mean_norm_negative,u,z,p_greater,mean_f_positive,mean_f_negative\n"
       << std::setprecision(9) << s.positives << ',' << s.negatives << ',' << s.mean_norm_positive << ','
       << s.mean_norm_negative << ',' << s.test.u << ',' << s.test.z << ',' << s.test.p_greater << ','
       << s.mean_f_positive << ',' << s.mean_f_negative << '\n';
    finish(os, dir / "separation.csv");
    artifacts.push_back("eval/separation.csv");
  }

  // Likelihood maps on grip tools and part-wise clustering on cups.
  {
    const std::vector<int> tools = grip_tool_prototypes();
    std::ofstream os = open_output(dir / "likelihood_regions.csv");
    os << "scene,prototype,scene_seed,grip_fraction,blade_fraction\n" << std::setprecision(9);
    for (std::size_t k = 0; k < config.map_scenes; ++k) {
      const int proto = tools[k % tools.size()];
      const Scene scene = audit_scene(config, proto, k, true);
      LikelihoodMap map;
      const RegionContrast c = likelihood_region_contrast(model, densities, scene, config.map_stride, &map);
      os << k << ',' << prototype_name(proto) << ',' << c.scene_seed << ',' << c.grip << ',' << c.blade << '\n';
      const std::string stem = "maps/likelihood_" + std::to_string(k);
      map.write_pgm(dir / (stem + ".pgm"));
      map.write_csv(dir / (stem + ".csv"));
      write_pgm(dir / ("maps/scene_" + std::to_string(k) + ".pgm"), scene.object_appearance, scene.width, scene.height);
      artifacts.insert(artifacts.end(), {"eval/" + stem + ".pgm", "eval/" + stem + ".csv",
                                         "eval/maps/scene_" + std::to_string(k) + ".pgm"});
    }
    finish(os, dir / "likelihood_regions.csv");
    artifacts.push_back("eval/likelihood_regions.csv");
  }
  {
    const int cup = cup_prototype();
    std::ofstream os = open_output(dir / "cluster_regions.csv");
    os << "scene,scene_seed,handle_cluster,bottom_cluster,clusters,separated\n";
    for (std::size_t k = 0; k < config.cluster_scenes; ++k) {
      const Scene scene = audit_scene(config, cup, k, true);
      ClusterMap map;
      const ClusterSplit s = cup_cluster_split(model, scene, config.map_stride, config.position_weight, config.map_bandwidth, &map);
      os << k << ',' << s.scene_seed << ',' << s.handle_cluster << ',' << s.bottom_cluster << ',' << s.clusters << ','
         << (s.separated() ? 1 : 0) << '\n';
      const std::string stem = "maps/clusters_" + std::to_string(k);
      map.write_pgm(dir / (stem + ".pgm"));
      map.write_csv(dir / (stem + ".csv"));
      artifacts.insert(artifacts.end(), {"eval/" + stem + ".pgm", "eval/" + stem + ".csv"});
    }
    finish(os, dir / "cluster_regions.csv");
    artifacts.push_back("eval/cluster_regions.csv");
  }
  // Per-item audits of the inference model.
  {
    const std::vector<int> tools = grip_tool_prototypes();
    std::vector<Scene> grip_scenes, empty_scenes;
    for (std::size_t k = 0; k < config.map_scenes; ++k) {
      grip_scenes.push_back(audit_scene(config, tools[k % tools.size()], kHandAuditOffset + k, false));
      SceneOptions options;
      options.height = options.width = config.map_canvas;
      empty_scenes.push_back(background_scene(scene_seed(config.seed, Stream::Audit, kBackgroundAuditOffset + k), options));
    }
    const std::vector<std::pair<const char*, AuditCount>> rows = {
        {"centroid_assignment", centroid_assignment(cae, model, corpus.train.items, corpus.test_objects.items)},
        {"hand_in_grip", hand_in_grip(cae, model, grip_scenes)},
        {"background_clean", background_clean(model, densities, empty_scenes, config.map_stride)},
        {"rotation_recovery", rotation_recovery(model, densities, object_inputs(corpus.test_objects.items),
                                                config.rotation_angles)},
    };
    std::ofstream os = open_output(dir / "audits.csv");
    os << "audit,hits,trials,fraction\n" << std::setprecision(9);
    for (const auto& [name, a] : rows) os << name << ',' << a.hits << ',' << a.trials << ',' << a.fraction() << '\n';
    finish(os, dir / "audits.csv");
    artifacts.push_back("eval/audits.csv");
  }
  update_manifest(config, "eval", artifacts);
  return artifacts;
}

ArtifactList cmd_sweep_lambda(const ExperimentConfig& config) {
  config.validate();
  const Dataset train = require_dataset(config, "train");
  const Dataset test = require_dataset(config, "test");
  ArtifactList artifacts = write_config(config);
  const std::vector<int> labels = labels_of(test.items);
  const auto rows = lambda_sweep(train.items, test.items, labels, config.sweep_lambdas, config.cae_architecture(),
                                 config.cae_train_config(), config.bandwidth, [&](const SweepRow& row, const CaeModel& m) {
                                   const fs::path rel = fs::path("sweep") / lambda_tag(row.lambda);
                                   save_cae(m, config.out / rel);
                                   artifacts.push_back(rel / "encoder.idsm");
                                   artifacts.push_back(rel / "decoder.idsm");
                                 });
  write_sweep_csv(config.out / "sweep" / "sweep.csv", rows);
  write_sweep_svg(config.out / "sweep" / "sweep.svg", rows);
  artifacts.insert(artifacts.end(), {"sweep/sweep.csv", "sweep/sweep.svg"});
  update_manifest(config, "sweep-lambda", artifacts);
  return artifacts;
}

InferOutcome cmd_infer(const ExperimentConfig& config, const fs::path& input, std::size_t index) {
  config.validate();
  const CaeModel cae = require_cae(config);
  const InferenceModel model = require_inference(config, cae);
  ObjectInput object{};
  if (input.extension() == ".pgm") {
    const GrayImage image = read_pgm(input);
    if (image.width != kImageSide || image.height != kImageSide) {
      throw ConfigError("object image must be 32x32, got " + std::to_string(image.width) + "x" +
                        std::to_string(image.height));
    }
    std::copy(image.values.begin(), image.values.end(), object.begin());
  } else {
    const Dataset d = load_dataset(input);
    if (index >= d.items.size()) throw ConfigError("index " + std::to_string(index) + " beyond " + input.string());
    object = object_input(d.items[index]);
  }
  const Corpus corpus = load_corpus(config);
  const NormDensityPair densities = calibrate(model, corpus);

  InferOutcome outcome;
  if (config.rotation_sweep) {
    const RotationResult r = rotation_sweep_infer(model, densities, object, config.rotation_angles);
    outcome.descriptor = r.descriptor;
    outcome.f = r.f;
    outcome.angle = r.angle;
    object = rotate_input(object, r.angle);
  } else {
    outcome.descriptor = infer_descriptor(model, object);
    outcome.f = densities.likelihood(outcome.descriptor.norm());
  }
  const InteractionImage decoded = decode(cae, outcome.descriptor);
  const fs::path dir = config.out / "infer";
  fs::create_directories(dir);
  write_ppm(dir / "decoded.ppm", decoded);
  {
    std::ofstream os = open_output(dir / "result.csv");
    os << "f,angle,norm";
    for (std::size_t i = 0; i < outcome.descriptor.size(); ++i) os << ",e" << i;
    os << '\n' << std::setprecision(9) << outcome.f << ',' << outcome.angle << ',' << outcome.descriptor.norm();
    for (float v : outcome.descriptor.values) os << ',' << v;
    os << '\n';
    finish(os, dir / "result.csv");
  }
  outcome.artifacts = {"infer/decoded.ppm", "infer/result.csv"};
  update_manifest(config, "infer", outcome.artifacts);
  return outcome;
}

}  // namespace idspace
