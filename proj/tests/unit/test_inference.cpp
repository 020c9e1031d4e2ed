#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "idspace/errors.hpp"
#include "idspace/experiment.hpp"
#include "idspace/inference.hpp"

using namespace idspace;

namespace {

constexpr std::size_t kD = 8;

InferenceArchitecture small_arch() {
  InferenceArchitecture a;
  a.descriptor_dim = kD;
  return a;
}

struct Pairs {
  std::vector<ObjectInput> positives;
  Matrix<float> targets;
  std::vector<ObjectInput> negatives;
};

// Object views of canonical crops; each type regresses onto its own fixed
// random descriptor of norm about 3, so the mapping is learnable.
Pairs make_pairs(std::size_t n, std::size_t negatives) {
  std::mt19937_64 gen(4);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  Matrix<float> prototypes(static_cast<Eigen::Index>(kD), kPrototypeCount);
  for (Eigen::Index i = 0; i < prototypes.size(); ++i) prototypes.data()[i] = normal(gen);
  Pairs p;
  p.targets.resize(static_cast<Eigen::Index>(kD), static_cast<Eigen::Index>(n));
  std::vector<InteractionImage> views;
  for (std::size_t i = 0; i < n; ++i) {
    const int type = static_cast<int>(i % kPrototypeCount);
    const Scene s = generate_scene(type, 500 + i);
    views.push_back(object_view(s, canonical_crop(s)));
    p.targets.col(static_cast<Eigen::Index>(i)) = prototypes.col(type);
  }
  p.positives = object_inputs(views);
  p.negatives = object_inputs(make_negative_images(8, negatives));
  return p;
}

const Pairs& shared_pairs() {
  static const Pairs p = make_pairs(200, 100);
  return p;
}

InferenceTrainConfig quick_config(int epochs) {
  InferenceTrainConfig c;
  c.epochs = epochs;
  c.batch = 16;
  c.lr = 1e-3;
  return c;
}

const InferenceTrainResult& shared_trained() {
  static const InferenceTrainResult r = [] {
    const auto& p = shared_pairs();
    return train_inference(p.positives, p.targets, p.negatives, small_arch(), quick_config(10));
  }();
  return r;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

// All weights zero: every input maps to the last layer's bias.
InferenceModel constant_model(float value) {
  InferenceModel m = make_inference_model(small_arch(), 1);
  for (auto& layer : m.network.mutable_layers()) {
    for (std::size_t k = 0; k < layer.weights.size(); ++k) layer.weights[k] = 0.0f;
    for (std::size_t k = 0; k < layer.bias.size(); ++k) layer.bias[k] = 0.0f;
  }
  auto& last = m.network.mutable_layers().back();
  for (std::size_t k = 0; k < last.bias.size(); ++k) last.bias[k] = value;
  return m;
}

Scene canvas_scene(int prototype, std::uint64_t seed, std::size_t side) {
  SceneOptions o;
  o.height = o.width = side;
  return generate_scene(prototype, seed, o);
}

}  // namespace

TEST_SUITE("inference model") {
  TEST_CASE("forward pass is deterministic and finite on the zero image") {
    const InferenceModel m = make_inference_model(small_arch(), 3);
    const ObjectInput zero{};
    const Descriptor a = infer_descriptor(m, zero);
    CHECK(a.size() == kD);
    CHECK(a == infer_descriptor(m, zero));
    for (float v : a.values) CHECK(std::isfinite(v));
    CHECK(make_inference_model(small_arch(), 3) == m);
  }

  TEST_CASE("ten smoke epochs on 200 pairs cut the loss by at least 30%") {
    const auto& r = shared_trained();
    REQUIRE(r.report.epochs.size() == 11);
    CHECK(r.report.epochs.back().loss <= 0.7 * r.report.epochs.front().loss);
  }

  TEST_CASE("same seed gives a bit-identical model") {
    const auto& p = shared_pairs();
    const auto again = train_inference(p.positives, p.targets, p.negatives, small_arch(), quick_config(10));
    CHECK(again.model == shared_trained().model);
  }

  TEST_CASE("trained negatives have smaller norms than positives") {
    const auto& m = shared_trained().model;
    CHECK(mean(descriptor_norms(m, object_inputs(make_negative_images(99, 60)))) <
          mean(descriptor_norms(m, shared_pairs().positives)));
  }

  TEST_CASE("descriptor dimension mismatch is a configuration error") {
    const auto& p = shared_pairs();
    InferenceArchitecture wrong = small_arch();
    wrong.descriptor_dim = kD + 1;
    CHECK_THROWS_AS(train_inference(p.positives, p.targets, p.negatives, wrong, quick_config(1)), ConfigError);
    CHECK_THROWS_AS(train_inference(std::span(p.positives).first(3), p.targets, p.negatives, small_arch(),
                                    quick_config(1)),
                    ConfigError);
  }

  TEST_CASE("decoded inference lies in (0,1) and d must agree") {
    const CaeArchitecture cae_arch{.descriptor_dim = kD};
    const CaeModel cae = make_cae<float>(cae_arch, 2);
    const auto img = infer_interaction_image(cae, shared_trained().model, shared_pairs().positives[0]);
    for (float v : img.pixels) CHECK((v > 0.0f && v < 1.0f));
    const CaeModel other = make_cae<float>(CaeArchitecture{}, 2);
    CHECK_THROWS_AS(infer_interaction_image(other, shared_trained().model, shared_pairs().positives[0]), ConfigError);
  }

  TEST_CASE("save and load round trip; wrong role is rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "idspace_test_inference";
    std::filesystem::create_directories(dir);
    save_inference(shared_trained().model, dir / "model.idsm");
    CHECK(load_inference(dir / "model.idsm") == shared_trained().model);
    save_cae(make_cae<float>(CaeArchitecture{}, 1), dir / "cae");
    CHECK_THROWS_AS(load_inference(dir / "cae" / "encoder.idsm"), FormatError);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("likelihood") {
  TEST_CASE("f lies in [0,1] and depends only on the norm") {
    const auto& m = shared_trained().model;
    const auto& p = shared_pairs();
    const NormDensityPair dens = estimate_norm_densities(m, p.positives, p.negatives);
    for (std::size_t i = 0; i < 20; ++i) {
      const double f = likelihood(m, dens, p.positives[i]);
      CHECK(f >= 0.0);
      CHECK(f <= 1.0);
      CHECK(f == dens.likelihood(infer_descriptor(m, p.positives[i]).norm()));
    }
  }

  TEST_CASE("map geometry follows the window count formula and f stays in [0,1]") {
    const auto& m = shared_trained().model;
    const auto& p = shared_pairs();
    const NormDensityPair dens = estimate_norm_densities(m, p.positives, p.negatives);
    const Scene s = canvas_scene(0, 3, 80);
    for (std::size_t stride : {1, 3, 8}) {
      const WindowGrid g = window_grid(s, stride);
      CHECK(g.rows == (80 - 32) / stride + 1);
      CHECK(g.cols == (80 - 32) / stride + 1);
    }
    const LikelihoodMap map = likelihood_map(m, dens, s, 4);
    CHECK(map.f.size() == map.grid.size());
    for (double f : map.f) CHECK((f >= 0.0 && f <= 1.0));
    CHECK_THROWS_AS(window_grid(canvas_scene(0, 3, 32), 0), ConfigError);
  }
}

TEST_SUITE("rotation sweep") {
  TEST_CASE("quarter turns are exact pixel permutations") {
    const ObjectInput x = shared_pairs().positives[5];
    ObjectInput y = x;
    for (int k = 0; k < 4; ++k) y = rotate_input(y, 0.5 * M_PI);
    CHECK(y == x);
    CHECK(rotate_input(x, 0.0) == x);
  }

  TEST_CASE("one angle equals plain inference; the maximum dominates angle zero") {
    const auto& m = shared_trained().model;
    const auto& p = shared_pairs();
    const NormDensityPair dens = estimate_norm_densities(m, p.positives, p.negatives);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto one = rotation_sweep_infer(m, dens, p.positives[i], 1);
      CHECK(one.angle == 0.0);
      CHECK(one.descriptor == infer_descriptor(m, p.positives[i]));
      CHECK(one.f == likelihood(m, dens, p.positives[i]));
      CHECK(rotation_sweep_infer(m, dens, p.positives[i], 16).f >= one.f);
    }
    CHECK_THROWS_AS(rotation_sweep_infer(m, dens, p.positives[0], 0), ConfigError);
  }
}

TEST_SUITE("psnr") {
  TEST_CASE("identical images hit the 99 dB cap") {
    const std::vector<float> a(1024, 0.3f);
    const PsnrValue v = psnr(a, a);
    CHECK(v.db == 99.0);
    CHECK(v.capped);
  }

  TEST_CASE("uniform error 0.1 gives 20 dB") {
    // 0.1 is not a binary32 value; 1e-6 dB covers the float storage of the pixels.
    const std::vector<float> a(1024, 0.0f), b(1024, 0.1f);
    const PsnrValue v = psnr(a, b);
    CHECK(std::abs(v.db - 20.0) <= 1e-6);
    CHECK(!v.capped);
    // Exactly representable error: 0.125 -> 10 log10(64).
    const std::vector<float> c(1024, 0.125f);
    CHECK(psnr(a, c).db == 10.0 * std::log10(64.0));
  }

  TEST_CASE("strictly decreasing in the mean squared error") {
    const std::vector<float> a(1024, 0.5f);
    double last = 1e9;
    for (float e = 0.01f; e < 0.5f; e += 0.01f) {
      const std::vector<float> b(1024, 0.5f + e);
      const double db = psnr(a, b).db;
      CHECK(db < last);
      last = db;
    }
  }

  TEST_CASE("pair order does not change the mean") {
    const CaeModel cae = make_cae<float>(CaeArchitecture{.descriptor_dim = kD}, 2);
    const auto& m = shared_trained().model;
    std::vector<PsnrPair> pairs;
    for (std::size_t i = 0; i < 12; ++i) {
      const Scene s = generate_scene(static_cast<int>(i), 70 + i);
      const auto crop = canonical_crop(s);
      pairs.push_back({object_input(object_view(s, crop)), crop});
    }
    const PsnrSummary fwd = psnr_eval(cae, m, pairs);
    std::reverse(pairs.begin(), pairs.end());
    const PsnrSummary rev = psnr_eval(cae, m, pairs);
    for (std::size_t c = 0; c < kImageChannels; ++c) CHECK(fwd.mean_db[c] == doctest::Approx(rev.mean_db[c]).epsilon(1e-12));
    CHECK(fwd.n == 12);
  }
}

TEST_SUITE("cluster map") {
  TEST_CASE("no position weight and constant descriptors give one cluster") {
    const InferenceModel m = constant_model(0.7f);
    const Scene s = canvas_scene(cup_prototype(), 2, 64);
    const ClusterMap map = position_descriptor_cluster(m, s, 4, 0.0);
    CHECK(map.cluster.size() == window_grid(s, 4).size());
    CHECK(map.grid.rows == window_grid(s, 4).rows);
    for (int c : map.cluster) CHECK(c == 0);
  }

  TEST_CASE("explicit bandwidth is used as given") {
    const auto& m = shared_trained().model;
    const Scene s = canvas_scene(cup_prototype(), 2, 64);
    CHECK(position_descriptor_cluster(m, s, 8, -1.0, 0.37).bandwidth == 0.37);
    CHECK(position_descriptor_cluster(m, s, 8, -1.0, 0.0).bandwidth > 0.0);
  }
}
