#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "doctest.h"
#include "idspace/errors.hpp"
#include "idspace/sparse_cae.hpp"
#include "oracles.hpp"

using namespace idspace;

namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = 0.2, double hi = 3.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
  return v;
}

double ratio(const std::vector<double>& v) { return sparsity_ratio<double>(std::span<const double>(v)); }

// Reduced architecture: 1x8x8 input, conv(2, 3x3, s2, p1), dense to d=4 and
// straight back to 64 outputs. 472 parameters.
CaeArchitecture reduced_arch() {
  CaeArchitecture a;
  a.channels = 1;
  a.height = a.width = 8;
  a.conv_filters = 2;
  a.conv_kernel = 3;
  a.conv_stride = 2;
  a.conv_padding = 1;
  a.encoder_hidden = {};
  a.decoder_hidden = {};
  a.descriptor_dim = 4;
  return a;
}

std::vector<InteractionImage> crops(std::size_t scenes, std::size_t per_scene, std::uint64_t seed = 1) {
  std::vector<InteractionImage> out;
  for (std::size_t i = 0; i < scenes; ++i) {
    const Scene s = generate_scene(static_cast<int>(i % kPrototypeCount), seed * 1000 + i);
    for (auto& c : extract_subimages(s, per_scene, 0.1, seed + i)) out.push_back(std::move(c));
  }
  return out;
}

// A model whose descriptor is the encoder's output bias, whatever the input.
CaeModel constant_descriptor_model(const std::vector<float>& descriptor) {
  CaeArchitecture arch;
  arch.descriptor_dim = descriptor.size();
  CaeModel m = make_cae<float>(arch, 3);
  auto& last = m.encoder.mutable_layers().back();
  REQUIRE(last.kind == LayerKind::Dense);
  for (std::size_t k = 0; k < last.weights.size(); ++k) last.weights[k] = 0.0f;
  for (std::size_t k = 0; k < descriptor.size(); ++k) last.bias[k] = descriptor[k];
  return m;
}

// A model whose decoder output is a constant image.
CaeModel constant_output_model() {
  CaeModel m = make_cae<float>(CaeArchitecture{}, 4);
  auto& layers = m.decoder.mutable_layers();
  auto& last = layers[layers.size() - 2];
  REQUIRE(last.kind == LayerKind::Dense);
  for (std::size_t k = 0; k < last.weights.size(); ++k) last.weights[k] = 0.0f;
  for (std::size_t k = 0; k < last.bias.size(); ++k) last.bias[k] = static_cast<float>(k % 7) * 0.3f - 1.0f;
  return m;
}

}  // namespace

TEST_SUITE("sparsity ratio") {
  TEST_CASE("hand-computed values") {
    CHECK(ratio({1, 0, 0, 0, 0}) == 1.0);
    CHECK(ratio({2.5, 2.5, 2.5, 2.5, 2.5, 2.5}) == doctest::Approx(6.0).epsilon(1e-15));
    CHECK(ratio({3, 4}) == doctest::Approx(1.96).epsilon(1e-15));
    CHECK(ratio({0, 0, 0}) == 0.0);
  }

  TEST_CASE("bounds, equality cases and scale invariance on random vectors") {
    Rng rng(12);
    for (int trial = 0; trial < 2000; ++trial) {
      const std::size_t n = 2 + rng.index(63);
      const auto v = random_vector(rng, n, 0.0, 5.0);
      const double r = ratio(v);
      CHECK(r >= 1.0 - 1e-12);
      CHECK(r <= static_cast<double>(n) + 1e-12);
      CHECK(r == doctest::Approx(oracle::l1_l2_ratio(v)).epsilon(1e-12));
      for (double alpha : {-3.0, 0.01, 7.0}) {
        auto w = v;
        for (auto& x : w) x *= alpha;
        CHECK(std::abs(ratio(w) - r) <= 1e-6);
      }
    }
  }

  TEST_CASE("gradient matches central differences away from zero components") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
      auto v = random_vector(rng, 2 + rng.index(30));
      const auto g = sparsity_ratio_gradient<double>(std::span<const double>(v));
      std::vector<double*> ptrs;
      for (auto& x : v) ptrs.push_back(&x);
      const std::vector<double> analytic(g.begin(), g.end());
      CHECK(oracle::central_differences(ptrs, analytic, [&] { return ratio(v); }).max_relative_error < 1e-4);
    }
  }

  TEST_CASE("one-hot: no slope along the hot coordinate") {
    std::vector<double> v(6, 0.0);
    v[2] = -1.7;
    const auto g = sparsity_ratio_gradient<double>(std::span<const double>(v));
    CHECK(g[2] == doctest::Approx(0.0).epsilon(1e-15));
  }

  TEST_CASE("gradient is homogeneous of degree -1") {
    Rng rng(8);
    for (int trial = 0; trial < 50; ++trial) {
      const auto v = random_vector(rng, 10);
      auto w = v;
      for (auto& x : w) x *= 2.0;
      const auto gv = sparsity_ratio_gradient<double>(std::span<const double>(v));
      const auto gw = sparsity_ratio_gradient<double>(std::span<const double>(w));
      for (std::size_t i = 0; i < v.size(); ++i) CHECK(gw[i] == doctest::Approx(0.5 * gv[i]).epsilon(1e-12));
    }
  }
}

TEST_SUITE("costs") {
  TEST_CASE("reconstruction: perfect is 0, one pixel off by 0.5 is 0.25") {
    const CaeModel m = constant_output_model();
    InteractionImage target = decode(m, Descriptor{std::vector<float>(24, 0.0f)});
    // The output ignores the input, so feeding the output back reconstructs it.
    const InteractionImage out = decode(m, encode(m, target));
    target.pixels = out.pixels;
    std::vector<InteractionImage> batch{target};
    CHECK(reconstruction_cost(m, batch) == 0.0);
    batch[0].pixels[100] += 0.5f;
    // The encoder sees the changed pixel but the decoder output cannot move.
    CHECK(reconstruction_cost(m, batch) == doctest::Approx(0.25).epsilon(1e-6));
  }

  TEST_CASE("reconstruction matches a per-pixel loop") {
    const CaeModel m = make_cae<float>(CaeArchitecture{}, 9);
    const auto batch = crops(6, 2);
    double want = 0.0;
    for (const auto& img : batch) {
      const auto out = decode(m, encode(m, img));
      for (std::size_t k = 0; k < img.pixels.size(); ++k) {
        const double e = static_cast<double>(out.pixels[k]) - img.pixels[k];
        want += e * e;
      }
    }
    CHECK(reconstruction_cost(m, batch) == doctest::Approx(want).epsilon(1e-6));
  }

  TEST_CASE("sparseness: one-hot gives 1, all-equal gives d, sums over the batch") {
    std::vector<float> hot(24, 0.0f);
    hot[5] = 0.8f;
    const auto batch = crops(2, 1);
    CHECK(sparseness_cost(constant_descriptor_model(hot), std::span(batch).first(1)) == 1.0);
    CHECK(sparseness_cost(constant_descriptor_model(std::vector<float>(24, -0.4f)), std::span(batch).first(1)) ==
          doctest::Approx(24.0).epsilon(1e-12));

    const CaeModel m = make_cae<float>(CaeArchitecture{}, 2);
    const auto all = crops(5, 2);
    const std::span<const InteractionImage> s(all);
    CHECK(sparseness_cost(m, s) == doctest::Approx(sparseness_cost(m, s.first(4)) + sparseness_cost(m, s.subspan(4))).epsilon(1e-12));
  }

  TEST_CASE("total cost: hand-computed combination and exact decomposition") {
    CHECK(combine_costs(0.5, 3.0, 1.0, 2.0) == 6.5);
    const CaeModel m = make_cae<float>(CaeArchitecture{}, 5);
    const auto batch = crops(4, 2);
    const double rec = reconstruction_cost(m, batch), sp = sparseness_cost(m, batch);
    CHECK(total_cost(m, batch, 1.7, 0.0) == 1.7 * rec);
    CHECK(total_cost(m, batch, 0.0, 1.0) == sp);
    CHECK(total_cost(m, batch, 0.3, 2.5) == 0.3 * rec + 2.5 * sp);
    CHECK_THROWS_AS(total_cost(m, batch, -1.0, 1.0), ConfigError);
  }

  TEST_CASE("plain L1 penalty") {
    const auto batch = crops(1, 1);
    CHECK(l1_penalty_cost(constant_descriptor_model(std::vector<float>(24, 0.0f)), batch) == 0.0);
    std::vector<float> unit(24, 0.0f);
    unit[0] = 1.0f;
    CHECK(l1_penalty_cost(constant_descriptor_model(unit), batch) == 1.0);
    std::vector<float> v(24);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1f * static_cast<float>(i) - 1.0f;
    std::vector<float> half = v;
    for (auto& x : half) x *= 0.5f;
    const auto full_m = constant_descriptor_model(v), half_m = constant_descriptor_model(half);
    CHECK(l1_penalty_cost(half_m, batch) == doctest::Approx(0.5 * l1_penalty_cost(full_m, batch)).epsilon(1e-6));
    CHECK(sparseness_cost(half_m, batch) == doctest::Approx(sparseness_cost(full_m, batch)).epsilon(1e-6));
  }

  TEST_CASE("full cost gradient matches central differences on the reduced network") {
    const CaeArchitecture arch = reduced_arch();
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto model = make_cae<double>(arch, seed);
      REQUIRE(model.encoder.parameter_count() + model.decoder.parameter_count() <= 500);
      Rng rng(seed + 100);
      Matrix<double> x(64, 3);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform();
      CaeGradients<double> g;
      cae_cost(model, x, 1.0, 1.0, SparsityPenalty::Ratio, &g);
      auto params = oracle::parameter_pointers(model.encoder);
      auto dec = oracle::parameter_pointers(model.decoder);
      params.insert(params.end(), dec.begin(), dec.end());
      auto analytic = oracle::flatten(g.encoder);
      const auto dec_g = oracle::flatten(g.decoder);
      analytic.insert(analytic.end(), dec_g.begin(), dec_g.end());
      const auto loss = [&] { return cae_cost<double>(model, x, 1.0, 1.0, SparsityPenalty::Ratio, nullptr).total; };
      CHECK(oracle::central_differences(params, analytic, loss).max_relative_error < 1e-4);
    }
  }
}

TEST_SUITE("encode and decode") {
  TEST_CASE("deterministic, finite on the zero image, outputs inside [0,1]") {
    const CaeModel m = make_cae<float>(CaeArchitecture{}, 6);
    const auto img = crops(1, 1).front();
    CHECK(encode(m, img) == encode(m, img));
    InteractionImage zero;
    for (float v : encode(m, zero).values) CHECK(std::isfinite(v));
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
      Descriptor d{std::vector<float>(24)};
      for (auto& v : d.values) v = static_cast<float>(3.0 * rng.normal());
      const auto out = decode(m, d);
      CHECK(out == decode(m, d));
      for (float v : out.pixels) CHECK((v > 0.0f && v < 1.0f));
    }
    // Float sigmoid saturates for extreme inputs; the range stays closed.
    Descriptor big{std::vector<float>(24, 1e6f)};
    for (float v : decode(m, big).pixels) CHECK((v >= 0.0f && v <= 1.0f));
  }

  TEST_CASE("wrong descriptor size is a configuration error") {
    const CaeModel m = make_cae<float>(CaeArchitecture{}, 6);
    CHECK_THROWS_AS(decode(m, Descriptor{std::vector<float>(5)}), ConfigError);
  }
}

TEST_SUITE("training") {
  TEST_CASE("a tiny run cuts the reconstruction cost by at least 20%") {
    const auto data = crops(50, 1);
    CaeTrainConfig cfg;
    // Fifty images need small batches and a larger step: the mean-image start
    // already removes the easy part of the error.
    cfg.epochs = 5;
    cfg.batch = 4;
    cfg.lr = 2e-3;
    cfg.lambda = 0.0;
    const auto r = train_cae(data, CaeArchitecture{}, cfg);
    REQUIRE(r.report.epochs.size() == 6);
    CHECK(r.report.epochs.back().c_err <= 0.8 * r.report.epochs.front().c_err);

    // Each channel's per-pixel error sits below the per-image training cost.
    const double per_image = r.report.epochs.back().c_err / static_cast<double>(data.size());
    for (Channel c : {Channel::Appearance, Channel::HandMask, Channel::ObjectMask}) {
      double mse = 0.0;
      for (const auto& img : data) {
        const auto out = decode(r.model, encode(r.model, img));
        const auto a = img.channel(c), b = out.channel(c);
        for (std::size_t k = 0; k < a.size(); ++k) mse += (a[k] - b[k]) * (a[k] - b[k]);
      }
      CHECK(mse / static_cast<double>(data.size() * kChannelPixels) < per_image);
    }
  }

  TEST_CASE("identical configuration gives a bit-identical model") {
    const auto data = crops(30, 1);
    CaeTrainConfig cfg;
    cfg.epochs = 2;
    cfg.lambda = 1.0;
    CHECK(train_cae(data, CaeArchitecture{}, cfg).model == train_cae(data, CaeArchitecture{}, cfg).model);
  }

  TEST_CASE("the sparsity weight lowers the final sparseness cost") {
    const auto data = crops(120, 2);
    CaeTrainConfig cfg;
    cfg.epochs = 8;
    cfg.lambda = 0.0;
    const auto plain = train_cae(data, CaeArchitecture{}, cfg);
    cfg.lambda = 1.0;
    const auto sparse = train_cae(data, CaeArchitecture{}, cfg);
    CHECK(sparse.report.epochs.back().c_sparse < plain.report.epochs.back().c_sparse);
  }

  TEST_CASE("invalid settings are rejected before training") {
    const auto data = crops(2, 1);
    CaeTrainConfig cfg;
    cfg.lr = 0.0;
    CHECK_THROWS_AS(train_cae(data, CaeArchitecture{}, cfg), ConfigError);
    cfg = {};
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(train_cae(data, CaeArchitecture{}, cfg), ConfigError);
    CHECK_THROWS_AS(train_cae({}, CaeArchitecture{}, CaeTrainConfig{}), ConfigError);
  }

  TEST_CASE("a non-finite cost aborts with the last finite checkpoint") {
    auto data = crops(10, 1);
    data[3].pixels[7] = std::numeric_limits<float>::quiet_NaN();
    CaeTrainConfig cfg;
    cfg.epochs = 3;
    cfg.init_output_bias = false;  // keep the NaN out of the initial model
    try {
      train_cae(data, CaeArchitecture{}, cfg);
      FAIL("expected the run to abort");
    } catch (const TrainingAborted& e) {
      CHECK(e.checkpoint == make_cae<float>(CaeArchitecture{}, cfg.seed));
      CHECK(e.checkpoint.encoder.all_finite());
      CHECK(e.checkpoint.decoder.all_finite());
      REQUIRE(e.report.epochs.size() == 1);
      CHECK(std::isnan(e.report.epochs.front().c_err));
    }
  }

  TEST_CASE("save and load round trip") {
    const CaeModel m = make_cae<float>(CaeArchitecture{}, 13);
    const auto dir = std::filesystem::temp_directory_path() / "idspace_test_cae";
    save_cae(m, dir);
    CHECK(load_cae(dir) == m);
    std::filesystem::remove_all(dir);
  }
}
