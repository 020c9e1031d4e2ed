#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "idspace/errors.hpp"
#include "idspace/interaction_data.hpp"

using namespace idspace;
namespace fs = std::filesystem;

namespace {

double mask_sum(std::span<const float> m) {
  double s = 0.0;
  for (float v : m) s += v;
  return s;
}

double mask_iou(std::span<const float> a, std::span<const float> b) {
  double inter = 0.0, uni = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] >= 0.5f && b[i] >= 0.5f);
    uni += (a[i] >= 0.5f || b[i] >= 0.5f);
  }
  return uni == 0.0 ? 1.0 : inter / uni;
}

fs::path temp_file(const char* name) { return fs::temp_directory_path() / (std::string("idspace_test_") + name); }

}  // namespace

TEST_SUITE("scenes") {
  TEST_CASE("same prototype and seed give identical scenes") {
    for (int p = 0; p < kPrototypeCount; ++p) {
      const Scene a = generate_scene(p, 77), b = generate_scene(p, 77);
      CHECK(a.appearance == b.appearance);
      CHECK(a.hand_mask == b.hand_mask);
      CHECK(a.object_mask == b.object_mask);
      CHECK(generate_scene(p, 78).appearance != a.appearance);
    }
  }

  TEST_CASE("hand and object overlap stays below 30% of the hand area") {
    for (int p = 0; p < kPrototypeCount; ++p) {
      for (std::uint64_t seed = 0; seed < 1000; seed += 12) {
        const Scene s = generate_scene(p, seed + static_cast<std::uint64_t>(p));
        double hand = 0.0, both = 0.0;
        for (std::size_t i = 0; i < s.hand_mask.size(); ++i) {
          hand += s.hand_mask[i];
          both += s.hand_mask[i] * s.object_mask[i];
        }
        REQUIRE(hand > 0.0);
        CHECK(both <= 0.3 * hand);
      }
    }
  }

  TEST_CASE("channels lie in [0,1] and masks are binary") {
    for (int p = 0; p < kPrototypeCount; ++p) {
      const Scene s = generate_scene(p, 5);
      for (float v : s.appearance) CHECK((v >= 0.0f && v <= 1.0f));
      for (float v : s.hand_mask) CHECK((v == 0.0f || v == 1.0f));
      for (float v : s.object_mask) CHECK((v == 0.0f || v == 1.0f));
    }
  }

  TEST_CASE("12 prototypes x 140 seeds make 1,680 distinct scenes") {
    std::set<std::vector<float>> seen;
    for (int p = 0; p < kPrototypeCount; ++p) {
      for (std::uint64_t s = 0; s < 140; ++s) seen.insert(generate_scene(p, s).appearance);
    }
    CHECK(seen.size() == 1680);
  }

  TEST_CASE("unknown prototype is rejected") {
    CHECK_THROWS_AS(generate_scene(12, 1), ConfigError);
    CHECK_THROWS_AS(generate_scene(-1, 1), ConfigError);
  }
}

TEST_SUITE("crops") {
  TEST_CASE("min_hand_fraction=0 accepts crops without hand pixels") {
    const Scene s = generate_scene(4, 9);
    const auto crops = extract_subimages(s, 50, 0.0, 1, 32);
    CHECK(crops.size() == 50);
  }

  TEST_CASE("every emitted crop meets the hand-fraction floor and carries the scene label") {
    for (int p = 0; p < kPrototypeCount; ++p) {
      const Scene s = generate_scene(p, 100 + static_cast<std::uint64_t>(p));
      for (const auto& c : extract_subimages(s, 20, 0.10, 3)) {
        CHECK(hand_fraction(c) >= 0.10);
        CHECK(c.label == p);
      }
    }
  }

  TEST_CASE("300 crops per scene are feasible") {
    const Scene s = generate_scene(0, 1);
    const auto crops = extract_subimages(s, 300, 0.10, 7, 16);
    CHECK(crops.size() == 300);
    std::set<std::pair<float, float>> origins;
    for (const auto& c : crops) origins.insert({c.pose.tx, c.pose.ty});
    CHECK(origins.size() > 100);
  }

  TEST_CASE("an unattainable hand fraction raises a generation error") {
    const Scene s = generate_scene(0, 1);
    CHECK_THROWS_AS(extract_subimages(s, 1, 0.99, 1), GenerationError);
    CHECK_THROWS_AS(extract_subimages(s, 1, 1.0, 1), ConfigError);
  }

  TEST_CASE("object view removes the hand and keeps the crop window") {
    const Scene s = generate_scene(2, 4);
    const auto crop = extract_subimages(s, 1, 0.1, 2).front();
    const auto obj = object_view(s, crop);
    CHECK(mask_sum(obj.channel(Channel::HandMask)) == 0.0);
    CHECK(obj.pose == crop.pose);
    CHECK(mask_sum(obj.channel(Channel::ObjectMask)) >= mask_sum(crop.channel(Channel::ObjectMask)));
  }
}

TEST_SUITE("pose normalisation") {
  TEST_CASE("identity transform leaves the image unchanged") {
    const auto crop = canonical_crop(generate_scene(6, 3));
    CHECK(normalize_pose(crop, 0.0, 0.0, 0.0).pixels == crop.pixels);
  }

  TEST_CASE("two half turns come back to the start up to resampling") {
    for (int p = 0; p < kPrototypeCount; ++p) {
      const auto crop = canonical_crop(generate_scene(p, 21));
      const auto back = normalize_pose(normalize_pose(crop, M_PI, 0, 0), M_PI, 0, 0);
      CHECK(mask_iou(back.channel(Channel::HandMask), crop.channel(Channel::HandMask)) >= 0.9);
      CHECK(mask_iou(back.channel(Channel::ObjectMask), crop.channel(Channel::ObjectMask)) >= 0.9);
    }
  }

  TEST_CASE("rotation preserves mask area within 10%") {
    for (int p = 0; p < kPrototypeCount; ++p) {
      // The canonical crop centres the hand, so rotation keeps it in the window.
      const auto crop = canonical_crop(generate_scene(p, 8));
      const double before = mask_sum(crop.channel(Channel::HandMask));
      for (double angle : {0.3, 1.0, 2.0}) {
        const double after = mask_sum(normalize_pose(crop, angle, 0, 0).channel(Channel::HandMask));
        CHECK(std::abs(after - before) <= 0.1 * before);
      }
    }
  }
}

TEST_SUITE("negatives") {
  TEST_CASE("negatives have no hand and repeat under the same seed") {
    const auto a = make_negative_images(5, 40), b = make_negative_images(5, 40);
    CHECK(a == b);
    for (const auto& n : a) {
      CHECK(mask_sum(n.channel(Channel::HandMask)) == 0.0);
      CHECK(n.label == -1);
    }
  }

  TEST_CASE("negatives differ from positive object crops at matched seeds") {
    const auto negatives = make_negative_images(11, 60);
    for (std::uint64_t seed = 0; seed < 60; ++seed) {
      const Scene s = generate_scene(static_cast<int>(seed % kPrototypeCount), 11 + seed);
      const auto pos = object_view(s, canonical_crop(s));
      for (const auto& n : negatives) CHECK(n.pixels != pos.pixels);
    }
  }
}

TEST_SUITE("dataset files") {
  TEST_CASE("save then load is the identity") {
    Dataset d;
    d.split = Split::Test;
    d.seed = 42;
    d.items = extract_subimages(generate_scene(3, 3), 5, 0.1, 3);
    const fs::path p = temp_file("roundtrip.iids");
    save_dataset(d, p);
    const Dataset back = load_dataset(p);
    CHECK(back.items == d.items);
    fs::remove(p);
  }

  TEST_CASE("truncated file is a format error") {
    Dataset d;
    d.items = make_negative_images(1, 3);
    const fs::path p = temp_file("truncated.iids");
    save_dataset(d, p);
    fs::resize_file(p, fs::file_size(p) - 100);
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    fs::resize_file(p, 6);
    CHECK_THROWS_AS(load_dataset(p), FormatError);
    fs::remove(p);
  }

  TEST_CASE("other format versions are rejected by name") {
    Dataset d;
    d.items = make_negative_images(1, 1);
    const fs::path p = temp_file("version.iids");
    save_dataset(d, p);
    {
      std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
      f.seekp(4);
      const char v[4] = {9, 0, 0, 0};
      f.write(v, 4);
    }
    try {
      load_dataset(p);
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("unsupported dataset format version 9") != std::string::npos);
    }
    fs::remove(p);
  }

  TEST_CASE("missing file is an I/O error") {
    CHECK_THROWS_AS(load_dataset(temp_file("does_not_exist.iids")), IoError);
  }

  TEST_CASE("PGM write/read round trip at 8-bit precision") {
    std::vector<float> v(6 * 4);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) / 23.0f;
    const fs::path p = temp_file("img.pgm");
    write_pgm(p, v, 6, 4);
    const GrayImage g = read_pgm(p);
    REQUIRE(g.width == 6);
    REQUIRE(g.height == 4);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(g.values[i] - v[i]) <= 0.5f / 255.0f + 1e-6f);
    fs::remove(p);
  }
}
