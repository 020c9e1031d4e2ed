#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "idspace/errors.hpp"
#include "idspace/experiment.hpp"
#include "json.hpp"

using namespace idspace;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path p = fs::temp_directory_path() / (std::string("idspace_test_") + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(const fs::path& out) {
  auto c = ExperimentConfig::from_profile("smoke");
  c.scenes = 12;
  c.crops_per_scene = 2;
  c.test_scenes = 12;
  c.calibration_scenes = 12;
  c.negatives = 10;
  c.heldout_negatives = 6;
  c.out = out;
  return c;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream is(p);
  return nlohmann::json::parse(is);
}

}  // namespace

TEST_SUITE("configuration") {
  TEST_CASE("profiles") {
    const auto paper = ExperimentConfig::from_profile("paper");
    CHECK(paper.scenes == 1680);
    CHECK(paper.d == 24);
    CHECK(paper.test_scenes == 800);
    CHECK(paper.sweep_lambdas == std::vector<double>{0.0, 0.1, 0.3, 1.0, 3.0, 10.0});
    const auto smoke = ExperimentConfig::from_profile("smoke");
    CHECK(smoke.scenes == 50);
    CHECK(smoke.d == 8);
    CHECK(smoke.epochs == 5);
    CHECK_THROWS_AS(ExperimentConfig::from_profile("huge"), ConfigError);
  }

  TEST_CASE("serialise then parse is the identity") {
    auto c = ExperimentConfig::from_profile("smoke");
    c.lambda = 0.3;
    c.sweep_lambdas = {0.0, 0.25, 7.5};
    c.rotation_sweep = true;
    c.out = "some/dir";
    const fs::path file = fresh_dir("config.txt");
    {
      std::ofstream os(file);
      os << "# comment line\n" << c.serialize();
    }
    ExperimentConfig back = ExperimentConfig::from_profile("paper");
    back.load_file(file);
    CHECK(back.serialize() == c.serialize());
    fs::remove(file);
  }

  TEST_CASE("every key appears once in the serialisation") {
    const std::string text = "\n" + ExperimentConfig{}.serialize();
    for (const auto& k : ExperimentConfig::keys()) {
      const auto first = text.find("\n" + k + " = ");
      CHECK(first != std::string::npos);
      CHECK(text.find("\n" + k + " = ", first + 1) == std::string::npos);
    }
  }

  TEST_CASE("unknown keys and malformed values are configuration errors") {
    ExperimentConfig c;
    CHECK_THROWS_AS(c.set("lamda", "1"), ConfigError);
    CHECK_THROWS_AS(c.set("epochs", "ten"), ConfigError);
    CHECK_THROWS_AS(c.set("lr", "1e-3x"), ConfigError);
    CHECK_THROWS_AS(c.set("rotation_sweep", "maybe"), ConfigError);
    c.set("lr", " 1e-3 ");
    CHECK(c.lr == 1e-3);
  }

  TEST_CASE("validation rejects inconsistent settings") {
    ExperimentConfig c;
    c.d = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.sweep_lambdas = {0.5, 1.0};
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.map_bandwidth = -1.0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    CHECK_NOTHROW(ExperimentConfig{}.validate());
  }

  TEST_CASE("a missing config file is an I/O error") {
    ExperimentConfig c;
    CHECK_THROWS_AS(c.load_file(fresh_dir("nope.txt")), IoError);
  }
}

TEST_SUITE("commands") {
  TEST_CASE("generate records counts and checksums, and repeats byte for byte") {
    const fs::path a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
    const auto files = cmd_generate(tiny(a));
    cmd_generate(tiny(b));
    const auto ma = read_json(a / "manifest.json"), mb = read_json(b / "manifest.json");
    CHECK(ma["artifacts"] == mb["artifacts"]);
    CHECK(ma["counts"]["scenes"] == 12);
    CHECK(ma["counts"]["train"] == 24);
    CHECK(ma["counts"]["negatives"] == 10);
    for (const auto& f : files) {
      REQUIRE(ma["artifacts"].contains(f.generic_string()));
      CHECK(ma["artifacts"][f.generic_string()]["sha256"] == sha256_file(a / f));
      CHECK(ma["artifacts"][f.generic_string()]["bytes"] == fs::file_size(a / f));
    }
    fs::remove_all(a);
    fs::remove_all(b);
  }

  TEST_CASE("sha-256 of a known string") {
    const fs::path p = fresh_dir("abc.txt");
    std::ofstream(p) << "abc";
    CHECK(sha256_file(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    fs::remove(p);
  }

  TEST_CASE("training without data names the expected file") {
    const fs::path out = fresh_dir("no_data");
    try {
      cmd_train_cae(tiny(out));
      FAIL("expected an I/O error");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("train.iids") != std::string::npos);
    }
    fs::remove_all(out);
  }

  TEST_CASE("inference training refuses a descriptor size that differs from the autoencoder") {
    const fs::path out = fresh_dir("mismatch");
    auto c = tiny(out);
    c.epochs = 1;
    cmd_generate(c);
    cmd_train_cae(c);
    c.d = 6;
    CHECK_THROWS_AS(cmd_train_inference(c), ConfigError);
    fs::remove_all(out);
  }
}
