// idspace: generate data, train the autoencoder and inference model,
// evaluate, sweep lambda and run single-image inference.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "idspace/errors.hpp"
#include "idspace/experiment.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kNumerical = 2, kIo = 3 };

struct CommonOptions {
  std::string profile = "paper";
  std::string config_file;
  std::vector<std::string> assignments;
  std::string out;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--profile", o.profile, "Built-in profile: paper or smoke")->capture_default_str();
  cmd->add_option("--config", o.config_file, "Config file of `key = value` lines, applied over the profile");
  cmd->add_option("--set", o.assignments, "Override one key, e.g. --set lambda=0.3 (repeatable)");
  cmd->add_option("--out", o.out, "Output directory (default: out)");
}

idspace::ExperimentConfig resolve(const CommonOptions& o) {
  auto config = idspace::ExperimentConfig::from_profile(o.profile);
  if (!o.config_file.empty()) config.load_file(o.config_file);
  for (const auto& a : o.assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw idspace::UsageError("--set expects key=value, got '" + a + "'");
    config.set(a.substr(0, eq), a.substr(eq + 1));
  }
  if (!o.out.empty()) config.out = o.out;
  config.validate();
  return config;
}

std::string key_list() {
  std::string s = "Config keys:";
  for (const auto& k : idspace::ExperimentConfig::keys()) s += " " + k;
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interaction descriptor space: sparse autoencoder experiments"};
  app.require_subcommand(1);
  app.footer(key_list());

  CommonOptions common;
  std::string input;
  std::size_t index = 0;
  bool rotation_sweep = false;

  const std::vector<std::pair<const char*, const char*>> commands = {
      {"generate", "Render the synthetic corpus into <out>/data"},
      {"train-cae", "Train the sparse convolutional autoencoder"},
      {"train-inference", "Train the object-to-descriptor model and calibrate densities"},
      {"eval", "Write purity, PSNR, separation, map and cluster artifacts"},
      {"sweep-lambda", "Train one autoencoder per sweep lambda and tabulate quality"},
      {"infer", "Single object image -> descriptor, decoded interaction image, likelihood"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    if (std::string(name) == "infer") {
      cmd->add_option("--input", input, "32x32 PGM object image or dataset file")->required();
      cmd->add_option("--index", index, "Item index when --input is a dataset");
      cmd->add_flag("--rotation-sweep", rotation_sweep, "Search rotations for the highest likelihood");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    auto config = resolve(common);
    if (command == "generate") {
      idspace::cmd_generate(config);
    } else if (command == "train-cae") {
      idspace::cmd_train_cae(config);
    } else if (command == "train-inference") {
      idspace::cmd_train_inference(config);
    } else if (command == "eval") {
      idspace::cmd_eval(config);
    } else if (command == "sweep-lambda") {
      idspace::cmd_sweep_lambda(config);
    } else {
      if (rotation_sweep) config.rotation_sweep = true;
      const auto r = idspace::cmd_infer(config, input, index);
      std::cout << "f = " << r.f << "\nangle = " << r.angle << "\nnorm = " << r.descriptor.norm() << '\n';
    }
    return kOk;
  } catch (const idspace::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const idspace::DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return kNumerical;
  } catch (const idspace::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const idspace::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
}
