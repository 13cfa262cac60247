// Command-line front end; everything goes through the C API.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "randlr/randlr.h"

namespace {

using Json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;
constexpr int kExitVerification = 4;

int exit_code(randlr_status status) {
  switch (status) {
    case RANDLR_OK: return kExitOk;
    case RANDLR_CONFIG:
    case RANDLR_INVALID_ARGUMENT:
    case RANDLR_PARSE:
    case RANDLR_OUT_OF_RANGE: return kExitConfig;
    case RANDLR_DIVERGED: return kExitDiverged;
    case RANDLR_VERIFICATION: return kExitVerification;
    default: return kExitFailure;
  }
}

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  int jobs = 1;
  std::vector<std::string> sets;  // key=value overrides, value parsed as JSON
  bool quiet = false;
};

// Per-command flags mapped straight onto config keys.
struct Flag {
  std::string name;
  std::string key;
  std::string help;
};

const std::map<std::string, std::vector<Flag>>& command_flags() {
  static const std::map<std::string, std::vector<Flag>> flags = {
      {"train",
       {{"--lr", "lr", "mean learning rate l"},
        {"--momentum", "momentum", "momentum mu"},
        {"--batch-size", "batch_size", "mini-batch size C"},
        {"--epochs", "epochs", "training epochs"},
        {"--protocol", "protocol", "constant, random or cyclic"},
        {"--delta", "protocol.delta", "half-width of the random multiplier"},
        {"--period", "protocol.period", "cyclic period in epochs"}}},
      {"sweep-protocols",
       {{"--lr", "lr", "mean learning rate l"},
        {"--momentum", "momentum", "momentum mu"},
        {"--batch-size", "batch_size", "mini-batch size C"},
        {"--epochs", "epochs", "training epochs"},
        {"--replicas", "replicas", "seeds per protocol, counting up from --seed"}}},
      {"equal-temperature",
       {{"--epochs", "epochs", "training epochs"}, {"--replicas", "replicas", "seeds per tuple"}}},
      {"estimate-diffusion",
       {{"--delta", "delta", "half-width of the random multiplier"},
        {"--batch-size", "batch_size", "mini-batch size C"},
        {"--scheme", "scheme", "fixed_partition, subset_enumeration or with_replacement"},
        {"--moment-mode", "moment_mode", "exact or paper_compat"},
        {"--samples", "samples", "Monte Carlo draws for the empirical covariance"}}},
      {"sample-stationary",
       {{"--lr", "lr", "learning rate l"},
        {"--momentum", "momentum", "momentum mu"},
        {"--batch-size", "batch_size", "mini-batch size C"},
        {"--diffusion", "diffusion", "isotropic diffusion D"},
        {"--samples", "samples", "recorded samples"},
        {"--integrator", "integrator", "exact_ou or euler_maruyama"}}},
      {"verify-gibbs",
       {{"--lr", "lr", "learning rate l"},
        {"--momentum", "momentum", "momentum mu"},
        {"--batch-size", "batch_size", "mini-batch size C"},
        {"--diffusion", "diffusion", "isotropic diffusion D"},
        {"--samples", "samples", "recorded samples"},
        {"--integrator", "integrator", "exact_ou or euler_maruyama"},
        {"--temperature-scale", "temperature_scale", "multiplies T in the reference density"}}},
      {"weak-error",
       {{"--momentum", "momentum", "momentum mu"}, {"--horizon", "horizon", "physical time horizon"}}},
      {"temperature",
       {{"--lr", "lr", "learning rate l"},
        {"--momentum", "momentum", "momentum mu"},
        {"--batch-size", "batch_size", "mini-batch size C"},
        {"--diffusion", "diffusion", "isotropic diffusion D"}}},
  };
  return flags;
}

Json parse_value(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error&) {
    return Json(text);
  }
}

void set_path(Json& config, const std::string& dotted, const Json& value) {
  Json* node = &config;
  std::size_t start = 0;
  for (std::size_t dot; (dot = dotted.find('.', start)) != std::string::npos; start = dot + 1) {
    Json& child = (*node)[dotted.substr(start, dot - start)];
    if (child.is_string()) child = Json{{"kind", child}};
    if (!child.is_object()) child = Json::object();
    node = &child;
  }
  (*node)[dotted.substr(start)] = value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SGD with random learning rates: training, sweeps and diffusion/temperature checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", randlr_version());

  Common common;
  std::map<std::string, std::map<std::string, std::string>> flag_values;
  for (const auto& [name, flags] : command_flags()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "base seed");
    sub->add_option("--out-dir", common.out_dir, "output directory");
    sub->add_option("--jobs", common.jobs, "parallel runs")->check(CLI::PositiveNumber);
    sub->add_option("--set", common.sets, "override a config key: key=value (value parsed as JSON)");
    sub->add_flag("--quiet", common.quiet, "do not print the report");
    for (const auto& f : flags) sub->add_option(f.name, flag_values[name][f.key], f.help);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  Json config = Json::object();
  if (!common.config_path.empty()) {
    std::ifstream in(common.config_path);
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      config = Json::parse(ss.str());
    } catch (const Json::parse_error& e) {
      std::cerr << "error: " << common.config_path << ": " << e.what() << "\n";
      return kExitConfig;
    }
  }
  for (const auto& [key, value] : flag_values[command]) {
    if (!value.empty()) set_path(config, key, parse_value(value));
  }
  for (const auto& s : common.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got '" << s << "'\n";
      return kExitConfig;
    }
    set_path(config, s.substr(0, eq), parse_value(s.substr(eq + 1)));
  }
  if (common.seed) config["seed"] = *common.seed;

  char* report = nullptr;
  const auto status = randlr_run(command.c_str(), config.dump().c_str(), common.out_dir.c_str(), common.jobs, &report);
  if (report) {
    if (!common.quiet) std::cout << report << "\n";
    randlr_string_free(report);
  }
  if (status != RANDLR_OK) {
    std::cerr << "error (" << randlr_status_name(status) << "): " << randlr_last_error() << "\n";
  }
  return exit_code(status);
}
