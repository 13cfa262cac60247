#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "randlr/objectives.hpp"
#include "randlr/optimizer.hpp"

namespace randlr {

using Json = nlohmann::json;

/// Directory used for MNIST when a config gives no path: $RANDLR_MNIST_DIR,
/// else the bundled data/mnist5k subset.
std::filesystem::path default_mnist_dir();

/// Builds an objective from its config block and returns the block with all
/// defaults filled in.
///   {"kind": "mnist", "path", "n_train": 2000, "n_test": 1000, "subset_seed": 0}
///   {"kind": "quadratic", "dim", "samples", "curvature": [diag] | [[row], ...],
///    "centers": [[...], ...] | "spread", "seed"}
///   {"kind": "logistic", "features", "train_samples", "test_samples", "seed"}
std::unique_ptr<Objective> make_objective(const Json& config, Json* resolved = nullptr);

ProtocolSpec protocol_from_json(const Json& j, double rate);
Json protocol_to_json(const ProtocolSpec& p);

/// One fully resolved training run; its JSON form is accepted by `train`.
struct RunConfig {
  Json objective;
  HyperParams hyper;
  std::uint64_t epochs = 30;
  std::uint64_t seed = 0;

  static RunConfig from_json(const Json& j);
  Json to_json() const;
};

/// Base configuration for sweeps and equal-temperature experiments.
struct ExperimentConfig {
  Json objective;
  double rate = 0.005;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 0.0;
  Index batch_size = 256;
  std::uint64_t epochs = 30;
  std::vector<Json> protocols;  // protocol blocks without the rate
  std::vector<std::uint64_t> seeds;

  /// Unknown keys are ignored; malformed values raise ConfigError.
  static ExperimentConfig from_json(const Json& j);
  Json to_json() const;
  RunConfig run(const Json& protocol, std::uint64_t seed) const;
};

/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const Json& j);

/// "epoch,lr,train_loss,train_acc,test_acc", one row per epoch, shortest
/// round-trip number formatting; empty cells for missing accuracies.
std::string training_csv(const TrainingRecord& record);

struct CsvEpochRow {
  std::uint64_t epoch = 0;
  double rate = 0.0;
  double train_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> test_accuracy;
};

std::vector<CsvEpochRow> parse_training_csv(const std::string& text);

struct RunOutcome {
  std::string label;
  std::uint64_t seed = 0;
  RunConfig config;
  std::optional<TrainingRecord> record;  // empty when the run diverged
  std::string error;
  std::string csv;
};

struct AggregateRow {
  std::string label;
  std::size_t runs = 0;
  std::size_t diverged = 0;
  double best_mean = 0.0, best_std = 0.0;
  double final_mean = 0.0, final_std = 0.0;
  std::vector<double> best;  // per converged run, seed order
  std::vector<double> final;
};

struct SweepResult {
  std::vector<RunOutcome> runs;  // ordered by (protocol, seed)
  std::vector<AggregateRow> aggregate;
  std::string aggregate_csv;
  bool all_diverged = false;
};

/// Aggregates per-run CSV texts grouped by label (runs with no rows count as
/// diverged). Labels keep their first-seen order.
std::vector<AggregateRow> aggregate_runs(const std::vector<std::pair<std::string, std::string>>& label_and_csv);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);

/// Re-reads every runs/*.csv named in `dir`/manifest.json and rebuilds the
/// aggregate CSV text.
std::string reaggregate(const std::filesystem::path& dir);

/// One run per (protocol, seed), executed on up to `jobs` threads. When
/// `out_dir` is non-empty, writes runs/<label>_seed<s>.{csv,json},
/// aggregate.csv and manifest.json there. Divergence is recorded per run.
SweepResult run_protocol_sweep(const ExperimentConfig& config, const std::filesystem::path& out_dir = {},
                               int jobs = 1);

struct TemperatureTuple {
  double rate = 0.0;
  Index batch_size = 1;
  double momentum = 0.0;

  TemperatureTuple with_defaults(const ExperimentConfig& base) const;
  std::string label() const;
};

struct TupleSummary {
  TemperatureTuple tuple;
  std::string role;  // "group" or "control"
  std::vector<double> final_test;  // per seed
  std::vector<double> final_loss;
  std::vector<std::vector<double>> loss_by_epoch;  // [epoch][seed]
  std::size_t diverged = 0;
};

struct EqualTemperatureReport {
  std::vector<TupleSummary> tuples;
  bool comparison_made = false;   // false for a group of one
  bool group_equivalent = true;   // final test accuracy within one pooled std
  bool control_separated = true;  // final train loss apart by more than one pooled std
  double group_max_gap = 0.0;     // max |mean diff| / pooled std inside the group
  double control_min_gap = 0.0;   // min over group members of |mean diff| / pooled std
  bool passed = true;
  Json to_json() const;
};

/// Validates that the group shares one temperature and the control does not
/// (ConfigError otherwise, before any training), then trains every tuple for
/// every seed with base.protocols.front() and applies the two-sample verdicts.
EqualTemperatureReport run_equal_temperature_experiment(const ExperimentConfig& base,
                                                        const std::vector<TemperatureTuple>& group,
                                                        const std::optional<TemperatureTuple>& control,
                                                        const std::filesystem::path& out_dir = {}, int jobs = 1,
                                                        double rel_tol = 1e-9);

enum class CommandOutcome { Ok, VerificationFailed, AllDiverged };

struct CommandResult {
  Json report;
  CommandOutcome outcome = CommandOutcome::Ok;
};

/// Dispatches one CLI subcommand: train, sweep-protocols, equal-temperature,
/// estimate-diffusion, sample-stationary, weak-error, temperature,
/// verify-gibbs. Files are written under `out_dir` when it is non-empty.
CommandResult run_command(const std::string& command, const Json& config, const std::filesystem::path& out_dir,
                          int jobs);

/// Writes `text` to `path`, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

/// Shortest round-trip decimal form.
std::string format_number(double value);

}  // namespace randlr
