#include "randlr/harness.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "randlr/error.hpp"
#include "randlr/mnist.hpp"
#include "randlr/stats.hpp"
#include "randlr/thermo.hpp"

#ifndef RANDLR_DEFAULT_DATA_DIR
#define RANDLR_DEFAULT_DATA_DIR "data/mnist5k"
#endif

namespace randlr {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// small utilities

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path default_mnist_dir() {
  if (const char* env = std::getenv("RANDLR_MNIST_DIR"); env && *env) return env;
  return RANDLR_DEFAULT_DATA_DIR;
}

namespace {

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

Index get_count(const Json& j, const char* key, Index fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() && !(v.is_number() && std::floor(v.get<double>()) == v.get<double>())) {
    throw ConfigError(std::string("config key '") + key + "' must be a non-negative integer");
  }
  const double d = v.get<double>();
  if (d < 0) throw ConfigError(std::string("config key '") + key + "' must be non-negative");
  return static_cast<Index>(d);
}

Matrix matrix_from_json(const Json& j, Index dim, const char* what) {
  // A flat list is a diagonal; a list of rows is a dense matrix.
  if (!j.is_array() || j.empty()) throw ConfigError(std::string(what) + " must be a non-empty array");
  if (j.front().is_array()) {
    const Index rows = j.size();
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(rows));
    for (Index r = 0; r < rows; ++r) {
      if (j[r].size() != rows) throw ConfigError(std::string(what) + " must be square");
      for (Index c = 0; c < rows; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
    return m;
  }
  const auto diag = j.get<std::vector<double>>();
  if (dim != 0 && diag.size() != dim && diag.size() != 1) {
    throw ConfigError(std::string(what) + " diagonal length does not match dim");
  }
  const Index n = dim != 0 ? dim : diag.size();
  Matrix m = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (Index i = 0; i < n; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = diag.size() == 1 ? diag[0] : diag[i];
  return m;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

// ---------------------------------------------------------------------------
// objectives and protocols from config

std::unique_ptr<Objective> make_objective(const Json& config, Json* resolved) {
  if (!config.is_object()) throw ConfigError("objective block must be an object");
  const auto kind = get_or<std::string>(config, "kind", "mnist");
  Json r = config;
  r["kind"] = kind;
  if (kind == "mnist") {
    const auto path = get_or<std::string>(config, "path", default_mnist_dir().string());
    const Index n_train = get_count(config, "n_train", 2000);
    const Index n_test = get_count(config, "n_test", 1000);
    const auto subset_seed = get_or<std::uint64_t>(config, "subset_seed", 0);
    r["path"] = path;
    r["n_train"] = n_train;
    r["n_test"] = n_test;
    r["subset_seed"] = subset_seed;
    if (resolved) *resolved = r;
    return std::make_unique<PerceptronClassifier>(load_mnist_subset(path, n_train, n_test, subset_seed));
  }
  if (kind == "quadratic") {
    Index dim = get_count(config, "dim", 0);
    Matrix centers;
    if (config.contains("centers")) {
      const auto& cj = config.at("centers");
      if (!cj.is_array() || cj.empty()) throw ConfigError("quadratic centers must be a non-empty list of points");
      dim = cj.front().size();
      centers.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(cj.size()));
      for (Index i = 0; i < cj.size(); ++i) {
        if (cj[i].size() != dim) throw ConfigError("quadratic centers must share one dimension");
        for (Index d = 0; d < dim; ++d) centers(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = cj[i][d].get<double>();
      }
    } else {
      if (dim == 0) dim = 3;
      const Index samples = get_count(config, "samples", 8);
      const double spread = get_or<double>(config, "spread", 1.0);
      const auto seed = get_or<std::uint64_t>(config, "seed", 0);
      if (samples == 0) throw ConfigError("quadratic samples must be positive");
      Rng rng(seed, 0xce7);
      centers.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(samples));
      for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = spread * rng.normal();
      r["samples"] = samples;
      r["spread"] = spread;
      r["seed"] = seed;
    }
    Matrix curvature = config.contains("curvature")
                           ? matrix_from_json(config.at("curvature"), dim, "curvature")
                           : Matrix::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    r["dim"] = dim;
    r["curvature"] = matrix_to_json(curvature);
    if (resolved) *resolved = r;
    try {
      return std::make_unique<QuadraticEnsemble>(std::move(curvature), std::move(centers));
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("quadratic objective: ") + e.what());
    }
  }
  if (kind == "logistic") {
    const Index features = get_count(config, "features", 5);
    const Index train_samples = get_count(config, "train_samples", 400);
    const Index test_samples = get_count(config, "test_samples", 200);
    const auto seed = get_or<std::uint64_t>(config, "seed", 0);
    r["features"] = features;
    r["train_samples"] = train_samples;
    r["test_samples"] = test_samples;
    r["seed"] = seed;
    if (resolved) *resolved = r;
    return std::make_unique<LogisticRegression>(
        LogisticRegression::synthetic(features, train_samples, test_samples, seed));
  }
  throw ConfigError("unknown objective kind '" + kind + "' (expected mnist, quadratic or logistic)");
}

ProtocolSpec protocol_from_json(const Json& j, double rate) {
  if (j.is_string()) return protocol_from_json(Json{{"kind", j.get<std::string>()}}, rate);
  if (!j.is_object()) throw ConfigError("protocol must be an object or a name");
  ProtocolSpec p;
  p.kind = protocol_kind_from_string(get_or<std::string>(j, "kind", "constant"));
  p.base_rate = rate;
  p.half_width = p.kind == ProtocolKind::RandomUniform ? get_or<double>(j, "delta", 1.0) : 0.0;
  p.period = p.kind == ProtocolKind::CyclicCosine ? static_cast<std::uint32_t>(get_count(j, "period", 6)) : 1;
  try {
    p.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

Json protocol_to_json(const ProtocolSpec& p) {
  Json j{{"kind", to_string(p.kind)}};
  if (p.kind == ProtocolKind::RandomUniform) j["delta"] = p.half_width;
  if (p.kind == ProtocolKind::CyclicCosine) j["period"] = p.period;
  return j;
}

// ---------------------------------------------------------------------------
// configs

RunConfig RunConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c;
  c.objective = j.contains("objective") ? j.at("objective") : Json{{"kind", "mnist"}};
  const double rate = get_or<double>(j, "lr", 0.005);
  c.hyper.momentum = get_or<double>(j, "momentum", 0.9);
  c.hyper.nesterov = get_or<bool>(j, "nesterov", true);
  c.hyper.weight_decay = get_or<double>(j, "weight_decay", 0.0);
  c.hyper.batch_size = get_count(j, "batch_size", 256);
  c.hyper.protocol = protocol_from_json(j.contains("protocol") ? j.at("protocol") : Json{{"kind", "constant"}}, rate);
  c.epochs = get_count(j, "epochs", 30);
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  try {
    c.hyper.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (c.epochs == 0) throw ConfigError("epochs must be at least 1");
  return c;
}

Json RunConfig::to_json() const {
  return Json{{"objective", objective},
              {"lr", hyper.protocol.base_rate},
              {"momentum", hyper.momentum},
              {"nesterov", hyper.nesterov},
              {"weight_decay", hyper.weight_decay},
              {"batch_size", hyper.batch_size},
              {"protocol", protocol_to_json(hyper.protocol)},
              {"epochs", epochs},
              {"seed", seed}};
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  c.objective = j.contains("objective") ? j.at("objective") : Json{{"kind", "mnist"}};
  c.rate = get_or<double>(j, "lr", c.rate);
  c.momentum = get_or<double>(j, "momentum", c.momentum);
  c.nesterov = get_or<bool>(j, "nesterov", c.nesterov);
  c.weight_decay = get_or<double>(j, "weight_decay", c.weight_decay);
  c.batch_size = get_count(j, "batch_size", c.batch_size);
  c.epochs = get_count(j, "epochs", c.epochs);
  if (j.contains("protocols")) {
    if (!j.at("protocols").is_array()) throw ConfigError("protocols must be a list");
    for (const auto& p : j.at("protocols")) c.protocols.push_back(p.is_string() ? Json{{"kind", p}} : p);
  } else if (j.contains("protocol")) {
    const auto& p = j.at("protocol");
    c.protocols.push_back(p.is_string() ? Json{{"kind", p}} : p);
  } else {
    c.protocols.push_back(Json{{"kind", "constant"}});
  }
  if (j.contains("seeds")) {
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } else {
    const auto seed = get_or<std::uint64_t>(j, "seed", 0);
    const Index replicas = get_count(j, "replicas", 1);
    for (Index k = 0; k < replicas; ++k) c.seeds.push_back(seed + k);
  }
  if (c.protocols.empty()) throw ConfigError("at least one protocol is required");
  if (c.seeds.empty()) throw ConfigError("at least one seed is required");
  if (c.epochs == 0) throw ConfigError("epochs must be at least 1");
  for (const auto& p : c.protocols) {
    auto probe = c.run(p, c.seeds.front());
    (void)probe;
  }
  return c;
}

Json ExperimentConfig::to_json() const {
  return Json{{"objective", objective}, {"lr", rate},        {"momentum", momentum}, {"nesterov", nesterov},
              {"weight_decay", weight_decay}, {"batch_size", batch_size}, {"epochs", epochs},
              {"protocols", protocols}, {"seeds", seeds}};
}

RunConfig ExperimentConfig::run(const Json& protocol, std::uint64_t seed) const {
  RunConfig c;
  c.objective = objective;
  c.hyper.momentum = momentum;
  c.hyper.nesterov = nesterov;
  c.hyper.weight_decay = weight_decay;
  c.hyper.batch_size = batch_size;
  c.hyper.protocol = protocol_from_json(protocol, rate);
  c.epochs = epochs;
  c.seed = seed;
  try {
    c.hyper.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

// ---------------------------------------------------------------------------
// CSV

std::string training_csv(const TrainingRecord& record) {
  std::string out = "epoch,lr,train_loss,train_acc,test_acc\n";
  for (const auto& e : record.epochs) {
    out += std::to_string(e.epoch) + "," + format_number(e.rate) + "," + format_number(e.train_loss) + ",";
    if (e.train_accuracy) out += format_number(*e.train_accuracy);
    out += ",";
    if (e.test_accuracy) out += format_number(*e.test_accuracy);
    out += "\n";
  }
  return out;
}

namespace {

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw ParseError("bad number '" + s + "' in CSV");
  return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (ch != '\r') {
      cell += ch;
    }
  }
  cells.push_back(cell);
  return cells;
}

}  // namespace

std::vector<CsvEpochRow> parse_training_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,lr,train_loss,train_acc,test_acc", 0) != 0) {
    throw ParseError("training CSV header missing");
  }
  std::vector<CsvEpochRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 5) throw ParseError("training CSV row must have 5 cells");
    CsvEpochRow r;
    r.epoch = static_cast<std::uint64_t>(parse_double(cells[0]));
    r.rate = parse_double(cells[1]);
    r.train_loss = parse_double(cells[2]);
    if (!cells[3].empty()) r.train_accuracy = parse_double(cells[3]);
    if (!cells[4].empty()) r.test_accuracy = parse_double(cells[4]);
    rows.push_back(r);
  }
  return rows;
}

std::vector<AggregateRow> aggregate_runs(const std::vector<std::pair<std::string, std::string>>& label_and_csv) {
  std::vector<AggregateRow> rows;
  auto find = [&](const std::string& label) -> AggregateRow& {
    for (auto& r : rows) {
      if (r.label == label) return r;
    }
    rows.emplace_back();
    rows.back().label = label;
    return rows.back();
  };
  for (const auto& [label, csv] : label_and_csv) {
    AggregateRow& agg = find(label);
    ++agg.runs;
    const auto epochs = parse_training_csv(csv);
    if (epochs.empty()) {
      ++agg.diverged;
      continue;
    }
    double best = -1.0;
    for (const auto& e : epochs) {
      if (e.test_accuracy) best = std::max(best, *e.test_accuracy);
    }
    if (best < 0.0) continue;
    agg.best.push_back(best);
    agg.final.push_back(*epochs.back().test_accuracy);
  }
  for (auto& r : rows) {
    r.best_mean = stats::mean(r.best);
    r.best_std = stats::stddev(r.best);
    r.final_mean = stats::mean(r.final);
    r.final_std = stats::stddev(r.final);
  }
  return rows;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = "protocol,runs,diverged,best_test_mean,best_test_std,final_test_mean,final_test_std\n";
  for (const auto& r : rows) {
    out += r.label + "," + std::to_string(r.runs) + "," + std::to_string(r.diverged) + "," +
           format_number(r.best_mean) + "," + format_number(r.best_std) + "," + format_number(r.final_mean) + "," +
           format_number(r.final_std) + "\n";
  }
  return out;
}

std::string reaggregate(const fs::path& dir) {
  const Json manifest = Json::parse(read_text_file(dir / "manifest.json"));
  std::vector<std::pair<std::string, std::string>> inputs;
  for (const auto& run : manifest.at("runs")) {
    inputs.emplace_back(run.at("label").get<std::string>(), read_text_file(dir / run.at("csv").get<std::string>()));
  }
  return aggregate_csv(aggregate_runs(inputs));
}

// ---------------------------------------------------------------------------
// runs and sweeps

namespace {

Json alpha_json(const AlphaSummary& a) {
  return Json{{"count", a.count}, {"mean", a.mean}, {"variance", a.variance}, {"min", a.min}, {"max", a.max}};
}

Json run_summary_json(const RunOutcome& run) {
  Json j{{"label", run.label}, {"seed", run.seed}, {"config", run.config.to_json()},
         {"config_hash", config_hash(run.config.to_json())}};
  if (run.record) {
    const auto& r = *run.record;
    j["status"] = "ok";
    j["steps"] = r.steps;
    j["initial_loss"] = r.initial_loss;
    j["final_loss"] = r.epochs.back().train_loss;
    if (auto b = r.best_test_accuracy()) j["best_test_accuracy"] = *b;
    if (auto f = r.final_test_accuracy()) j["final_test_accuracy"] = *f;
    j["alpha"] = alpha_json(r.alpha);
  } else {
    j["status"] = "diverged";
    j["error"] = run.error;
  }
  return j;
}

RunOutcome execute_run(const Objective& objective, const RunConfig& config, std::string label) {
  RunOutcome out;
  out.label = std::move(label);
  out.seed = config.seed;
  out.config = config;
  try {
    TrainOptions opts;
    opts.seed = config.seed;
    out.record = train(objective, config.hyper, config.epochs, opts);
    out.csv = training_csv(*out.record);
  } catch (const DivergedError& e) {
    out.error = e.what();
    out.csv = training_csv(TrainingRecord{});
  }
  return out;
}

template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(jobs > 0 ? jobs : 1, count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < count;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string run_file_stem(const std::string& label, std::uint64_t seed) {
  return "runs/" + label + "_seed" + std::to_string(seed);
}

std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

}  // namespace

SweepResult run_protocol_sweep(const ExperimentConfig& config, const fs::path& out_dir, int jobs) {
  const auto start = std::chrono::steady_clock::now();
  Json resolved_objective;
  const auto objective = make_objective(config.objective, &resolved_objective);
  ExperimentConfig resolved = config;
  resolved.objective = resolved_objective;

  std::vector<RunConfig> plan;
  std::vector<std::string> labels;
  for (const auto& p : resolved.protocols) {
    for (auto seed : resolved.seeds) {
      plan.push_back(resolved.run(p, seed));
      labels.push_back(plan.back().hyper.protocol.label());
    }
  }

  SweepResult result;
  result.runs.resize(plan.size());
  parallel_for(plan.size(), jobs, [&](std::size_t i) { result.runs[i] = execute_run(*objective, plan[i], labels[i]); });

  std::vector<std::pair<std::string, std::string>> inputs;
  for (const auto& r : result.runs) inputs.emplace_back(r.label, r.csv);
  result.aggregate = aggregate_runs(inputs);
  result.aggregate_csv = aggregate_csv(result.aggregate);
  result.all_diverged = std::all_of(result.runs.begin(), result.runs.end(), [](const RunOutcome& r) { return !r.record; });

  if (!out_dir.empty()) {
    Json runs = Json::array();
    for (const auto& r : result.runs) {
      const auto stem = run_file_stem(r.label, r.seed);
      write_text_file(out_dir / (stem + ".csv"), r.csv);
      write_text_file(out_dir / (stem + ".json"), run_summary_json(r).dump(2) + "\n");
      runs.push_back(Json{{"label", r.label}, {"seed", r.seed}, {"csv", stem + ".csv"}, {"manifest", stem + ".json"},
                          {"status", r.record ? "ok" : "diverged"}});
    }
    write_text_file(out_dir / "aggregate.csv", result.aggregate_csv);
    const Json cfg = resolved.to_json();
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const Json manifest{{"command", "sweep-protocols"}, {"config", cfg},          {"config_hash", config_hash(cfg)},
                        {"seeds", resolved.seeds},      {"runs", runs},           {"started_at", iso_timestamp()},
                        {"wall_clock_seconds", wall},   {"jobs", jobs}};
    write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }
  return result;
}

// ---------------------------------------------------------------------------
// equal temperature

TemperatureTuple TemperatureTuple::with_defaults(const ExperimentConfig& base) const {
  TemperatureTuple t = *this;
  if (t.rate <= 0.0) t.rate = base.rate;
  if (t.batch_size == 0) t.batch_size = base.batch_size;
  return t;
}

std::string TemperatureTuple::label() const {
  return "C" + std::to_string(batch_size) + "_l" + format_number(rate) + "_mu" + format_number(momentum);
}

Json EqualTemperatureReport::to_json() const {
  Json tuples_json = Json::array();
  for (const auto& t : tuples) {
    Json loss_mean = Json::array(), loss_std = Json::array();
    for (const auto& per_seed : t.loss_by_epoch) {
      loss_mean.push_back(stats::mean(per_seed));
      loss_std.push_back(stats::stddev(per_seed));
    }
    tuples_json.push_back(Json{{"label", t.tuple.label()},
                               {"role", t.role},
                               {"lr", t.tuple.rate},
                               {"batch_size", t.tuple.batch_size},
                               {"momentum", t.tuple.momentum},
                               {"temperature_ratio", TemperatureKey{t.tuple.rate, t.tuple.batch_size, t.tuple.momentum}.ratio()},
                               {"final_test_accuracy", t.final_test},
                               {"final_test_mean", stats::mean(t.final_test)},
                               {"final_test_std", stats::stddev(t.final_test)},
                               {"final_loss_mean", stats::mean(t.final_loss)},
                               {"final_loss_std", stats::stddev(t.final_loss)},
                               {"loss_mean_by_epoch", loss_mean},
                               {"loss_std_by_epoch", loss_std},
                               {"diverged", t.diverged}});
  }
  return Json{{"tuples", tuples_json},
              {"comparison_made", comparison_made},
              {"group_equivalent", group_equivalent},
              {"control_separated", control_separated},
              {"group_max_gap_in_pooled_std", group_max_gap},
              {"control_min_gap_in_pooled_std", control_min_gap},
              {"passed", passed}};
}

EqualTemperatureReport run_equal_temperature_experiment(const ExperimentConfig& base,
                                                        const std::vector<TemperatureTuple>& group_in,
                                                        const std::optional<TemperatureTuple>& control_in,
                                                        const fs::path& out_dir, int jobs, double rel_tol) {
  if (group_in.empty()) throw ConfigError("equal-temperature experiment needs at least one group tuple");
  std::vector<TemperatureTuple> group;
  for (const auto& t : group_in) group.push_back(t.with_defaults(base));
  std::optional<TemperatureTuple> control;
  if (control_in) control = control_in->with_defaults(base);

  auto key = [](const TemperatureTuple& t) { return TemperatureKey{t.rate, t.batch_size, t.momentum}; };
  try {
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (!same_temperature(key(group[0]), key(group[i]), rel_tol)) {
        throw ConfigError("group tuples " + group[0].label() + " and " + group[i].label() +
                          " do not share an effective temperature");
      }
    }
    if (control && same_temperature(key(group[0]), key(*control), rel_tol)) {
      throw ConfigError("control tuple " + control->label() + " has the group's temperature");
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }

  Json resolved_objective;
  const auto objective = make_objective(base.objective, &resolved_objective);

  std::vector<TemperatureTuple> all = group;
  if (control) all.push_back(*control);

  struct Job {
    std::size_t tuple;
    RunConfig config;
  };
  std::vector<Job> jobs_list;
  for (std::size_t t = 0; t < all.size(); ++t) {
    ExperimentConfig cfg = base;
    cfg.objective = resolved_objective;
    cfg.rate = all[t].rate;
    cfg.batch_size = all[t].batch_size;
    cfg.momentum = all[t].momentum;
    for (auto seed : base.seeds) jobs_list.push_back({t, cfg.run(base.protocols.front(), seed)});
  }
  std::vector<RunOutcome> outcomes(jobs_list.size());
  parallel_for(jobs_list.size(), jobs, [&](std::size_t i) {
    outcomes[i] = execute_run(*objective, jobs_list[i].config, all[jobs_list[i].tuple].label());
  });

  EqualTemperatureReport report;
  for (std::size_t t = 0; t < all.size(); ++t) {
    TupleSummary s;
    s.tuple = all[t];
    s.role = t < group.size() ? "group" : "control";
    s.loss_by_epoch.resize(base.epochs);
    report.tuples.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    TupleSummary& s = report.tuples[jobs_list[i].tuple];
    const auto& rec = outcomes[i].record;
    if (!rec) {
      ++s.diverged;
      continue;
    }
    s.final_test.push_back(rec->final_test_accuracy().value_or(0.0));
    s.final_loss.push_back(rec->epochs.back().train_loss);
    for (std::size_t e = 0; e < rec->epochs.size(); ++e) s.loss_by_epoch[e].push_back(rec->epochs[e].train_loss);
  }

  // Two-sample criterion: means within (or beyond) one pooled standard deviation.
  auto gap = [](const std::vector<double>& a, const std::vector<double>& b) {
    const double pooled = stats::pooled_stddev({a, b});
    const double diff = std::abs(stats::mean(a) - stats::mean(b));
    if (pooled == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return diff / pooled;
  };
  report.comparison_made = group.size() > 1 || control.has_value();
  for (std::size_t i = 0; i < group.size(); ++i) {
    for (std::size_t j = i + 1; j < group.size(); ++j) {
      report.group_max_gap = std::max(report.group_max_gap, gap(report.tuples[i].final_test, report.tuples[j].final_test));
    }
  }
  report.group_equivalent = report.group_max_gap <= 1.0;
  if (control) {
    const auto& c = report.tuples.back();
    report.control_min_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < group.size(); ++i) {
      report.control_min_gap = std::min(report.control_min_gap, gap(c.final_loss, report.tuples[i].final_loss));
    }
    report.control_separated = report.control_min_gap > 1.0;
  }
  for (const auto& t : report.tuples) {
    if (t.final_test.size() < 2 && report.comparison_made) {
      report.group_equivalent = false;  // not enough converged seeds to compare
    }
  }
  report.passed = report.group_equivalent && report.control_separated;

  if (!out_dir.empty()) {
    Json runs = Json::array();
    for (const auto& r : outcomes) {
      const auto stem = run_file_stem(r.label, r.seed);
      write_text_file(out_dir / (stem + ".csv"), r.csv);
      write_text_file(out_dir / (stem + ".json"), run_summary_json(r).dump(2) + "\n");
      runs.push_back(Json{{"label", r.label}, {"seed", r.seed}, {"csv", stem + ".csv"},
                          {"status", r.record ? "ok" : "diverged"}});
    }
    std::string csv = "tuple,role,lr,batch_size,momentum,temperature_ratio,final_test_mean,final_test_std,final_loss_mean,final_loss_std,diverged\n";
    for (const auto& t : report.tuples) {
      csv += t.tuple.label() + "," + t.role + "," + format_number(t.tuple.rate) + "," + std::to_string(t.tuple.batch_size) +
             "," + format_number(t.tuple.momentum) + "," +
             format_number(TemperatureKey{t.tuple.rate, t.tuple.batch_size, t.tuple.momentum}.ratio()) + "," +
             format_number(stats::mean(t.final_test)) + "," + format_number(stats::stddev(t.final_test)) + "," +
             format_number(stats::mean(t.final_loss)) + "," + format_number(stats::stddev(t.final_loss)) + "," +
             std::to_string(t.diverged) + "\n";
    }
    write_text_file(out_dir / "equal_temperature.csv", csv);
    write_text_file(out_dir / "equal_temperature.json", report.to_json().dump(2) + "\n");
    ExperimentConfig cfg = base;
    cfg.objective = resolved_objective;
    Json tuples = Json::array();
    for (const auto& t : all) tuples.push_back(Json{{"lr", t.rate}, {"batch_size", t.batch_size}, {"momentum", t.momentum}});
    Json cfg_json = cfg.to_json();
    cfg_json["group"] = Json(std::vector<Json>(tuples.begin(), tuples.begin() + static_cast<std::ptrdiff_t>(group.size())));
    if (control) cfg_json["control"] = tuples.back();
    write_text_file(out_dir / "manifest.json",
                    Json{{"command", "equal-temperature"}, {"config", cfg_json}, {"config_hash", config_hash(cfg_json)},
                         {"runs", runs}, {"started_at", iso_timestamp()}}
                            .dump(2) + "\n");
  }
  return report;
}

}  // namespace randlr
