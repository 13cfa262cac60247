#include <doctest.h>

#include <filesystem>

#include "randlr/error.hpp"
#include "randlr/harness.hpp"

using namespace randlr;
namespace fs = std::filesystem;

namespace {

Json small_sweep() {
  return Json::parse(R"({
    "objective": {"kind": "logistic", "features": 4, "train_samples": 96, "test_samples": 48, "seed": 2},
    "lr": 0.05, "momentum": 0.9, "batch_size": 16, "epochs": 4,
    "protocols": ["constant", {"kind": "random", "delta": 1}, {"kind": "cyclic", "period": 2}],
    "seeds": [0, 1, 2]
  })");
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("randlr_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("number formatting round-trips") {
  CHECK(format_number(0.1) == "0.1");
  CHECK(format_number(9.765625e-05) == "9.765625e-05");
  CHECK(format_number(2.0) == "2");
  const double v = 0.1 + 0.2;
  CHECK(std::stod(format_number(v)) == v);
}

TEST_CASE("config hash is stable and key-order independent") {
  const Json a = Json::parse(R"({"b": 1, "a": [1, 2]})");
  const Json b = Json::parse(R"({"a": [1, 2], "b": 1})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) != config_hash(Json::parse(R"({"a": [1, 2], "b": 2})")));
}

TEST_CASE("experiment config parsing") {
  const auto c = ExperimentConfig::from_json(small_sweep());
  CHECK(c.protocols.size() == 3);
  CHECK(c.seeds.size() == 3);
  const auto run = c.run(c.protocols[1], 5);
  CHECK(run.hyper.protocol.kind == ProtocolKind::RandomUniform);
  CHECK(run.hyper.protocol.half_width == 1.0);
  CHECK(run.seed == 5);
  CHECK(RunConfig::from_json(run.to_json()).to_json() == run.to_json());

  auto bad = small_sweep();
  bad["momentum"] = 1.0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_sweep();
  bad["protocols"] = Json::array({"sawtooth"});
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_sweep();
  bad["protocols"] = Json::array({Json{{"kind", "random"}, {"delta", 2}}});
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_sweep();
  bad["epochs"] = 0;
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  bad = small_sweep();
  bad["batch_size"] = "large";
  CHECK_THROWS_AS(ExperimentConfig::from_json(bad), ConfigError);
  CHECK_THROWS_AS(make_objective(Json{{"kind", "cifar"}}), ConfigError);

  const auto replicas = ExperimentConfig::from_json(Json{{"seed", 10}, {"replicas", 3}});
  CHECK(replicas.seeds == std::vector<std::uint64_t>{10, 11, 12});
}

TEST_CASE("training CSV round-trips") {
  TrainingRecord r;
  EpochRecord e;
  e.epoch = 1;
  e.rate = 0.005;
  e.train_loss = 0.1 + 0.2;
  e.test_accuracy = 0.875;
  r.epochs.push_back(e);
  const auto csv = training_csv(r);
  CHECK(csv == "epoch,lr,train_loss,train_acc,test_acc\n1,0.005,0.30000000000000004,,0.875\n");
  const auto rows = parse_training_csv(csv);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].train_loss == e.train_loss);
  CHECK_FALSE(rows[0].train_accuracy.has_value());
  CHECK(*rows[0].test_accuracy == 0.875);
  CHECK_THROWS_AS(parse_training_csv("nope\n"), ParseError);
  CHECK_THROWS_AS(parse_training_csv("epoch,lr,train_loss,train_acc,test_acc\n1,x,2,,\n"), ParseError);
}

TEST_CASE("aggregation") {
  const std::string h = "epoch,lr,train_loss,train_acc,test_acc\n";
  const auto rows = aggregate_runs({{"a", h + "1,0.1,1,,0.5\n2,0.1,1,,0.75\n"},
                                    {"b", h},
                                    {"a", h + "1,0.1,1,,0.25\n2,0.1,1,,0.5\n"}});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].label == "a");
  CHECK(rows[0].runs == 2);
  CHECK(rows[0].best_mean == doctest::Approx(0.625));
  CHECK(rows[0].final_mean == doctest::Approx(0.625));
  CHECK(rows[0].best_std == doctest::Approx(std::sqrt(0.03125)));
  CHECK(rows[1].diverged == 1);
}

TEST_CASE("sweeps are deterministic and re-aggregate exactly") {
  const auto cfg = ExperimentConfig::from_json(small_sweep());
  const auto d1 = scratch("a"), d2 = scratch("b");
  const auto a = run_protocol_sweep(cfg, d1, 1);
  const auto b = run_protocol_sweep(cfg, d2, 3);
  CHECK(a.runs.size() == 9);
  CHECK(a.aggregate.size() == 3);
  CHECK(a.aggregate_csv == b.aggregate_csv);
  CHECK(read_text_file(d1 / "aggregate.csv") == read_text_file(d2 / "aggregate.csv"));
  CHECK(read_text_file(d1 / "runs/random_d1_seed2.csv") == read_text_file(d2 / "runs/random_d1_seed2.csv"));
  CHECK(reaggregate(d1) == read_text_file(d1 / "aggregate.csv"));
  const auto manifest = Json::parse(read_text_file(d1 / "manifest.json"));
  CHECK(manifest.at("runs").size() == 9);
  CHECK(manifest.at("config_hash") == config_hash(manifest.at("config")));
  CHECK(manifest.at("config").at("objective").at("features") == 4);

  // The manifest alone regenerates any run.
  const auto rerun = run_protocol_sweep(ExperimentConfig::from_json(manifest.at("config")), {}, 1);
  CHECK(rerun.aggregate_csv == a.aggregate_csv);
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("single run sweep") {
  auto j = small_sweep();
  j["protocols"] = Json::array({"constant"});
  j["seeds"] = Json::array({4});
  const auto s = run_protocol_sweep(ExperimentConfig::from_json(j));
  REQUIRE(s.runs.size() == 1);
  REQUIRE(s.runs[0].record.has_value());
  CHECK(s.aggregate[0].best_std == 0.0);
  CHECK(s.aggregate[0].best_mean == *s.runs[0].record->best_test_accuracy());
}

TEST_CASE("divergent runs are recorded without aborting") {
  auto j = small_sweep();
  j["objective"] = Json::parse(R"({"kind": "quadratic"})");
  j["lr"] = 10.0;
  j["batch_size"] = 1;
  j["epochs"] = 6;
  j["protocols"] = Json::array({"constant"});
  const auto s = run_protocol_sweep(ExperimentConfig::from_json(j));
  CHECK(s.all_diverged);
  CHECK(s.aggregate[0].diverged == 3);
  CHECK_FALSE(s.runs[0].error.empty());
}

TEST_CASE("equal-temperature validation happens before training") {
  auto base = ExperimentConfig::from_json(small_sweep());
  const std::vector<TemperatureTuple> mixed{{0.02, 8, 0.0}, {0.02, 16, 0.0}};
  CHECK_THROWS_AS(run_equal_temperature_experiment(base, mixed, std::nullopt), ConfigError);
  const std::vector<TemperatureTuple> group{{0.02, 8, 0.0}, {0.01, 4, 0.0}};
  CHECK_THROWS_AS(run_equal_temperature_experiment(base, group, TemperatureTuple{0.04, 16, 0.0}), ConfigError);
}

TEST_CASE("equal-temperature group of one") {
  auto base = ExperimentConfig::from_json(small_sweep());
  const auto r = run_equal_temperature_experiment(base, {{0.02, 8, 0.0}}, std::nullopt);
  CHECK_FALSE(r.comparison_made);
  CHECK(r.tuples.size() == 1);
  CHECK(r.tuples[0].final_test.size() == 3);
}

TEST_CASE("equal-temperature report") {
  auto base = ExperimentConfig::from_json(small_sweep());
  const auto dir = scratch("eqt");
  const auto r = run_equal_temperature_experiment(base, {{0.02, 8, 0.0}, {0.01, 4, 0.0}}, TemperatureTuple{0.01, 8, 0.0},
                                                  dir, 2);
  CHECK(r.comparison_made);
  CHECK(r.tuples.size() == 3);
  CHECK(r.tuples[2].role == "control");
  CHECK(r.tuples[0].loss_by_epoch.size() == 4);
  CHECK(fs::exists(dir / "equal_temperature.csv"));
  const auto j = Json::parse(read_text_file(dir / "equal_temperature.json"));
  CHECK(j.at("passed") == r.passed);
  fs::remove_all(dir);
}

TEST_CASE("commands") {
  const auto t = run_command("temperature", Json{{"lr", 0.005}, {"batch_size", 256}, {"momentum", 0.9}}, {}, 1);
  CHECK(t.report.at("temperature").get<double>() == doctest::Approx(9.765625e-5));
  CHECK(t.outcome == CommandOutcome::Ok);
  CHECK_THROWS_AS(run_command("fly", Json::object(), {}, 1), ConfigError);
  CHECK_THROWS_AS(run_command("temperature", Json{{"momentum", 1.0}}, {}, 1), ConfigError);

  const auto w = run_command("weak-error", Json::object(), {}, 1);
  CHECK(w.report.at("passed") == true);

  const Json gibbs{{"samples", 100000}, {"seed", 3}};
  CHECK(run_command("verify-gibbs", gibbs, {}, 1).outcome == CommandOutcome::Ok);
  auto cold = gibbs;
  cold["temperature_scale"] = 0.5;
  CHECK(run_command("verify-gibbs", cold, {}, 1).outcome == CommandOutcome::VerificationFailed);

  const auto dir = scratch("cmd");
  const auto d = run_command("estimate-diffusion", Json{{"samples", 20000}}, dir, 1);
  CHECK(d.report.at("split_residual").get<double>() < 1e-12);
  CHECK(fs::exists(dir / "diffusion_comparison.csv"));
  CHECK(fs::exists(dir / "diffusion_report.json"));
  const auto s = run_command("sample-stationary", Json{{"samples", 20000}}, dir, 1);
  CHECK(fs::exists(dir / "moments.csv"));
  CHECK(fs::exists(dir / "histograms.csv"));

  const Json run{{"objective", {{"kind", "logistic"}}}, {"epochs", 2}, {"batch_size", 8}, {"lr", 0.05}};
  const auto tr = run_command("train", run, dir, 1);
  CHECK(tr.report.at("status") == "ok");
  const auto csv1 = read_text_file(dir / "training.csv");
  run_command("train", run, dir, 1);
  CHECK(read_text_file(dir / "training.csv") == csv1);
  fs::remove_all(dir);
}
