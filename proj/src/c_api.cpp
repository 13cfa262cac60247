#include "randlr/randlr.h"

#include <cmath>
#include <cstring>
#include <limits>
#include <new>
#include <string>

#include "randlr/error.hpp"
#include "randlr/harness.hpp"
#include "randlr/thermo.hpp"

struct randlr_objective {
  std::unique_ptr<randlr::Objective> impl;
};

struct randlr_record {
  randlr::TrainingRecord impl;
};

namespace {

thread_local std::string last_error;

randlr_status set_error(randlr_status status, const std::string& message) {
  last_error = message;
  return status;
}

randlr_status status_for(randlr::ErrorKind kind) {
  using randlr::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return RANDLR_INVALID_ARGUMENT;
    case ErrorKind::Config: return RANDLR_CONFIG;
    case ErrorKind::Diverged: return RANDLR_DIVERGED;
    case ErrorKind::Verification: return RANDLR_VERIFICATION;
    case ErrorKind::Parse: return RANDLR_PARSE;
    case ErrorKind::Io: return RANDLR_IO;
    case ErrorKind::Capacity: return RANDLR_CAPACITY;
    case ErrorKind::OutOfRange: return RANDLR_OUT_OF_RANGE;
  }
  return RANDLR_INTERNAL;
}

template <typename Fn>
randlr_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    return fn();
  } catch (const randlr::Error& e) {
    return set_error(status_for(e.kind()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return set_error(RANDLR_CONFIG, e.what());
  } catch (const std::bad_alloc&) {
    return set_error(RANDLR_CAPACITY, "out of memory");
  } catch (const std::exception& e) {
    return set_error(RANDLR_INTERNAL, e.what());
  } catch (...) {
    return set_error(RANDLR_INTERNAL, "unknown error");
  }
}

char* copy_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

randlr::Json parse_json(const char* text) {
  if (!text || !*text) return randlr::Json::object();
  try {
    return randlr::Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw randlr::ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

randlr::ProtocolSpec protocol(const char* kind, double base_rate, double half_width, uint32_t period) {
  if (!kind) throw randlr::InvalidArgument("protocol kind is null");
  randlr::ProtocolSpec p;
  p.kind = randlr::protocol_kind_from_string(kind);
  p.base_rate = base_rate;
  p.half_width = p.kind == randlr::ProtocolKind::RandomUniform ? half_width : 0.0;
  p.period = p.kind == randlr::ProtocolKind::CyclicCosine ? period : 1;
  p.validate();
  return p;
}

#define RANDLR_REQUIRE(ptr) \
  if (!(ptr)) return set_error(RANDLR_INVALID_ARGUMENT, #ptr " must not be null")

}  // namespace

extern "C" {

const char* randlr_version(void) { return "0.1.0"; }

const char* randlr_status_name(randlr_status status) {
  switch (status) {
    case RANDLR_OK: return "ok";
    case RANDLR_INVALID_ARGUMENT: return "invalid_argument";
    case RANDLR_CONFIG: return "config";
    case RANDLR_DIVERGED: return "diverged";
    case RANDLR_VERIFICATION: return "verification";
    case RANDLR_PARSE: return "parse";
    case RANDLR_IO: return "io";
    case RANDLR_CAPACITY: return "capacity";
    case RANDLR_INTERNAL: return "internal";
    case RANDLR_OUT_OF_RANGE: return "out_of_range";
  }
  return "unknown";
}

const char* randlr_last_error(void) { return last_error.c_str(); }

void randlr_string_free(char* s) { std::free(s); }

randlr_status randlr_rate_at_epoch(const char* kind, double base_rate, double half_width, uint32_t period,
                                   uint64_t epoch, double* out_rate) {
  return guarded([&] {
    RANDLR_REQUIRE(out_rate);
    *out_rate = randlr::rate_at_epoch(protocol(kind, base_rate, half_width, period), epoch);
    return RANDLR_OK;
  });
}

randlr_status randlr_sample_alpha(const char* kind, double half_width, uint64_t seed, size_t count, double* out) {
  return guarded([&] {
    if (count > 0) RANDLR_REQUIRE(out);
    const auto p = protocol(kind, 1.0, half_width, 1);
    randlr::Rng rng(seed, randlr::kAlphaStream);
    for (size_t i = 0; i < count; ++i) out[i] = randlr::sample_alpha(p, rng);
    return RANDLR_OK;
  });
}

randlr_status randlr_effective_temperature(double rate, double diffusion, uint64_t batch_size, double momentum,
                                           double* out_temperature, double* out_beta) {
  return guarded([&] {
    const auto t = randlr::effective_temperature(rate, diffusion, batch_size, momentum);
    if (out_temperature) *out_temperature = t.temperature;
    if (out_beta) *out_beta = t.beta;
    return RANDLR_OK;
  });
}

randlr_status randlr_same_temperature(double rate_a, uint64_t batch_a, double momentum_a, double rate_b,
                                      uint64_t batch_b, double momentum_b, double rel_tol, int* out_same) {
  return guarded([&] {
    RANDLR_REQUIRE(out_same);
    *out_same = randlr::same_temperature({rate_a, batch_a, momentum_a}, {rate_b, batch_b, momentum_b}, rel_tol) ? 1 : 0;
    return RANDLR_OK;
  });
}

randlr_status randlr_objective_create(const char* config_json, randlr_objective** out) {
  return guarded([&] {
    RANDLR_REQUIRE(out);
    *out = nullptr;
    auto obj = std::make_unique<randlr_objective>();
    obj->impl = randlr::make_objective(parse_json(config_json));
    *out = obj.release();
    return RANDLR_OK;
  });
}

void randlr_objective_destroy(randlr_objective* obj) { delete obj; }

randlr_status randlr_objective_dim(const randlr_objective* obj, size_t* out_dim) {
  return guarded([&] {
    RANDLR_REQUIRE(obj);
    RANDLR_REQUIRE(out_dim);
    *out_dim = obj->impl->dim();
    return RANDLR_OK;
  });
}

randlr_status randlr_objective_sample_count(const randlr_objective* obj, size_t* out_count) {
  return guarded([&] {
    RANDLR_REQUIRE(obj);
    RANDLR_REQUIRE(out_count);
    *out_count = obj->impl->sample_count();
    return RANDLR_OK;
  });
}

randlr_status randlr_objective_loss(const randlr_objective* obj, const double* x, size_t dim, double* out_loss) {
  return guarded([&] {
    RANDLR_REQUIRE(obj);
    RANDLR_REQUIRE(x);
    RANDLR_REQUIRE(out_loss);
    if (dim != obj->impl->dim()) return set_error(RANDLR_INVALID_ARGUMENT, "dimension mismatch");
    const randlr::Vector v = Eigen::Map<const randlr::Vector>(x, static_cast<Eigen::Index>(dim));
    *out_loss = obj->impl->full_loss(v);
    return RANDLR_OK;
  });
}

randlr_status randlr_objective_minibatch_grad(const randlr_objective* obj, const double* x, size_t dim,
                                              const size_t* batch, size_t batch_len, double* grad) {
  return guarded([&] {
    RANDLR_REQUIRE(obj);
    RANDLR_REQUIRE(x);
    RANDLR_REQUIRE(grad);
    if (batch_len > 0) RANDLR_REQUIRE(batch);
    if (dim != obj->impl->dim()) return set_error(RANDLR_INVALID_ARGUMENT, "dimension mismatch");
    const randlr::Vector v = Eigen::Map<const randlr::Vector>(x, static_cast<Eigen::Index>(dim));
    std::vector<randlr::Index> idx(batch, batch + batch_len);
    const randlr::Vector g = randlr::minibatch_grad(*obj->impl, v, idx);
    std::copy(g.data(), g.data() + g.size(), grad);
    return RANDLR_OK;
  });
}

randlr_status randlr_train(const randlr_objective* obj, const char* config_json, randlr_record** out) {
  return guarded([&] {
    RANDLR_REQUIRE(obj);
    RANDLR_REQUIRE(out);
    *out = nullptr;
    auto json = parse_json(config_json);
    json["objective"] = randlr::Json{{"kind", obj->impl->name()}};
    const auto run = randlr::RunConfig::from_json(json);
    randlr::TrainOptions opts;
    opts.seed = run.seed;
    auto rec = std::make_unique<randlr_record>();
    rec->impl = randlr::train(*obj->impl, run.hyper, run.epochs, opts);
    *out = rec.release();
    return RANDLR_OK;
  });
}

void randlr_record_destroy(randlr_record* record) { delete record; }

randlr_status randlr_record_epochs(const randlr_record* record, size_t* out_count) {
  return guarded([&] {
    RANDLR_REQUIRE(record);
    RANDLR_REQUIRE(out_count);
    *out_count = record->impl.epochs.size();
    return RANDLR_OK;
  });
}

randlr_status randlr_record_epoch(const randlr_record* record, size_t index, double* rate, double* train_loss,
                                  double* train_accuracy, double* test_accuracy) {
  return guarded([&] {
    RANDLR_REQUIRE(record);
    if (index >= record->impl.epochs.size()) return set_error(RANDLR_OUT_OF_RANGE, "epoch index out of range");
    const auto& e = record->impl.epochs[index];
    const double nan = std::numeric_limits<double>::quiet_NaN();
    if (rate) *rate = e.rate;
    if (train_loss) *train_loss = e.train_loss;
    if (train_accuracy) *train_accuracy = e.train_accuracy.value_or(nan);
    if (test_accuracy) *test_accuracy = e.test_accuracy.value_or(nan);
    return RANDLR_OK;
  });
}

randlr_status randlr_record_csv(const randlr_record* record, char** out_csv) {
  return guarded([&] {
    RANDLR_REQUIRE(record);
    RANDLR_REQUIRE(out_csv);
    *out_csv = copy_string(randlr::training_csv(record->impl));
    return RANDLR_OK;
  });
}

randlr_status randlr_record_final_weights(const randlr_record* record, double* out, size_t dim) {
  return guarded([&] {
    RANDLR_REQUIRE(record);
    RANDLR_REQUIRE(out);
    const auto& x = record->impl.final_x;
    if (dim != static_cast<size_t>(x.size())) return set_error(RANDLR_INVALID_ARGUMENT, "dimension mismatch");
    std::copy(x.data(), x.data() + x.size(), out);
    return RANDLR_OK;
  });
}

randlr_status randlr_run(const char* command, const char* config_json, const char* out_dir, int jobs,
                         char** out_report) {
  return guarded([&] {
    RANDLR_REQUIRE(command);
    if (out_report) *out_report = nullptr;
    const auto result = randlr::run_command(command, parse_json(config_json), out_dir ? out_dir : "", jobs);
    if (out_report) *out_report = copy_string(result.report.dump(2));
    switch (result.outcome) {
      case randlr::CommandOutcome::Ok: return RANDLR_OK;
      case randlr::CommandOutcome::VerificationFailed: return set_error(RANDLR_VERIFICATION, "verification failed");
      case randlr::CommandOutcome::AllDiverged: return set_error(RANDLR_DIVERGED, "all runs diverged");
    }
    return RANDLR_INTERNAL;
  });
}

randlr_status randlr_reaggregate(const char* dir, char** out_csv) {
  return guarded([&] {
    RANDLR_REQUIRE(dir);
    RANDLR_REQUIRE(out_csv);
    *out_csv = copy_string(randlr::reaggregate(dir));
    return RANDLR_OK;
  });
}

}  // extern "C"
