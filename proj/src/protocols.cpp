#include "randlr/protocols.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "randlr/error.hpp"

namespace randlr {

ProtocolSpec ProtocolSpec::constant(double rate) {
  ProtocolSpec s{ProtocolKind::Constant, rate, 0.0, 1};
  s.validate();
  return s;
}

ProtocolSpec ProtocolSpec::random_uniform(double rate, double half_width) {
  ProtocolSpec s{ProtocolKind::RandomUniform, rate, half_width, 1};
  s.validate();
  return s;
}

ProtocolSpec ProtocolSpec::cyclic_cosine(double rate, std::uint32_t period) {
  ProtocolSpec s{ProtocolKind::CyclicCosine, rate, 0.0, period};
  s.validate();
  return s;
}

void ProtocolSpec::validate() const {
  if (!(base_rate > 0.0) || !std::isfinite(base_rate)) {
    throw InvalidArgument("protocol base rate must be positive and finite");
  }
  if (kind == ProtocolKind::RandomUniform && !(half_width >= 0.0 && half_width <= 1.0)) {
    throw InvalidArgument("random protocol half-width must lie in [0, 1]");
  }
  if (kind == ProtocolKind::CyclicCosine && period == 0) {
    throw InvalidArgument("cyclic protocol period must be at least one epoch");
  }
}

std::string ProtocolSpec::label() const {
  std::ostringstream os;
  switch (kind) {
    case ProtocolKind::Constant:
      os << "constant";
      break;
    case ProtocolKind::RandomUniform:
      os << "random_d" << half_width;
      break;
    case ProtocolKind::CyclicCosine:
      os << "cyclic_p" << period;
      break;
  }
  return os.str();
}

std::string to_string(ProtocolKind kind) {
  switch (kind) {
    case ProtocolKind::Constant:
      return "constant";
    case ProtocolKind::RandomUniform:
      return "random";
    case ProtocolKind::CyclicCosine:
      return "cyclic";
  }
  return "unknown";
}

ProtocolKind protocol_kind_from_string(const std::string& name) {
  if (name == "constant") return ProtocolKind::Constant;
  if (name == "random") return ProtocolKind::RandomUniform;
  if (name == "cyclic") return ProtocolKind::CyclicCosine;
  throw ConfigError("unknown protocol '" + name + "' (expected constant, random or cyclic)");
}

double sample_alpha(const ProtocolSpec& spec, Rng& rng) {
  switch (spec.kind) {
    case ProtocolKind::Constant:
      return 1.0;
    case ProtocolKind::RandomUniform:
      if (spec.half_width == 0.0) return 1.0;
      return rng.uniform(1.0 - spec.half_width, 1.0 + spec.half_width);
    case ProtocolKind::CyclicCosine:
      break;
  }
  throw InvalidArgument("sample_alpha called on a cyclic protocol; use rate_at_epoch");
}

double rate_at_epoch(const ProtocolSpec& spec, std::uint64_t epoch) {
  if (spec.kind != ProtocolKind::CyclicCosine) return spec.base_rate;
  // Reduce modulo 2P first so large epoch counts keep full precision.
  const std::uint64_t cycle = 2ull * spec.period;
  const double phase = std::numbers::pi * static_cast<double>(epoch % cycle) / spec.period;
  const double rate = spec.base_rate * (1.0 + std::cos(phase));
  return rate < 0.0 ? 0.0 : rate;
}

double alpha_mean(const ProtocolSpec&) { return 1.0; }

double alpha_variance(const ProtocolSpec& spec) {
  if (spec.kind != ProtocolKind::RandomUniform) return 0.0;
  return spec.half_width * spec.half_width / 3.0;
}

}  // namespace randlr
