#pragma once

#include <cstdint>
#include <string>

#include "randlr/rng.hpp"

namespace randlr {

enum class ProtocolKind { Constant, RandomUniform, CyclicCosine };

/// Learning-rate protocol: base rate l plus either a random multiplier
/// alpha ~ U[1 - delta, 1 + delta] per step, or a cosine modulation of l with
/// period `period` epochs.
struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::Constant;
  double base_rate = 0.0;
  double half_width = 0.0;  // RandomUniform only
  std::uint32_t period = 1;  // CyclicCosine only

  static ProtocolSpec constant(double rate);
  static ProtocolSpec random_uniform(double rate, double half_width);
  static ProtocolSpec cyclic_cosine(double rate, std::uint32_t period);

  /// Throws InvalidArgument when l <= 0, delta outside [0, 1] or period == 0.
  void validate() const;

  /// Short label such as "constant", "random_d1", "cyclic_p6".
  std::string label() const;
};

std::string to_string(ProtocolKind kind);
ProtocolKind protocol_kind_from_string(const std::string& name);

/// Per-step multiplier. Constant (and RandomUniform with delta == 0) returns
/// exactly 1 without touching the stream.
double sample_alpha(const ProtocolSpec& spec, Rng& rng);

/// Rate in force during epoch `epoch` (number of completed epochs).
double rate_at_epoch(const ProtocolSpec& spec, std::uint64_t epoch);

/// First two moments of alpha: E[alpha] = 1 and Var[alpha] = delta^2 / 3.
double alpha_mean(const ProtocolSpec& spec);
double alpha_variance(const ProtocolSpec& spec);

}  // namespace randlr
