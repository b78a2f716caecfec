#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace slerev {

/// Thrown when an argument lies outside the domain of a formula.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Thrown when an interior point turns out to belong to a hull.
class SwallowedPointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when the SDE positivity guard keeps tripping (step too coarse).
class StepSizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for invalid run configurations.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Model constants derived from kappa.
///
/// The Loewner equation is normalized as dg/dt = a / (g - U) so that the
/// half-plane capacity grows like a*t with a = 2/kappa.
struct Params {
  double kappa = 4.0;
  double a = 0.5;
  double b = 0.25;               // boundary scaling exponent (3a - 1)/2
  double central_charge = 1.0;   // (6 - kappa)(3 kappa - 8)/(2 kappa)

  static double rate_of(double kappa) { return 2.0 / kappa; }
  static double exponent_of(double kappa) { return (3.0 * rate_of(kappa) - 1.0) / 2.0; }
  static double central_charge_of(double kappa) {
    return (6.0 - kappa) * (3.0 * kappa - 8.0) / (2.0 * kappa);
  }

  static Params from_kappa(double kappa) {
    if (!(kappa > 0.0 && kappa < 8.0)) {
      throw DomainError("kappa must lie in (0, 8), got " + std::to_string(kappa));
    }
    Params p;
    p.kappa = kappa;
    p.a = rate_of(kappa);
    p.b = exponent_of(kappa);
    p.central_charge = central_charge_of(kappa);
    return p;
  }

  bool simple_curves() const { return kappa <= 4.0; }
};

/// kappa = 8/3, where the central charge vanishes.
inline constexpr double kKappaZeroCharge = 8.0 / 3.0;

inline bool is_zero_charge_kappa(double kappa) {
  return std::abs(kappa - kKappaZeroCharge) < 1e-12;
}

}  // namespace slerev
