#pragma once
// Two-reactor / flash-separator process: state, parameters and model right-hand side.

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "dlac/errors.hpp"

namespace dlac {

using Rng = std::mt19937_64;
using StateVector = Eigen::Matrix<double, 9, 1>;
using InputVector = Eigen::Matrix<double, 3, 1>;

/// Index of each physical state in the ordered state vector.
enum StateIndex : int { kXA1 = 0, kXB1, kT1, kXA2, kXB2, kT2, kXA3, kXB3, kT3 };

inline constexpr int kNumStates = 9;
inline constexpr int kNumInputs = 3;
inline constexpr std::array<const char*, kNumStates> kStateNames = {
    "x_A1", "x_B1", "T1", "x_A2", "x_B2", "T2", "x_A3", "x_B3", "T3"};
inline constexpr std::array<const char*, kNumInputs> kInputNames = {"Q1", "Q2", "Q3"};

/// True for the temperature slots (every third entry).
constexpr bool is_temperature(int index) { return index % 3 == 2; }

/// Mass fractions and temperatures of the three vessels.
struct ProcessState {
  StateVector v = StateVector::Zero();

  ProcessState() = default;
  explicit ProcessState(const StateVector& values) : v(values) {}
  ProcessState(std::initializer_list<double> values) {
    int i = 0;
    for (double x : values) v(i++) = x;
  }

  double operator[](int i) const { return v(i); }
  double& operator[](int i) { return v(i); }

  double x_A(int vessel) const { return v(3 * vessel); }
  double x_B(int vessel) const { return v(3 * vessel + 1); }
  double T(int vessel) const { return v(3 * vessel + 2); }

  bool operator==(const ProcessState& o) const { return v == o.v; }

  /// Mass-fraction pairs in [0,1] with x_A + x_B <= 1, temperatures > 0.
  bool is_valid(double tol = 0.0) const {
    for (int vessel = 0; vessel < 3; ++vessel) {
      const double a = x_A(vessel), b = x_B(vessel);
      if (!(a >= -tol && b >= -tol && a + b <= 1.0 + tol)) return false;
      if (!(T(vessel) > 0.0)) return false;
    }
    return v.allFinite();
  }
};

/// Time derivative of the state vector (state-units per hour).
struct StateDerivative {
  StateVector v = StateVector::Zero();
  double operator[](int i) const { return v(i); }
};

/// Heating rates of the three vessel jackets (kJ/h).
struct HeatInputs {
  InputVector q = InputVector::Zero();

  HeatInputs() = default;
  explicit HeatInputs(const InputVector& values) : q(values) {}
  HeatInputs(double q1, double q2, double q3) { q << q1, q2, q3; }

  double operator[](int i) const { return q(i); }
  double& operator[](int i) { return q(i); }
  bool operator==(const HeatInputs& o) const { return q == o.q; }
};

/// Componentwise admissible range of the heat inputs.
struct InputBounds {
  HeatInputs low{6.496e5, 2.240e5, 6.496e5};
  HeatInputs high{4.872e6, 1.680e6, 4.872e6};

  HeatInputs clamp(const HeatInputs& a) const {
    return HeatInputs(a.q.cwiseMax(low.q).cwiseMin(high.q));
  }
  bool contains(const HeatInputs& a) const {
    return (a.q.array() >= low.q.array()).all() && (a.q.array() <= high.q.array()).all();
  }
};

/// Physical constants of the benchmark. Enthalpies are per unit mass (kJ/kg) so that
/// dH / c_p is a temperature; vaporization enthalpies enter the separator balance directly.
struct ProcessParams {
  double V1 = 1.0, V2 = 0.5, V3 = 1.0;  // m^3
  double F10 = 5.04, F20 = 5.04;        // m^3/h
  double F1 = 55.44, F2 = 60.48;
  double Fr = 50.4, Fp = 0.504;
  double x_A10 = 1.0, x_B10 = 0.0, x_A20 = 1.0, x_B20 = 0.0;
  double T10 = 300.0, T20 = 300.0;  // K
  double k1 = 9.97e6, k2 = 9.0e6;   // 1/h
  double E1 = 5.0e4, E2 = 6.0e4;    // kJ/kmol
  double r = 8.314;                 // kJ/(kmol K)
  double dH1 = -6.0e4 / 250.0, dH2 = -7.0e4 / 250.0;
  double dH_vap1 = -3.53e4, dH_vap2 = -1.57e4, dH_vap3 = -4.068e4;
  double cp = 4.2;     // kJ/(kg K)
  double rho = 1000.0; // kg/m^3
  double alpha_A = 3.5, alpha_B = 1.0, alpha_C = 0.5;

  /// Throws ConfigError when a physical constraint is violated.
  void validate() const {
    auto positive = [](double x, const char* name) {
      if (!(x > 0.0) || !std::isfinite(x)) throw ConfigError(std::string(name) + " must be > 0");
    };
    positive(V1, "V1"), positive(V2, "V2"), positive(V3, "V3");
    positive(F10, "F10"), positive(F20, "F20"), positive(F1, "F1"), positive(F2, "F2");
    positive(Fr, "Fr"), positive(Fp, "Fp");
    positive(cp, "cp"), positive(rho, "rho"), positive(r, "r");
    positive(alpha_A, "alpha_A"), positive(alpha_B, "alpha_B"), positive(alpha_C, "alpha_C");
    if (!(alpha_A > alpha_B && alpha_B > alpha_C))
      throw ConfigError("volatilities must satisfy alpha_A > alpha_B > alpha_C");
  }
};

/// Overhead vapor composition of the separator.
struct VaporComposition {
  double x_A = 0.0, x_B = 0.0, x_C = 0.0;
};

inline constexpr double kDegenerateTolerance = 1e-12;

inline VaporComposition vapor_composition(double x_A3, double x_B3, double x_C3, double alpha_A,
                                          double alpha_B, double alpha_C) {
  const double den = alpha_A * x_A3 + alpha_B * x_B3 + alpha_C * x_C3;
  if (!(den > kDegenerateTolerance))
    throw EvaluationError("degenerate separator composition: relative-volatility denominator " +
                          std::to_string(den));
  return {alpha_A * x_A3 / den, alpha_B * x_B3 / den, alpha_C * x_C3 / den};
}

inline StateDerivative derivatives(const ProcessState& s, const HeatInputs& a,
                                   const ProcessParams& p) {
  const double xA1 = s[kXA1], xB1 = s[kXB1], T1 = s[kT1];
  const double xA2 = s[kXA2], xB2 = s[kXB2], T2 = s[kT2];
  const double xA3 = s[kXA3], xB3 = s[kXB3], T3 = s[kT3];
  if (!(T1 > 0.0 && T2 > 0.0 && T3 > 0.0))
    throw EvaluationError("non-positive temperature in derivative evaluation");

  const auto vap = vapor_composition(xA3, xB3, 1.0 - xA3 - xB3, p.alpha_A, p.alpha_B, p.alpha_C);

  const double r1_1 = p.k1 * std::exp(-p.E1 / (p.r * T1));
  const double r2_1 = p.k2 * std::exp(-p.E2 / (p.r * T1));
  const double r1_2 = p.k1 * std::exp(-p.E1 / (p.r * T2));
  const double r2_2 = p.k2 * std::exp(-p.E2 / (p.r * T2));
  const double recycle_out = p.Fr + p.Fp;

  StateDerivative d;
  auto& f = d.v;
  f(kXA1) = p.F10 / p.V1 * (p.x_A10 - xA1) + p.Fr / p.V1 * (vap.x_A - xA1) - r1_1 * xA1;
  f(kXB1) = p.F10 / p.V1 * (p.x_B10 - xB1) + p.Fr / p.V1 * (vap.x_B - xB1) + r1_1 * xA1 -
            r2_1 * xB1;
  f(kT1) = p.F10 / p.V1 * (p.T10 - T1) + p.Fr / p.V1 * (T3 - T1) - p.dH1 / p.cp * r1_1 * xA1 -
           p.dH2 / p.cp * r2_1 * xB1 + a[0] / (p.rho * p.cp * p.V1);

  f(kXA2) = p.F1 / p.V2 * (xA1 - xA2) + p.F20 / p.V2 * (p.x_A20 - xA2) - r1_2 * xA2;
  f(kXB2) = p.F1 / p.V2 * (xB1 - xB2) + p.F20 / p.V2 * (p.x_B20 - xB2) + r1_2 * xA2 - r2_2 * xB2;
  f(kT2) = p.F1 / p.V2 * (T1 - T2) + p.F20 / p.V2 * (p.T20 - T2) - p.dH1 / p.cp * r1_2 * xA2 -
           p.dH2 / p.cp * r2_2 * xB2 + a[1] / (p.rho * p.cp * p.V2);

  f(kXA3) = p.F2 / p.V3 * (xA2 - xA3) - recycle_out / p.V3 * (vap.x_A - xA3);
  f(kXB3) = p.F2 / p.V3 * (xB2 - xB3) - recycle_out / p.V3 * (vap.x_B - xB3);
  f(kT3) = p.F2 / p.V3 * (T2 - T3) + a[2] / (p.rho * p.cp * p.V3) +
           recycle_out / (p.rho * p.cp * p.V3) *
               (vap.x_A * p.dH_vap1 + vap.x_B * p.dH_vap2 + vap.x_C * p.dH_vap3);
  return d;
}

/// Clip mass fractions to [0,1], renormalize pairs whose sum exceeds 1, floor temperatures at 1 K.
inline ProcessState project_feasible(ProcessState s) {
  for (int vessel = 0; vessel < 3; ++vessel) {
    double& a = s.v(3 * vessel);
    double& b = s.v(3 * vessel + 1);
    double& t = s.v(3 * vessel + 2);
    a = std::clamp(a, 0.0, 1.0);
    b = std::clamp(b, 0.0, 1.0);
    if (a + b > 1.0) {
      const double sum = a + b;
      a /= sum;
      b = std::min(b / sum, 1.0 - a);
      while (a + b > 1.0) b = std::nextafter(b, 0.0);  // the quotients can round one ulp high
    }
    t = std::max(t, 1.0);
  }
  return s;
}

}  // namespace dlac
