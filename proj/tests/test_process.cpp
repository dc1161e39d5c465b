#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dlac/integrator.hpp"
#include "dlac/steady_state.hpp"

using namespace dlac;

namespace {

HeatInputs nominal_input() { return {2.9e6, 1.0e6, 1.717e6}; }

ProcessState steady_at_nominal() { return solve_steady_state(nominal_input(), ProcessParams{}, nominal_state()).state; }

}  // namespace

TEST(VaporComposition, SingleComponent) {
  const auto v = vapor_composition(1.0, 0.0, 0.0, 3.5, 1.0, 0.5);
  EXPECT_DOUBLE_EQ(v.x_A, 1.0);
  EXPECT_DOUBLE_EQ(v.x_B, 0.0);
  EXPECT_DOUBLE_EQ(v.x_C, 0.0);
}

TEST(VaporComposition, SymmetricCase) {
  const auto v = vapor_composition(1.0 / 3, 1.0 / 3, 1.0 / 3, 2.0, 2.0, 2.0);
  EXPECT_NEAR(v.x_A, 1.0 / 3, 1e-15);
  EXPECT_NEAR(v.x_B, 1.0 / 3, 1e-15);
  EXPECT_NEAR(v.x_C, 1.0 / 3, 1e-15);
}

TEST(VaporComposition, DirectEvaluation) {
  const auto v = vapor_composition(0.2, 0.5, 0.3, 3.0, 2.0, 1.0);
  EXPECT_NEAR(v.x_A, 0.6 / 1.9, 1e-15);
  EXPECT_NEAR(v.x_B, 1.0 / 1.9, 1e-15);
  EXPECT_NEAR(v.x_C, 0.3 / 1.9, 1e-15);
}

TEST(VaporComposition, SumsToOneAndStaysInUnitInterval) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 10000; ++t) {
    double a = u(rng), b = u(rng) * (1.0 - a);
    const auto v = vapor_composition(a, b, 1.0 - a - b, 3.5, 1.0, 0.5);
    EXPECT_NEAR(v.x_A + v.x_B + v.x_C, 1.0, 1e-12);
    for (double x : {v.x_A, v.x_B, v.x_C}) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(VaporComposition, DegenerateDenominatorThrows) {
  EXPECT_THROW(vapor_composition(0.0, 0.0, 0.0, 3.5, 1.0, 0.5), EvaluationError);
}

TEST(Derivatives, VanishWithoutFlowsReactionsOrHeat) {
  ProcessParams p;
  p.F10 = p.F20 = p.F1 = p.F2 = p.Fr = p.Fp = 0.0;
  p.k1 = p.k2 = 0.0;
  const ProcessState s{0.3, 0.4, 400.0, 0.2, 0.5, 410.0, 0.1, 0.6, 420.0};
  const StateDerivative d = derivatives(s, HeatInputs(0, 0, 0), p);
  for (int i = 0; i < kNumStates; ++i) EXPECT_EQ(d[i], 0.0) << kStateNames[i];
}

TEST(Derivatives, MatchesIndependentTermByTermEvaluation) {
  // Interior state, every term written out separately in long double.
  const ProcessParams p;
  const ProcessState s{0.21, 0.63, 470.0, 0.23, 0.61, 462.0, 0.08, 0.69, 468.0};
  const HeatInputs a(3.1e6, 0.9e6, 1.8e6);
  using ld = long double;
  const ld xA1 = 0.21L, xB1 = 0.63L, T1 = 470.0L, xA2 = 0.23L, xB2 = 0.61L, T2 = 462.0L;
  const ld xA3 = 0.08L, xB3 = 0.69L, T3 = 468.0L, xC3 = 1.0L - xA3 - xB3;
  const ld den = 3.5L * xA3 + 1.0L * xB3 + 0.5L * xC3;
  const ld yA = 3.5L * xA3 / den, yB = xB3 / den, yC = 0.5L * xC3 / den;
  const ld R = 8.314L;
  const ld k1T1 = 9.97e6L * std::exp(-5.0e4L / (R * T1)), k2T1 = 9.0e6L * std::exp(-6.0e4L / (R * T1));
  const ld k1T2 = 9.97e6L * std::exp(-5.0e4L / (R * T2)), k2T2 = 9.0e6L * std::exp(-6.0e4L / (R * T2));
  const ld dH1 = -6.0e4L / 250.0L, dH2 = -7.0e4L / 250.0L, cp = 4.2L, rho = 1000.0L;
  const ld F10 = 5.04L, F20 = 5.04L, F1 = 55.44L, F2 = 60.48L, Fr = 50.4L, Fp = 0.504L;
  const ld V1 = 1.0L, V2 = 0.5L, V3 = 1.0L;

  ld expect[9];
  expect[0] = F10 / V1 * (1.0L - xA1) + Fr / V1 * (yA - xA1) - k1T1 * xA1;
  expect[1] = F10 / V1 * (0.0L - xB1) + Fr / V1 * (yB - xB1) + k1T1 * xA1 - k2T1 * xB1;
  expect[2] = F10 / V1 * (300.0L - T1) + Fr / V1 * (T3 - T1) - dH1 / cp * k1T1 * xA1 - dH2 / cp * k2T1 * xB1 +
              3.1e6L / (rho * cp * V1);
  expect[3] = F1 / V2 * (xA1 - xA2) + F20 / V2 * (1.0L - xA2) - k1T2 * xA2;
  expect[4] = F1 / V2 * (xB1 - xB2) + F20 / V2 * (0.0L - xB2) + k1T2 * xA2 - k2T2 * xB2;
  expect[5] = F1 / V2 * (T1 - T2) + F20 / V2 * (300.0L - T2) - dH1 / cp * k1T2 * xA2 - dH2 / cp * k2T2 * xB2 +
              0.9e6L / (rho * cp * V2);
  expect[6] = F2 / V3 * (xA2 - xA3) - (Fr + Fp) / V3 * (yA - xA3);
  expect[7] = F2 / V3 * (xB2 - xB3) - (Fr + Fp) / V3 * (yB - xB3);
  expect[8] = F2 / V3 * (T2 - T3) + 1.8e6L / (rho * cp * V3) +
              (Fr + Fp) / (rho * cp * V3) * (yA * -3.53e4L + yB * -1.57e4L + yC * -4.068e4L);

  const StateDerivative d = derivatives(s, a, p);
  for (int i = 0; i < kNumStates; ++i)
    EXPECT_NEAR(d[i], double(expect[i]), 1e-9 * std::max(1.0, std::abs(double(expect[i])))) << kStateNames[i];
}

TEST(Derivatives, NominalPairIsNearEquilibriumAfterResolve) {
  const ProcessState s = steady_at_nominal();
  EXPECT_LT(derivatives(s, nominal_input(), ProcessParams{}).v.lpNorm<Eigen::Infinity>(), 1e-8);
  // The re-solved equilibrium stays close to the tabulated operating point; the closed recycle loop
  // amplifies the four-digit rounding of the table to a few percent in x_A1.
  const ProcessState tab = nominal_state();
  for (int i = 0; i < kNumStates; ++i) {
    if (is_temperature(i))
      EXPECT_NEAR(s[i], tab[i], 2.0) << kStateNames[i];
    else
      EXPECT_NEAR(s[i], tab[i], 0.05 * tab[i]) << kStateNames[i];
  }
}

TEST(Rk4, ZeroStepIsIdentity) {
  const ProcessState s = nominal_state();
  EXPECT_EQ(rk4_step(s, nominal_input(), 0.0, ProcessParams{}), s);
}

TEST(Rk4, ScalarDecayMatchesTaylorPolynomial) {
  const double h = 0.1;
  const double y = rk4_advance(1.0, h, [](double v) { return -v; });
  const double taylor4 = 1 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24;
  EXPECT_NEAR(y, taylor4, 1e-15);
  EXPECT_NEAR(y, std::exp(-h), 2.0 * std::pow(h, 5) / 120);
}

TEST(Rk4, ScalarDecayConvergesAtFourthOrder) {
  auto solve = [](int n) {
    double y = 1.0;
    for (int k = 0; k < n; ++k) y = rk4_advance(y, 1.0 / n, [](double v) { return -v; });
    return std::abs(y - std::exp(-1.0));
  };
  const double ratio = solve(10) / solve(20);
  EXPECT_NEAR(ratio, 16.0, 1.0);
}

TEST(Rk4, ProcessModelConvergesAtFourthOrder) {
  const ProcessParams p;
  const auto refs = generate_reference_set(p, InputGrid::single(nominal_input()));
  ProcessState s0 = refs.front().state;
  s0[kT1] += 8.0;
  s0[kXA2] += 0.03;
  s0[kT3] -= 5.0;
  const HeatInputs a = refs.front().input;
  auto integrate = [&](double dt) {
    ProcessState s = s0;
    const int n = static_cast<int>(std::lround(0.2 / dt));
    for (int k = 0; k < n; ++k) s = rk4_step(s, a, dt, p, {1});
    return s.v;
  };
  const StateVector ref = integrate(0.01 / 100);
  const StateVector scale = residual_scale(100.0);
  const double e1 = ((integrate(0.01) - ref).array() / scale.array()).matrix().lpNorm<Eigen::Infinity>();
  const double e2 = ((integrate(0.005) - ref).array() / scale.array()).matrix().lpNorm<Eigen::Infinity>();
  EXPECT_GE(std::log2(e1 / e2), 3.9);
}

TEST(Rk4, NonFiniteDerivativeReportsStage) {
  try {
    rk4_advance(1.0, 0.1, [](double) { return NAN; });
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.stage(), 1);
  }
}

TEST(StochasticStep, ZeroNoiseIsBitExactRk4) {
  Rng rng(5);
  const ProcessState s = nominal_state();
  const ProcessState a = stochastic_step(s, nominal_input(), 0.005, ProcessParams{}, DisturbanceSpec::none(), rng);
  const ProcessState b = rk4_step(s, nominal_input(), 0.005, ProcessParams{});
  EXPECT_TRUE(a == b);
}

TEST(StochasticStep, DrawsRespectBounds) {
  Rng rng(6);
  DisturbanceSpec d;
  d.sigma.setConstant(1.0);
  d.bound.setConstant(0.5);
  for (int t = 0; t < 10000; ++t) {
    const StateVector w = sample_disturbance(d, rng);
    EXPECT_TRUE((w.array().abs() <= 0.5).all());
  }
}

TEST(StochasticStep, EmpiricalStdMatchesTruncatedNormal) {
  Rng rng(7);
  const DisturbanceSpec d = DisturbanceSpec::sigma_w1();
  for (int comp : {0, 2}) {
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int t = 0; t < n; ++t) {
      const double w = sample_truncated_normal(d.sigma(comp), d.bound(comp), rng);
      sum += w;
      sq += w * w;
    }
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    EXPECT_NEAR(sd / truncated_normal_stddev(d.sigma(comp), d.bound(comp)), 1.0, 0.02);
  }
  // A truncation that bites: sigma = 1, bound = 1.
  double sq = 0.0;
  for (int t = 0; t < 100000; ++t) {
    const double w = sample_truncated_normal(1.0, 1.0, rng);
    sq += w * w;
  }
  EXPECT_NEAR(std::sqrt(sq / 100000) / truncated_normal_stddev(1.0, 1.0), 1.0, 0.02);
}

TEST(StochasticStep, FeasibilityPreservedUnderSustainedNoise) {
  const ProcessParams p;
  const ProcessState ref = steady_at_nominal();
  Rng rng(8);
  ProcessState s = ref;
  for (int k = 0; k < 10000; ++k) {
    s = stochastic_step(s, nominal_input(), 0.005, p, DisturbanceSpec::sigma_w1(), rng);
    ASSERT_TRUE(s.is_valid()) << "step " << k;
  }
}

TEST(Projection, ClipsRenormalizesAndFloors) {
  ProcessState s{-0.1, 0.5, -3.0, 0.8, 0.6, 400.0, 1.3, 0.2, 0.5};
  const ProcessState q = project_feasible(s);
  EXPECT_EQ(q[kXA1], 0.0);
  EXPECT_EQ(q[kT1], 1.0);
  EXPECT_NEAR(q[kXA2] + q[kXB2], 1.0, 1e-15);
  EXPECT_NEAR(q[kXA2] / q[kXB2], 0.8 / 0.6, 1e-12);
  EXPECT_NEAR(q[kXA3] + q[kXB3], 1.0, 1e-15);
  EXPECT_TRUE(q.is_valid());
}

TEST(SteadyState, FixedPointReturnsImmediately) {
  const ProcessState s = steady_at_nominal();
  const auto r = solve_steady_state(nominal_input(), ProcessParams{}, s);
  EXPECT_LE(r.newton_iterations, 1);
  EXPECT_FALSE(r.used_fallback);
  EXPECT_LT((r.state.v - s.v).lpNorm<Eigen::Infinity>(), 1e-9);
}

TEST(SteadyState, ResidualBelowTolerance) {
  const ProcessParams p;
  const HeatInputs a(3.2e6, 1.1e6, 1.9e6);
  const auto r = solve_steady_state(a, p, nominal_state());
  EXPECT_LT(derivatives(r.state, a, p).v.lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_LT(r.residual, 1e-8);
}

TEST(SteadyState, MatchesLongHorizonIntegration) {
  const ProcessParams p;
  const HeatInputs a(3.0e6, 1.05e6, 1.8e6);
  const ProcessState newton = open_loop_equilibrium(a, p, nominal_state()).state;
  ProcessState s = nominal_state();
  for (int k = 0; k < 100000; ++k) s = rk4_step(s, a, 0.005, p);  // 500 h
  for (int i = 0; i < kNumStates; ++i) EXPECT_NEAR(s[i], newton[i], 1e-6) << kStateNames[i];
}

TEST(SteadyState, NonConvergenceCarriesBestResidual) {
  SteadyStateOptions opt;
  opt.max_newton_iterations = 1;
  opt.fallback_horizon = 0.01;
  opt.tolerance = 1e-30;
  try {
    solve_steady_state(nominal_input(), ProcessParams{}, nominal_state(), opt);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_TRUE(std::isfinite(e.best_residual()));
    EXPECT_GT(e.best_residual(), 0.0);
  }
}

TEST(ReferenceSet, SingletonGridMatchesSolver) {
  const ProcessParams p;
  const auto set = generate_reference_set(p, InputGrid::single(nominal_input()));
  ASSERT_EQ(set.size(), 1u);
  EXPECT_LT((set[0].state.v - steady_at_nominal().v).lpNorm<Eigen::Infinity>(), 1e-8);
  EXPECT_TRUE(set[0].input == nominal_input());
}

TEST(ReferenceSet, GridOutsideBoundsIsRejected) {
  const InputGrid bad{HeatInputs(1e5, 1e6, 1e6), HeatInputs(2e6, 1e6, 1e6), 2};
  EXPECT_THROW(generate_reference_set(ProcessParams{}, bad), ConfigError);
}

TEST(ReferenceSet, BenchmarkGridYieldsManyValidDistinctStates) {
  const ProcessParams p;
  const auto set = generate_reference_set(p, InputGrid::benchmark());
  EXPECT_GE(set.size(), 1000u);
  for (const auto& r : set) {
    EXPECT_TRUE(r.state.is_valid());
    EXPECT_LT(derivatives(r.state, r.input, p).v.lpNorm<Eigen::Infinity>(), 1e-8);
  }
  const auto sel = select_references(set);
  EXPECT_GT(sel.high.state[kXA1], sel.middle.state[kXA1]);
  EXPECT_GT(sel.middle.state[kXA1], sel.low.state[kXA1]);
}

TEST(SelectReferences, OrdersByDescendingXA1) {
  ReferenceSet set;
  for (double x : {0.2, 0.3, 0.1}) {
    ReferencePair r;
    r.state[kXA1] = x;
    set.push_back(r);
  }
  const auto sel = select_references(set);
  EXPECT_EQ(sel.high.state[kXA1], 0.3);
  EXPECT_EQ(sel.middle.state[kXA1], 0.2);
  EXPECT_EQ(sel.low.state[kXA1], 0.1);
}

TEST(SelectReferences, SingletonRepeats) {
  ReferenceSet set(1);
  set[0].state[kXA1] = 0.4;
  const auto sel = select_references(set);
  EXPECT_EQ(sel.high.state[kXA1], 0.4);
  EXPECT_EQ(sel.middle.state[kXA1], 0.4);
  EXPECT_EQ(sel.low.state[kXA1], 0.4);
}

TEST(SelectReferences, EvenSizeTakesLowerMiddle) {
  ReferenceSet set;
  for (double x : {0.4, 0.1, 0.3, 0.2}) {
    ReferencePair r;
    r.state[kXA1] = x;
    set.push_back(r);
  }
  EXPECT_EQ(select_references(set).middle.state[kXA1], 0.2);
  EXPECT_THROW(select_references(ReferenceSet{}), ConfigError);
}

TEST(UniformReferences, SpreadsByIndex) {
  ReferenceSet set;
  for (int k = 0; k < 21; ++k) {
    ReferencePair r;
    r.state[kXA1] = 0.01 * (20 - k);
    set.push_back(r);
  }
  const auto u = uniform_references(set, 11);
  ASSERT_EQ(u.size(), 11u);
  for (int j = 0; j < 11; ++j) EXPECT_NEAR(u[j].state[kXA1], 0.02 * j, 1e-15);
}

TEST(ProcessParams, ValidationRejectsBadVolatilityOrder) {
  ProcessParams p;
  EXPECT_NO_THROW(p.validate());
  p.alpha_B = 4.0;
  EXPECT_THROW(p.validate(), ConfigError);
  ProcessParams q;
  q.V2 = 0.0;
  EXPECT_THROW(q.validate(), ConfigError);
}

TEST(InputBounds, ClampAndContain) {
  const InputBounds b;
  EXPECT_TRUE(b.contains(nominal_input()));
  const HeatInputs c = b.clamp(HeatInputs(0.0, 1e9, 2e6));
  EXPECT_EQ(c[0], b.low[0]);
  EXPECT_EQ(c[1], b.high[1]);
  EXPECT_EQ(c[2], 2e6);
}
