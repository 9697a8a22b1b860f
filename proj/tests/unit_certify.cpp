// Copyright 2026 The sdmpc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "sdmpc/certify.hpp"
#include "sdmpc/sampling.hpp"

using namespace sdmpc;

namespace {
const double kSqrt3 = std::sqrt(3.0);
const double kSqrt2 = std::sqrt(2.0);

/// Straight-line reimplementation of the horizon condition scan, kept
/// deliberately naive so the library version has an independent referee.
std::optional<int> naive_smallest_horizon(double gamma, double M, double C, double cbar,
                                          double delta, int cap) {
  const double beta = std::max(C / M, gamma);
  for (int N = 1; N <= cap; ++N) {
    double decay = std::pow(beta / (beta + delta), N - 1);
    double lhs = std::max(C / (M * delta), cbar * (beta / delta) * (beta / delta)) * decay;
    if (lhs < 1.0) return N;
  }
  return std::nullopt;
}
}  // namespace

TEST_SUITE("certify") {

TEST_CASE("Riccati constants of the benchmark plant") {
  Plant p = build_double_integrator();
  LqConstants lq = solve_care(*p.lin, p.cost);
  CHECK(std::abs(lq.P(0, 0) - kSqrt3) < 1e-10);
  CHECK(std::abs(lq.P(0, 1) - 1.0) < 1e-10);
  CHECK(std::abs(lq.P(1, 0) - 1.0) < 1e-10);
  CHECK(std::abs(lq.P(1, 1) - kSqrt3) < 1e-10);
  CHECK(std::abs(lq.F(0, 0) - (-1.0)) < 1e-10);
  CHECK(std::abs(lq.F(0, 1) - (-kSqrt3)) < 1e-10);
  CHECK(lq.care_residual <= 1e-12);
  CHECK(lq.gamma == doctest::Approx(kSqrt3 + 1.0).epsilon(1e-12));
  CHECK(lq.sigma_min_P == doctest::Approx(kSqrt3 - 1.0).epsilon(1e-12));
  CHECK(lq.sigma_max_P == doctest::Approx(kSqrt3 + 1.0).epsilon(1e-12));
  CHECK(lq.sigma_min_Q == doctest::Approx(1.0));
  CHECK(lq.sigma_max_Q == doctest::Approx(1.0));
  // Cbar(delta) = delta sigma_max(Q) / sigma_min(P) = delta (sqrt3+1)/2.
  CHECK(lq.cbar_of(1.0) == doctest::Approx(0.5 * (kSqrt3 + 1.0)).epsilon(1e-12));
  // The solve writes the gain and a decay envelope back into the system.
  REQUIRE(p.lin->has_feedback());
  REQUIRE(p.lin->decay.has_value());
  CHECK(p.lin->decay->gain == doctest::Approx(3.336928).epsilon(1e-4));
  CHECK(p.lin->decay->rate == doctest::Approx(0.822724).epsilon(1e-4));
}

TEST_CASE("Riccati solutions on scalar plants") {
  SUBCASE("unstable pole") {
    Plant p = build_scalar_unstable();
    LqConstants lq = solve_care(*p.lin, p.cost);
    CHECK(lq.P(0, 0) == doctest::Approx(1.0 + kSqrt2).epsilon(1e-12));
    CHECK(lq.F(0, 0) == doctest::Approx(-(1.0 + kSqrt2)).epsilon(1e-12));
    CHECK(lq.care_residual <= 1e-12);
  }
  SUBCASE("stable pole keeps a small valuation") {
    LinearSystem lin;
    lin.A = -Mat::Ones(1, 1);
    lin.B = Mat::Ones(1, 1);
    StageCost cost = StageCost::quadratic(Mat::Identity(1, 1), Mat::Identity(1, 1));
    LqConstants lq = solve_care(lin, cost);
    CHECK(lq.P(0, 0) == doctest::Approx(kSqrt2 - 1.0).epsilon(1e-12));
  }
  SUBCASE("cross term folds into the completed square") {
    // d/dt x = u, l(x, u) = 2 x^2 + u^2 + 2 x u: P = sqrt(2) - 1, F = -sqrt(2).
    LinearSystem lin;
    lin.A = Mat::Zero(1, 1);
    lin.B = Mat::Ones(1, 1);
    StageCost cost = StageCost::quadratic(2.0 * Mat::Identity(1, 1),
                                          Mat::Identity(1, 1), Mat::Ones(1, 1));
    LqConstants lq = solve_care(lin, cost);
    CHECK(lq.P(0, 0) == doctest::Approx(kSqrt2 - 1.0).epsilon(1e-12));
    CHECK(lq.F(0, 0) == doctest::Approx(-kSqrt2).epsilon(1e-12));
    CHECK(lq.care_residual <= 1e-12);
  }
}

TEST_CASE("degenerate Riccati data is rejected") {
  StageCost unit = StageCost::quadratic(Mat::Identity(1, 1), Mat::Identity(1, 1));
  SUBCASE("uncontrollable unstable mode") {
    LinearSystem lin;
    lin.A = Mat::Ones(1, 1);
    lin.B = Mat::Zero(1, 1);
    CHECK_THROWS_AS(solve_care(lin, unit), NotStabilizableError);
  }
  SUBCASE("input weight not positive definite") {
    LinearSystem lin;
    lin.A = Mat::Ones(1, 1);
    lin.B = Mat::Ones(1, 1);
    StageCost cost = StageCost::quadratic(Mat::Identity(1, 1), Mat::Zero(1, 1));
    CHECK_THROWS_AS(solve_care(lin, cost), DomainError);
  }
  SUBCASE("non-quadratic cost carries no Riccati data") {
    LinearSystem lin;
    lin.A = Mat::Ones(1, 1);
    lin.B = Mat::Ones(1, 1);
    StageCost cost;
    cost.ell = [](const Vec&, const Vec&) { return 0.0; };
    CHECK_THROWS_AS(solve_care(lin, cost), DomainError);
  }
}

TEST_CASE("decay envelope majorizes the matrix exponential") {
  Plant p = build_double_integrator();
  LqConstants lq = solve_care(*p.lin, p.cost);
  Mat a_cl = p.lin->A + p.lin->B * lq.F;
  DecayEnvelope env = fit_decay(a_cl);
  CHECK(env.gain == doctest::Approx(3.336928).epsilon(1e-4));
  CHECK(env.rate == doctest::Approx(0.822724).epsilon(1e-4));
  // Property check at sample times that were not on the fitting grid.
  SplitMix64 rng(7);
  for (int i = 0; i < 64; ++i) {
    double t = rng.next_double(0.0, 20.0);
    Mat e = (a_cl * t).exp();
    CHECK(e.operatorNorm() <= env.gain * std::exp(-env.rate * t) * (1.0 + 1e-6));
  }
  CHECK_THROWS_AS(fit_decay(Mat::Zero(2, 2)), NotStabilizableError);
  CHECK_THROWS_AS(fit_decay(Mat::Identity(2, 2)), NotStabilizableError);
}

TEST_CASE("stage-cost floor over the box minus a ball") {
  Plant p = build_double_integrator();
  // Unit state weight: the floor is sigma_min(Q) r^2 exactly.
  CHECK(estimate_M(p.sys, p.cost, p.cons, 0.1) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(estimate_M(p.sys, p.cost, p.cons, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  Plant s = build_scalar_unstable();
  CHECK(estimate_M(s.sys, s.cost, s.cons, 0.5) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK_THROWS_AS(estimate_M(p.sys, p.cost, p.cons, 0.0), DomainError);
  CHECK_THROWS_AS(estimate_M(p.sys, p.cost, p.cons, -0.3), DomainError);
  // Ball poking out of the state box.
  CHECK_THROWS_AS(estimate_M(p.sys, p.cost, p.cons, 1.5), DomainError);
  // Scalar box [-2, 2] with r = 2: the box minus the ball is empty.
  CHECK_THROWS_AS(estimate_M(s.sys, s.cost, s.cons, 2.0), EmptyRegionError);
}

TEST_CASE("sublevel estimate flags divergence on a holdable boundary state") {
  Plant s = build_scalar_unstable();
  SUBCASE("x = 1 can be held forever but never stabilized") {
    std::vector<Vec> K{Vec::Ones(1)};
    SublevelEstimate e =
        estimate_C(s.sys, s.cost, s.cons, K, 1.0, SolverOptions{}, &*s.lin);
    CHECK_FALSE(e.finite);
    CHECK(e.C == kInf);
    CHECK(e.growth_ratio == doctest::Approx(2.0249).epsilon(1e-3));
    REQUIRE(e.infeasible_sample.has_value());
    CHECK((*e.infeasible_sample)(0) == 1.0);
  }
  SUBCASE("x = 0.5 is stabilizable with a finite sublevel constant") {
    std::vector<Vec> K{0.5 * Vec::Ones(1)};
    SublevelEstimate e =
        estimate_C(s.sys, s.cost, s.cons, K, 1.0, SolverOptions{}, &*s.lin);
    REQUIRE(e.finite);
    CHECK(e.C == doctest::Approx(0.677310).epsilon(1e-4));
    CHECK(e.C == doctest::Approx(1.1 * e.sup_value).epsilon(1e-12));
    CHECK(e.growth_ratio < 1.5);
  }
  SUBCASE("a sample outside the admissible set is reported") {
    std::vector<Vec> K{1.2 * Vec::Ones(1)};
    SublevelEstimate e =
        estimate_C(s.sys, s.cost, s.cons, K, 1.0, SolverOptions{}, &*s.lin);
    CHECK_FALSE(e.finite);
    REQUIRE(e.infeasible_sample.has_value());
    CHECK((*e.infeasible_sample)(0) == doctest::Approx(1.2));
  }
  CHECK_THROWS_AS(estimate_C(s.sys, s.cost, s.cons, {}, 1.0), EmptyRegionError);
}

TEST_CASE("scalar value function brackets between T and 2T at the boundary") {
  // From x = 1 the cheapest admissible strategy pays between 1 and 2 units of
  // stage cost per unit horizon, so T <= V_T(1) <= 2T.
  Plant s = build_scalar_unstable();
  const double frozen[3] = {1.7537, 3.7541, 7.7557};
  const double horizons[3] = {1.0, 2.0, 4.0};
  for (int i = 0; i < 3; ++i) {
    double T = horizons[i];
    ValueResult v = value_function(s.sys, s.cost, s.cons, Vec::Ones(1), T, T / 32.0,
                                   SolverOptions{}, &*s.lin);
    REQUIRE(v.finite);
    CHECK(v.value >= T);
    CHECK(v.value <= 2.0 * T);
    CHECK(v.value == doctest::Approx(frozen[i]).epsilon(1e-3));
  }
}

TEST_CASE("horizon condition hand values and invariants") {
  // gamma=2, M=1, C=2, Cbar=1, delta=0.5: beta=2, lhs(N=2) = 16 * 0.8 = 12.8.
  Certificate c = check_condition(2, 1, 2, 1, 0.5, 2);
  CHECK(c.beta == doctest::Approx(2.0));
  CHECK(c.condition_lhs == doctest::Approx(12.8).epsilon(1e-12));
  CHECK(c.alpha == doctest::Approx(12.8).epsilon(1e-12));
  CHECK(c.T == doctest::Approx(1.0));
  CHECK_FALSE(c.passes);

  SUBCASE("alpha never exceeds the full left-hand side") {
    SplitMix64 rng(99);
    for (int i = 0; i < 200; ++i) {
      double gamma = rng.next_double(0.5, 4.0);
      double M = rng.next_double(0.2, 2.0);
      double C = rng.next_double(0.1, 8.0);
      double cbar = rng.next_double(0.2, 4.0);
      double beta = std::max(C / M, gamma);
      double delta = rng.next_double(0.1, 0.9) * beta;
      int N = 1 + int(rng.next_u64() % 40);
      Certificate r = check_condition(gamma, M, C, cbar, delta, N);
      CHECK(r.alpha <= r.condition_lhs * (1.0 + 1e-12));
      CHECK(r.passes == (r.condition_lhs < 1.0));
      if (r.passes) CHECK(r.alpha < 1.0);
    }
  }
  SUBCASE("left-hand side decreases strictly in the horizon") {
    double prev = kInf;
    for (int N = 1; N <= 30; ++N) {
      Certificate r = check_condition(2, 1, 2, 1, 0.5, N);
      CHECK(r.condition_lhs < prev);
      prev = r.condition_lhs;
    }
  }
  SUBCASE("domain guards") {
    CHECK_THROWS_AS(check_condition(2, 1, 2, 1, 2.0, 2), DomainError);   // delta == beta
    CHECK_THROWS_AS(check_condition(2, 1, 2, 1, 2.5, 2), DomainError);   // delta > beta
    CHECK_THROWS_AS(check_condition(2, 1, 2, 1, 0.0, 2), DomainError);   // delta == 0
    CHECK_THROWS_AS(check_condition(2, 1, 2, 1, -0.5, 2), DomainError);  // delta < 0
    CHECK_THROWS_AS(check_condition(-2, 1, 2, 1, 0.5, 2), DomainError);
    CHECK_THROWS_AS(check_condition(2, 0, 2, 1, 0.5, 2), DomainError);
    CHECK_THROWS_AS(check_condition(2, 1, 2, 1, 0.5, 0), DomainError);
  }
}

TEST_CASE("seeded horizon search agrees with a naive scan everywhere") {
  // The hand tuple first: the smallest passing N is 14.
  auto hand = smallest_passing_horizon(2, 1, 2, 1, 0.5);
  REQUIRE(hand.has_value());
  CHECK(*hand == 14);
  CHECK_FALSE(check_condition(2, 1, 2, 1, 0.5, 13).passes);
  CHECK(check_condition(2, 1, 2, 1, 0.5, 14).passes);

  SplitMix64 rng(20260817ULL);
  for (int i = 0; i < 100; ++i) {
    double gamma = rng.next_double(0.5, 4.0);
    double M = rng.next_double(0.2, 2.0);
    double C = rng.next_double(0.1, 8.0);
    double cbar = rng.next_double(0.2, 4.0);
    double beta = std::max(C / M, gamma);
    double delta = rng.next_double(0.1, 0.9) * beta;
    auto fast = smallest_passing_horizon(gamma, M, C, cbar, delta);
    auto slow = naive_smallest_horizon(gamma, M, C, cbar, delta, 100000);
    REQUIRE(fast.has_value());
    REQUIRE(slow.has_value());
    CHECK(*fast == *slow);
  }
}

TEST_CASE("closed-form horizon bound is reported next to the scan") {
  HorizonBound hb = min_horizon_bound(2, 1, 2, 1, 0.5);
  CHECK(hb.n_scan == 14);
  // The closed form under-counts here (its selector picks the wrong condition
  // term once the logarithms change sign); the report must say so.
  CHECK(hb.n_formula == 8);
  CHECK(hb.rhs_formula == doctest::Approx(7.212567).epsilon(1e-5));
  CHECK_FALSE(hb.consistent);

  SUBCASE("halving the sampling period never shortens the horizon") {
    HorizonBound half = min_horizon_bound(2, 1, 2, 1, 0.25);
    CHECK(half.n_scan >= hb.n_scan);
  }
  SUBCASE("the C = M delta boundary stays finite") {
    HorizonBound edge = min_horizon_bound(2, 1, 0.5, 1, 0.5);
    CHECK(edge.n_scan >= 1);
    CHECK(std::isfinite(edge.rhs_formula));
  }
}

TEST_CASE("local cost controllability holds on the benchmark neighborhood") {
  Plant p = build_double_integrator();
  LqConstants lq = solve_care(*p.lin, p.cost);
  A2Report rep = verify_a2_local(lq, *p.lin, p.cost, p.cons, 0.1);
  CHECK(rep.samples == 48);
  CHECK(rep.worst_ratio == doctest::Approx(2.729375).epsilon(1e-4));
  CHECK(rep.worst_ratio <= lq.gamma);
  CHECK(rep.worst_care_mismatch <= 1e-9);
  CHECK(rep.worst_sample.norm() <= 0.1 + 1e-12);
  CHECK_THROWS_AS(verify_a2_local(lq, *p.lin, p.cost, p.cons, 10.0),
                  ConstraintActiveError);
  CHECK_THROWS_AS(verify_a2_local(lq, *p.lin, p.cost, p.cons, 0.0), DomainError);
}

TEST_CASE("sublevel sampling returns only states below the bound") {
  Plant p = build_double_integrator();
  LqConstants lq = solve_care(*p.lin, p.cost);
  (void)lq;
  const double T = 2.0, C = 5.0;
  Box sb = Box::symmetric(2, 0.5);
  std::vector<Vec> K = sample_sublevel(p.sys, p.cost, p.cons, T, C, 6, SolverOptions{},
                                       &*p.lin, 0.0, sb);
  REQUIRE(K.size() == 6);
  for (const Vec& x : K) {
    CHECK(sb.contains(x));
    ValueResult v = value_function(p.sys, p.cost, p.cons, x, T, T / 32.0,
                                   SolverOptions{}, &*p.lin);
    REQUIRE(v.finite);
    CHECK(v.value <= C * (1.0 + 1e-9));
  }
  SUBCASE("an unreachable bound raises the empty-region error") {
    Box far(Vec::Constant(2, 0.4), Vec::Constant(2, 0.5));
    CHECK_THROWS_AS(sample_sublevel(p.sys, p.cost, p.cons, 0.5, 1e-4, 1,
                                    SolverOptions{}, &*p.lin, 0.0, far),
                    EmptyRegionError);
  }
}

TEST_CASE("per-period constant falsification is reported as data") {
  Plant p = build_double_integrator();
  LqConstants lq = solve_care(*p.lin, p.cost);
  Box sb = Box::symmetric(2, 0.2);
  A3Report a3 = verify_a3(lq, p.sys, p.cost, p.cons, 10.0, 0.030093,
                          {0.1, 0.25, 0.5, 1.0}, 10, SolverOptions{}, &*p.lin, 0.05, sb);
  REQUIRE(a3.per_delta.size() == 4);
  // Frozen: the Riccati per-period constant shrinks with delta while the
  // measured need approaches 1 from above, so short periods violate hardest.
  const double min_cbar[4] = {1.0492, 1.1310, 1.2878, 1.6700};
  for (int i = 0; i < 4; ++i)
    CHECK(a3.per_delta[i].min_cbar == doctest::Approx(min_cbar[i]).epsilon(2e-3));
  CHECK(a3.per_delta[0].violations == 10);
  CHECK(a3.per_delta[1].violations > 0);
  CHECK(a3.per_delta[2].violations > 0);
  CHECK(a3.per_delta[3].violations == 4);
  std::size_t total = 0;
  for (const auto& row : a3.per_delta) total += row.violations;
  CHECK(a3.violations == total);
  CHECK(a3.min_cbar_needed == doctest::Approx(1.6700).epsilon(2e-3));
  for (int i = 0; i + 1 < 4; ++i)
    CHECK(a3.per_delta[i].worst_ratio > a3.per_delta[i + 1].worst_ratio);
}

TEST_CASE("certification pipeline report at the unit sampling period") {
  Plant p = build_double_integrator();
  CertifyInputs in;
  in.delta = 1.0;
  CertifyReport rep = build_certificate(p, in);
  CHECK(rep.M == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(rep.C == doctest::Approx(0.03009299239495011).epsilon(1e-9));
  CHECK(rep.beta == doctest::Approx(3.0092992394950104).epsilon(1e-9));
  CHECK(rep.cbar == doctest::Approx(0.5 * (kSqrt3 + 1.0)).epsilon(1e-12));
  CHECK(rep.c_estimate.growth_ratio < 1.5);
  CHECK(rep.horizon.n_scan == 10);
  CHECK(rep.horizon.n_formula == 5);
  CHECK_FALSE(rep.horizon.consistent);
  CHECK(rep.chosen.N == 10);
  CHECK(rep.chosen.passes);
  CHECK(rep.chosen.alpha == doctest::Approx(0.935323).epsilon(1e-4));
  CHECK(rep.chosen.alpha == rep.chosen.condition_lhs);
  REQUIRE(rep.per_n.size() == std::size_t(rep.horizon.n_scan + 3));
  for (std::size_t i = 0; i + 1 < rep.per_n.size(); ++i) {
    CHECK(rep.per_n[i].condition_lhs > rep.per_n[i + 1].condition_lhs);
    CHECK(rep.per_n[i].N == int(i) + 1);
  }
  CHECK_FALSE(rep.per_n[8].passes);  // N = 9 just misses
  CHECK(rep.per_n[9].passes);        // N = 10 certifies
  CHECK(rep.decay.gain == doctest::Approx(3.336928).epsilon(1e-4));
}

TEST_CASE("constructive infinite-horizon bound over the scaled kernel") {
  Plant p = build_double_integrator();
  LqConstants lq = solve_care(*p.lin, p.cost);
  ViabilityKernel A = double_integrator_kernel();

  SUBCASE("mixed keeper-feedback construction at lambda = 0.5") {
    Prop2Bound b = bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 0.5, A, lq.P, 8);
    CHECK_FALSE(b.constants.direct_lqr);
    CHECK(b.constants.L == doctest::Approx(14.157385).epsilon(1e-4));
    CHECK(b.constants.mu == doctest::Approx(0.923997).epsilon(1e-4));
    CHECK(b.constants.epsilon == doctest::Approx(0.929365).epsilon(1e-4));
    CHECK(b.constants.m == 27);
    CHECK(b.constants.t_bar == doctest::Approx(1.240).epsilon(0.02));
    CHECK(b.constants.beta_B == doctest::Approx(0.302900).epsilon(1e-3));
    CHECK(b.constants.alpha_B == doctest::Approx(0.006870).epsilon(1e-3));
    CHECK(b.bound == doctest::Approx(0.590274).epsilon(1e-4));
    CHECK(b.samples == 8);
    CHECK(b.constants.mu < b.constants.epsilon);
    CHECK(b.constants.epsilon < 1.0);
  }
  SUBCASE("deep inside the kernel the plain feedback suffices") {
    Prop2Bound b = bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 0.05, A, lq.P, 6);
    CHECK(b.constants.direct_lqr);
    CHECK(b.bound == doctest::Approx(0.005501).epsilon(1e-3));
  }
  SUBCASE("the bound grows with the scale") {
    Prop2Bound small = bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 0.05, A, lq.P, 6);
    Prop2Bound mid = bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 0.3, A, lq.P, 8);
    Prop2Bound large = bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 0.5, A, lq.P, 8);
    CHECK(small.bound < mid.bound);
    CHECK(mid.bound < large.bound);
  }
  SUBCASE("the singleton origin costs nothing") {
    Prop2Bound b = bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 0.0, A, lq.P, 4);
    CHECK(b.bound == 0.0);
    CHECK(b.samples == 0);
  }
  SUBCASE("domain and construction guards") {
    CHECK_THROWS_AS(bound_v_infinity_prop2(*p.lin, p.cons, p.cost, 1.0, A, lq.P),
                    DomainError);
    CHECK_THROWS_AS(bound_v_infinity_prop2(*p.lin, p.cons, p.cost, -0.1, A, lq.P),
                    DomainError);
    Plant fresh = build_double_integrator();  // no gain fitted yet
    CHECK_THROWS_AS(bound_v_infinity_prop2(*fresh.lin, fresh.cons, fresh.cost, 0.5, A, lq.P),
                    ConstructionError);
  }
}

TEST_CASE("value blow-up near the kernel boundary is at most inverse-distance") {
  Plant p = build_double_integrator();
  solve_care(*p.lin, p.cost);
  ViabilityKernel A = double_integrator_kernel();
  std::vector<double> dists{0.2, 0.1, 0.05, 0.025};
  Corollary2Profile prof = corollary2_profile(p.sys, p.cost, p.cons, A, dists, 12.0, 8,
                                              SolverOptions{}, &*p.lin);
  REQUIRE(prof.rows.size() == 4);
  const double sup[4] = {1.4686, 1.8629, 2.0806, 2.1946};
  const double prod[4] = {0.2937, 0.1862, 0.1039, 0.0547};
  for (int i = 0; i < 4; ++i) {
    CHECK(prof.rows[i].samples > 0);
    CHECK(prof.rows[i].dist == doctest::Approx(dists[std::size_t(i)]).epsilon(2e-3));
    CHECK(prof.rows[i].sup_value == doctest::Approx(sup[i]).epsilon(2e-3));
    CHECK(prof.rows[i].product == doctest::Approx(prod[i]).epsilon(3e-3));
  }
  CHECK(prof.d_hat == doctest::Approx(0.2937).epsilon(2e-3));
  // The sup grows as the sets approach the boundary, but the product shrinks:
  // the empirical constant is attained farthest from the boundary.
  for (int i = 0; i + 1 < 4; ++i) {
    CHECK(prof.rows[i].sup_value < prof.rows[i + 1].sup_value);
    CHECK(prof.rows[i].product > prof.rows[i + 1].product);
  }
}

}  // TEST_SUITE
