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

#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include "sdmpc/errors.hpp"
#include "sdmpc/integrate.hpp"
#include "sdmpc/model.hpp"
#include "sdmpc/ocp.hpp"
#include "sdmpc/sampling.hpp"
#include "sdmpc/viability.hpp"

namespace sdmpc {

// ---------------------------------------------------------------------------
// Stability certification for receding-horizon control without terminal
// ingredients.  The closed loop is asymptotically stable on a sublevel set
// V_T^{-1}[0, C] once the horizon condition
//
//     max{ C/(M delta), Cbar (beta/delta)^2 } * (beta/(beta+delta))^(N-1) < 1,
//     beta := max{ C/M, gamma },
//
// holds, where gamma bounds the cost controllability near the equilibrium,
// M is the stage-cost floor outside a small neighborhood, C the sublevel
// constant, and Cbar relates one sampling period of stage cost to the
// short-horizon value.  This header computes every constant, evaluates the
// condition, inverts it into a minimal horizon, and provides the linear-
// quadratic specializations (Riccati solution, decay envelopes, the
// constructive infinite-horizon bound via kernel keeping, and the
// distance-to-boundary asymptotics of that bound).
// ---------------------------------------------------------------------------

// -------------------------- linear-quadratic layer -------------------------

/// Constants derived from the continuous algebraic Riccati equation
///   A'P + PA - (PB + N) R^{-1} (B'P + N') + Q = 0.
struct LqConstants {
  Mat P;  // stabilizing CARE solution
  Mat F;  // stabilizing gain, u = F x (all eigenvalues of A + BF strictly left)
  double sigma_min_P = 0.0, sigma_max_P = 0.0;
  double sigma_min_Q = 0.0, sigma_max_Q = 0.0;  // of the cross-term-folded Q
  double gamma = 0.0;                           // sigma_max_P / sigma_min_Q
  double care_residual = 0.0;                   // Frobenius norm
  /// Per-period constant relating delta * l'(x) to the delta-horizon value.
  double cbar_of(double delta) const { return delta * sigma_max_Q / sigma_min_P; }
};

/// Fits a decay envelope |exp(A_cl t)| <= gain * exp(-rate * t) by sampling
/// the matrix exponential on a grid that covers the transient.
inline DecayEnvelope fit_decay(const Mat& a_cl) {
  Eigen::EigenSolver<Mat> es(a_cl);
  double abscissa = es.eigenvalues().real().maxCoeff();
  if (!(abscissa < -1e-12))
    throw NotStabilizableError("fit_decay: closed-loop matrix is not Hurwitz");
  DecayEnvelope env;
  env.rate = 0.95 * (-abscissa);  // margin absorbs polynomial factors
  const double t_end = 30.0 / (-abscissa);
  const int grid = 1200;
  double gain = 1.0;
  for (int i = 0; i <= grid; ++i) {
    double t = t_end * i / grid;
    Mat e = (a_cl * t).exp();
    gain = std::max(gain, e.operatorNorm() * std::exp(env.rate * t));
  }
  env.gain = 1.02 * gain;  // sampling safety factor
  return env;
}

namespace detail {

/// Stable-invariant-subspace CARE solve for the standard-form data
/// (A, B, Q, R): spectral decomposition of the Hamiltonian
/// [[A, -B R^{-1} B'], [-Q, -A']], P = X2 * X1^{-1} from the n stable
/// eigenvector halves.
inline Mat care_stable_subspace(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
  const int n = int(A.rows());
  Mat rinv_bt = R.llt().solve(B.transpose());
  Mat H(2 * n, 2 * n);
  H << A, -B * rinv_bt, -Q, -A.transpose();
  Eigen::EigenSolver<Mat> es(H);
  if (es.info() != Eigen::Success)
    throw NotStabilizableError("solve_care: Hamiltonian eigendecomposition failed");
  using CMat = Eigen::MatrixXcd;
  CMat X1(n, n), X2(n, n);
  int found = 0;
  for (int i = 0; i < 2 * n && found < n; ++i) {
    if (es.eigenvalues()[i].real() < -1e-9) {
      X1.col(found) = es.eigenvectors().col(i).head(n);
      X2.col(found) = es.eigenvectors().col(i).tail(n);
      ++found;
    }
  }
  if (found != n)
    throw NotStabilizableError(
        "solve_care: Hamiltonian has no n-dimensional stable invariant subspace "
        "(pair not stabilizable, or Q not detecting the unstable modes)");
  Eigen::FullPivLU<CMat> lu(X1);
  if (!lu.isInvertible())
    throw NotStabilizableError("solve_care: singular stable-subspace basis");
  CMat Pc = X2 * lu.inverse();
  if (Pc.imag().norm() > 1e-7 * std::max(1.0, Pc.real().norm()))
    throw NotStabilizableError("solve_care: non-real Riccati solution");
  Mat P = Pc.real();
  return 0.5 * (P + P.transpose());
}

}  // namespace detail

/// Solves the CARE for the system's quadratic cost, folding any cross term by
/// the standard completion Atil = A - B R^{-1} N', Qtil = Q - N R^{-1} N'.
/// On success the stabilizing gain F = -R^{-1}(B'P + N') and a fitted decay
/// envelope are written back into `lin`.
inline LqConstants solve_care(LinearSystem& lin, const StageCost& cost) {
  if (!cost.lq) throw DomainError("solve_care: quadratic cost data required");
  const Mat &A = lin.A, &B = lin.B;
  const Mat &Q = cost.lq->Q, &R = cost.lq->R;
  const int n = int(A.rows()), m = int(B.cols());
  {
    Eigen::SelfAdjointEigenSolver<Mat> er(R);
    if (er.eigenvalues().minCoeff() <= 0.0)
      throw DomainError("solve_care: R must be positive definite");
  }
  Mat N = cost.lq->has_cross() ? cost.lq->N : Mat::Zero(n, m);
  Mat rinv_nt = R.llt().solve(N.transpose());
  Mat a_til = A - B * rinv_nt;
  Mat q_til = Q - N * rinv_nt;

  LqConstants lq;
  lq.P = detail::care_stable_subspace(a_til, B, q_til, R);
  lq.F = -R.llt().solve(B.transpose() * lq.P + N.transpose());
  Mat residual = A.transpose() * lq.P + lq.P * A -
                 (lq.P * B + N) * R.llt().solve(B.transpose() * lq.P + N.transpose()) + Q;
  lq.care_residual = residual.norm();

  Eigen::SelfAdjointEigenSolver<Mat> ep(lq.P);
  if (ep.eigenvalues().minCoeff() <= 0.0)
    throw NotStabilizableError("solve_care: Riccati solution not positive definite");
  lq.sigma_min_P = ep.eigenvalues().minCoeff();
  lq.sigma_max_P = ep.eigenvalues().maxCoeff();
  Eigen::SelfAdjointEigenSolver<Mat> eq(q_til);
  lq.sigma_min_Q = eq.eigenvalues().minCoeff();
  lq.sigma_max_Q = eq.eigenvalues().maxCoeff();
  if (lq.sigma_min_Q <= 0.0)
    throw DomainError("solve_care: folded state weight must be positive definite");
  lq.gamma = lq.sigma_max_P / lq.sigma_min_Q;

  lin.F = lq.F;
  lin.decay = fit_decay(A + B * lq.F);
  return lq;
}

// ------------------------------ constants -----------------------------------

/// Stage-cost floor M = inf { l*(x) : x in X, |x - x_eq| >= r }.
///
/// For a quadratic cost with no cross term, a feasible zero input and an
/// origin equilibrium this is sigma_min(Q) r^2 exactly whenever the
/// minimizing eigendirection at radius r stays in the state box; otherwise
/// the infimum is estimated over a deterministic sample of the region
/// (low-discrepancy points in the box, the box corners and face midpoints,
/// and points on the excluded sphere itself, where the minimum typically
/// lives).
inline double estimate_M(const ControlSystem& sys, const StageCost& cost,
                         const ConstraintSpec& cons, double r, int n_samples = 4096,
                         std::uint64_t seed = 20260817ULL) {
  if (!(r > 0)) throw DomainError("estimate_M: neighborhood radius must be > 0");
  if (!cons.state_box) throw DomainError("estimate_M: state box required");
  const Box& X = *cons.state_box;
  const int n = X.dim();
  const Vec xc = sys.x_eq.size() ? sys.x_eq : Vec::Zero(n);
  for (int i = 0; i < n; ++i)
    if (xc[i] - r < X.lo[i] || xc[i] + r > X.hi[i])
      throw DomainError("estimate_M: the excluded ball must lie inside the state box");

  // X \ ball empty iff every box corner is within the closed ball.
  double corner_max = 0.0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    Vec c(n);
    for (int i = 0; i < n; ++i) c[i] = (mask >> i) & 1 ? X.hi[i] : X.lo[i];
    corner_max = std::max(corner_max, (c - xc).norm());
  }
  if (corner_max <= r)
    throw EmptyRegionError("estimate_M: the state box is contained in the excluded ball");

  const int m = cons.input_box ? cons.input_box->dim() : 0;
  if (cost.lq && !cost.lq->has_cross() && xc.norm() == 0.0 && cons.input_box &&
      cons.input_box->contains(Vec::Zero(m))) {
    Eigen::SelfAdjointEigenSolver<Mat> eq(cost.lq->Q);
    Vec v = eq.eigenvectors().col(0);  // eigendirection of sigma_min(Q)
    if (X.contains(r * v) || X.contains(-r * v))
      return eq.eigenvalues().minCoeff() * r * r;
  }

  double best = kInf;
  auto consider = [&](const Vec& x) {
    if (X.violation(x) > 0) return;
    if ((x - xc).norm() < r) return;
    best = std::min(best, pointwise_min_cost(cost, cons, x));
  };
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    Vec c(n);
    for (int i = 0; i < n; ++i) c[i] = (mask >> i) & 1 ? X.hi[i] : X.lo[i];
    consider(c);
  }
  for (int i = 0; i < n; ++i) {  // face midpoints
    Vec mid = 0.5 * (X.lo + X.hi);
    for (double v : {X.lo[i], X.hi[i]}) {
      Vec f = mid;
      f[i] = v;
      consider(f);
    }
  }
  SplitMix64 rng(seed);
  int sphere = std::max(16, n_samples / 4);
  for (int i = 0; i < sphere; ++i) consider(xc + r * rng.next_unit_vector(n));
  for (const Vec& x : halton_box(X.lo, X.hi, n_samples)) consider(x);
  if (!std::isfinite(best))
    throw EmptyRegionError("estimate_M: no sample point fell in X minus the ball");
  return best;
}

/// Result of estimating the sublevel constant C over a compact sample set.
struct SublevelEstimate {
  double C = kInf;
  bool finite = false;
  double sup_value = 0.0;    // largest sampled long-horizon value
  double margin = 0.10;
  double t_long = 0.0;
  /// max over samples of V(t_long) / V(t_long / 2).  Values near 2 mean the
  /// long-horizon value still grows linearly with the horizon: the state
  /// cannot be stabilized and its infinite-horizon value is infinite even
  /// though every finite horizon stays feasible.
  double growth_ratio = 1.0;
  std::optional<Vec> infeasible_sample;
};

/// Estimates C with K inside V^{-1}[0, C]: C = (1 + margin) * sup over K of
/// the value on a long proxy horizon (default 10 T).  C is reported infinite
/// when a sample is infeasible or when its value keeps growing linearly in
/// the horizon (see growth_ratio).
inline SublevelEstimate estimate_C(const ControlSystem& sys, const StageCost& cost,
                                   const ConstraintSpec& cons, const std::vector<Vec>& K,
                                   double T, const SolverOptions& opts = {},
                                   const LinearSystem* lin = nullptr,
                                   double t_long_mult = 10.0, double margin = 0.10,
                                   double growth_cap = 1.5) {
  if (K.empty()) throw EmptyRegionError("estimate_C: empty sample set");
  SublevelEstimate est;
  est.margin = margin;
  est.t_long = t_long_mult * T;
  const double control_dt = est.t_long / 64.0;
  for (const Vec& x : K) {
    ValueResult half = value_function(sys, cost, cons, x, 0.5 * est.t_long, control_dt, opts, lin);
    ValueResult full = value_function(sys, cost, cons, x, est.t_long, control_dt, opts, lin);
    if (!half.finite || !full.finite) {
      est.infeasible_sample = x;
      est.C = kInf;
      est.finite = false;
      return est;
    }
    double ratio = full.value / std::max(half.value, 1e-12);
    if (full.value > 1e-9) est.growth_ratio = std::max(est.growth_ratio, ratio);
    if (full.value > 1e-9 && ratio >= growth_cap) {
      est.infeasible_sample = x;
      est.C = kInf;
      est.finite = false;
      return est;
    }
    est.sup_value = std::max(est.sup_value, full.value);
  }
  est.C = (1.0 + margin) * est.sup_value;
  est.finite = true;
  return est;
}

// ------------------------- the horizon condition ---------------------------

/// All quantities of the horizon condition for one (N, delta).
struct Certificate {
  double delta = 0.0;
  int N = 0;
  double T = 0.0;  // N * delta
  double gamma = 0.0, M = 0.0, C = 0.0;
  double beta = 0.0;  // max{C/M, gamma}
  double cbar = 0.0;
  double condition_lhs = kInf;
  double alpha = kInf;  // Cbar (beta/delta)^2 (beta/(beta+delta))^(N-1)
  bool passes = false;
};

/// Evaluates the horizon condition at one (N, delta).
/// Throws DomainError unless delta lies in (0, beta).
inline Certificate check_condition(double gamma, double M, double C, double cbar,
                                   double delta, int N) {
  if (!(gamma > 0 && M > 0 && C > 0 && cbar > 0))
    throw DomainError("check_condition: gamma, M, C, Cbar must be positive");
  if (N < 1) throw DomainError("check_condition: N must be >= 1");
  Certificate cert;
  cert.gamma = gamma;
  cert.M = M;
  cert.C = C;
  cert.cbar = cbar;
  cert.delta = delta;
  cert.N = N;
  cert.T = N * delta;
  cert.beta = std::max(C / M, gamma);
  if (!(delta > 0 && delta < cert.beta))
    throw DomainError("check_condition: delta must lie in (0, beta)");
  const double ratio = cert.beta / (cert.beta + delta);
  const double decay = std::pow(ratio, N - 1);
  const double k_alpha = cbar * (cert.beta / delta) * (cert.beta / delta);
  cert.alpha = k_alpha * decay;
  cert.condition_lhs = std::max(C / (M * delta), k_alpha) * decay;
  cert.passes = cert.condition_lhs < 1.0;
  return cert;
}

/// Smallest N >= 1 whose certificate passes (the geometric factor makes the
/// left-hand side strictly decreasing in N, so this is well defined).  The
/// closed-form seed is polished by walking the exact condition.
inline std::optional<int> smallest_passing_horizon(double gamma, double M, double C,
                                                   double cbar, double delta,
                                                   int n_cap = 10000000) {
  Certificate probe = check_condition(gamma, M, C, cbar, delta, 1);
  const double k0 = probe.condition_lhs;  // lhs at N = 1
  int n = 1;
  if (k0 >= 1.0) {
    double steps = std::log(k0) / std::log1p(delta / probe.beta);
    if (steps > double(n_cap)) return std::nullopt;
    n = 1 + int(std::ceil(steps));
  }
  while (n > 1 && check_condition(gamma, M, C, cbar, delta, n - 1).passes) --n;
  while (n <= n_cap && !check_condition(gamma, M, C, cbar, delta, n).passes) ++n;
  if (n > n_cap) return std::nullopt;
  return n;
}

/// Minimal-horizon report: the closed-form logarithmic bound next to the
/// authoritative scan of the condition itself.  The two disagree for some
/// inputs (the closed form combines the two condition terms with the wrong
/// selector once the logarithms flip signs); `consistent` records agreement
/// and callers must certify with `n_scan`.
struct HorizonBound {
  double rhs_formula = 0.0;  // right-hand side of the closed-form bound
  int n_formula = 0;         // smallest integer strictly greater than it
  int n_scan = 0;            // smallest N whose certificate passes
  bool consistent = false;
};

inline HorizonBound min_horizon_bound(double gamma, double M, double C, double cbar,
                                      double delta) {
  Certificate probe = check_condition(gamma, M, C, cbar, delta, 1);  // validates domain
  const double beta = probe.beta;
  HorizonBound hb;
  const double num = std::max(std::log(delta * M / C),
                              2.0 * std::log(delta / beta) - std::log(cbar));
  const double den = std::log(beta) - std::log(beta + delta);
  hb.rhs_formula = num / den + 1.0;
  hb.n_formula = int(std::floor(hb.rhs_formula)) + 1;  // strictly greater
  if (hb.n_formula < 1) hb.n_formula = 1;
  auto scan = smallest_passing_horizon(gamma, M, C, cbar, delta);
  if (!scan)
    throw DomainError("min_horizon_bound: condition does not pass below the scan cap");
  hb.n_scan = *scan;
  hb.consistent = (hb.n_formula == hb.n_scan);
  return hb;
}

// ------------------------- assumption verification -------------------------

/// Worst-case report for the local cost-controllability assumption
/// V_inf(x) <= gamma * l*(x) near the equilibrium.
struct A2Report {
  double worst_ratio = 0.0;          // max over samples of V_hat / l*
  double worst_care_mismatch = 0.0;  // max relative |V_hat - x'Px| / x'Px
  Vec worst_sample;
  double radius = 0.0;
  int samples = 0;
};

/// Rolls the unsaturated linear feedback from samples of the ball of the
/// given radius, verifying that the rollouts respect all constraints (else
/// the ball is not a valid neighborhood and ConstraintActiveError is thrown),
/// that the rollout cost matches x'Px, and that V_hat / l* <= gamma holds.
inline A2Report verify_a2_local(const LqConstants& lq, const LinearSystem& lin,
                                const StageCost& cost, const ConstraintSpec& cons,
                                double radius, int n_samples = 48,
                                std::uint64_t seed = 20260817ULL) {
  if (!(radius > 0)) throw DomainError("verify_a2_local: radius must be > 0");
  ControlSystem sys = lin.as_control_system();
  const int n = lin.state_dim();
  DecayEnvelope env = lin.decay ? *lin.decay : fit_decay(lin.A + lin.B * lq.F);
  const double t_end = 16.0 / env.rate;
  const double h = std::min(0.01, t_end / 4000.0);
  Mat F = lq.F;
  auto fb = [&F](double, const Vec& x) { return Vec(F * x); };

  A2Report rep;
  rep.radius = radius;
  SplitMix64 rng(seed);
  for (int i = 0; i < n_samples; ++i) {
    double scale = (i % 3 == 0) ? 1.0 : (i % 3 == 1 ? 0.5 : 0.25);
    Vec x0 = radius * scale * rng.next_unit_vector(n);
    Trajectory traj = propagate_feedback(sys, cost, x0, fb, t_end, h);
    double viol = max_violation(traj, cons);
    if (viol > 1e-9) {
      std::ostringstream msg;
      msg << "verify_a2_local: linear-feedback rollout violates constraints by " << viol
          << " from |x0| = " << x0.norm() << " (radius too large for a valid neighborhood)";
      throw ConstraintActiveError(msg.str());
    }
    Vec xe = traj.terminal_state();
    double v_hat = traj.total_cost() + xe.dot(lq.P * xe);  // exact quadratic tail
    double v_pred = x0.dot(lq.P * x0);
    double lstar = pointwise_min_cost(cost, cons, x0);
    double ratio = v_hat / std::max(lstar, 1e-300);
    double mismatch = std::abs(v_hat - v_pred) / std::max(v_pred, 1e-300);
    rep.worst_care_mismatch = std::max(rep.worst_care_mismatch, mismatch);
    if (ratio > rep.worst_ratio) {
      rep.worst_ratio = ratio;
      rep.worst_sample = x0;
    }
    ++rep.samples;
  }
  return rep;
}

/// Deterministic rejection sampling of the sublevel set V_T <= C inside the
/// state box.
inline std::vector<Vec> sample_sublevel(const ControlSystem& sys, const StageCost& cost,
                                        const ConstraintSpec& cons, double T, double C,
                                        int n, const SolverOptions& opts = {},
                                        const LinearSystem* lin = nullptr,
                                        double control_dt = 0.0,
                                        const std::optional<Box>& sample_box = {}) {
  if (!cons.state_box && !sample_box)
    throw DomainError("sample_sublevel: state box required");
  const Box& X = sample_box ? *sample_box : *cons.state_box;
  if (control_dt <= 0) control_dt = T / 32.0;
  std::vector<Vec> out;
  const int max_tries = 64 * std::max(1, n);
  for (const Vec& x : halton_box(X.lo, X.hi, max_tries)) {
    if (int(out.size()) >= n) break;
    ValueResult v = value_function(sys, cost, cons, x, T, control_dt, opts, lin);
    if (v.finite && v.value <= C) out.push_back(x);
  }
  if (out.empty())
    throw EmptyRegionError("sample_sublevel: no sample met the sublevel bound");
  return out;
}

/// Empirical check of the per-period constant Cbar in
///   delta * l*(x) <= Cbar * V_delta(x)
/// over sublevel samples, with the Riccati-derived Cbar(delta).  Violations
/// are reported as data (they falsify the chosen constant, not the code);
/// `min_cbar_needed` is the smallest constant the samples would admit.
struct A3Report {
  struct Row {
    double delta = 0.0;
    double worst_ratio = 0.0;  // max of delta l* / (Cbar V_delta)
    double min_cbar = 0.0;     // max of delta l* / V_delta
    std::size_t violations = 0;
  };
  std::vector<Row> per_delta;
  double worst_ratio = 0.0;
  double min_cbar_needed = 0.0;
  std::size_t violations = 0;
};

inline A3Report verify_a3(const LqConstants& lq, const ControlSystem& sys,
                          const StageCost& cost, const ConstraintSpec& cons, double T,
                          double C, const std::vector<double>& deltas, int n_samples = 12,
                          const SolverOptions& opts = {}, const LinearSystem* lin = nullptr,
                          double tol_frac = 0.05,
                          const std::optional<Box>& sample_box = {}) {
  std::vector<Vec> samples =
      sample_sublevel(sys, cost, cons, T, C, n_samples, opts, lin, 0.0, sample_box);
  A3Report rep;
  for (double delta : deltas) {
    A3Report::Row row;
    row.delta = delta;
    const double cbar = lq.cbar_of(delta);
    for (const Vec& x : samples) {
      double lstar = pointwise_min_cost(cost, cons, x);
      if (lstar <= 1e-14) continue;  // equilibrium: 0 <= 0 holds trivially
      ValueResult vd = value_function(sys, cost, cons, x, delta, delta / 10.0, opts, lin);
      if (!vd.finite || vd.value <= 1e-14) continue;
      double lhs = delta * lstar;
      row.min_cbar = std::max(row.min_cbar, lhs / vd.value);
      row.worst_ratio = std::max(row.worst_ratio, lhs / (cbar * vd.value));
      if (lhs > cbar * vd.value * (1.0 + tol_frac)) ++row.violations;
    }
    rep.worst_ratio = std::max(rep.worst_ratio, row.worst_ratio);
    rep.min_cbar_needed = std::max(rep.min_cbar_needed, row.min_cbar);
    rep.violations += row.violations;
    rep.per_delta.push_back(row);
  }
  return rep;
}

// ---------------- constructive infinite-horizon bound (kernel) --------------

/// Constants of the constructive bound on V_inf over the scaled kernel
/// lambda * A.
struct Prop2Constants {
  double lambda = 0.0;
  double L = 0.0;       // (1 + |F|) Gamma d_max / d_min
  double d_max = 0.0;   // sup over the state box of |x|
  double d_min = 0.0;   // inf over the box boundary of |x|
  bool direct_lqr = false;  // lambda L <= 1: plain feedback suffices
  double mu = 0.0;      // keeper weight of the mixed control
  double epsilon = 0.0; // per-block contraction of the scaled kernel
  int m = 0;            // blocks until the feedback alone is admissible
  double t_bar = 0.0;   // longest observed block duration
  double beta_B = 0.0;  // largest observed single-block cost
  double alpha_B = 0.0; // largest observed feedback tail cost
};

struct Prop2Bound {
  Prop2Constants constants;
  double bound = 0.0;  // sampled sup of the total construction cost
  int samples = 0;
};

namespace detail {

/// Feedback rollout cost with feasibility checks; integrates until the state
/// has contracted to |x| <= norm_floor and adds the exact quadratic tail.
inline double lqr_tail_cost(const LinearSystem& lin, const StageCost& cost,
                            const ConstraintSpec& cons, const Mat& P, const Vec& x0,
                            double h, double t_cap, double norm_floor) {
  ControlSystem sys = lin.as_control_system();
  Vec x = x0;
  double acc = 0.0, t = 0.0;
  while (t < t_cap && x.norm() > norm_floor) {
    Vec u = lin.F * x;
    if (cons.max_violation(x, u) > 1e-9)
      throw ConstructionError("kernel bound: feedback tail violates constraints");
    x = rk4_step(sys, cost, x, u, h, &acc);
    t += h;
  }
  return acc + x.dot(P * x);
}

}  // namespace detail

/// Constructive bound on the infinite-horizon value over lambda * A.
///
/// When lambda L <= 1 the plain feedback is admissible from everywhere in
/// lambda A and the bound is the sampled sup of its rollout cost.  Otherwise
/// the mixed control mu * u_keeper + (1 - mu) * u_feedback (weights from
/// mu lambda + (1 - mu) lambda L = 1) steers each block into the
/// epsilon-contracted kernel; after m blocks the feedback alone is
/// admissible.  Both trajectories of the mix are propagated explicitly and
/// combined by superposition (linear dynamics), and every node of the mixed
/// trajectory is feasibility-checked; any violation throws
/// ConstructionError, falsifying the estimated envelope or keeper.
inline Prop2Bound bound_v_infinity_prop2(const LinearSystem& lin, const ConstraintSpec& cons,
                                         const StageCost& cost, double lambda,
                                         const ViabilityKernel& kernel, const Mat& P,
                                         int n_samples = 12, double h = 0.01,
                                         double t_cap = 120.0,
                                         std::uint64_t seed = 20260817ULL) {
  if (!(lambda >= 0.0 && lambda < 1.0))
    throw DomainError("bound_v_infinity_prop2: lambda must lie in [0, 1)");
  if (!lin.has_feedback() || !lin.decay)
    throw ConstructionError("bound_v_infinity_prop2: feedback and decay envelope required");
  if (!cons.state_box) throw ConstructionError("bound_v_infinity_prop2: state box required");

  Prop2Bound out;
  Prop2Constants& k = out.constants;
  k.lambda = lambda;
  const Box& X = *cons.state_box;
  const int n = lin.state_dim();
  double corner_max = 0.0;
  for (std::uint64_t mask = 0; mask < (1ULL << n); ++mask) {
    Vec c(n);
    for (int i = 0; i < n; ++i) c[i] = (mask >> i) & 1 ? X.hi[i] : X.lo[i];
    corner_max = std::max(corner_max, c.norm());
  }
  k.d_max = corner_max;
  double d_min = kInf;
  for (int i = 0; i < n; ++i) d_min = std::min({d_min, -X.lo[i], X.hi[i]});
  k.d_min = d_min;
  k.L = (1.0 + lin.F.operatorNorm()) * lin.decay->gain * k.d_max / k.d_min;
  if (lambda == 0.0) return out;  // the singleton origin: V_inf(0) = 0

  // Worst-case start states: just inside the boundary of lambda A along a
  // deterministic fan of directions.
  ViabilityKernel scaled = scale_kernel(kernel, lambda);
  SplitMix64 rng(seed);
  std::vector<Vec> starts;
  for (int i = 0; i < n_samples; ++i) {
    Vec dir = i < 2 * n ? Vec(Vec::Unit(n, i / 2) * (i % 2 ? -1.0 : 1.0))
                        : rng.next_unit_vector(n);
    double t_lo = 0.0, t_hi = lambda * k.d_max * 1.5;
    for (int it = 0; it < 50; ++it) {
      double t_mid = 0.5 * (t_lo + t_hi);
      (scaled.membership(t_mid * dir) != Membership::outside ? t_lo : t_hi) = t_mid;
    }
    if (t_lo > 0) starts.push_back(0.98 * t_lo * dir);
  }
  if (starts.empty())
    throw ConstructionError("bound_v_infinity_prop2: no start states found in lambda A");

  const double norm_floor = 1e-6 * k.d_max;
  if (lambda * k.L <= 1.0) {
    k.direct_lqr = true;
    for (const Vec& x0 : starts) {
      double c = detail::lqr_tail_cost(lin, cost, cons, P, x0, h, t_cap, norm_floor);
      k.alpha_B = std::max(k.alpha_B, c);
      out.bound = std::max(out.bound, c);
    }
    out.samples = int(starts.size());
    return out;
  }

  k.mu = (lambda * k.L - 1.0) / (lambda * (k.L - 1.0));
  k.epsilon = 1.0 - (1.0 - lambda) / (lambda * k.L);
  if (!(k.mu > 0.0 && k.mu <= 1.0 && k.epsilon > k.mu && k.epsilon < 1.0))
    throw ConstructionError("bound_v_infinity_prop2: mixing weights left their ranges");
  k.m = 1;
  while (std::pow(k.epsilon, k.m) > 1.0 / (lambda * k.L) + 1e-15) ++k.m;

  // Pair system: both ingredients of the mix propagated side by side; the
  // running cost is evaluated on the mixed state and mixed control.
  ControlSystem base = lin.as_control_system();
  const int m_in = lin.input_dim();
  const double mu = k.mu;
  ControlSystem pair;
  pair.state_dim = 2 * n;
  pair.input_dim = 2 * m_in;
  pair.x_eq = Vec::Zero(2 * n);
  pair.u_eq = Vec::Zero(2 * m_in);
  pair.f = [base, n, m_in](const Vec& z, const Vec& w) {
    Vec dz(2 * n);
    dz.head(n) = base.f(z.head(n), w.head(m_in));
    dz.tail(n) = base.f(z.tail(n), w.tail(m_in));
    return dz;
  };
  StageCost mixed;
  mixed.ell = [&cost, mu, n, m_in](const Vec& z, const Vec& w) {
    Vec x = mu * z.head(n) + (1.0 - mu) * z.tail(n);
    Vec u = mu * w.head(m_in) + (1.0 - mu) * w.tail(m_in);
    return cost.ell(x, u);
  };

  for (const Vec& x0 : starts) {
    double total = 0.0;
    Vec x = x0;
    for (int j = 0; j < k.m; ++j) {
      ViabilityKernel from = scale_kernel(kernel, lambda * std::pow(k.epsilon, j));
      ViabilityKernel target = scale_kernel(kernel, lambda * std::pow(k.epsilon, j + 1));
      Vec z(2 * n);
      z.head(n) = x;
      z.tail(n) = x;
      double t_block = 0.0, block_cost = 0.0;
      while (true) {
        Vec xt = mu * z.head(n) + (1.0 - mu) * z.tail(n);
        if (target.membership(xt) != Membership::outside) {
          x = xt;
          break;
        }
        if (t_block > t_cap)
          throw ConstructionError("bound_v_infinity_prop2: block failed to contract");
        Vec w(2 * m_in);
        w.head(m_in) = from.keeper(z.head(n));
        w.tail(m_in) = lin.F * z.tail(n);
        Vec ut = mu * w.head(m_in) + (1.0 - mu) * w.tail(m_in);
        if (cons.max_violation(xt, ut) > 1e-9)
          throw ConstructionError("bound_v_infinity_prop2: mixed control left the constraints");
        z = rk4_step(pair, mixed, z, w, h, &block_cost);
        t_block += h;
      }
      k.t_bar = std::max(k.t_bar, t_block);
      k.beta_B = std::max(k.beta_B, block_cost);
      total += block_cost;
    }
    double tail = detail::lqr_tail_cost(lin, cost, cons, P, x, h, t_cap, norm_floor);
    k.alpha_B = std::max(k.alpha_B, tail);
    total += tail;
    out.bound = std::max(out.bound, total);
  }
  out.samples = int(starts.size());
  return out;
}

// ----------------------- distance-to-boundary profile -----------------------

struct Corollary2Row {
  double dist = 0.0;       // distance of the sample set from the kernel boundary
  double sup_value = 0.0;  // empirical sup of the long-horizon value over the set
  double product = 0.0;    // dist * sup_value
  int samples = 0;
};

struct Corollary2Profile {
  std::vector<Corollary2Row> rows;
  double d_hat = 0.0;  // empirical constant: max of the products
};

/// Values explode no faster than 1/distance as the state set approaches the
/// kernel boundary: for each requested distance, boundary-offset sample sets
/// are built along a deterministic fan of rays and the sup of the
/// long-horizon value recorded; the products dist * sup stay bounded by the
/// reported empirical constant.
inline Corollary2Profile corollary2_profile(const ControlSystem& sys, const StageCost& cost,
                                            const ConstraintSpec& cons,
                                            const ViabilityKernel& kernel,
                                            const std::vector<double>& dists,
                                            double t_long = 12.0, int n_dirs = 24,
                                            const SolverOptions& opts = {},
                                            const LinearSystem* lin = nullptr,
                                            double control_dt = 0.2) {
  const int n = int(sys.state_dim);
  Corollary2Profile prof;
  SplitMix64 rng(20260817ULL);
  std::vector<Vec> dirs;
  for (int i = 0; i < n_dirs; ++i)
    dirs.push_back(i < 2 * n ? Vec(Vec::Unit(n, i / 2) * (i % 2 ? -1.0 : 1.0))
                             : rng.next_unit_vector(n));
  // Radius of the kernel along each ray, by bisection.
  std::vector<double> radius(dirs.size());
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    double t_lo = 0.0, t_hi = 4.0;
    for (int it = 0; it < 60; ++it) {
      double t_mid = 0.5 * (t_lo + t_hi);
      (kernel.membership(t_mid * dirs[i]) != Membership::outside ? t_lo : t_hi) = t_mid;
    }
    radius[i] = t_lo;
  }
  for (double d : dists) {
    Corollary2Row row;
    row.dist = kInf;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      // Pull back along the ray until the exact boundary distance matches d.
      double pull = d;
      Vec x = (radius[i] - pull) * dirs[i];
      double have = kernel.boundary_distance(x);
      for (int it = 0; it < 40 && std::abs(have - d) > 1e-4; ++it) {
        pull += (d - have);
        x = (radius[i] - pull) * dirs[i];
        have = kernel.boundary_distance(x);
      }
      if (radius[i] - pull <= 0) continue;  // ray too short for this offset
      if (kernel.membership(x) == Membership::outside) continue;
      ValueResult v = value_function(sys, cost, cons, x, t_long, control_dt, opts, lin);
      if (!v.finite) continue;
      row.sup_value = std::max(row.sup_value, v.value);
      row.dist = std::min(row.dist, have);
      ++row.samples;
    }
    if (row.samples == 0) continue;
    row.product = row.dist * row.sup_value;
    prof.d_hat = std::max(prof.d_hat, row.product);
    prof.rows.push_back(row);
  }
  return prof;
}

// ------------------------------ the pipeline --------------------------------

struct CertifyInputs {
  double delta = 1.0;
  double neighborhood_radius = 0.1;  // radius of the excluded ball defining M
  double margin = 0.10;              // sublevel margin on C
  double t_long_mult = 10.0;
  int m_samples = 4096;
  int k_samples = 24;  // sphere samples spanning the set K inside the sublevel
  std::uint64_t seed = 20260817ULL;
  SolverOptions solver;
};

struct CertifyReport {
  LqConstants lq;
  DecayEnvelope decay;
  double delta = 0.0, gamma = 0.0, M = 0.0, C = 0.0, beta = 0.0, cbar = 0.0;
  SublevelEstimate c_estimate;
  HorizonBound horizon;
  Certificate chosen;               // at N = horizon.n_scan
  std::vector<Certificate> per_n;   // the condition over a reporting range
};

/// Chains the full pipeline on a linear-quadratic plant: Riccati constants,
/// M over the box minus the ball, C over a sphere of start states, the
/// horizon condition scan, and the minimal certified horizon.
inline CertifyReport build_certificate(Plant& plant, const CertifyInputs& in = {}) {
  if (!plant.lin) throw DomainError("build_certificate: linear system data required");
  CertifyReport rep;
  rep.delta = in.delta;
  rep.lq = solve_care(*plant.lin, plant.cost);
  rep.decay = *plant.lin->decay;
  rep.gamma = rep.lq.gamma;
  rep.M = estimate_M(plant.sys, plant.cost, plant.cons, in.neighborhood_radius,
                     in.m_samples, in.seed);

  SplitMix64 rng(in.seed);
  std::vector<Vec> K;
  const int n = plant.sys.state_dim;
  for (int i = 0; i < in.k_samples; ++i)
    K.push_back(in.neighborhood_radius * rng.next_unit_vector(n));
  rep.c_estimate = estimate_C(plant.sys, plant.cost, plant.cons, K,
                              std::max(1.0, in.delta), in.solver, &*plant.lin,
                              in.t_long_mult, in.margin);
  if (!rep.c_estimate.finite)
    throw ConstructionError("build_certificate: sublevel estimate diverged");
  rep.C = std::max(rep.c_estimate.C, 1.01 * rep.M * in.delta);  // keep (3) nondegenerate
  rep.cbar = rep.lq.cbar_of(in.delta);
  rep.beta = std::max(rep.C / rep.M, rep.gamma);
  rep.horizon = min_horizon_bound(rep.gamma, rep.M, rep.C, rep.cbar, in.delta);
  rep.chosen = check_condition(rep.gamma, rep.M, rep.C, rep.cbar, in.delta, rep.horizon.n_scan);
  for (int N = 1; N <= rep.horizon.n_scan + 3; ++N)
    rep.per_n.push_back(check_condition(rep.gamma, rep.M, rep.C, rep.cbar, in.delta, N));
  return rep;
}

}  // namespace sdmpc
