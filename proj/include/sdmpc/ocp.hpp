/*
 Copyright 2026 The sdmpc authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

 http://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
 */
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sdmpc/integrate.hpp"
#include "sdmpc/model.hpp"
#include "sdmpc/sampling.hpp"

namespace sdmpc {

struct SolverOptions {
  double feas_tol = 1e-6;   // largest tolerated node constraint residual
  double grad_tol = 1e-6;   // projected-gradient norm at a solution
  int max_outer = 12;       // multiplier / penalty updates
  int max_inner = 500;      // projected-gradient iterations per outer pass
  double rho_init = 10.0;
  double rho_growth = 10.0;
  double rho_max = 1e8;
  double armijo = 1e-4;
  int max_linesearch = 40;
  double infeasibility_cap = 1e-3;  // above this after full escalation: infeasible
  double divergence_bound = 1e9;
};

/// Finite-horizon optimal control problem on a fixed grid:
///   minimize  integral of cost.ell over [0, T]
///   subject to  dx/dt = sys.f(x, u),  x(0) = x0,  cons.g(x, u) <= 0
/// with u piecewise constant on the substep grid.
struct OcpProblem {
  ControlSystem sys;
  StageCost cost;
  ConstraintSpec cons;
  GridSpec grid;
  Vec x0;
};

struct OcpSolution {
  std::vector<Vec> controls;
  Trajectory traj;        // replay of `controls` through the integrator
  double value = 0.0;     // == traj.total_cost()
  double max_violation = 0.0;
  double pg_norm = 0.0;   // projected-gradient norm at exit
  int outer_iters = 0;
  int inner_iters = 0;
  bool converged = false;
  Mat multipliers;        // (steps + 1) x count, nonnegative
};

namespace detail {

// Direct transcription workspace: forward pass caches every RK4 stage state so
// the backward pass can form the exact adjoint of the discrete map.
class Transcription {
 public:
  Transcription(const OcpProblem& p, const SolverOptions& opts)
      : p_(p), opts_(opts), S_(p.grid.total_steps()), h_(p.grid.h()) {
    stages_.resize(std::size_t(S_) * 4);
    nodes_.resize(std::size_t(S_) + 1);
    residuals_.resize(std::size_t(S_) + 1);
  }

  int steps() const { return S_; }
  int input_dim() const { return p_.sys.input_dim; }
  int constraint_count() const { return p_.cons.count; }

  // Forward sweep: integrates, caches stages, evaluates node residuals.
  // Returns the plain objective (terminal accumulated cost).
  double forward(const Mat& U) {
    Vec x = p_.x0;
    double acc = 0.0;
    nodes_[0] = x;
    for (int i = 0; i < S_; ++i) {
      const Vec u = U.col(i);
      Vec& s1 = stages_[std::size_t(i) * 4 + 0];
      Vec& s2 = stages_[std::size_t(i) * 4 + 1];
      Vec& s3 = stages_[std::size_t(i) * 4 + 2];
      Vec& s4 = stages_[std::size_t(i) * 4 + 3];
      s1 = x;
      const Vec k1 = p_.sys.f(s1, u);
      s2 = x + (0.5 * h_) * k1;
      const Vec k2 = p_.sys.f(s2, u);
      s3 = x + (0.5 * h_) * k2;
      const Vec k3 = p_.sys.f(s3, u);
      s4 = x + h_ * k3;
      const Vec k4 = p_.sys.f(s4, u);
      acc += (h_ / 6.0) * (p_.cost.ell(s1, u) + 2.0 * p_.cost.ell(s2, u) +
                           2.0 * p_.cost.ell(s3, u) + p_.cost.ell(s4, u));
      x += (h_ / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      check_finite(x, opts_.divergence_bound);
      nodes_[std::size_t(i) + 1] = x;
    }
    objective_ = acc;
    if (p_.cons.count > 0)
      for (int i = 0; i <= S_; ++i)
        residuals_[std::size_t(i)] = p_.cons.g(nodes_[std::size_t(i)], U.col(std::min(i, S_ - 1)));
    return acc;
  }

  double objective() const { return objective_; }
  const std::vector<Vec>& nodes() const { return nodes_; }
  const std::vector<Vec>& node_residuals() const { return residuals_; }

  double max_node_violation() const {
    if (p_.cons.count == 0) return 0.0;
    double worst = -kInf;
    for (const Vec& r : residuals_) worst = std::max(worst, r.maxCoeff());
    return worst;
  }

  // Powell-Hestenes-Rockafellar penalty of the cached residuals.
  double penalty(const Mat& lambda, double rho) const {
    if (p_.cons.count == 0) return 0.0;
    double acc = 0.0;
    for (int i = 0; i <= S_; ++i) {
      const Vec& r = residuals_[std::size_t(i)];
      for (int j = 0; j < p_.cons.count; ++j) {
        const double a = std::max(0.0, lambda(i, j) + rho * r[j]);
        acc += (a * a - lambda(i, j) * lambda(i, j)) / (2.0 * rho);
      }
    }
    return acc;
  }

  double augmented(const Mat& U, const Mat& lambda, double rho) {
    forward(U);
    return objective_ + penalty(lambda, rho);
  }

  // Reverse sweep through the cached stages.  Produces the gradient of
  //   objective + penalty(lambda, rho)
  // with respect to U; pass rho = 0 (and lambda zero) for the plain objective.
  Mat gradient(const Mat& U, const Mat& lambda, double rho) const {
    const int n = p_.sys.state_dim;
    const int m = p_.sys.input_dim;
    Mat grad = Mat::Zero(m, S_);

    // Penalty weights w_i = max(0, lambda_i + rho r_i); node i pairs with the
    // control of the step starting there (the terminal node reuses the last).
    std::vector<Vec> w(std::size_t(S_) + 1);
    if (rho > 0.0 && p_.cons.count > 0) {
      for (int i = 0; i <= S_; ++i) {
        w[std::size_t(i)] =
            (lambda.row(i).transpose() + rho * residuals_[std::size_t(i)]).cwiseMax(0.0);
      }
    }

    auto add_node_penalty = [&](int i, Vec& adjoint) {
      if (rho <= 0.0 || p_.cons.count == 0) return;
      const Vec& wi = w[std::size_t(i)];
      if (wi.lpNorm<Eigen::Infinity>() == 0.0) return;
      const Vec u = U.col(std::min(i, S_ - 1));
      adjoint.noalias() += p_.cons.jac_state(nodes_[std::size_t(i)], u).transpose() * wi;
      grad.col(std::min(i, S_ - 1)).noalias() +=
          p_.cons.jac_input(nodes_[std::size_t(i)], u).transpose() * wi;
    };

    Vec adjoint = Vec::Zero(n);
    add_node_penalty(S_, adjoint);

    for (int i = S_ - 1; i >= 0; --i) {
      const Vec u = U.col(i);
      const Vec& s1 = stages_[std::size_t(i) * 4 + 0];
      const Vec& s2 = stages_[std::size_t(i) * 4 + 1];
      const Vec& s3 = stages_[std::size_t(i) * 4 + 2];
      const Vec& s4 = stages_[std::size_t(i) * 4 + 3];

      // Stage adjoints; the cost channel's adjoint is identically 1, so the
      // stage cost gradients enter with the plain RK4 quadrature weights.
      const Vec kb4 = (h_ / 6.0) * adjoint;
      const Vec sb4 = p_.sys.jac_state(s4, u).transpose() * kb4 +
                      (h_ / 6.0) * p_.cost.grad_state(s4, u);
      Vec gu = p_.sys.jac_input(s4, u).transpose() * kb4 + (h_ / 6.0) * p_.cost.grad_input(s4, u);

      const Vec kb3 = (h_ / 3.0) * adjoint + h_ * sb4;
      const Vec sb3 = p_.sys.jac_state(s3, u).transpose() * kb3 +
                      (h_ / 3.0) * p_.cost.grad_state(s3, u);
      gu.noalias() += p_.sys.jac_input(s3, u).transpose() * kb3;
      gu.noalias() += (h_ / 3.0) * p_.cost.grad_input(s3, u);

      const Vec kb2 = (h_ / 3.0) * adjoint + (0.5 * h_) * sb3;
      const Vec sb2 = p_.sys.jac_state(s2, u).transpose() * kb2 +
                      (h_ / 3.0) * p_.cost.grad_state(s2, u);
      gu.noalias() += p_.sys.jac_input(s2, u).transpose() * kb2;
      gu.noalias() += (h_ / 3.0) * p_.cost.grad_input(s2, u);

      const Vec kb1 = (h_ / 6.0) * adjoint + (0.5 * h_) * sb2;
      const Vec sb1 = p_.sys.jac_state(s1, u).transpose() * kb1 +
                      (h_ / 6.0) * p_.cost.grad_state(s1, u);
      gu.noalias() += p_.sys.jac_input(s1, u).transpose() * kb1;
      gu.noalias() += (h_ / 6.0) * p_.cost.grad_input(s1, u);

      grad.col(i) += gu;
      adjoint += sb1 + sb2 + sb3 + sb4;
      add_node_penalty(i, adjoint);
    }
    return grad;
  }

 private:
  const OcpProblem& p_;
  const SolverOptions& opts_;
  int S_;
  double h_;
  std::vector<Vec> stages_;
  std::vector<Vec> nodes_;
  std::vector<Vec> residuals_;
  double objective_ = 0.0;
};

inline Mat project_columns(const Mat& U, const std::optional<Box>& box) {
  if (!box) return U;
  Mat out = U;
  for (int i = 0; i < out.cols(); ++i) out.col(i) = box->clamp(out.col(i));
  return out;
}

}  // namespace detail

/// Solves the transcribed problem with an augmented-Lagrangian outer loop
/// (multiplier update lambda <- max(0, lambda + rho g), rho escalated by 10x
/// up to rho_max) around a projected-gradient inner loop with Barzilai-Borwein
/// steps and Armijo backtracking.  Input bounds are handled by projection,
/// everything else through the penalty.  Throws InfeasibleOcpError when the
/// final infeasibility exceeds opts.infeasibility_cap.
inline OcpSolution solve(const OcpProblem& p, const SolverOptions& opts = {},
                         const std::vector<Vec>* warm_start = nullptr) {
  const int S = p.grid.total_steps();
  const int m = p.sys.input_dim;
  detail::Transcription work(p, opts);

  Mat U = Mat::Zero(m, S);
  if (warm_start) {
    for (int i = 0; i < S && i < int(warm_start->size()); ++i)
      U.col(i) = (*warm_start)[std::size_t(i)];
  }
  U = detail::project_columns(U, p.cons.input_box);

  Mat lambda = Mat::Zero(S + 1, std::max(1, p.cons.count));
  double rho = opts.rho_init;
  double omega = std::max(opts.grad_tol, 1e-3);  // inner tolerance, tightened per outer pass

  double L = work.augmented(U, lambda, rho);
  double viol = work.max_node_violation();
  double pg = kInf;
  int outer = 0, inner_total = 0;

  // Best iterate seen so far, ranked by (positive infeasibility, objective).
  Mat best_U = U;
  double best_viol = std::max(viol, 0.0);
  double best_obj = work.objective();
  bool best_valid = false;
  double prev_viol = kInf;

  for (outer = 0; outer < opts.max_outer; ++outer) {
    Mat G = work.gradient(U, lambda, rho);
    double step = 1.0;
    Mat U_prev, G_prev;
    bool have_prev = false;

    for (int inner = 0; inner < opts.max_inner; ++inner) {
      ++inner_total;
      if (have_prev) {
        const Mat s = U - U_prev;
        const Mat y = G - G_prev;
        const double sy = (s.array() * y.array()).sum();
        const double ss = (s.array() * s.array()).sum();
        step = (sy > 1e-18) ? std::min(std::max(ss / sy, 1e-10), 1e6) : std::min(step * 2.0, 1e6);
      }

      Mat trial;
      double L_trial = 0.0;
      bool accepted = false;
      for (int ls = 0; ls < opts.max_linesearch; ++ls) {
        trial = detail::project_columns(U - step * G, p.cons.input_box);
        const double slope = (G.array() * (trial - U).array()).sum();
        L_trial = work.augmented(trial, lambda, rho);
        if (L_trial <= L + opts.armijo * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;  // stalled: line search exhausted

      U_prev = U;
      G_prev = G;
      have_prev = true;
      U = trial;
      L = L_trial;
      G = work.gradient(U, lambda, rho);

      pg = (U - detail::project_columns(U - G, p.cons.input_box)).lpNorm<Eigen::Infinity>();
      if (pg <= omega) break;
    }

    // Refresh residuals at the accepted point before judging feasibility.
    L = work.augmented(U, lambda, rho);
    viol = work.max_node_violation();

    const double viol_pos = std::max(viol, 0.0);
    const double obj = work.objective();
    if (!best_valid || viol_pos < best_viol ||
        (viol_pos <= std::max(best_viol, opts.feas_tol) && obj <= best_obj)) {
      best_U = U;
      best_viol = viol_pos;
      best_obj = obj;
      best_valid = true;
    }
    if (viol <= opts.feas_tol && pg <= opts.grad_tol) break;

    // First-order multiplier update on the node residuals.
    if (p.cons.count > 0) {
      const auto& res = work.node_residuals();
      for (int i = 0; i <= S; ++i)
        lambda.row(i) =
            (lambda.row(i).transpose() + rho * res[std::size_t(i)]).cwiseMax(0.0).transpose();
    }
    if (outer > 0 && viol > 0.25 * prev_viol && viol > opts.feas_tol)
      rho = std::min(rho * opts.rho_growth, opts.rho_max);
    prev_viol = viol;
    omega = std::max(opts.grad_tol, omega * 0.1);
    L = work.augmented(U, lambda, rho);
  }

  if (best_valid) {
    U = best_U;
    work.augmented(U, lambda, rho);
  }
  {
    const Mat Gf = work.gradient(U, lambda, rho);
    pg = (U - detail::project_columns(U - Gf, p.cons.input_box)).lpNorm<Eigen::Infinity>();
  }

  OcpSolution sol;
  sol.controls.resize(std::size_t(S));
  for (int i = 0; i < S; ++i) sol.controls[std::size_t(i)] = U.col(i);
  sol.traj = propagate(p.sys, p.cost, p.x0, sol.controls, p.grid.h(), 0.0, opts.divergence_bound);
  sol.value = sol.traj.total_cost();
  sol.max_violation = max_violation(sol.traj, p.cons);
  sol.pg_norm = pg;
  sol.outer_iters = outer + 1;
  sol.inner_iters = inner_total;
  sol.converged = sol.max_violation <= opts.feas_tol && pg <= opts.grad_tol;
  sol.multipliers = lambda;

  if (sol.max_violation > opts.infeasibility_cap) {
    throw InfeasibleOcpError("ocp infeasible: residual " + std::to_string(sol.max_violation) +
                             " after full penalty escalation");
  }
  return sol;
}

/// Optimal-value query V_T(x0).  Runs the solver from a zero start and, when a
/// stabilizing gain is supplied, also from the input-clamped linear-feedback
/// rollout, returning the better of the two.  Infeasibility is reported
/// through `finite` instead of an exception.
struct ValueResult {
  double value = kInf;
  bool finite = false;
  OcpSolution solution;
};

inline ValueResult value_function(const ControlSystem& sys, const StageCost& cost,
                                  const ConstraintSpec& cons, const Vec& x0, double T,
                                  double control_dt, const SolverOptions& opts = {},
                                  const LinearSystem* lin = nullptr) {
  OcpProblem p{sys, cost, cons, GridSpec{}, x0};
  const int S = std::max(1, int(std::llround(T / control_dt)));
  p.grid = GridSpec{T, S, 1};

  std::vector<std::vector<Vec>> starts;
  starts.emplace_back();  // zero start
  if (lin && lin->has_feedback()) {
    std::vector<Vec> warm;
    warm.reserve(std::size_t(S));
    Vec x = x0;
    bool ok = true;
    for (int i = 0; i < S; ++i) {
      Vec u = cons.clamp_input(lin->F * x);
      warm.push_back(u);
      x = rk4_step(sys, cost, x, u, p.grid.h(), nullptr);
      if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > opts.divergence_bound) {
        ok = false;
        break;
      }
    }
    if (ok) starts.push_back(std::move(warm));
  }

  ValueResult out;
  for (const auto& start : starts) {
    try {
      OcpSolution sol = solve(p, opts, start.empty() ? nullptr : &start);
      if (!out.finite || sol.value < out.value) {
        out.value = sol.value;
        out.finite = true;
        out.solution = std::move(sol);
      }
    } catch (const InfeasibleOcpError&) {
      // fall through; other starts may still succeed
    } catch (const DivergenceError&) {
    }
  }
  return out;
}

/// Compares the adjoint gradient of the plain transcription objective against
/// central finite differences at `probes` deterministic coordinates.  Returns
/// the largest error scaled by max(1, |fd|).
inline double gradient_check(const OcpProblem& p, const std::vector<Vec>& at, int probes,
                             std::uint64_t seed = 1234567ULL) {
  const int S = p.grid.total_steps();
  const int m = p.sys.input_dim;
  SolverOptions opts;
  detail::Transcription work(p, opts);

  Mat U = Mat::Zero(m, S);
  for (int i = 0; i < S && i < int(at.size()); ++i) U.col(i) = at[std::size_t(i)];

  work.forward(U);
  const Mat lambda = Mat::Zero(S + 1, std::max(1, p.cons.count));
  const Mat G = work.gradient(U, lambda, 0.0);

  SplitMix64 rng(seed);
  double worst = 0.0;
  const double fd_h = 1e-5;
  for (int k = 0; k < probes; ++k) {
    const int i = int(rng.next_u64() % std::uint64_t(S));
    const int j = int(rng.next_u64() % std::uint64_t(m));
    Mat Up = U, Un = U;
    Up(j, i) += fd_h;
    Un(j, i) -= fd_h;
    const double fd = (work.forward(Up) - work.forward(Un)) / (2.0 * fd_h);
    const double err = std::abs(G(j, i) - fd) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace sdmpc
