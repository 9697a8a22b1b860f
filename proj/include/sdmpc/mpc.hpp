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

#include <optional>
#include <vector>

#include "sdmpc/ocp.hpp"

namespace sdmpc {

enum class FailureReason {
  none,
  infeasible_ocp,           // recursive feasibility lost: no admissible prediction
  constraint_violation,     // an applied segment left the constraint set
  no_convergence_to_goal,   // simulation budget exhausted away from the target
};

inline const char* to_string(FailureReason r) {
  switch (r) {
    case FailureReason::none: return "none";
    case FailureReason::infeasible_ocp: return "infeasible_ocp";
    case FailureReason::constraint_violation: return "constraint_violation";
    case FailureReason::no_convergence_to_goal: return "no_convergence_to_goal";
  }
  return "?";
}

/// Per-iteration record of the receding-horizon loop: the measured state, the
/// optimal value of the horizon problem solved there, the realized stage-cost
/// integral of the applied segment, and solver diagnostics.
struct StepRecord {
  Vec state;
  double value = 0.0;
  double stage_integral = 0.0;
  double max_violation = 0.0;
  double pg_norm = 0.0;
  int inner_iters = 0;
  bool converged = false;
};

struct MpcRun {
  Trajectory closed_loop;
  std::vector<StepRecord> steps;
  bool success = false;
  FailureReason failure = FailureReason::none;
  double t_final = 0.0;
  GridSpec grid;
};

/// Receding-horizon simulation with zero model mismatch: at each sampling
/// instant the horizon problem is solved at the measured state, the first
/// delta-interval of the optimizer is applied, and the loop repeats.  The
/// previous optimizer, shifted by one interval with its final segment held,
/// warm starts the next solve; the first solve (and any infeasible retry)
/// also tries a zero start and an input-clamped linear-feedback start.
///
/// The run succeeds once |x - x_eq| <= goal_radius with every applied node
/// within opts.feas_tol of the constraint set; it fails with the reason that
/// first occurred.
inline MpcRun run_mpc(const ControlSystem& sys, const StageCost& cost,
                      const ConstraintSpec& cons, const Vec& x0, const GridSpec& grid,
                      double t_sim, double goal_radius, const SolverOptions& opts = {},
                      const LinearSystem* lin = nullptr) {
  MpcRun run;
  run.grid = grid;
  const int k = grid.substeps;
  const int steps_budget = std::max(1, int(std::llround(t_sim / grid.delta)));

  Vec x = x0;
  run.closed_loop.t.push_back(0.0);
  run.closed_loop.states.push_back(x);
  run.closed_loop.running_cost.push_back(0.0);

  auto lqr_start = [&](const Vec& from) -> std::vector<Vec> {
    std::vector<Vec> warm;
    if (!lin || !lin->has_feedback()) return warm;
    Vec xs = from;
    warm.reserve(std::size_t(grid.total_steps()));
    for (int i = 0; i < grid.total_steps(); ++i) {
      Vec u = cons.clamp_input(lin->F * xs);
      warm.push_back(u);
      xs = rk4_step(sys, cost, xs, u, grid.h(), nullptr);
      if (!xs.allFinite() || xs.lpNorm<Eigen::Infinity>() > opts.divergence_bound) return {};
    }
    return warm;
  };

  OcpProblem problem{sys, cost, cons, grid, x};
  std::vector<Vec> shifted;  // warm start carried between iterations

  for (int p = 0; p < steps_budget; ++p) {
    if ((x - sys.x_eq).norm() <= goal_radius) {
      run.success = true;
      run.t_final = p * grid.delta;
      return run;
    }

    problem.x0 = x;
    std::optional<OcpSolution> sol;
    std::vector<std::vector<Vec>> starts;
    if (!shifted.empty()) starts.push_back(shifted);
    if (auto warm = lqr_start(x); !warm.empty()) starts.push_back(std::move(warm));
    starts.emplace_back();  // zero start
    for (const auto& start : starts) {
      try {
        OcpSolution cand = solve(problem, opts, start.empty() ? nullptr : &start);
        // Keep the best by (infeasibility above tolerance, value).
        const double cv = std::max(cand.max_violation, opts.feas_tol);
        const double sv = sol ? std::max(sol->max_violation, opts.feas_tol) : kInf;
        if (!sol || cv < sv || (cv <= sv && cand.value < sol->value)) sol = std::move(cand);
        if (sol->max_violation <= opts.feas_tol && sol->converged && &start == &starts.front())
          break;  // warm start already good: skip redundant restarts
      } catch (const InfeasibleOcpError&) {
      } catch (const DivergenceError&) {
      }
    }
    if (!sol) {
      run.failure = FailureReason::infeasible_ocp;
      run.t_final = p * grid.delta;
      return run;
    }

    StepRecord rec;
    rec.state = x;
    rec.value = sol->value;
    rec.stage_integral = sol->traj.running_cost[std::size_t(k)];
    rec.max_violation = sol->max_violation;
    rec.pg_norm = sol->pg_norm;
    rec.inner_iters = sol->inner_iters;
    rec.converged = sol->converged;
    run.steps.push_back(rec);

    // Check the applied nodes only: the tail is re-optimized next iteration.
    double applied_viol = -kInf;
    for (int i = 0; i <= k; ++i) {
      const Vec& u = sol->controls[std::size_t(std::min(i, k - 1))];
      applied_viol = std::max(applied_viol,
                              cons.max_violation(sol->traj.states[std::size_t(i)], u));
    }
    if (applied_viol > opts.feas_tol) {
      run.failure = FailureReason::constraint_violation;
      run.t_final = p * grid.delta;
      return run;
    }

    const double cost_offset = run.closed_loop.running_cost.back();
    const double t_offset = p * grid.delta;
    for (int i = 1; i <= k; ++i) {
      run.closed_loop.t.push_back(t_offset + sol->traj.t[std::size_t(i)]);
      run.closed_loop.states.push_back(sol->traj.states[std::size_t(i)]);
      run.closed_loop.controls.push_back(sol->controls[std::size_t(i - 1)]);
      run.closed_loop.running_cost.push_back(cost_offset +
                                             sol->traj.running_cost[std::size_t(i)]);
    }
    x = sol->traj.states[std::size_t(k)];

    shifted.assign(sol->controls.begin() + k, sol->controls.end());
    for (int i = 0; i < k; ++i) shifted.push_back(sol->controls.back());
  }

  run.t_final = steps_budget * grid.delta;
  if ((x - sys.x_eq).norm() <= goal_radius) {
    run.success = true;
  } else {
    run.failure = FailureReason::no_convergence_to_goal;
  }
  return run;
}

/// Smallest horizon length that steers x0 to the goal: runs the closed loop
/// for N = 1, 2, ... upward and stops at the first success.
struct HorizonScan {
  std::optional<int> horizon;                // empty when every N <= n_max failed
  std::vector<FailureReason> failures;       // reason per tried N (success => none)
};

inline HorizonScan smallest_horizon(const ControlSystem& sys, const StageCost& cost,
                                    const ConstraintSpec& cons, const Vec& x0, double delta,
                                    int substeps, int n_max, double t_sim, double goal_radius,
                                    const SolverOptions& opts = {},
                                    const LinearSystem* lin = nullptr) {
  HorizonScan scan;
  for (int N = 1; N <= n_max; ++N) {
    MpcRun run = run_mpc(sys, cost, cons, x0, GridSpec{delta, substeps, N}, t_sim,
                         goal_radius, opts, lin);
    scan.failures.push_back(run.failure);
    if (run.success) {
      scan.horizon = N;
      break;
    }
  }
  return scan;
}

/// Relaxed-descent audit of a finished run: for consecutive records,
///   r_p = V(x_{p+1}) - V(x_p) + (1 - alpha) * stage_integral_p
/// must stay below the numerical slack budget when the certificate constants
/// are valid.  Every term is recomputable from the MpcRun fields.
struct LyapunovReport {
  std::vector<double> residuals;
  double worst = -kInf;
  double alpha = 0.0;
  double slack = 0.0;
  bool ok = true;
};

inline LyapunovReport lyapunov_monitor(const MpcRun& run, double alpha, double slack) {
  LyapunovReport rep;
  rep.alpha = alpha;
  rep.slack = slack;
  for (std::size_t p = 0; p + 1 < run.steps.size(); ++p) {
    const double r = run.steps[p + 1].value - run.steps[p].value +
                     (1.0 - alpha) * run.steps[p].stage_integral;
    rep.residuals.push_back(r);
    rep.worst = std::max(rep.worst, r);
  }
  rep.ok = rep.residuals.empty() || rep.worst <= slack;
  return rep;
}

}  // namespace sdmpc
