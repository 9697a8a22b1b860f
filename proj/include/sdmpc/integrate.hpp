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
#include <cstdio>
#include <ostream>
#include <vector>

#include "sdmpc/model.hpp"

namespace sdmpc {

/// Sampled-data time grid: the loop applies controls for `delta` seconds at a
/// time, each such interval integrated with `substeps` fixed RK4 steps, and
/// the optimizer looks `horizon` intervals ahead (prediction window
/// T = horizon * delta).
struct GridSpec {
  double delta = 0.1;
  int substeps = 10;
  int horizon = 1;

  double h() const { return delta / substeps; }
  double T() const { return horizon * delta; }
  int total_steps() const { return horizon * substeps; }
};

/// Zero-order-hold trajectory on a uniform step grid.  states has one more
/// entry than controls; running_cost[i] is the integral of the stage cost
/// from t[0] to t[i] accumulated through the same RK4 stages as the state.
struct Trajectory {
  std::vector<double> t;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<double> running_cost;

  int steps() const { return int(controls.size()); }
  double total_cost() const { return running_cost.empty() ? 0.0 : running_cost.back(); }
  const Vec& terminal_state() const { return states.back(); }
};

namespace detail {

inline void check_finite(const Vec& x, double bound) {
  if (!x.allFinite() || x.lpNorm<Eigen::Infinity>() > bound)
    throw DivergenceError("trajectory diverged (|x| exceeded " + std::to_string(bound) + ")");
}

}  // namespace detail

/// One classical RK4 step of the cost-augmented system: advances the state by
/// h under constant input u and adds the matching quadrature of l to cost.
inline Vec rk4_step(const ControlSystem& sys, const StageCost& cost, const Vec& x,
                    const Vec& u, double h, double* cost_acc) {
  const Vec k1 = sys.f(x, u);
  const Vec x2 = x + (0.5 * h) * k1;
  const Vec k2 = sys.f(x2, u);
  const Vec x3 = x + (0.5 * h) * k2;
  const Vec k3 = sys.f(x3, u);
  const Vec x4 = x + h * k3;
  const Vec k4 = sys.f(x4, u);
  if (cost_acc) {
    const double c1 = cost.ell(x, u);
    const double c2 = cost.ell(x2, u);
    const double c3 = cost.ell(x3, u);
    const double c4 = cost.ell(x4, u);
    *cost_acc += (h / 6.0) * (c1 + 2.0 * c2 + 2.0 * c3 + c4);
  }
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Integrates the zero-order-hold control sequence from x0 with fixed step h.
/// Throws DivergenceError if any node leaves |x|_inf <= divergence_bound.
inline Trajectory propagate(const ControlSystem& sys, const StageCost& cost, const Vec& x0,
                            const std::vector<Vec>& controls, double h, double t0 = 0.0,
                            double divergence_bound = 1e9) {
  Trajectory traj;
  const int S = int(controls.size());
  traj.t.reserve(S + 1);
  traj.states.reserve(S + 1);
  traj.controls = controls;
  traj.running_cost.reserve(S + 1);

  Vec x = x0;
  double acc = 0.0;
  traj.t.push_back(t0);
  traj.states.push_back(x);
  traj.running_cost.push_back(0.0);
  for (int i = 0; i < S; ++i) {
    x = rk4_step(sys, cost, x, controls[std::size_t(i)], h, &acc);
    detail::check_finite(x, divergence_bound);
    traj.t.push_back(t0 + (i + 1) * h);
    traj.states.push_back(x);
    traj.running_cost.push_back(acc);
  }
  return traj;
}

/// Integrates the closed loop x' = f(x, feedback(t, x)) with fixed step h,
/// re-evaluating the feedback at every RK4 stage point.  The recorded control
/// for each step is the feedback value at the step's start.
inline Trajectory propagate_feedback(
    const ControlSystem& sys, const StageCost& cost, const Vec& x0,
    const std::function<Vec(double, const Vec&)>& feedback, double t_end, double h,
    double t0 = 0.0, double divergence_bound = 1e9) {
  Trajectory traj;
  const int S = std::max(1, int(std::llround((t_end - t0) / h)));
  Vec x = x0;
  double acc = 0.0;
  traj.t.push_back(t0);
  traj.states.push_back(x);
  traj.running_cost.push_back(0.0);
  for (int i = 0; i < S; ++i) {
    const double t = t0 + i * h;
    const Vec u1 = feedback(t, x);
    const Vec k1 = sys.f(x, u1);
    const Vec x2 = x + (0.5 * h) * k1;
    const Vec u2 = feedback(t + 0.5 * h, x2);
    const Vec k2 = sys.f(x2, u2);
    const Vec x3 = x + (0.5 * h) * k2;
    const Vec u3 = feedback(t + 0.5 * h, x3);
    const Vec k3 = sys.f(x3, u3);
    const Vec x4 = x + h * k3;
    const Vec u4 = feedback(t + h, x4);
    const Vec k4 = sys.f(x4, u4);
    acc += (h / 6.0) * (cost.ell(x, u1) + 2.0 * cost.ell(x2, u2) + 2.0 * cost.ell(x3, u3) +
                        cost.ell(x4, u4));
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    detail::check_finite(x, divergence_bound);
    traj.t.push_back(t + h);
    traj.states.push_back(x);
    traj.controls.push_back(u1);
    traj.running_cost.push_back(acc);
  }
  return traj;
}

/// Largest constraint residual over the trajectory nodes.  Interior nodes are
/// paired with the control applied on the step that starts there; the
/// terminal node reuses the final control.  This is the node-based surrogate
/// for "(x(t), u(t)) in E for all t".
inline double max_violation(const Trajectory& traj, const ConstraintSpec& cons) {
  if (cons.count == 0 || traj.states.empty()) return 0.0;
  double worst = -kInf;
  const int S = traj.steps();
  if (traj.controls.empty()) {
    // Single-node trajectory: there is no applied control to pair the state
    // with, so test against a box-interior input when one is known.
    if (!cons.input_box) return 0.0;
    const Vec u0 = 0.5 * (cons.input_box->lo + cons.input_box->hi);
    for (const Vec& x : traj.states) worst = std::max(worst, cons.max_violation(x, u0));
    return worst;
  }
  for (int i = 0; i <= S; ++i) {
    const Vec& u = traj.controls[std::size_t(std::min(i, S - 1))];
    worst = std::max(worst, cons.max_violation(traj.states[std::size_t(i)], u));
  }
  return worst;
}

/// Writes "t,x_1..x_n,u_1..u_m,cost" rows; the terminal node leaves the
/// control fields empty.  Numeric formatting is fixed so identical runs
/// produce byte-identical files.
inline void write_csv(const Trajectory& traj, std::ostream& os) {
  const int n = traj.states.empty() ? 0 : int(traj.states[0].size());
  const int m = traj.controls.empty() ? 0 : int(traj.controls[0].size());
  os << "t";
  for (int j = 0; j < n; ++j) os << ",x_" << (j + 1);
  for (int j = 0; j < m; ++j) os << ",u_" << (j + 1);
  os << ",cost\n";
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    os << buf;
  };
  for (std::size_t i = 0; i < traj.states.size(); ++i) {
    num(traj.t[i]);
    for (int j = 0; j < n; ++j) {
      os << ',';
      num(traj.states[i][j]);
    }
    for (int j = 0; j < m; ++j) {
      os << ',';
      if (i < traj.controls.size()) num(traj.controls[i][j]);
    }
    os << ',';
    num(traj.running_cost[i]);
    os << '\n';
  }
}

}  // namespace sdmpc
