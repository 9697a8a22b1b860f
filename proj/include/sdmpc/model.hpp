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

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <vector>

#include "sdmpc/errors.hpp"

namespace sdmpc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Componentwise interval [lo, hi].
struct Box {
  Vec lo, hi;

  int dim() const { return int(lo.size()); }

  Vec clamp(const Vec& v) const { return v.cwiseMax(lo).cwiseMin(hi); }

  /// Largest componentwise overshoot; <= 0 means the point is inside.
  double violation(const Vec& v) const {
    return std::max((v - hi).maxCoeff(), (lo - v).maxCoeff());
  }

  bool contains(const Vec& v, double tol = 0.0) const { return violation(v) <= tol; }

  static Box symmetric(int dim, double half_width) {
    Box b;
    b.lo = Vec::Constant(dim, -half_width);
    b.hi = Vec::Constant(dim, half_width);
    return b;
  }
};

namespace detail {

/// Central finite-difference step scaled to the coordinate magnitude.
inline double fd_step(double coordinate) {
  return 1e-7 * std::max(1.0, std::abs(coordinate));
}

template <class F>
Mat fd_jacobian(const F& f, const Vec& at, int out_dim) {
  Mat J(out_dim, at.size());
  Vec probe = at;
  for (int i = 0; i < at.size(); ++i) {
    const double h = fd_step(at[i]);
    probe[i] = at[i] + h;
    Vec up = f(probe);
    probe[i] = at[i] - h;
    Vec dn = f(probe);
    probe[i] = at[i];
    J.col(i) = (up - dn) / (2.0 * h);
  }
  return J;
}

template <class F>
Vec fd_gradient(const F& f, const Vec& at) {
  Vec g(at.size());
  Vec probe = at;
  for (int i = 0; i < at.size(); ++i) {
    const double h = fd_step(at[i]);
    probe[i] = at[i] + h;
    double up = f(probe);
    probe[i] = at[i] - h;
    double dn = f(probe);
    probe[i] = at[i];
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

}  // namespace detail

/// Continuous-time control system  dx/dt = f(x, u)  with an equilibrium pair
/// (x_eq, u_eq) such that f(x_eq, u_eq) = 0.  Analytic Jacobians are optional;
/// when absent they are replaced by deterministic central differences.
struct ControlSystem {
  int state_dim = 0;
  int input_dim = 0;
  std::function<Vec(const Vec&, const Vec&)> f;
  std::function<Mat(const Vec&, const Vec&)> fx;  // d f / d x, optional
  std::function<Mat(const Vec&, const Vec&)> fu;  // d f / d u, optional
  Vec x_eq, u_eq;

  Mat jac_state(const Vec& x, const Vec& u) const {
    if (fx) return fx(x, u);
    return detail::fd_jacobian([&](const Vec& xi) { return f(xi, u); }, x, state_dim);
  }

  Mat jac_input(const Vec& x, const Vec& u) const {
    if (fu) return fu(x, u);
    return detail::fd_jacobian([&](const Vec& ui) { return f(x, ui); }, u, state_dim);
  }
};

/// Exponential decay envelope  |x(t)| <= gain * exp(-rate * (t - t0)) * |x(t0)|.
struct DecayEnvelope {
  double gain = 1.0;
  double rate = 0.0;
};

/// Linear system dx/dt = A x + B u, optionally with a stabilizing static
/// feedback u = F x (all eigenvalues of A + B F in the open left half plane)
/// and a measured decay envelope for the closed loop.
struct LinearSystem {
  Mat A, B;
  Mat F;  // empty when no feedback is attached
  std::optional<DecayEnvelope> decay;

  bool has_feedback() const { return F.size() > 0; }

  int state_dim() const { return int(A.rows()); }
  int input_dim() const { return int(B.cols()); }

  ControlSystem as_control_system() const {
    ControlSystem sys;
    sys.state_dim = state_dim();
    sys.input_dim = input_dim();
    const Mat a = A, b = B;
    sys.f = [a, b](const Vec& x, const Vec& u) -> Vec { return a * x + b * u; };
    sys.fx = [a](const Vec&, const Vec&) { return a; };
    sys.fu = [b](const Vec&, const Vec&) { return b; };
    sys.x_eq = Vec::Zero(sys.state_dim);
    sys.u_eq = Vec::Zero(sys.input_dim);
    return sys;
  }
};

/// Quadratic running-cost data  l(x,u) = x'Qx + 2 x'N u + u'Ru.
struct LqCost {
  Mat Q, R;
  Mat N;  // cross term, empty when absent

  bool has_cross() const { return N.size() > 0 && N.cwiseAbs().maxCoeff() > 0.0; }

  /// Cost matrices after folding the cross term into the state weight:
  /// minimizing over u with v = u + R^{-1} N' x turns the integrand into
  /// x' (Q - N R^{-1} N') x + v' R v.
  Mat effective_Q() const {
    if (!has_cross()) return Q;
    return Q - N * R.ldlt().solve(N.transpose());
  }
};

/// Running cost l(x, u) >= 0 with l(x_eq, u_eq) = 0.  Analytic gradients are
/// optional; quadratic data, when present, unlocks exact shortcuts downstream.
struct StageCost {
  std::function<double(const Vec&, const Vec&)> ell;
  std::function<Vec(const Vec&, const Vec&)> ell_x;  // optional
  std::function<Vec(const Vec&, const Vec&)> ell_u;  // optional
  std::optional<LqCost> lq;

  Vec grad_state(const Vec& x, const Vec& u) const {
    if (ell_x) return ell_x(x, u);
    return detail::fd_gradient([&](const Vec& xi) { return ell(xi, u); }, x);
  }

  Vec grad_input(const Vec& x, const Vec& u) const {
    if (ell_u) return ell_u(x, u);
    return detail::fd_gradient([&](const Vec& ui) { return ell(x, ui); }, u);
  }

  static StageCost quadratic(const Mat& Q, const Mat& R, const Mat& N = Mat()) {
    StageCost c;
    LqCost lq{Q, R, N};
    const bool cross = lq.has_cross();
    c.ell = [Q, R, N, cross](const Vec& x, const Vec& u) {
      double v = x.dot(Q * x) + u.dot(R * u);
      if (cross) v += 2.0 * x.dot(N * u);
      return v;
    };
    c.ell_x = [Q, N, cross](const Vec& x, const Vec& u) -> Vec {
      Vec g = 2.0 * (Q * x);
      if (cross) g += 2.0 * (N * u);
      return g;
    };
    c.ell_u = [R, N, cross](const Vec& x, const Vec& u) -> Vec {
      Vec g = 2.0 * (R * u);
      if (cross) g += 2.0 * (N.transpose() * x);
      return g;
    };
    c.lq = lq;
    return c;
  }
};

/// Joint state/input constraint set E = { (x,u) : g(x,u) <= 0 } with the box
/// parts kept explicit so solvers can project instead of penalize.
struct ConstraintSpec {
  std::function<Vec(const Vec&, const Vec&)> g;
  std::function<Mat(const Vec&, const Vec&)> gx;  // optional
  std::function<Mat(const Vec&, const Vec&)> gu;  // optional
  int count = 0;
  std::optional<Box> state_box;
  std::optional<Box> input_box;
  bool boxes_only = false;  // true when g is exactly the residuals of the boxes

  Vec residual(const Vec& x, const Vec& u) const { return g(x, u); }

  double max_violation(const Vec& x, const Vec& u) const {
    if (count == 0) return 0.0;
    return g(x, u).maxCoeff();
  }

  Vec clamp_input(const Vec& u) const { return input_box ? input_box->clamp(u) : u; }

  Mat jac_state(const Vec& x, const Vec& u) const {
    if (gx) return gx(x, u);
    return detail::fd_jacobian([&](const Vec& xi) { return g(xi, u); }, x, count);
  }

  Mat jac_input(const Vec& x, const Vec& u) const {
    if (gu) return gu(x, u);
    return detail::fd_jacobian([&](const Vec& ui) { return g(x, ui); }, u, count);
  }

  /// Stacks the box residuals: rows are x - hi, lo - x, u - hi, lo - u.
  static ConstraintSpec from_boxes(const Box& state, const Box& input) {
    ConstraintSpec c;
    const int n = state.dim(), m = input.dim();
    c.state_box = state;
    c.input_box = input;
    c.count = 2 * n + 2 * m;
    c.boxes_only = true;
    const Box sb = state, ib = input;
    c.g = [sb, ib, n, m](const Vec& x, const Vec& u) -> Vec {
      Vec r(2 * n + 2 * m);
      r.segment(0, n) = x - sb.hi;
      r.segment(n, n) = sb.lo - x;
      r.segment(2 * n, m) = u - ib.hi;
      r.segment(2 * n + m, m) = ib.lo - u;
      return r;
    };
    Mat Jx = Mat::Zero(2 * n + 2 * m, n);
    Jx.block(0, 0, n, n) = Mat::Identity(n, n);
    Jx.block(n, 0, n, n) = -Mat::Identity(n, n);
    Mat Ju = Mat::Zero(2 * n + 2 * m, m);
    Ju.block(2 * n, 0, m, m) = Mat::Identity(m, m);
    Ju.block(2 * n + m, 0, m, m) = -Mat::Identity(m, m);
    c.gx = [Jx](const Vec&, const Vec&) { return Jx; };
    c.gu = [Ju](const Vec&, const Vec&) { return Ju; };
    return c;
  }
};

/// Pointwise minimized stage cost  l*(x) = inf { l(x,u) : (x,u) in E }.
///
/// Quadratic costs with no cross term and a feasible u = 0 give x'Qx exactly;
/// otherwise a projected-gradient descent over the input box is run from the
/// clamped equilibrium input (200 iterations, tolerance 1e-10).
/// Throws InfeasibleStateError when the admissible input set at x is empty.
inline double pointwise_min_cost(const StageCost& cost, const ConstraintSpec& cons,
                                 const Vec& x, const Vec& u_eq = Vec()) {
  if (cons.state_box && !cons.state_box->contains(x, 1e-12)) {
    std::ostringstream msg;
    msg << "pointwise_min_cost: state violates the state box by "
        << cons.state_box->violation(x);
    throw InfeasibleStateError(msg.str());
  }
  const int m = cons.input_box ? cons.input_box->dim() : int(u_eq.size());
  Vec u0 = u_eq.size() > 0 ? u_eq : Vec::Zero(m);

  if (cost.lq && !cost.lq->has_cross() && cons.input_box &&
      cons.input_box->contains(Vec::Zero(m))) {
    return x.dot(cost.lq->Q * x);
  }

  if (!cons.input_box) return cost.ell(x, u0);

  // Projected gradient with backtracking on u alone.
  Vec u = cons.input_box->clamp(u0);
  double fu = cost.ell(x, u);
  double step = 1.0;
  for (int it = 0; it < 200; ++it) {
    Vec grad = cost.grad_input(x, u);
    Vec trial;
    double ftrial = 0.0;
    int ls = 0;
    for (; ls < 60; ++ls) {
      trial = cons.input_box->clamp(u - step * grad);
      ftrial = cost.ell(x, trial);
      if (ftrial <= fu + 1e-4 * grad.dot(trial - u)) break;
      step *= 0.5;
    }
    if ((trial - u).lpNorm<Eigen::Infinity>() <= 1e-10) {
      u = trial;
      fu = std::min(fu, ftrial);
      break;
    }
    u = trial;
    fu = ftrial;
    step = std::min(step * 2.0, 1e6);
  }
  return fu;
}

/// Radial envelope pair for the minimized stage cost:
///   lower(|x - x_eq|) <= l*(x) <= upper(|x - x_eq|).
struct StageCostEnvelope {
  std::function<double(double)> lower;
  std::function<double(double)> upper;
};

/// Exact envelope for quadratic costs: sigma_min(Q) r^2 and sigma_max(Q) r^2
/// (with the cross term folded into Q first).
inline StageCostEnvelope quadratic_envelope(const LqCost& lq) {
  Eigen::SelfAdjointEigenSolver<Mat> es(lq.effective_Q());
  const double smin = es.eigenvalues().minCoeff();
  const double smax = es.eigenvalues().maxCoeff();
  return StageCostEnvelope{[smin](double r) { return smin * r * r; },
                           [smax](double r) { return smax * r * r; }};
}

/// Worst slack of the envelope sandwich over the given sample states;
/// <= 0 means the envelope is admissible on every sample.
inline double envelope_violation(const StageCostEnvelope& env, const StageCost& cost,
                                 const ConstraintSpec& cons, const Vec& x_eq,
                                 const std::vector<Vec>& samples) {
  double worst = -kInf;
  for (const Vec& x : samples) {
    const double r = (x - x_eq).norm();
    const double lstar = pointwise_min_cost(cost, cons, x);
    worst = std::max(worst, env.lower(r) - lstar);
    worst = std::max(worst, lstar - env.upper(r));
  }
  return worst;
}

/// A ready-to-run benchmark: dynamics, linearization, cost, constraints.
struct Plant {
  ControlSystem sys;
  std::optional<LinearSystem> lin;
  StageCost cost;
  ConstraintSpec cons;
};

/// Planar double integrator: positions and velocities in [-1,1], |u| <= 1,
/// running cost x1^2 + x2^2 + u^2.
inline Plant build_double_integrator() {
  Plant p;
  LinearSystem lin;
  lin.A = (Mat(2, 2) << 0, 1, 0, 0).finished();
  lin.B = (Mat(2, 1) << 0, 1).finished();
  p.lin = lin;
  p.sys = lin.as_control_system();
  p.cost = StageCost::quadratic(Mat::Identity(2, 2), Mat::Identity(1, 1));
  p.cons = ConstraintSpec::from_boxes(Box::symmetric(2, 1.0), Box::symmetric(1, 1.0));
  return p;
}

/// Scalar unstable benchmark: dx/dt = x + u, |x| <= 2, |u| <= 1,
/// running cost x^2 + u^2.  Its viable set is [-1, 1]; from the endpoints the
/// only control that keeps the state bounded forever is u = -x.
inline Plant build_scalar_unstable() {
  Plant p;
  LinearSystem lin;
  lin.A = Mat::Constant(1, 1, 1.0);
  lin.B = Mat::Constant(1, 1, 1.0);
  p.lin = lin;
  p.sys = lin.as_control_system();
  p.cost = StageCost::quadratic(Mat::Identity(1, 1), Mat::Identity(1, 1));
  p.cons = ConstraintSpec::from_boxes(Box::symmetric(1, 2.0), Box::symmetric(1, 1.0));
  return p;
}

}  // namespace sdmpc
