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
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "sdmpc/errors.hpp"
#include "sdmpc/integrate.hpp"
#include "sdmpc/model.hpp"

namespace sdmpc {

// ---------------------------------------------------------------------------
// Viability-kernel geometry.
//
// The viability kernel A of a constrained system is the set of states from
// which some admissible control keeps the trajectory inside the constraints
// forever.  This header provides
//   * the exact kernel of the double-integrator benchmark, whose boundary is
//     the state box plus two parabolic barrier arcs flown with saturated
//     input,
//   * a generic sampling-based inner approximation on a grid, witnessed by
//     rollouts of the saturated linear feedback,
//   * scaling of a kernel by lambda in [0,1] (control invariance of the
//     scaled set for linear dynamics with symmetric constraints), and
//   * distance-to-boundary queries used by the horizon-bound asymptotics.
// ---------------------------------------------------------------------------

enum class Membership { inside, boundary, outside };

inline const char* to_string(Membership m) {
  switch (m) {
    case Membership::inside: return "inside";
    case Membership::boundary: return "boundary";
    case Membership::outside: return "outside";
  }
  return "?";
}

/// Occupancy data of a grid-based kernel (exposed for CSV export and for
/// volume comparisons against an exact kernel).
struct KernelGrid {
  Vec lo;                       // lower corner of the gridded box
  double resolution = 0.0;      // cell edge length
  int nx = 0, ny = 0;           // cells per axis (2-D only)
  std::vector<std::uint8_t> inside;  // row-major [iy * nx + ix]

  bool cell_inside(int ix, int iy) const {
    if (ix < 0 || iy < 0 || ix >= nx || iy >= ny) return false;
    return inside[std::size_t(iy) * nx + ix] != 0;
  }
  Vec center(int ix, int iy) const {
    Vec c(2);
    c << lo[0] + (ix + 0.5) * resolution, lo[1] + (iy + 0.5) * resolution;
    return c;
  }
};

/// Immutable kernel object: membership / distance / keeper queries are pure
/// functions and safe to call concurrently.
struct ViabilityKernel {
  std::function<Membership(const Vec&)> membership;
  /// Euclidean distance to the kernel boundary (meaningful for inside or
  /// near-boundary points; conservative for grid kernels).
  std::function<double(const Vec&)> boundary_distance;
  /// A control choice that keeps the state admissible (the kernel-keeping
  /// feedback used by the constructive infinite-horizon bound).
  std::function<Vec(const Vec&)> keeper;
  bool analytic = false;
  double tol = 1e-3;  // boundary band, in state units
  std::shared_ptr<const KernelGrid> grid;  // populated for grid kernels
};

/// One barrier arc: an integral curve of the dynamics under constant
/// saturated input, meeting the state box tangentially.
struct BarrierCurve {
  std::function<Vec(double)> parametrization;  // s in [0, 1] -> state
  Vec control_along;                           // constant input on the arc
  Vec tangency_point;                          // where the arc touches the box
};

namespace detail {

/// Distance from point p to the segment {a + t (b - a) : t in [0, 1]}.
inline double segment_distance(const Vec& p, const Vec& a, const Vec& b) {
  Vec d = b - a;
  double den = d.squaredNorm();
  double t = den > 0 ? std::clamp((p - a).dot(d) / den, 0.0, 1.0) : 0.0;
  return (p - (a + t * d)).norm();
}

/// Distance from (x1, x2) to the arc {(1 - s^2/2, s) : s in [0, 1]}.
/// Interior critical points satisfy the cubic s^3/2 + x1 s - x2 = 0
/// (stationarity of the squared distance); a coarse scan plus Newton
/// polishing handles every root pattern deterministically.
inline double upper_parabola_distance(double x1, double x2) {
  auto dist2 = [&](double s) {
    double dx = x1 - (1.0 - 0.5 * s * s), dy = x2 - s;
    return dx * dx + dy * dy;
  };
  double best_s = 0.0, best = dist2(0.0);
  for (int i = 1; i <= 64; ++i) {
    double s = i / 64.0;
    double d = dist2(s);
    if (d < best) { best = d; best_s = s; }
  }
  double s = best_s;
  for (int it = 0; it < 30; ++it) {  // Newton on g(s) = s^3/2 + x1 s - x2
    double g = 0.5 * s * s * s + x1 * s - x2;
    double dg = 1.5 * s * s + x1;
    if (std::abs(dg) < 1e-14) break;
    double step = g / dg;
    s -= step;
    if (!(s > 0.0 && s < 1.0)) { s = std::clamp(s, 0.0, 1.0); break; }
    if (std::abs(step) < 1e-14) break;
  }
  best = std::min(best, dist2(std::clamp(s, 0.0, 1.0)));
  return std::sqrt(best);
}

}  // namespace detail

/// Exact kernel of the double integrator with |x_i| <= 1, |u| <= 1:
///   A = box, intersected with {x1 <= 1 - x2^2/2 for x2 >= 0}
///          and with          {x1 >= -1 + x2^2/2 for x2 <= 0}.
/// The two parabolic arcs are the integral curves of maximal braking
/// (u = -1 above, u = +1 below), tangent to the box faces at (+-1, 0).
/// The keeper is the saturated regulator clamp(F x) with the canonical gain
/// F = (-1, -sqrt(3)) for unit quadratic weights, hardened to full braking
/// inside a band of twice the boundary tolerance around either barrier arc.
inline ViabilityKernel double_integrator_kernel() {
  const double tol = 1e-3;
  const double f1 = -1.0, f2 = -std::sqrt(3.0);

  auto barrier_residual = [](const Vec& x) {
    // max of the two one-sided parabola residuals; <= 0 means admissible
    double r = -kInf;
    if (x[1] >= 0.0) r = std::max(r, x[0] - (1.0 - 0.5 * x[1] * x[1]));
    if (x[1] <= 0.0) r = std::max(r, (-1.0 + 0.5 * x[1] * x[1]) - x[0]);
    return r;
  };
  auto residual = [barrier_residual](const Vec& x) {
    double r = std::max(std::abs(x[0]) - 1.0, std::abs(x[1]) - 1.0);
    return std::max(r, barrier_residual(x));
  };

  ViabilityKernel k;
  k.analytic = true;
  k.tol = tol;
  k.membership = [residual, tol](const Vec& x) {
    double r = residual(x);
    if (r < -tol) return Membership::inside;
    if (r <= tol) return Membership::boundary;
    return Membership::outside;
  };
  k.boundary_distance = [](const Vec& x) {
    Vec a(2), b(2);
    double d = kInf;
    a << 1, -1; b << 1, 0;      // right face, below the tangency point
    d = std::min(d, detail::segment_distance(x, a, b));
    a << -0.5, -1; b << 1, -1;  // bottom face
    d = std::min(d, detail::segment_distance(x, a, b));
    a << -1, 0; b << -1, 1;     // left face, above the mirrored tangency
    d = std::min(d, detail::segment_distance(x, a, b));
    a << -1, 1; b << 0.5, 1;    // top face
    d = std::min(d, detail::segment_distance(x, a, b));
    d = std::min(d, detail::upper_parabola_distance(x[0], x[1]));
    d = std::min(d, detail::upper_parabola_distance(-x[0], -x[1]));
    return d;
  };
  k.keeper = [=](const Vec& x) {
    Vec u(1);
    if (x[1] >= 0.0 && x[0] - (1.0 - 0.5 * x[1] * x[1]) >= -2.0 * tol) {
      u << -1.0;  // ride the upper barrier arc
    } else if (x[1] <= 0.0 && (-1.0 + 0.5 * x[1] * x[1]) - x[0] >= -2.0 * tol) {
      u << 1.0;   // ride the lower barrier arc
    } else {
      u << std::clamp(f1 * x[0] + f2 * x[1], -1.0, 1.0);
    }
    return u;
  };
  return k;
}

/// The two barrier arcs of the double-integrator kernel.
inline std::vector<BarrierCurve> double_integrator_barriers() {
  std::vector<BarrierCurve> curves(2);
  curves[0].parametrization = [](double s) {
    Vec x(2);
    x << 1.0 - 0.5 * s * s, s;
    return x;
  };
  curves[0].control_along = Vec::Constant(1, -1.0);
  curves[0].tangency_point = (Vec(2) << 1.0, 0.0).finished();
  curves[1].parametrization = [](double s) {
    Vec x(2);
    x << -1.0 + 0.5 * s * s, -s;
    return x;
  };
  curves[1].control_along = Vec::Constant(1, 1.0);
  curves[1].tangency_point = (Vec(2) << -1.0, 0.0).finished();
  return curves;
}

/// Largest eps with eps * (unit ball of R^{n+m}) inside the constraint boxes.
inline double constraint_inball_radius(const ConstraintSpec& cons) {
  double eps = kInf;
  for (const auto& b : {cons.state_box, cons.input_box}) {
    if (!b) continue;
    for (int i = 0; i < b->dim(); ++i)
      eps = std::min({eps, -b->lo[i], b->hi[i]});
  }
  if (!std::isfinite(eps) || eps <= 0.0)
    throw ConstructionError("constraint_inball_radius: origin not interior to the constraint boxes");
  return eps;
}

/// Radius of a ball around the origin certified to lie in the kernel:
/// nu = eps / ((1 + |F|) Gamma), where |x(t)| <= Gamma e^{-eta t} |x0| is the
/// decay envelope of the closed loop x' = (A + B F) x.  Inside this ball the
/// unsaturated feedback respects all constraints forever.
inline double certified_ball_radius(const LinearSystem& lin, const ConstraintSpec& cons) {
  if (!lin.has_feedback() || !lin.decay)
    throw ConstructionError("certified_ball_radius: feedback and decay envelope required");
  double fnorm = lin.F.operatorNorm();
  return constraint_inball_radius(cons) / ((1.0 + fnorm) * lin.decay->gain);
}

/// Grid inner approximation of the kernel for a stabilizable linear system
/// (2-D state).  A cell is inside when the rollout of the saturated feedback
/// clamp(F x) from its center stays constraint-feasible for `horizon` seconds
/// and ends inside the certified ball, which witnesses admissibility forever.
/// `margin_cells` optionally erodes the result by that many cell layers.
inline ViabilityKernel inner_approximation(const LinearSystem& lin,
                                           const ConstraintSpec& cons,
                                           double resolution,
                                           double horizon,
                                           int margin_cells = 0) {
  if (!lin.has_feedback() || !lin.decay)
    throw NotStabilizableError("inner_approximation: stabilizing feedback required");
  if (lin.state_dim() != 2)
    throw ConstructionError("inner_approximation: grid kernels are 2-D only");
  if (resolution <= 0) throw ConstructionError("inner_approximation: resolution must be > 0");
  if (!cons.state_box) throw ConstructionError("inner_approximation: state box required");

  const double rho_safe = 0.9 * certified_ball_radius(lin, cons);
  const Box& X = *cons.state_box;
  auto grid = std::make_shared<KernelGrid>();
  grid->lo = X.lo;
  grid->resolution = resolution;
  grid->nx = std::max(1, int(std::round((X.hi[0] - X.lo[0]) / resolution)));
  grid->ny = std::max(1, int(std::round((X.hi[1] - X.lo[1]) / resolution)));
  grid->inside.assign(std::size_t(grid->nx) * grid->ny, 0);

  ControlSystem sys = lin.as_control_system();
  Mat F = lin.F;
  auto feedback = [&cons, &F](double, const Vec& x) { return cons.clamp_input(F * x); };
  const double h = 0.01;
  const double feas_band = 1e-9;  // strict node feasibility for the witness

  for (int iy = 0; iy < grid->ny; ++iy) {
    for (int ix = 0; ix < grid->nx; ++ix) {
      Vec x = grid->center(ix, iy);
      if (X.violation(x) > 0) continue;
      bool ok = true;
      int steps = int(std::round(horizon / h));
      for (int s = 0; s < steps; ++s) {
        Vec u = feedback(0.0, x);
        if (cons.max_violation(x, u) > feas_band) { ok = false; break; }
        x = rk4_step(sys, StageCost{}, x, u, h, nullptr);
        if (x.norm() <= rho_safe) break;  // certified: feasible forever
      }
      if (ok && cons.max_violation(x, feedback(0.0, x)) <= feas_band &&
          x.norm() <= rho_safe) {
        grid->inside[std::size_t(iy) * grid->nx + ix] = 1;
      }
    }
  }

  for (int pass = 0; pass < margin_cells; ++pass) {
    std::vector<std::uint8_t> eroded = grid->inside;
    for (int iy = 0; iy < grid->ny; ++iy)
      for (int ix = 0; ix < grid->nx; ++ix)
        if (grid->cell_inside(ix, iy) &&
            !(grid->cell_inside(ix - 1, iy) && grid->cell_inside(ix + 1, iy) &&
              grid->cell_inside(ix, iy - 1) && grid->cell_inside(ix, iy + 1)))
          eroded[std::size_t(iy) * grid->nx + ix] = 0;
    grid->inside = std::move(eroded);
  }

  ViabilityKernel k;
  k.analytic = false;
  k.tol = resolution;  // boundary band of one cell
  k.grid = grid;
  auto locate = [grid](const Vec& x, int& ix, int& iy) {
    ix = int(std::floor((x[0] - grid->lo[0]) / grid->resolution));
    iy = int(std::floor((x[1] - grid->lo[1]) / grid->resolution));
  };
  k.membership = [grid, locate](const Vec& x) {
    int ix, iy;
    locate(x, ix, iy);
    if (!grid->cell_inside(ix, iy)) return Membership::outside;
    bool interior = grid->cell_inside(ix - 1, iy) && grid->cell_inside(ix + 1, iy) &&
                    grid->cell_inside(ix, iy - 1) && grid->cell_inside(ix, iy + 1);
    return interior ? Membership::inside : Membership::boundary;
  };
  k.boundary_distance = [grid](const Vec& x) {
    // conservative: distance to the nearest outside cell center minus half a
    // cell diagonal
    double halfdiag = 0.5 * std::sqrt(2.0) * grid->resolution;
    double d = kInf;
    for (int iy = -1; iy <= grid->ny; ++iy)
      for (int ix = -1; ix <= grid->nx; ++ix)
        if (!grid->cell_inside(ix, iy))
          d = std::min(d, (x - grid->center(ix, iy)).norm());
    return std::max(0.0, d - halfdiag);
  };
  {
    Mat Fc = lin.F;
    ConstraintSpec cc = cons;
    k.keeper = [Fc, cc](const Vec& x) { return cc.clamp_input(Fc * x); };
  }
  return k;
}

/// Kernel of the scaled set lambda*A for lambda in [0, 1]: membership and
/// keeper are pulled back through x -> x/lambda, the keeper control scaled by
/// lambda (admissible because the constraint set is convex and contains 0).
inline ViabilityKernel scale_kernel(const ViabilityKernel& base, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("scale_kernel: lambda must lie in [0, 1]");
  if (lambda == 1.0) return base;
  ViabilityKernel k;
  k.analytic = base.analytic;
  if (lambda == 0.0) {
    double tol = base.tol;
    k.tol = tol;
    k.membership = [tol](const Vec& x) {
      double n = x.norm();
      if (n <= 1e-12) return Membership::inside;
      return n <= tol ? Membership::boundary : Membership::outside;
    };
    k.boundary_distance = [](const Vec&) { return 0.0; };
    auto inner = std::make_shared<ViabilityKernel>(base);
    k.keeper = [inner](const Vec& x) {
      return Vec(0.0 * inner->keeper(Vec::Zero(x.size())));
    };
    return k;
  }
  k.tol = base.tol * lambda;
  auto inner = std::make_shared<ViabilityKernel>(base);
  k.membership = [inner, lambda](const Vec& x) { return inner->membership(x / lambda); };
  k.boundary_distance = [inner, lambda](const Vec& x) {
    return lambda * inner->boundary_distance(x / lambda);
  };
  k.keeper = [inner, lambda](const Vec& x) { return Vec(lambda * inner->keeper(x / lambda)); };
  return k;
}

/// dist(K; boundary of A) = min over the samples of the distance to the
/// kernel boundary.  Every sample must belong to the kernel.
inline double distance_to_boundary(const ViabilityKernel& kernel, const std::vector<Vec>& K) {
  if (K.empty()) throw EmptyRegionError("distance_to_boundary: empty sample set");
  double d = kInf;
  for (const Vec& x : K) {
    if (kernel.membership(x) == Membership::outside)
      throw OutsideKernelError("distance_to_boundary: sample outside the kernel");
    d = std::min(d, kernel.boundary_distance(x));
  }
  return d;
}

/// Center-by-center comparison of a grid kernel against a reference kernel:
/// `escaped` counts grid-inside centers the reference rejects (must be zero
/// for a true inner approximation), `defect_fraction` the share of
/// reference-inside centers the grid misses.
struct KernelComparison {
  std::size_t reference_inside = 0;
  std::size_t grid_inside = 0;
  std::size_t escaped = 0;
  std::size_t missed = 0;
  double defect_fraction = 0.0;
};

inline KernelComparison compare_kernels(const ViabilityKernel& grid_kernel,
                                        const ViabilityKernel& reference) {
  if (!grid_kernel.grid) throw ConstructionError("compare_kernels: grid kernel required");
  const KernelGrid& g = *grid_kernel.grid;
  KernelComparison c;
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      Vec x = g.center(ix, iy);
      bool in_ref = reference.membership(x) != Membership::outside;
      bool in_grid = g.cell_inside(ix, iy);
      c.reference_inside += in_ref;
      c.grid_inside += in_grid;
      if (in_grid && !in_ref) ++c.escaped;
      if (in_ref && !in_grid) ++c.missed;
    }
  }
  c.defect_fraction = c.reference_inside
                          ? double(c.missed) / double(c.reference_inside)
                          : 0.0;
  return c;
}

}  // namespace sdmpc
