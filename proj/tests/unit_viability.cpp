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

#include "sdmpc/certify.hpp"
#include "sdmpc/integrate.hpp"
#include "sdmpc/viability.hpp"

using namespace sdmpc;

namespace {
Vec v2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}
}  // namespace

TEST_SUITE("viability") {

TEST_CASE("membership of the benchmark kernel") {
  ViabilityKernel A = double_integrator_kernel();
  CHECK(A.analytic);
  CHECK(A.membership(Vec::Zero(2)) == Membership::inside);
  CHECK(A.membership(v2(0.733, 0.73)) == Membership::boundary);  // on the upper arc
  CHECK(A.membership(v2(0.9, 0.9)) == Membership::outside);
  CHECK(A.membership(v2(-0.9, -0.9)) == Membership::outside);    // mirrored arc cuts it
  CHECK(A.membership(v2(0.9, -0.9)) == Membership::inside);      // but this corner survives
  // Points straddling the arc at x2 = 0.6 (arc at x1 = 1 - 0.18 = 0.82).
  CHECK(A.membership(v2(0.80, 0.6)) == Membership::inside);
  CHECK(A.membership(v2(0.84, 0.6)) == Membership::outside);
}

TEST_CASE("boundary distances are exact for the analytic kernel") {
  ViabilityKernel A = double_integrator_kernel();
  CHECK(A.boundary_distance(Vec::Zero(2)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(A.boundary_distance(v2(0.9, 0.0)) == doctest::Approx(0.1).epsilon(1e-9));
  CHECK(A.boundary_distance(v2(0.0, -0.9)) == doctest::Approx(0.1).epsilon(1e-9));
  // On the arc itself the distance vanishes.
  CHECK(A.boundary_distance(v2(1.0 - 0.5 * 0.49, 0.7)) == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("barrier arcs fly the saturated input tangent to the box") {
  auto curves = double_integrator_barriers();
  REQUIRE(curves.size() == 2);
  CHECK((curves[0].parametrization(0.0) - v2(1.0, 0.0)).norm() < 1e-12);
  CHECK((curves[0].parametrization(1.0) - v2(0.5, 1.0)).norm() < 1e-12);
  CHECK(curves[0].control_along(0) == -1.0);
  CHECK((curves[0].tangency_point - v2(1.0, 0.0)).norm() < 1e-12);
  CHECK((curves[1].parametrization(1.0) - v2(-0.5, -1.0)).norm() < 1e-12);
  CHECK(curves[1].control_along(0) == 1.0);
  CHECK((curves[1].tangency_point - v2(-1.0, 0.0)).norm() < 1e-12);
  // Arc points are boundary points of the kernel.
  ViabilityKernel A = double_integrator_kernel();
  for (double s : {0.2, 0.5, 0.8})
    for (const auto& c : curves)
      CHECK(A.membership(c.parametrization(s)) == Membership::boundary);
}

TEST_CASE("the keeper holds the state inside the kernel") {
  Plant p = build_double_integrator();
  ViabilityKernel A = double_integrator_kernel();
  // Hardened to full braking in the barrier band.
  CHECK(A.keeper(v2(0.733, 0.73))(0) == -1.0);
  CHECK(A.keeper(v2(-0.733, -0.73))(0) == 1.0);
  // In the interior it is the saturated regulator.
  Vec u = A.keeper(v2(0.2, 0.1));
  CHECK(u(0) == doctest::Approx(-0.2 - std::sqrt(3.0) * 0.1).epsilon(1e-12));
  CHECK(A.keeper(v2(0.9, -0.9))(0) ==
        doctest::Approx(-0.9 + std::sqrt(3.0) * 0.9).epsilon(1e-12));
  CHECK(A.keeper(v2(-0.5, -0.5))(0) == 1.0);  // regulator output clamped at the box

  // Invariance witness: a 10 s keeper rollout from the upper arc never leaves.
  ControlSystem sys = p.lin->as_control_system();
  StageCost zero;
  zero.ell = [](const Vec&, const Vec&) { return 0.0; };
  auto fb = [&A](double, const Vec& x) { return A.keeper(x); };
  Trajectory traj = propagate_feedback(sys, zero, v2(0.733, 0.73), fb, 10.0, 0.01);
  for (const Vec& x : traj.states) CHECK(A.membership(x) != Membership::outside);
  // ... and it ends up essentially at rest near the origin.
  CHECK(traj.terminal_state().norm() < 0.05);
}

TEST_CASE("kernel scaling pulls membership and keeper back") {
  ViabilityKernel A = double_integrator_kernel();
  ViabilityKernel half = scale_kernel(A, 0.5);
  CHECK(half.membership(v2(0.3665, 0.365)) == Membership::boundary);
  CHECK(half.membership(Vec::Zero(2)) == Membership::inside);
  CHECK(half.membership(v2(0.6, 0.6)) == Membership::outside);
  CHECK(half.boundary_distance(Vec::Zero(2)) == doctest::Approx(0.5).epsilon(1e-9));
  // The keeper scales with the set, staying admissible on the smaller set.
  CHECK(half.keeper(v2(0.3665, 0.365))(0) == doctest::Approx(-0.5));
  CHECK(scale_kernel(A, 1.0).membership(v2(0.733, 0.73)) == Membership::boundary);

  SUBCASE("lambda = 0 collapses to the origin") {
    ViabilityKernel zero = scale_kernel(A, 0.0);
    CHECK(zero.membership(Vec::Zero(2)) == Membership::inside);
    CHECK(zero.membership(v2(1e-4, 0.0)) == Membership::boundary);
    CHECK(zero.membership(v2(0.1, 0.0)) == Membership::outside);
    CHECK(zero.boundary_distance(Vec::Zero(2)) == 0.0);
    Vec u = zero.keeper(Vec::Zero(2));
    REQUIRE(u.size() == 1);
    CHECK(u(0) == 0.0);
  }
  SUBCASE("scales outside [0, 1] are rejected") {
    CHECK_THROWS_AS(scale_kernel(A, 1.5), DomainError);
    CHECK_THROWS_AS(scale_kernel(A, -0.25), DomainError);
  }
}

TEST_CASE("distance from a sample set to the kernel boundary") {
  ViabilityKernel A = double_integrator_kernel();
  std::vector<Vec> K{Vec::Zero(2), v2(0.5, 0.0)};
  CHECK(distance_to_boundary(A, K) == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(distance_to_boundary(A, {Vec::Zero(2)}) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(distance_to_boundary(A, {}), EmptyRegionError);
  CHECK_THROWS_AS(distance_to_boundary(A, {v2(0.9, 0.9)}), OutsideKernelError);
}

TEST_CASE("constraint in-ball and certified kernel ball") {
  Plant p = build_double_integrator();
  CHECK(constraint_inball_radius(p.cons) == doctest::Approx(1.0));
  SUBCASE("asymmetric boxes shrink the in-ball") {
    Box xb(v2(-0.5, -2.0), v2(2.0, 2.0));
    Box ub = Box::symmetric(1, 0.75);
    ConstraintSpec cons = ConstraintSpec::from_boxes(xb, ub);
    CHECK(constraint_inball_radius(cons) == doctest::Approx(0.5));
  }
  SUBCASE("the origin must be interior") {
    Box xb(v2(0.2, -1.0), v2(1.0, 1.0));
    ConstraintSpec cons = ConstraintSpec::from_boxes(xb, Box::symmetric(1, 1.0));
    CHECK_THROWS_AS(constraint_inball_radius(cons), ConstructionError);
  }
  SUBCASE("certified ball radius from the fitted decay envelope") {
    CHECK_THROWS_AS(certified_ball_radius(*p.lin, p.cons), ConstructionError);
    solve_care(*p.lin, p.cost);
    CHECK(certified_ball_radius(*p.lin, p.cons) ==
          doctest::Approx(0.09989228517277605).epsilon(1e-6));
  }
}

TEST_CASE("grid inner approximation stays inside the exact kernel") {
  Plant p = build_double_integrator();
  CHECK_THROWS_AS(inner_approximation(*p.lin, p.cons, 0.05, 40.0), NotStabilizableError);
  solve_care(*p.lin, p.cost);
  CHECK_THROWS_AS(inner_approximation(*p.lin, p.cons, -0.1, 40.0), ConstructionError);

  ViabilityKernel grid = inner_approximation(*p.lin, p.cons, 0.05, 40.0);
  REQUIRE(grid.grid != nullptr);
  CHECK_FALSE(grid.analytic);
  CHECK(grid.grid->nx == 40);
  CHECK(grid.grid->ny == 40);

  ViabilityKernel A = double_integrator_kernel();
  KernelComparison cmp = compare_kernels(grid, A);
  // Frozen census at resolution 0.05, horizon 40 s: a true inner
  // approximation (nothing escapes) missing only 4 near-boundary cells.
  CHECK(cmp.reference_inside == 1468);
  CHECK(cmp.grid_inside == 1464);
  CHECK(cmp.escaped == 0);
  CHECK(cmp.missed == 4);
  CHECK(cmp.defect_fraction ==
        doctest::Approx(0.0027247956403269754).epsilon(1e-12));
  CHECK(cmp.defect_fraction ==
        doctest::Approx(double(cmp.missed) / double(cmp.reference_inside)));

  // Membership / keeper surface of the grid kernel.
  CHECK(grid.membership(Vec::Zero(2)) == Membership::inside);
  CHECK(grid.membership(v2(0.9, 0.9)) == Membership::outside);
  CHECK(grid.keeper(v2(0.9, -0.9))(0) == doctest::Approx(std::clamp(
            -0.9 + std::sqrt(3.0) * 0.9, -1.0, 1.0)));

  SUBCASE("erosion by one cell layer strictly shrinks the grid") {
    ViabilityKernel eroded = inner_approximation(*p.lin, p.cons, 0.05, 40.0, 1);
    KernelComparison ec = compare_kernels(eroded, A);
    CHECK(ec.grid_inside < cmp.grid_inside);
    CHECK(ec.escaped == 0);
  }
  SUBCASE("grid kernels are 2-D only") {
    Plant s = build_scalar_unstable();
    solve_care(*s.lin, s.cost);
    CHECK_THROWS_AS(inner_approximation(*s.lin, s.cons, 0.05, 40.0), ConstructionError);
  }
  SUBCASE("comparison requires a grid kernel") {
    CHECK_THROWS_AS(compare_kernels(A, A), ConstructionError);
  }
}

}  // TEST_SUITE
