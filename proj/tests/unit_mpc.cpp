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

#include "sdmpc/experiments.hpp"
#include "sdmpc/mpc.hpp"

using namespace sdmpc;

namespace {
Vec v2(double a, double b) {
  Vec x(2);
  x << a, b;
  return x;
}

const LinearSystem* lin_of(const Plant& p) { return p.lin ? &*p.lin : nullptr; }
}  // namespace

TEST_SUITE("mpc") {

TEST_CASE("short-horizon run from the benchmark corner succeeds") {
  Plant p = build_double_integrator();
  MpcRun run = run_mpc(p.sys, p.cost, p.cons, v2(0.5, 0.5), GridSpec{0.1, 10, 4},
                       15.0, 0.1, SolverOptions{}, lin_of(p));
  REQUIRE(run.success);
  CHECK(run.failure == FailureReason::none);
  // Frozen regression anchors for this configuration.
  CHECK(run.steps.front().value == doctest::Approx(0.238186154477).epsilon(1e-6));
  CHECK(time_to_radius(run, 0.1, p.sys.x_eq) == doctest::Approx(13.13).epsilon(0.01));
  CHECK((run.closed_loop.states.back() - p.sys.x_eq).norm() <= 0.1);
  CHECK(closed_loop_violation(run, p.cons) <= 1e-6);
  // Ten integration nodes appended per sampling interval.
  const std::size_t intervals = run.steps.size();
  CHECK(run.closed_loop.states.size() == 1 + 10 * intervals);
}

TEST_CASE("failure reasons are reported faithfully") {
  Plant p = build_double_integrator();
  SUBCASE("budget exhausted away from the goal") {
    MpcRun run = run_mpc(p.sys, p.cost, p.cons, v2(0.5, 0.5), GridSpec{0.1, 10, 3},
                         15.0, 0.1, SolverOptions{}, lin_of(p));
    CHECK_FALSE(run.success);
    CHECK(run.failure == FailureReason::no_convergence_to_goal);
    CHECK(run.t_final == doctest::Approx(15.0));
    CHECK(run.steps.size() == 150);
  }
  SUBCASE("feasibility lost near the constraint boundary") {
    MpcRun run = run_mpc(p.sys, p.cost, p.cons, v2(0.6, 0.6), GridSpec{0.1, 10, 3},
                         15.0, 0.1, SolverOptions{}, lin_of(p));
    CHECK_FALSE(run.success);
    CHECK(run.failure == FailureReason::infeasible_ocp);
    CHECK(run.t_final < 15.0);
  }
}

TEST_CASE("horizon scan returns the first workable length") {
  Plant p = build_double_integrator();
  // Coarse sampling: N = 1 cannot even stay feasible, N = 2 already converges.
  HorizonScan scan = smallest_horizon(p.sys, p.cost, p.cons, v2(0.5, 0.5), 0.5, 10,
                                      18, 15.0, 0.1, SolverOptions{}, lin_of(p));
  REQUIRE(scan.horizon.has_value());
  CHECK(*scan.horizon == 2);
  REQUIRE(scan.failures.size() == 2);
  CHECK(scan.failures[0] == FailureReason::infeasible_ocp);
  CHECK(scan.failures.back() == FailureReason::none);

  // Benchmark-table cell: delta = 0.1 from the same start needs N = 4.
  HorizonScan cell = smallest_horizon(p.sys, p.cost, p.cons, v2(0.5, 0.5), 0.1, 10,
                                      18, 15.0, 0.1, SolverOptions{}, lin_of(p));
  REQUIRE(cell.horizon.has_value());
  CHECK(*cell.horizon == 4);
  CHECK(cell.failures.size() == 4);
  CHECK(cell.failures.back() == FailureReason::none);
  for (std::size_t i = 0; i + 1 < cell.failures.size(); ++i)
    CHECK(cell.failures[i] != FailureReason::none);
}

TEST_CASE("descent audit is recomputable from the step records") {
  Plant p = build_double_integrator();
  MpcRun run = run_mpc(p.sys, p.cost, p.cons, v2(0.5, 0.5), GridSpec{0.1, 10, 4},
                       15.0, 0.1, SolverOptions{}, lin_of(p));
  REQUIRE(run.success);
  const double alpha = 0.25;
  LyapunovReport rep = lyapunov_monitor(run, alpha, 1e-6);
  REQUIRE(rep.residuals.size() == run.steps.size() - 1);
  double worst = -kInf;
  for (std::size_t i = 0; i + 1 < run.steps.size(); ++i) {
    const double r = run.steps[i + 1].value - run.steps[i].value +
                     (1.0 - alpha) * run.steps[i].stage_integral;
    CHECK(rep.residuals[i] == r);
    worst = std::max(worst, r);
  }
  CHECK(rep.worst == worst);
  CHECK(rep.ok == (rep.worst <= rep.slack));

  // Frozen: at alpha = 0 this short horizon has no descent certificate.
  LyapunovReport at_zero = lyapunov_monitor(run, 0.0, 1e-6);
  CHECK(at_zero.worst == doctest::Approx(0.146977948982).epsilon(1e-6));
  CHECK_FALSE(at_zero.ok);
}

TEST_CASE("an empty or single-step run audits as trivially ok") {
  MpcRun run;
  LyapunovReport rep = lyapunov_monitor(run, 0.5, 0.0);
  CHECK(rep.ok);
  CHECK(rep.residuals.empty());
}

TEST_CASE("a start already inside the goal set returns immediately") {
  Plant p = build_double_integrator();
  MpcRun run = run_mpc(p.sys, p.cost, p.cons, v2(0.01, 0.0), GridSpec{0.1, 10, 4},
                       15.0, 0.1, SolverOptions{}, lin_of(p));
  CHECK(run.success);
  CHECK(run.t_final == 0.0);
  CHECK(run.steps.empty());
}

}  // TEST_SUITE
