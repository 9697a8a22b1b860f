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
#include <cstdint>
#include <vector>

// Deterministic sampling helpers.  Everything here is seed-stable across
// platforms so that experiment outputs are byte-identical between runs; the
// standard <random> distributions are avoided on purpose (their mapping from
// generator output to floats is implementation-defined).

namespace sdmpc {

/// splitmix64: tiny, well-mixed 64-bit generator.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double next_double(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Standard normal via Box-Muller on the deterministic uniforms.
  double next_normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Point uniformly on the unit sphere in dimension n.
  Eigen::VectorXd next_unit_vector(int n) {
    Eigen::VectorXd v(n);
    do {
      for (int i = 0; i < n; ++i) v[i] = next_normal();
    } while (v.norm() < 1e-12);
    return v / v.norm();
  }

 private:
  std::uint64_t state_;
};

/// Van der Corput radical inverse in the given base.
inline double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double result = 0.0;
  double inv = 1.0 / double(base);
  double frac = inv;
  while (index > 0) {
    result += double(index % base) * frac;
    index /= base;
    frac *= inv;
  }
  return result;
}

/// k-th point of the Halton low-discrepancy sequence in [0,1)^dim (dim <= 8).
inline Eigen::VectorXd halton_point(std::uint64_t index, int dim) {
  static const std::uint64_t primes[8] = {2, 3, 5, 7, 11, 13, 17, 19};
  Eigen::VectorXd p(dim);
  for (int d = 0; d < dim; ++d) p[d] = radical_inverse(index + 1, primes[d]);
  return p;
}

/// First `count` Halton points mapped affinely into [lo, hi] (componentwise).
inline std::vector<Eigen::VectorXd> halton_box(const Eigen::VectorXd& lo,
                                               const Eigen::VectorXd& hi, int count) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(std::size_t(count));
  const int dim = int(lo.size());
  for (int k = 0; k < count; ++k) {
    Eigen::VectorXd p = halton_point(std::uint64_t(k), dim);
    out.push_back(lo.array() + (hi - lo).array() * p.array());
  }
  return out;
}

}  // namespace sdmpc
