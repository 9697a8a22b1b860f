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

#include <stdexcept>
#include <string>

namespace sdmpc {

/// A state was handed to an operation whose admissible input set is empty there.
struct InfeasibleStateError : std::runtime_error {
  explicit InfeasibleStateError(const std::string& what) : std::runtime_error(what) {}
};

/// The constrained optimal control problem could not be driven to feasibility.
struct InfeasibleOcpError : std::runtime_error {
  explicit InfeasibleOcpError(const std::string& what) : std::runtime_error(what) {}
};

/// A trajectory left the numerically representable region.
struct DivergenceError : std::runtime_error {
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

/// The pair (A, B) admits no stabilizing feedback (or the Riccati solve broke down).
struct NotStabilizableError : std::runtime_error {
  explicit NotStabilizableError(const std::string& what) : std::runtime_error(what) {}
};

/// A scalar argument fell outside the domain where the formula is defined.
struct DomainError : std::domain_error {
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// A sampling region was empty (for example a ball that swallows the whole box).
struct EmptyRegionError : std::runtime_error {
  explicit EmptyRegionError(const std::string& what) : std::runtime_error(what) {}
};

/// A locality assumption failed: a rollout meant to stay away from the
/// constraint boundary touched it.
struct ConstraintActiveError : std::runtime_error {
  explicit ConstraintActiveError(const std::string& what) : std::runtime_error(what) {}
};

/// A constructive bound could not be assembled (its witness rollout failed).
struct ConstructionError : std::runtime_error {
  explicit ConstructionError(const std::string& what) : std::runtime_error(what) {}
};

/// A query was made for a point outside the set the query is defined on.
struct OutsideKernelError : std::runtime_error {
  explicit OutsideKernelError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sdmpc
