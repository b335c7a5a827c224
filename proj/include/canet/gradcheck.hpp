// Copyright 2026 The CANet Authors. All Rights Reserved.
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

#ifndef CANET_GRADCHECK_HPP_
#define CANET_GRADCHECK_HPP_

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "canet/tensor.hpp"

namespace canet {

struct GradcheckOptions {
  double step = 1e-4;
  /// Times the step is divided by ten when the two probes of a scalar take
  /// different relu/max branches, before the scalar is given up on.
  int max_step_shrinks = 3;
  /// Scalars checked per leaf; 0 checks every element.
  std::size_t samples_per_leaf = 0;
  /// Denominator floor: err = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-5;
  std::uint64_t seed = 7;
};

struct GradcheckEntry {
  std::string leaf;
  std::size_t size = 0;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  /// Candidates dropped because +step and -step took different branches
  /// through a relu or max.
  std::size_t skipped = 0;
};

struct GradcheckReport {
  std::string name;
  double tolerance = 0.0;
  std::vector<GradcheckEntry> entries;

  double max_rel_error() const;
  /// Every leaf had at least one valid sample and stayed under tolerance.
  bool passed() const;
};

using NamedLeaf = std::pair<std::string, Tensor<double>>;

/// Compares reverse-mode gradients of sum(R * fn()) against five-point
/// central differences, R a fixed random weighting. `fn` must read the leaves by
/// handle so in-place perturbation is visible to it. When the probes of
/// a scalar land on different linear pieces (see BranchTrace) the step is
/// shrunk; if that never helps the scalar is replaced by another one from
/// the same leaf.
GradcheckReport gradcheck(const std::string& name,
                          const std::function<Tensor<double>()>& fn,
                          const std::vector<NamedLeaf>& leaves,
                          double tolerance, const GradcheckOptions& options = {});

/// Uniform(lo, hi) fill from raw 64-bit draws.
Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng,
                             double lo = -1.0, double hi = 1.0);

/// Names of the built-in gradient cases (every differentiable op, every
/// block, the full model).
std::vector<std::string> gradcheck_case_names();
/// Runs one built-in case. `tolerance` <= 0 selects the case default.
GradcheckReport run_gradcheck_case(const std::string& name,
                                   double tolerance = 0.0,
                                   std::uint64_t seed = 7);

}  // namespace canet

#endif  // CANET_GRADCHECK_HPP_
