// Copyright 2026 The MPE Authors.
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

#ifndef MPE_GRADCHECK_H_
#define MPE_GRADCHECK_H_

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mpe/autodiff.h"

namespace mpe {

struct GradReport {
  struct Entry {
    std::string name;
    double max_rel_error = 0.0;
    size_t worst_index = 0;
    double analytic = 0.0;   // at worst_index
    double numeric = 0.0;    // at worst_index
  };
  std::vector<Entry> params;
  double eps = 0.0;
  // Evaluations that hit |z| at 0, a max tie, or a zero-norm cosine.
  size_t kink_hits = 0;

  double max_rel_error() const;
  bool at_kink() const { return kink_hits > 0; }
};

// Compares reverse-mode gradients of `expr` against central differences
// (f(x+eps) - f(x-eps)) / (2 eps) for every coordinate of every parameter in
// `params`. Relative error is max(0, |a - n| - r) / max(|a|, |n|, 1e-12),
// where r = 16 ulp * max(|f(x+eps)|, |f(x-eps)|) / (2 eps) is the rounding
// band of the difference quotient; a non-finite difference counts as
// infinite error. Parameter values are restored and
// gradients left zeroed on return. `expr` must be deterministic.
GradReport GradCheck(const std::function<Var(Tape&)>& expr,
                     std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace mpe

#endif  // MPE_GRADCHECK_H_
