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

#include "mpe/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mpe/error.h"

namespace mpe {
namespace {

constexpr double kRoundoffUlps = 16.0;

double Evaluate(const std::function<Var(Tape&)>& expr) {
  Tape tape;
  try {
    return expr(tape).scalar();
  } catch (const NumericError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

double GradReport::max_rel_error() const {
  double m = 0.0;
  for (const Entry& e : params) m = std::max(m, e.max_rel_error);
  return m;
}

GradReport GradCheck(const std::function<Var(Tape&)>& expr,
                     std::span<Parameter* const> params, double eps) {
  if (!(eps > 0.0)) throw UsageError("grad_check: eps must be positive");
  GradReport report;
  report.eps = eps;
  for (Parameter* p : params) p->ZeroGrad();
  {
    Tape tape;
    Var root = expr(tape);
    tape.Backward(root);
    report.kink_hits = tape.kink_hits();
  }
  for (Parameter* p : params) {
    GradReport::Entry entry;
    entry.name = p->name;
    const Tensor analytic = p->grad;
    for (size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + eps;
      const double fp = Evaluate(expr);
      p->value[i] = saved - eps;
      const double fm = Evaluate(expr);
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[i];
      double err;
      if (!std::isfinite(numeric)) {
        err = std::numeric_limits<double>::infinity();
      } else {
        // Rounding in f itself limits how well the difference can resolve
        // the slope; discrepancies inside that band are not errors.
        const double noise = kRoundoffUlps * std::numeric_limits<double>::epsilon() *
                             std::max(std::abs(fp), std::abs(fm)) / (2.0 * eps);
        err = std::max(0.0, std::abs(a - numeric) - noise) /
              std::max({std::abs(a), std::abs(numeric), 1e-12});
      }
      if (err > entry.max_rel_error || (i == 0 && err == 0.0)) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.params.push_back(entry);
  }
  for (Parameter* p : params) p->ZeroGrad();
  return report;
}

}  // namespace mpe
