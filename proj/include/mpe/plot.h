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

#ifndef MPE_PLOT_H_
#define MPE_PLOT_H_

#include <string>

namespace mpe {

// Renders a training metrics CSV as an SVG with two panels: the loss
// components against step, and the validation F1 curves. Empty cells are
// skipped. Throws DataError on an unreadable or malformed log.
std::string PlotMetricsSvg(const std::string& csv_text);
void PlotMetrics(const std::string& csv_path, const std::string& svg_path);

}  // namespace mpe

#endif  // MPE_PLOT_H_
