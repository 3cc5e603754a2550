// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include <optional>
#include <string>
#include <vector>

namespace spikeseg {

/// |pred=k & gt=k| / |pred=k | gt=k|; nullopt when k appears in neither.
std::optional<double> iou(const std::vector<int>& pred, const std::vector<int>& gt, int k);

struct IouTable {
  /// nullopt for classes absent from every prediction and ground truth.
  std::vector<std::optional<double>> per_class;
  double miou = 0.0;

  std::string text() const;
};

/// Intersections and unions pooled over the whole set; classes absent from
/// both sides are excluded from the mean. Throws on an empty set.
IouTable miou(const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& gts, int classes);

}  // namespace spikeseg
