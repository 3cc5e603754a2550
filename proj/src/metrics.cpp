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

#include "spikeseg/metrics.hpp"

#include <cstdint>
#include <iomanip>
#include <sstream>

#include "spikeseg/tensor.hpp"

namespace spikeseg {

std::optional<double> iou(const std::vector<int>& pred, const std::vector<int>& gt, int k) {
  if (pred.size() != gt.size()) throw ShapeError("prediction and ground truth sizes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] == k, g = gt[i] == k;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return std::nullopt;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

IouTable miou(const std::vector<std::vector<int>>& preds, const std::vector<std::vector<int>>& gts, int classes) {
  if (preds.empty()) throw ValueError("mIoU over an empty set");
  if (preds.size() != gts.size()) throw ShapeError("prediction and ground-truth counts differ");
  if (classes < 1) throw ValueError("class count must be >= 1");
  std::vector<std::uint64_t> inter(static_cast<std::size_t>(classes), 0), uni(static_cast<std::size_t>(classes), 0);
  for (std::size_t s = 0; s < preds.size(); ++s) {
    if (preds[s].size() != gts[s].size()) throw ShapeError("prediction and ground truth sizes differ");
    for (std::size_t i = 0; i < preds[s].size(); ++i) {
      const int p = preds[s][i], g = gts[s][i];
      if (p < 0 || p >= classes || g < 0 || g >= classes) throw ValueError("class index out of range");
      if (p == g) {
        ++inter[static_cast<std::size_t>(p)];
        ++uni[static_cast<std::size_t>(p)];
      } else {
        ++uni[static_cast<std::size_t>(p)];
        ++uni[static_cast<std::size_t>(g)];
      }
    }
  }
  IouTable t;
  double sum = 0.0;
  int present = 0;
  for (int k = 0; k < classes; ++k) {
    if (uni[static_cast<std::size_t>(k)] == 0) {
      t.per_class.push_back(std::nullopt);
      continue;
    }
    const double v = static_cast<double>(inter[static_cast<std::size_t>(k)]) / static_cast<double>(uni[static_cast<std::size_t>(k)]);
    t.per_class.push_back(v);
    sum += v;
    ++present;
  }
  t.miou = present ? sum / present : 0.0;
  return t;
}

std::string IouTable::text() const {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    os << "class " << k << "  IoU ";
    if (per_class[k])
      os << *per_class[k];
    else
      os << "n/a";
    os << '\n';
  }
  os << "mIoU " << miou << '\n';
  return os.str();
}

}  // namespace spikeseg
