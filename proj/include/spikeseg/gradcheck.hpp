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

#include <cstdint>
#include <string>
#include <vector>

#include "spikeseg/train.hpp"

namespace spikeseg {

struct FragmentCheck {
  std::string name;
  GradCheckResult result;
};

/// Names accepted by gradcheck_fragment.
std::vector<std::string> gradcheck_fragment_names();

/// Central-difference check of one small model fragment in relaxed mode.
FragmentCheck gradcheck_fragment(const std::string& name, std::uint64_t seed, double eps = 1e-4);

/// Every fragment in gradcheck_fragment_names() order.
std::vector<FragmentCheck> gradcheck_all(std::uint64_t seed, double eps = 1e-4);

}  // namespace spikeseg
