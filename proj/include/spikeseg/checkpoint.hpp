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

#include <string>
#include <vector>

#include "spikeseg/encoder.hpp"

// File layout: "SPKC", u32 manifest length (LE), JSON manifest, then one
// SPKT record (f64) per parameter in manifest order.

namespace spikeseg {

struct CheckpointInfo {
  std::string kind;  // "encoder" or "model"
  EncoderConfig encoder;
  std::vector<std::string> names;
};

void save_params(const std::string& path, const ParamList& params, const std::string& kind,
                 const EncoderConfig& enc_cfg);
/// Loads every parameter of `params` by name. Throws IoError on a missing
/// name or a shape mismatch; entries not in `params` are ignored.
CheckpointInfo load_params(const std::string& path, const ParamList& params);
CheckpointInfo read_checkpoint_info(const std::string& path);

/// Encoder weights only; nothing else is ever written by this call.
void save_encoder(const std::string& path, Encoder& enc);
/// Rebuilds the encoder from the stored config and loads its weights.
Encoder load_encoder(const std::string& path);

}  // namespace spikeseg
