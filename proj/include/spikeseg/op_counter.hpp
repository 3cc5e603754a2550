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
#include <map>
#include <string>
#include <vector>

namespace spikeseg {

/// Per-layer operation tally for one or more forward passes.
///
/// Synaptic layers fed by spikes record `ac_ops` (one accumulate per active
/// spike per fan-out weight, an integer spike of value v counting v) against
/// `dense_ops` (the count if every site fired at its maximum value). Layers fed
/// by real values record `mac_ops`. Spiking layers record fired/sites so the
/// observed rate is available even where no synapse follows.
struct LayerOps {
  std::string name;
  std::uint64_t dense_ops = 0;
  std::uint64_t ac_ops = 0;
  std::uint64_t mac_ops = 0;
  std::uint64_t spikes = 0;
  std::uint64_t spike_sites = 0;
  /// Real-valued input embedding (the stem). Kept out of the spiking-path total.
  bool embedding = false;
  /// Dense decoder / adapter ops that are discarded before deployment.
  bool auxiliary = false;

  double rho() const;
};

class OpCounter {
 public:
  LayerOps& layer(const std::string& name);
  const LayerOps* find(const std::string& name) const;

  void add_synaptic(const std::string& name, std::uint64_t dense, std::uint64_t ac);
  void add_mac(const std::string& name, std::uint64_t macs, bool embedding = false, bool auxiliary = false);
  /// Bias / residual / aggregation additions; recorded under "<name>/add".
  void add_additions(const std::string& name, std::uint64_t adds);
  void add_spikes(const std::string& name, std::uint64_t fired, std::uint64_t sites);

  void merge(const OpCounter& other);
  void clear();

  const std::vector<LayerOps>& layers() const { return layers_; }

  std::uint64_t total_ac() const;
  /// MACs on the deployed spiking path (embedding and auxiliary excluded).
  std::uint64_t spiking_path_mac() const;
  std::uint64_t embedding_mac() const;
  std::uint64_t auxiliary_mac() const;
  std::uint64_t total_mac() const;

 private:
  std::vector<LayerOps> layers_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace spikeseg
