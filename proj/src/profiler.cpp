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

#include "spikeseg/profiler.hpp"

#include <iomanip>
#include <sstream>

namespace spikeseg {

double LayerOps::rho() const {
  if (dense_ops > 0) return static_cast<double>(ac_ops) / static_cast<double>(dense_ops);
  if (spike_sites > 0) return static_cast<double>(spikes) / static_cast<double>(spike_sites);
  return 0.0;
}

LayerOps& OpCounter::layer(const std::string& name) {
  auto it = index_.find(name);
  if (it != index_.end()) return layers_[it->second];
  index_.emplace(name, layers_.size());
  layers_.push_back(LayerOps{});
  layers_.back().name = name;
  return layers_.back();
}

const LayerOps* OpCounter::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &layers_[it->second];
}

void OpCounter::add_synaptic(const std::string& name, std::uint64_t dense, std::uint64_t ac) {
  LayerOps& l = layer(name);
  l.dense_ops += dense;
  l.ac_ops += ac;
}

void OpCounter::add_mac(const std::string& name, std::uint64_t macs, bool embedding, bool auxiliary) {
  LayerOps& l = layer(name);
  l.mac_ops += macs;
  l.embedding = l.embedding || embedding;
  l.auxiliary = l.auxiliary || auxiliary;
}

void OpCounter::add_additions(const std::string& name, std::uint64_t adds) {
  LayerOps& l = layer(name + "/add");
  l.ac_ops += adds;
  l.dense_ops += adds;
}

void OpCounter::add_spikes(const std::string& name, std::uint64_t fired, std::uint64_t sites) {
  LayerOps& l = layer(name);
  l.spikes += fired;
  l.spike_sites += sites;
}

void OpCounter::merge(const OpCounter& other) {
  for (const LayerOps& o : other.layers_) {
    LayerOps& l = layer(o.name);
    l.dense_ops += o.dense_ops;
    l.ac_ops += o.ac_ops;
    l.mac_ops += o.mac_ops;
    l.spikes += o.spikes;
    l.spike_sites += o.spike_sites;
    l.embedding = l.embedding || o.embedding;
    l.auxiliary = l.auxiliary || o.auxiliary;
  }
}

void OpCounter::clear() {
  layers_.clear();
  index_.clear();
}

std::uint64_t OpCounter::total_ac() const {
  std::uint64_t s = 0;
  for (const auto& l : layers_)
    if (!l.auxiliary) s += l.ac_ops;
  return s;
}

std::uint64_t OpCounter::spiking_path_mac() const {
  std::uint64_t s = 0;
  for (const auto& l : layers_)
    if (!l.embedding && !l.auxiliary) s += l.mac_ops;
  return s;
}

std::uint64_t OpCounter::embedding_mac() const {
  std::uint64_t s = 0;
  for (const auto& l : layers_)
    if (l.embedding) s += l.mac_ops;
  return s;
}

std::uint64_t OpCounter::auxiliary_mac() const {
  std::uint64_t s = 0;
  for (const auto& l : layers_)
    if (l.auxiliary) s += l.mac_ops;
  return s;
}

std::uint64_t OpCounter::total_mac() const {
  std::uint64_t s = 0;
  for (const auto& l : layers_) s += l.mac_ops;
  return s;
}

double energy_mj(std::uint64_t ac_ops, std::uint64_t mac_ops, const CostModel& m) {
  return (static_cast<double>(ac_ops) * m.e_ac_pj + static_cast<double>(mac_ops) * m.e_mac_pj) * 1e-9;
}

double latency_ms(std::uint64_t ac_ops, std::uint64_t mac_ops, const CostModel& m) {
  return (static_cast<double>(ac_ops) / (m.ac_gflops * 1e9) + static_cast<double>(mac_ops) / (m.mac_gflops * 1e9)) *
         1e3;
}

namespace {

std::uint64_t macs_in_scope(const OpCounter& c, MacScope scope) {
  return c.spiking_path_mac() + (scope == MacScope::kWithEmbedding ? c.embedding_mac() : 0);
}

}  // namespace

double energy_mj(const OpCounter& c, MacScope scope, const CostModel& m) {
  return energy_mj(c.total_ac(), macs_in_scope(c, scope), m);
}

double latency_ms(const OpCounter& c, MacScope scope, const CostModel& m) {
  return latency_ms(c.total_ac(), macs_in_scope(c, scope), m);
}

ProfileReport make_report(const OpCounter& c, std::uint64_t params, const CostModel& m) {
  ProfileReport r;
  r.params = params;
  std::uint64_t ac = 0, mac = 0;
  for (const LayerOps& l : c.layers()) {
    if (l.auxiliary) continue;
    ac += l.ac_ops;
    mac += l.mac_ops;
    r.rows.push_back({l.name, l.dense_ops, l.ac_ops, l.mac_ops, l.rho(), energy_mj(ac, mac, m), latency_ms(ac, mac, m)});
  }
  r.ac_ops = c.total_ac();
  r.spiking_mac_ops = c.spiking_path_mac();
  r.embedding_mac_ops = c.embedding_mac();
  r.mj_spiking = energy_mj(c, MacScope::kSpikingPath, m);
  r.ms_spiking = latency_ms(c, MacScope::kSpikingPath, m);
  r.mj_total = energy_mj(c, MacScope::kWithEmbedding, m);
  r.ms_total = latency_ms(c, MacScope::kWithEmbedding, m);
  return r;
}

std::string ProfileReport::csv() const {
  std::ostringstream os;
  os << "layer,dense_ops,ac_ops,mac_ops,rho,cumulative_mJ,cumulative_ms\n";
  os << std::setprecision(9);
  for (const auto& row : rows)
    os << row.layer << ',' << row.dense_ops << ',' << row.ac_ops << ',' << row.mac_ops << ',' << row.rho << ','
       << row.cumulative_mj << ',' << row.cumulative_ms << '\n';
  return os.str();
}

std::string ProfileReport::text() const {
  std::ostringstream os;
  os << "params            " << params << '\n';
  os << "AC ops            " << ac_ops << '\n';
  os << "MAC ops (spiking) " << spiking_mac_ops << '\n';
  os << "MAC ops (stem)    " << embedding_mac_ops << '\n';
  os << std::fixed << std::setprecision(6);
  os << "energy spiking    " << mj_spiking << " mJ\n";
  os << "latency spiking   " << ms_spiking << " ms\n";
  os << "energy with stem  " << mj_total << " mJ\n";
  os << "latency with stem " << ms_total << " ms\n\n";
  os << std::left << std::setw(40) << "layer" << std::right << std::setw(14) << "AC" << std::setw(14) << "MAC"
     << std::setw(10) << "rho" << '\n';
  os << std::setprecision(4);
  for (const auto& row : rows)
    os << std::left << std::setw(40) << row.layer << std::right << std::setw(14) << row.ac_ops << std::setw(14)
       << row.mac_ops << std::setw(10) << row.rho << '\n';
  return os.str();
}

}  // namespace spikeseg
