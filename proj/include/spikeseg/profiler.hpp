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

#include "spikeseg/op_counter.hpp"

namespace spikeseg {

/// 45nm energy per op and ZCU104 throughput.
struct CostModel {
  double e_mac_pj = 4.6;
  double e_ac_pj = 0.9;
  double mac_gflops = 691.2;
  double ac_gflops = 5529.6;
};

double energy_mj(std::uint64_t ac_ops, std::uint64_t mac_ops, const CostModel& m = {});
double latency_ms(std::uint64_t ac_ops, std::uint64_t mac_ops, const CostModel& m = {});

/// Which MAC rows enter the totals.
enum class MacScope {
  kSpikingPath,     // deployed spiking path only
  kWithEmbedding,   // plus the real-valued stem
};

double energy_mj(const OpCounter& c, MacScope scope = MacScope::kWithEmbedding, const CostModel& m = {});
double latency_ms(const OpCounter& c, MacScope scope = MacScope::kWithEmbedding, const CostModel& m = {});

struct ProfileRow {
  std::string layer;
  std::uint64_t dense_ops = 0;
  std::uint64_t ac_ops = 0;
  std::uint64_t mac_ops = 0;
  double rho = 0.0;
  double cumulative_mj = 0.0;
  double cumulative_ms = 0.0;
};

struct ProfileReport {
  std::uint64_t params = 0;
  std::vector<ProfileRow> rows;
  std::uint64_t ac_ops = 0;
  std::uint64_t spiking_mac_ops = 0;
  std::uint64_t embedding_mac_ops = 0;
  double mj_spiking = 0.0;
  double ms_spiking = 0.0;
  double mj_total = 0.0;
  double ms_total = 0.0;

  std::string csv() const;
  std::string text() const;
};

/// Rows in first-seen order; auxiliary (pretraining-only) layers are dropped.
ProfileReport make_report(const OpCounter& c, std::uint64_t params, const CostModel& m = {});

}  // namespace spikeseg
