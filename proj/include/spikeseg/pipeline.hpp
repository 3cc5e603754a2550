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
#include <iosfwd>
#include <memory>
#include <vector>

#include "spikeseg/config.hpp"
#include "spikeseg/metrics.hpp"
#include "spikeseg/pretrain.hpp"
#include "spikeseg/profiler.hpp"
#include "spikeseg/seghead.hpp"

namespace spikeseg {

struct Dataset {
  std::vector<LabeledClip> train;
  std::vector<LabeledClip> test;
  /// Pretraining pool; labels unused. Equals train unless a separate pool is configured.
  std::vector<LabeledClip> unlabeled;
};

/// Synthetic splits from independent seeds, or <data.dir>/train, test and
/// (optionally) unlabeled.
Dataset make_dataset(const RunConfig& cfg, std::uint64_t seed);
std::unique_ptr<Teacher> make_teacher(const RunConfig& cfg, std::uint64_t seed);

/// Inference pass with folded kernels, counting every layer.
OpCounter count_pass(SegModel& model, const PotentialTensor& clip);
ProfileReport profile_report(SegModel& model, const PotentialTensor& clip);

/// Copies parameter values by name; every destination name must exist in the source.
void copy_params(const ParamList& src, const ParamList& dst);

struct PretrainLogRow {
  int step = 0;
  double lr = 0.0;
  PretrainMetrics m;
};

struct FinetuneLogRow {
  int step = 0;
  double lr = 0.0;
  FinetuneMetrics m;
};

/// Cosine-scheduled AdamW over cfg.pretrain; rows are also streamed to csv when given.
std::vector<PretrainLogRow> run_pretrain(PretrainModel& model, const std::vector<LabeledClip>& clips, Teacher* teacher,
                                         const RunConfig& cfg, std::uint64_t seed, std::ostream* csv = nullptr);
std::vector<FinetuneLogRow> run_finetune(SegModel& model, const std::vector<LabeledClip>& clips, const RunConfig& cfg,
                                         std::uint64_t seed, std::ostream* csv = nullptr);

IouTable evaluate(SegModel& model, const std::vector<LabeledClip>& clips);

struct BenefitRun {
  std::uint64_t seed = 0;
  double pretrained_miou = 0.0;
  double scratch_miou = 0.0;
  double seconds = 0.0;
};

/// Pretrain, then fine-tune from the pretrained encoder and from scratch with
/// identical head init, data order and budget; both scored on the test split.
BenefitRun pretraining_benefit(const RunConfig& cfg, std::uint64_t seed);

struct SweepPoint {
  double mask_ratio = 0.0;
  double miou = 0.0;
};

/// Repeats the pretrain + fine-tune pipeline per mask ratio; the best ratio is the argmax.
std::vector<SweepPoint> mask_ratio_sweep(const RunConfig& cfg, const std::vector<double>& ratios, std::uint64_t seed);

}  // namespace spikeseg
