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

#include "spikeseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "spikeseg/clip_io.hpp"

namespace spikeseg {

namespace {

std::vector<LabeledClip> to_labeled(const std::vector<ClipRecord>& recs) {
  std::vector<LabeledClip> out;
  for (const auto& r : recs) out.push_back(r.to_labeled());
  return out;
}

// Reshuffled pass over the clip indices, refilled when exhausted.
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    if (n == 0) throw ValueError("no clips to sample from");
  }

  std::vector<std::size_t> next(int batch) {
    std::vector<std::size_t> out;
    for (int i = 0; i < batch; ++i) {
      if (pos_ == 0) {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        std::shuffle(order_.begin(), order_.end(), rng_);
      }
      out.push_back(order_[pos_]);
      pos_ = (pos_ + 1) % order_.size();
    }
    return out;
  }

 private:
  std::vector<std::size_t> order_;
  std::mt19937_64 rng_;
  std::size_t pos_ = 0;
};

AdamW make_opt(const StageSchedule& s) {
  AdamWConfig c;
  c.weight_decay = s.weight_decay;
  return AdamW(c);
}

}  // namespace

Dataset make_dataset(const RunConfig& cfg, std::uint64_t seed) {
  Dataset d;
  if (cfg.data_source == "synth") {
    d.train = to_labeled(synth_dataset(cfg.synth, cfg.train_clips, mix_seed(seed, 101)));
    d.test = to_labeled(synth_dataset(cfg.synth, cfg.test_clips, mix_seed(seed, 202)));
    if (cfg.unlabeled_clips > 0)
      for (const auto& r : synth_dataset(cfg.synth, cfg.unlabeled_clips, mix_seed(seed, 404)))
        d.unlabeled.push_back({r.id, r.to_tensor(), {}});
  } else {
    const std::filesystem::path root(cfg.data_dir);
    d.train = to_labeled(load_clip_set((root / "train").string()));
    d.test = to_labeled(load_clip_set((root / "test").string()));
    if (std::filesystem::is_directory(root / "unlabeled"))
      for (const auto& r : load_clip_set((root / "unlabeled").string())) d.unlabeled.push_back({r.id, r.to_tensor(), {}});
  }
  for (const auto* split : {&d.train, &d.test})
    for (const auto& c : *split)
      if (c.labels.empty()) throw ValueError("clip '" + c.id + "' has no labels");
  if (d.unlabeled.empty()) d.unlabeled = d.train;
  return d;
}

std::unique_ptr<Teacher> make_teacher(const RunConfig& cfg, std::uint64_t seed) {
  if (cfg.teacher == "random") return std::make_unique<RandomConvTeacher>(cfg.teacher_channels, mix_seed(seed, 303));
  if (cfg.teacher == "zero") return std::make_unique<ZeroTeacher>(cfg.teacher_channels);
  return std::make_unique<FixtureTeacher>(cfg.teacher_dir);
}

OpCounter count_pass(SegModel& model, const PotentialTensor& clip) {
  OpCounter counter;
  TapeOptions o;
  o.record = false;
  o.fold_reparam = true;
  o.counter = &counter;
  Tape tp(o);
  model.forward(tp, tp.constant(clip));
  return counter;
}

ProfileReport profile_report(SegModel& model, const PotentialTensor& clip) {
  return make_report(count_pass(model, clip), model.param_count());
}

void copy_params(const ParamList& src, const ParamList& dst) {
  std::map<std::string, const Param*> by_name;
  for (const Param* p : src) by_name[p->name] = p;
  for (Param* p : dst) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ValueError("no source parameter named " + p->name);
    if (it->second->value.dims() != p->value.dims()) throw ShapeError("shape mismatch copying " + p->name);
    p->value = it->second->value;
  }
}

std::vector<PretrainLogRow> run_pretrain(PretrainModel& model, const std::vector<LabeledClip>& clips, Teacher* teacher,
                                         const RunConfig& cfg, std::uint64_t seed, std::ostream* csv) {
  std::vector<PretrainLogRow> log;
  const StageSchedule& s = cfg.pretrain;
  AdamW opt = make_opt(s);
  BatchSampler sampler(clips.size(), mix_seed(seed, 404));
  if (csv) *csv << "step,lr,recon,kd,total\n";
  for (int step = 0; step < s.steps; ++step) {
    std::vector<const LabeledClip*> batch;
    for (std::size_t i : sampler.next(s.batch)) batch.push_back(&clips[i]);
    const double lr = cosine_lr(step, s.steps, s.lr);
    PretrainLogRow row{step, lr,
                       pretrain_step(model, batch, teacher, cfg.pretrain_loss, opt, lr,
                                     mix_seed(seed, 1000 + static_cast<std::uint64_t>(step)))};
    if (csv) *csv << row.step << ',' << row.lr << ',' << row.m.recon << ',' << row.m.kd << ',' << row.m.total << '\n';
    log.push_back(row);
  }
  return log;
}

std::vector<FinetuneLogRow> run_finetune(SegModel& model, const std::vector<LabeledClip>& clips, const RunConfig& cfg,
                                         std::uint64_t seed, std::ostream* csv) {
  std::vector<FinetuneLogRow> log;
  const StageSchedule& s = cfg.finetune;
  AdamW opt = make_opt(s);
  BatchSampler sampler(clips.size(), mix_seed(seed, 505));
  if (csv) *csv << "step,lr,ce,focal,total,miou_batch\n";
  for (int step = 0; step < s.steps; ++step) {
    std::vector<const LabeledClip*> batch;
    for (std::size_t i : sampler.next(s.batch)) batch.push_back(&clips[i]);
    const double lr = cosine_lr(step, s.steps, s.lr);
    FinetuneLogRow row{step, lr, finetune_step(model, batch, opt, lr, cfg.freeze_encoder)};
    if (csv)
      *csv << row.step << ',' << row.lr << ',' << row.m.ce << ',' << row.m.focal << ',' << row.m.total << ','
           << row.m.miou_batch << '\n';
    log.push_back(row);
  }
  return log;
}

IouTable evaluate(SegModel& model, const std::vector<LabeledClip>& clips) {
  std::vector<std::vector<int>> preds, gts;
  for (const auto& c : clips) {
    preds.push_back(predict_labels(model, c.clip));
    gts.push_back(c.labels);
  }
  return miou(preds, gts, model.head().config().classes);
}

BenefitRun pretraining_benefit(const RunConfig& cfg, std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset data = make_dataset(cfg, seed);
  const EncoderConfig enc = cfg.encoder_config();
  const Shape4 shape = Shape4::from_dims(data.train.front().clip.dims());
  auto teacher = make_teacher(cfg, seed);

  PretrainModel pre(enc, DecoderConfig::for_encoder(enc, shape), teacher->channels(), seed);
  run_pretrain(pre, data.unlabeled, teacher.get(), cfg, seed);

  BenefitRun r;
  r.seed = seed;
  SegModel warm(enc, cfg.head, seed);
  copy_params(pre.encoder().params(), warm.encoder_params());
  run_finetune(warm, data.train, cfg, seed);
  r.pretrained_miou = evaluate(warm, data.test).miou;

  SegModel cold(enc, cfg.head, seed);
  run_finetune(cold, data.train, cfg, seed);
  r.scratch_miou = evaluate(cold, data.test).miou;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<SweepPoint> mask_ratio_sweep(const RunConfig& cfg, const std::vector<double>& ratios, std::uint64_t seed) {
  const Dataset data = make_dataset(cfg, seed);
  const EncoderConfig enc = cfg.encoder_config();
  const Shape4 shape = Shape4::from_dims(data.train.front().clip.dims());
  auto teacher = make_teacher(cfg, seed);
  std::vector<SweepPoint> out;
  for (double ratio : ratios) {
    RunConfig c = cfg;
    c.pretrain_loss.mask_ratio = ratio;
    c.validate();
    PretrainModel pre(enc, DecoderConfig::for_encoder(enc, shape), teacher->channels(), seed);
    run_pretrain(pre, data.unlabeled, teacher.get(), c, seed);
    SegModel m(enc, c.head, seed);
    copy_params(pre.encoder().params(), m.encoder_params());
    run_finetune(m, data.train, c, seed);
    out.push_back({ratio, evaluate(m, data.test).miou});
  }
  return out;
}

}  // namespace spikeseg
