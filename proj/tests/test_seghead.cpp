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

#include "doctest.h"
#include "spikeseg/pipeline.hpp"
#include "spikeseg/seghead.hpp"
#include "test_util.hpp"

using namespace spikeseg;

namespace {

SegHead tiny_head(int capacity = 3) {
  HeadConfig hc;
  hc.memory_capacity = capacity;
  return SegHead(hc, EncoderConfig::tiny().stage_channels(), SpikeConsts{}, InitSpec{}, 11);
}

PotentialTensor frame(const PotentialTensor& x, int t) {
  const std::size_t per = x.numel() / static_cast<std::size_t>(x.dim(0));
  Dims d = x.dims();
  d[0] = 1;
  return PotentialTensor(d, std::vector<double>(x.vec().begin() + static_cast<long>(t * per),
                                                x.vec().begin() + static_cast<long>((t + 1) * per)));
}

}  // namespace

TEST_CASE("memory bank is a bounded FIFO") {
  MemoryBank bank(2);
  for (int i = 0; i < 4; ++i) bank.push(PotentialTensor::filled({1, 1, 2}, i), i);
  CHECK(bank.size() == 2);
  CHECK(bank.frame_indices() == std::deque<int>{2, 3});
  CHECK(bank.entries().front()[0] == 2.0);
  CHECK_THROWS_AS(bank.push(PotentialTensor({1, 2, 2}), 4), ShapeError);
  MemoryBank none(0);
  none.push(PotentialTensor({1}), 0);
  CHECK(none.empty());
  bank.clear();
  CHECK(bank.empty());
}

TEST_CASE("fusion leaves memoryless frames alone and streaming matches the clip pass") {
  SegHead head = tiny_head();
  std::mt19937_64 rng(61);
  const PotentialTensor u4 = testutil::uniform({4, 2, 3, 96}, -1, 3, rng);
  Tape tp(testutil::no_record());
  const PotentialTensor fused = head.fuse(tp, tp.constant(u4)).value();
  CHECK(frame(fused, 0) == frame(u4, 0));
  CHECK(!(frame(fused, 3) == frame(u4, 3)));

  MemoryBank bank(3);
  for (int t = 0; t < 4; ++t) {
    const PotentialTensor streamed = memory_read_fuse(head, frame(u4, t), bank);
    CHECK(testutil::max_abs_diff(streamed, frame(fused, t)) < 1e-12);
    bank.push(frame(u4, t).reshaped({2, 3, 96}), t);
  }
  MemoryBank too_big(5);
  for (int t = 0; t < 4; ++t) too_big.push(frame(u4, 0).reshaped({2, 3, 96}), t);
  CHECK_THROWS_AS(memory_read_fuse(head, frame(u4, 0), too_big), ValueError);
}

TEST_CASE("segmentation model output and spiking-path operation mix") {
  SegModel model(EncoderConfig::tiny(), HeadConfig{}, 3);
  std::mt19937_64 rng(62);
  const PotentialTensor clip = testutil::uniform({2, 32, 48, 3}, 0, 1, rng);
  Tape tp(testutil::no_record());
  const Var logits = model.forward(tp, tp.constant(clip));
  CHECK(logits.dims() == Dims{2, 32, 48, 2});
  const OpCounter c = count_pass(model, clip);
  CHECK(c.spiking_path_mac() == 0);
  CHECK(c.embedding_mac() > 0);
  CHECK(c.total_ac() > 0);
  CHECK(predict_labels(model, clip).size() == 2u * 32 * 48);
}

TEST_CASE("argmax and head config") {
  CHECK(argmax_last(PotentialTensor({3, 2}, {0.1, 0.9, 2.0, -1.0, 0.5, 0.5})) == std::vector<int>{1, 0, 0});
  HeadConfig hc;
  hc.classes = 1;
  CHECK_THROWS_AS(hc.validate(), ValueError);
  hc.classes = 2;
  hc.z_levels = 1;
  CHECK_THROWS_AS(hc.validate(), ValueError);
}

TEST_CASE("frozen encoder is untouched by fine-tuning") {
  SegModel model(EncoderConfig::tiny(), HeadConfig{}, 4);
  std::vector<PotentialTensor> enc_before, head_before;
  for (Param* p : model.encoder_params()) enc_before.push_back(p->value);
  for (Param* p : model.head_params()) head_before.push_back(p->value);
  const LabeledClip clip = synth_dataset(SynthConfig{}, 1, 5).front().to_labeled();
  AdamW opt;
  finetune_step(model, {&clip}, opt, 1e-2, true);
  const ParamList enc = model.encoder_params(), head = model.head_params();
  for (std::size_t i = 0; i < enc.size(); ++i) CHECK(enc[i]->value == enc_before[i]);
  bool moved = false;
  for (std::size_t i = 0; i < head.size(); ++i) moved = moved || !(head[i]->value == head_before[i]);
  CHECK(moved);
  for (Param* p : enc) CHECK(p->trainable);
}

TEST_CASE("training reaches full accuracy on a separable toy task") {
  // Two constant-colour clips, one per class.
  LabeledClip red{"red", PotentialTensor({2, 32, 32, 3}), std::vector<int>(2 * 32 * 32, 1)};
  LabeledClip blue{"blue", PotentialTensor({2, 32, 32, 3}), std::vector<int>(2 * 32 * 32, 0)};
  for (std::size_t i = 0; i < red.clip.numel(); i += 3) {
    red.clip[i] = 0.9;
    blue.clip[i + 2] = 0.9;
  }
  SegModel model(EncoderConfig::tiny(), HeadConfig{}, 8);
  AdamW opt;
  bool solved = false;
  for (int step = 0; step < 300 && !solved; ++step) {
    finetune_step(model, {&red, &blue}, opt, 1e-3);
    if (step % 10 == 9)
      solved = predict_labels(model, red.clip) == red.labels && predict_labels(model, blue.clip) == blue.labels;
  }
  CHECK(solved);
}
