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

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "spikeseg/checkpoint.hpp"
#include "spikeseg/pretrain.hpp"
#include "spikeseg/synth.hpp"
#include "test_util.hpp"

using namespace spikeseg;

namespace {

const Shape4 kClip{4, 64, 64, 3};

LabeledClip random_clip(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {"c" + std::to_string(seed), testutil::uniform(kClip.dims(), 0, 1, rng), {}};
}

std::string temp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / ("spikeseg_test_" + leaf)).string();
}

}  // namespace

TEST_CASE("fill_masked keeps visible sites and substitutes the embedding elsewhere") {
  std::mt19937_64 rng(51);
  const PotentialTensor u4 = testutil::uniform({2, 2, 2, 3}, -1, 1, rng);
  const PotentialTensor m({3}, {7, 8, 9});
  CHECK(fill_masked(u4, PotentialTensor::filled({2, 2, 2, 1}, 1.0), m) == u4);
  const PotentialTensor all = fill_masked(u4, PotentialTensor({2, 2, 2, 1}), m);
  for (std::size_t i = 0; i < all.numel(); ++i) CHECK(all[i] == m[i % 3]);
  const PotentialTensor keep({2, 2, 2, 1}, {1, 0, 0, 1, 1, 1, 0, 1});
  const PotentialTensor mixed = fill_masked(u4, keep, m);
  for (std::size_t site = 0; site < 8; ++site)
    for (std::size_t c = 0; c < 3; ++c) CHECK(mixed[site * 3 + c] == (keep[site] == 1.0 ? u4[site * 3 + c] : m[c]));

  // Gradient into the embedding counts the masked sites.
  Param mp("m", m);
  Tape tp;
  tp.backward(ops::sum(ops::fill_masked(tp.constant(u4), keep, tp.param(mp))));
  CHECK(mp.grad == std::vector<double>{3, 3, 3});
}

TEST_CASE("unpatchify places token elements by (py, px, rgb)") {
  const int frames = 2, gh = 2, gw = 3, p = 2;
  PotentialTensor tok({frames * gh * gw, p * p * 3});
  for (std::size_t i = 0; i < tok.numel(); ++i) tok[i] = static_cast<double>(i);
  Tape tp(testutil::no_record());
  const PotentialTensor img = ops::unpatchify(tp.constant(tok), frames, gh, gw, p).value();
  REQUIRE(img.dims() == Dims{2, 4, 6, 3});
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 3; ++c) {
          const int token = (t * gh + y / p) * gw + x / p;
          const int elem = ((y % p) * p + x % p) * 3 + c;
          CHECK(img.at(t, y, x, c) == tok[static_cast<std::size_t>(token * p * p * 3 + elem)]);
        }
}

TEST_CASE("decoder geometry follows the encoder") {
  const DecoderConfig tiny = DecoderConfig::for_encoder(EncoderConfig::tiny(), kClip);
  CHECK(tiny.dim == 96);
  CHECK(tiny.heads == 4);
  CHECK(tiny.token_count() == 64);
  CHECK(DecoderConfig::for_encoder(EncoderConfig::small16m(), kClip).heads == 8);
  VitDecoder dec(tiny, 3);
  std::mt19937_64 rng(52);
  const PotentialTensor r = vit_decode(dec, testutil::uniform({4, 4, 4, 96}, -1, 1, rng));
  CHECK(r.dims() == Dims{4, 64, 64, 3});
  CHECK(r.all_finite());
}

TEST_CASE("teachers are deterministic and never updated") {
  RandomConvTeacher a(16, 9), b(16, 9);
  const LabeledClip clip = random_clip(1);
  const PotentialTensor fa = a.features(clip.id, clip.clip);
  CHECK(fa.dims() == Dims{4, 4, 4, 16});
  CHECK(fa == b.features(clip.id, clip.clip));
  for (double v : fa.data()) CHECK(std::abs(v) < 1.0);
  CHECK(ZeroTeacher(5).features("x", clip.clip) == PotentialTensor({4, 4, 4, 5}));

  const PotentialTensor before = a.weights();
  PretrainModel model(EncoderConfig::tiny(), DecoderConfig::for_encoder(EncoderConfig::tiny(), kClip), 16, 4);
  AdamW opt;
  pretrain_step(model, {&clip}, &a, PretrainConfig{}, opt, 1e-3, 0);
  CHECK(a.weights() == before);
  CHECK(a.features(clip.id, clip.clip) == fa);
}

TEST_CASE("distillation loss closed forms") {
  std::mt19937_64 rng(53);
  const PotentialTensor u4 = testutil::uniform({2, 2, 2, 4}, -1, 1, rng);
  Rng wrng(1);
  TeacherAdapter identity(4, 4, wrng);
  identity.w.value = PotentialTensor({3, 3, 4, 4});
  for (int c = 0; c < 4; ++c) identity.w.value[static_cast<std::size_t>((4 * 4 + c) * 4 + c)] = 1.0;
  Tape tp(testutil::no_record());
  CHECK(kd_loss(tp, tp.constant(u4), u4, identity).value()[0] == doctest::Approx(0.0));
  CHECK(kd_loss(u4, u4) == 0.0);

  // Zero teacher through a zero-bias adapter: mean of u4 squared.
  double sq = 0;
  for (double v : u4.data()) sq += v * v / static_cast<double>(u4.numel());
  CHECK(kd_loss(tp, tp.constant(u4), PotentialTensor({2, 2, 2, 4}), identity).value()[0] == doctest::Approx(sq));

  // Restricted to kept positions, a difference at a dropped site is free.
  PotentialTensor shifted = u4;
  shifted[5] += 3.0;  // site 1
  PotentialTensor keep = PotentialTensor::filled({2, 2, 2, 1}, 1.0);
  keep[1] = 0.0;
  CHECK(kd_loss(tp, tp.constant(u4), shifted, identity, &keep).value()[0] == doctest::Approx(0.0));
  CHECK(kd_loss(tp, tp.constant(u4), shifted, identity).value()[0] == doctest::Approx(9.0 / 32));
}

TEST_CASE("pretraining objective composition") {
  PretrainModel model(EncoderConfig::tiny(), DecoderConfig::for_encoder(EncoderConfig::tiny(), kClip), 8, 5);
  RandomConvTeacher teacher(8, 2);
  const LabeledClip clip = random_clip(2);
  const TubeMaskSet masks = TubeMaskSet::sample(kClip, 0.5, 3);
  PretrainConfig cfg;
  Tape t1(testutil::no_record());
  const PretrainLoss l = pretrain_loss(t1, model, clip, masks, &teacher, cfg);
  CHECK(l.total.value()[0] == doctest::Approx(l.recon.value()[0] + 0.1 * l.kd.value()[0]));
  cfg.lambda_kd = 0.0;
  Tape t2(testutil::no_record());
  const PretrainLoss l0 = pretrain_loss(t2, model, clip, masks, &teacher, cfg);
  CHECK(l0.total.value()[0] == l0.recon.value()[0]);
  CHECK(l0.recon.value()[0] == l.recon.value()[0]);
  Tape t3(testutil::no_record());
  CHECK(pretrain_loss(t3, model, clip, masks, nullptr, PretrainConfig{}).kd.value()[0] == 0.0);
}

TEST_CASE("pretraining loss decreases on a fixed clip") {
  PretrainModel model(EncoderConfig::tiny(), DecoderConfig::for_encoder(EncoderConfig::tiny(), kClip), 8, 6);
  RandomConvTeacher teacher(8, 3);
  SynthConfig sc;
  const LabeledClip clip = synth_dataset(sc, 1, 4).front().to_labeled();
  AdamW opt;
  double first = 0, last = 0;
  for (int s = 0; s < 40; ++s) {
    const PretrainMetrics m = pretrain_step(model, {&clip}, &teacher, PretrainConfig{}, opt, 1e-3, static_cast<std::uint64_t>(s % 4));
    if (s < 4) first += m.total;
    if (s >= 36) last += m.total;
  }
  CHECK(last < 0.7 * first);
}

TEST_CASE("encoder checkpoint holds encoder weights only and round trips") {
  PretrainModel model(EncoderConfig::tiny(), DecoderConfig::for_encoder(EncoderConfig::tiny(), kClip), 8, 7);
  const std::string path = temp_path("enc.spkc");
  save_encoder(path, model.encoder());
  const CheckpointInfo info = read_checkpoint_info(path);
  CHECK(info.kind == "encoder");
  CHECK(info.names.size() == model.encoder().params().size());
  for (const auto& n : info.names) CHECK(n.rfind("enc.", 0) == 0);
  Encoder back = load_encoder(path);
  const LabeledClip clip = random_clip(3);
  CHECK(encode(back, clip.clip).u4 == encode(model.encoder(), clip.clip).u4);

  // Wrong shape and truncation are reported.
  Encoder other(EncoderConfig::small16m(), 0);
  CHECK_THROWS_AS(load_params(path, other.params()), IoError);
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  CHECK_THROWS_AS(load_encoder(path), IoError);
  CHECK_THROWS_AS(load_encoder(temp_path("missing.spkc")), IoError);
  std::remove(path.c_str());
}
