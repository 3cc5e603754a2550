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

#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "spikeseg/clip_io.hpp"
#include "spikeseg/config.hpp"
#include "spikeseg/metrics.hpp"
#include "spikeseg/pipeline.hpp"

using namespace spikeseg;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& leaf) {
  const fs::path p = fs::temp_directory_path() / ("spikeseg_test_" + leaf);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("IoU examples") {
  CHECK(iou({1, 1, 0, 0}, {1, 1, 0, 0}, 1) == 1.0);
  CHECK(iou({1, 1, 0, 0}, {0, 0, 1, 1}, 1) == 0.0);
  // Two squares overlapping by half: |A&B| = 1, |A|B| = 3.
  CHECK(*iou({1, 1, 0, 0}, {0, 1, 1, 0}, 1) == doctest::Approx(1.0 / 3));
  CHECK(!iou({0, 0}, {0, 0}, 1).has_value());
  const IouTable t = miou({{1, 1, 0, 0}, {0, 0}}, {{1, 0, 0, 0}, {0, 0}}, 3);
  // class 0: inter 4, union 5; class 1: inter 1, union 2; class 2 absent.
  CHECK(*t.per_class[0] == doctest::Approx(0.8));
  CHECK(*t.per_class[1] == doctest::Approx(0.5));
  CHECK(!t.per_class[2].has_value());
  CHECK(t.miou == doctest::Approx(0.65));
  CHECK(t.text().find("mIoU") != std::string::npos);
  CHECK_THROWS_AS(miou({}, {}, 2), ValueError);
  CHECK_THROWS_AS(miou({{3}}, {{0}}, 2), ValueError);
}

TEST_CASE("config defaults, round trip and rejection") {
  const RunConfig d = parse_config("");
  CHECK(d.variant == "tiny");
  CHECK(d.pretrain_loss.mask_ratio == 0.5);
  CHECK(d.pretrain_loss.lambda_kd == 0.1);
  RunConfig c = parse_config("[model]\nhead_channels = 48\n[pretrain]\nmask_ratio = 0.75 ; comment\n[finetune]\nfreeze_encoder = true\n");
  CHECK(c.head.head_channels == 48);
  CHECK(c.pretrain_loss.mask_ratio == 0.75);
  CHECK(c.freeze_encoder);
  const RunConfig back = parse_config(format_config(c));
  CHECK(format_config(back) == format_config(c));
  CHECK_THROWS_AS(parse_config("[model]\nbogus = 1\n"), ValueError);
  CHECK_THROWS_AS(parse_config("[nowhere]\nseed = 1\n"), ValueError);
  CHECK_THROWS_AS(parse_config("[run]\nseed = abc\n"), ValueError);
  CHECK_THROWS_AS(parse_config("[pretrain]\nmask_ratio = 1.0\n"), ValueError);
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), IoError);
  const RunConfig bench = load_config(std::string(SPIKESEG_SOURCE_DIR) + "/configs/benchmark.cfg");
  CHECK(bench.synth.height == 64);
  CHECK(bench.head.classes == 2);
  CHECK_NOTHROW(load_config(std::string(SPIKESEG_SOURCE_DIR) + "/configs/tiny.cfg"));
}

TEST_CASE("synthetic clips are deterministic and well formed") {
  SynthConfig sc;
  const auto a = synth_dataset(sc, 3, 17), b = synth_dataset(sc, 3, 17), c = synth_dataset(sc, 3, 18);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].frames[2].rgb == b[i].frames[2].rgb);
    CHECK(*a[i].labels == *b[i].labels);
    CHECK(a[i].frames_count() == 4);
    CHECK_NOTHROW(a[i].validate());
  }
  CHECK(a[0].frames[0].rgb != c[0].frames[0].rgb);
  const PotentialTensor t = a[0].to_tensor();
  CHECK(t.dims() == Dims{4, 64, 64, 3});
  for (double v : t.data()) CHECK((v >= 0.0 && v <= 1.0));
  const auto labels = a[0].label_vector();
  CHECK(std::count(labels.begin(), labels.end(), 1) > 0);
  CHECK(std::count(labels.begin(), labels.end(), 0) > 0);
  CHECK(unit_uniform(0) == 0.0);
  CHECK(unit_uniform(~0ull) < 1.0);
}

TEST_CASE("area fraction sets the blob size") {
  SynthConfig sc;
  sc.area_fraction = 0.038;
  sc.deform = 0.0;
  sc.occluders = false;
  double total = 0;
  const auto clips = synth_dataset(sc, 20, 3);
  for (const auto& clip : clips) {
    const auto& f0 = clip.labels->front();
    total += static_cast<double>(std::count(f0.begin(), f0.end(), 1)) / static_cast<double>(f0.size());
  }
  CHECK(total / 20 == doctest::Approx(0.038).epsilon(0.05));
  sc.area_fraction = 0.6;
  CHECK_THROWS_AS(sc.validate(), ValueError);
}

TEST_CASE("clip directories round trip and report distinct errors") {
  const fs::path root = scratch_dir("clips");
  SynthConfig sc;
  sc.height = 32;
  sc.width = 48;
  sc.frames = 3;
  sc.classes = 3;
  sc.radius_min = 4;
  sc.radius_max = 6;
  const ClipRecord rec = synth_dataset(sc, 1, 5).front();
  save_clip((root / "a").string(), rec);
  const ClipRecord back = load_clip((root / "a").string(), 3);
  CHECK(back.frames_count() == 3);
  for (int t = 0; t < 3; ++t) CHECK(back.frames[static_cast<std::size_t>(t)].rgb == rec.frames[static_cast<std::size_t>(t)].rgb);
  CHECK(*back.labels == *rec.labels);
  CHECK(load_clip_set(root.string()).size() == 1);
  CHECK_THROWS_AS(load_clip((root / "a").string(), 4), MissingFrameError);

  fs::copy(root / "a", root / "gap", fs::copy_options::recursive);
  fs::remove(root / "gap" / "001.png");
  CHECK_THROWS_AS(load_clip((root / "gap").string()), MissingFrameError);

  fs::copy(root / "a", root / "size", fs::copy_options::recursive);
  write_png_rgb((root / "size" / "002.png").string(), RgbImage{16, 16, std::vector<std::uint8_t>(16 * 16 * 3, 9)});
  CHECK_THROWS_AS(load_clip((root / "size").string()), FrameSizeError);

  fs::copy(root / "a", root / "junk", fs::copy_options::recursive);
  std::ofstream((root / "junk" / "000.png").string(), std::ios::trunc) << "not a png";
  CHECK_THROWS_AS(load_clip((root / "junk").string()), UnreadableFileError);
  fs::remove_all(root);
}

TEST_CASE("fine-tuning run is reproducible from its seed") {
  RunConfig cfg = load_config(std::string(SPIKESEG_SOURCE_DIR) + "/configs/tiny.cfg");
  cfg.train_clips = 2;
  cfg.test_clips = 1;
  cfg.finetune.steps = 3;
  cfg.finetune.batch = 1;
  auto run = [&] {
    const Dataset d = make_dataset(cfg, 4);
    SegModel m(cfg.encoder_config(), cfg.head, 4);
    const auto rows = run_finetune(m, d.train, cfg, 4);
    return std::pair{rows.back().m.total, evaluate(m, d.test).miou};
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("separate unlabeled pool") {
  RunConfig cfg;
  cfg.train_clips = 2;
  cfg.test_clips = 1;
  CHECK(make_dataset(cfg, 1).unlabeled.size() == 2);
  cfg.unlabeled_clips = 3;
  const Dataset d = make_dataset(cfg, 1);
  CHECK(d.unlabeled.size() == 3);
  CHECK(!(d.unlabeled[0].clip == d.train[0].clip));
  CHECK(d.unlabeled[0].labels.empty());
}
