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

// spikeseg <synth|pretrain|finetune|eval|profile|gradcheck> --config FILE [--seed N] [--out DIR] [--init CKPT]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "spikeseg/checkpoint.hpp"
#include "spikeseg/clip_io.hpp"
#include "spikeseg/gradcheck.hpp"
#include "spikeseg/pipeline.hpp"

namespace fs = std::filesystem;
using namespace spikeseg;

namespace {

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  std::string init;
  std::string sweep;
  std::string fragment;
};

RunConfig load(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
  if (f.seed_set) c.seed = f.seed;
  return c;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p);
  if (!os) throw IoError("cannot write '" + p.string() + "'");
  os << std::setprecision(10);
  return os;
}

void prepare_out(const Flags& f, const RunConfig& c) {
  fs::create_directories(f.out);
  open_out(fs::path(f.out) / "config.cfg") << format_config(c);
}

std::string iou_csv(const IouTable& t) {
  std::ostringstream os;
  os << std::setprecision(10) << "class,iou\n";
  for (std::size_t k = 0; k < t.per_class.size(); ++k) {
    os << k << ',';
    if (t.per_class[k]) os << *t.per_class[k];
    os << '\n';
  }
  os << "mean," << t.miou << '\n';
  return os.str();
}

SegModel build_model(const RunConfig& c, const Flags& f, bool allow_encoder_init) {
  SegModel m(c.encoder_config(), c.head, c.seed);
  if (f.init.empty()) return m;
  const CheckpointInfo info = read_checkpoint_info(f.init);
  if (info.encoder.variant != c.encoder_config().variant)
    throw ValueError("checkpoint variant '" + info.encoder.variant + "' differs from the config");
  if (info.kind == "model") {
    load_params(f.init, m.params());
  } else if (info.kind == "encoder" && allow_encoder_init) {
    load_params(f.init, m.encoder_params());
  } else {
    throw ValueError("checkpoint '" + f.init + "' holds a " + info.kind + ", which this command cannot use");
  }
  return m;
}

int cmd_synth(const Flags& f) {
  RunConfig c = load(f);
  prepare_out(f, c);
  const auto train = synth_dataset(c.synth, c.train_clips, mix_seed(c.seed, 101));
  const auto test = synth_dataset(c.synth, c.test_clips, mix_seed(c.seed, 202));
  for (const auto& r : train) save_clip((fs::path(f.out) / "train" / r.id).string(), r);
  for (const auto& r : test) save_clip((fs::path(f.out) / "test" / r.id).string(), r);
  auto pool = synth_dataset(c.synth, c.unlabeled_clips, mix_seed(c.seed, 404));
  for (auto& r : pool) {
    r.labels.reset();
    save_clip((fs::path(f.out) / "unlabeled" / r.id).string(), r);
  }
  std::cout << "wrote " << train.size() << " train, " << test.size() << " test and " << pool.size()
            << " unlabeled clips to " << f.out << '\n';
  return 0;
}

int cmd_pretrain(const Flags& f) {
  RunConfig c = load(f);
  prepare_out(f, c);
  if (!f.sweep.empty()) {
    std::vector<double> ratios;
    std::stringstream ss(f.sweep);
    for (std::string tok; std::getline(ss, tok, ',');) ratios.push_back(std::stod(tok));
    auto os = open_out(fs::path(f.out) / "mask_sweep.csv");
    os << "mask_ratio,miou\n";
    SweepPoint best;
    for (const SweepPoint& p : mask_ratio_sweep(c, ratios, c.seed)) {
      os << p.mask_ratio << ',' << p.miou << '\n';
      std::cout << "mask_ratio " << p.mask_ratio << "  mIoU " << p.miou << '\n';
      if (p.miou > best.miou) best = p;
    }
    std::cout << "best mask_ratio " << best.mask_ratio << '\n';
    return 0;
  }
  const Dataset data = make_dataset(c, c.seed);
  const EncoderConfig enc = c.encoder_config();
  auto teacher = make_teacher(c, c.seed);
  PretrainModel m(enc, DecoderConfig::for_encoder(enc, Shape4::from_dims(data.train.front().clip.dims())),
                  teacher->channels(), c.seed);
  if (!f.init.empty()) load_params(f.init, m.encoder().params());
  auto log = open_out(fs::path(f.out) / "pretrain_log.csv");
  const auto rows = run_pretrain(m, data.unlabeled, teacher.get(), c, c.seed, &log);
  const fs::path ckpt = fs::path(f.out) / "encoder.spkc";
  save_encoder(ckpt.string(), m.encoder());
  if (!rows.empty()) std::cout << "final recon " << rows.back().m.recon << "  kd " << rows.back().m.kd << '\n';
  std::cout << "encoder checkpoint " << ckpt.string() << '\n';
  return 0;
}

int cmd_finetune(const Flags& f) {
  RunConfig c = load(f);
  prepare_out(f, c);
  const Dataset data = make_dataset(c, c.seed);
  SegModel m = build_model(c, f, true);
  auto log = open_out(fs::path(f.out) / "finetune_log.csv");
  run_finetune(m, data.train, c, c.seed, &log);
  const fs::path ckpt = fs::path(f.out) / "model.spkc";
  save_params(ckpt.string(), m.params(), "model", c.encoder_config());
  const IouTable t = evaluate(m, data.test);
  open_out(fs::path(f.out) / "metrics.csv") << iou_csv(t);
  std::cout << t.text() << "model checkpoint " << ckpt.string() << '\n';
  return 0;
}

int cmd_eval(const Flags& f) {
  RunConfig c = load(f);
  if (f.init.empty()) throw ValueError("eval needs --init <model checkpoint>");
  prepare_out(f, c);
  const Dataset data = make_dataset(c, c.seed);
  SegModel m = build_model(c, f, false);
  std::vector<std::vector<int>> preds, gts;
  for (const auto& clip : data.test) {
    preds.push_back(predict_labels(m, clip.clip));
    gts.push_back(clip.labels);
    const auto& d = clip.clip.dims();
    const std::size_t frame = static_cast<std::size_t>(d[1]) * d[2];
    const fs::path dir = fs::path(f.out) / "pred" / clip.id;
    fs::create_directories(dir);
    for (int t = 0; t < d[0]; ++t) {
      std::vector<std::uint8_t> idx(preds.back().begin() + static_cast<std::ptrdiff_t>(t * frame),
                                    preds.back().begin() + static_cast<std::ptrdiff_t>((t + 1) * frame));
      char name[16];
      std::snprintf(name, sizeof name, "%03d.png", t);
      write_png_index((dir / name).string(), idx, d[1], d[2]);
    }
  }
  const IouTable t = miou(preds, gts, c.head.classes);
  open_out(fs::path(f.out) / "eval.csv") << iou_csv(t);
  std::cout << t.text();
  return 0;
}

int cmd_profile(const Flags& f) {
  RunConfig c = load(f);
  SegModel m = build_model(c, f, true);
  const Dataset data = make_dataset(c, c.seed);
  const ProfileReport r = profile_report(m, data.test.front().clip);
  if (!f.out.empty()) {
    prepare_out(f, c);
    open_out(fs::path(f.out) / "profile.csv") << r.csv();
  }
  std::cout << r.csv();
  std::cerr << r.text();
  return 0;
}

int cmd_gradcheck(const Flags& f) {
  const RunConfig c = load(f);
  const auto names = f.fragment.empty() ? gradcheck_fragment_names() : std::vector<std::string>{f.fragment};
  bool ok = true;
  for (const auto& n : names) {
    const FragmentCheck r = gradcheck_fragment(n, c.seed);
    const bool pass = r.result.max_rel_error < 1e-4;
    ok = ok && pass;
    std::cout << std::left << std::setw(12) << n << " max_rel_error " << std::scientific << std::setprecision(3)
              << r.result.max_rel_error << "  coords " << r.result.checked << (pass ? "  ok" : "  FAIL") << '\n'
              << std::defaultfloat;
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spiking video segmentation: pretraining, fine-tuning, evaluation and op profiling"};
  app.require_subcommand(1);
  Flags flags;
  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", flags.config, "run configuration file");
    if (config_required) c->required()->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](const std::uint64_t& s) { flags.seed = s, flags.seed_set = true; }, "overrides run.seed");
    sub->add_option("--out", flags.out, "output directory");
    return sub;
  };
  auto* synth = common(app.add_subcommand("synth", "write the synthetic train/test clips as PNG directories"), true);
  auto* pretrain = common(app.add_subcommand("pretrain", "masked pretraining; writes an encoder checkpoint"), true);
  pretrain->add_option("--init", flags.init, "encoder checkpoint to start from");
  pretrain->add_option("--sweep", flags.sweep, "comma-separated mask ratios: run a mask-ratio sweep instead");
  auto* finetune = common(app.add_subcommand("finetune", "segmentation fine-tuning"), true);
  finetune->add_option("--init", flags.init, "encoder or model checkpoint")->check(CLI::ExistingFile);
  auto* eval = common(app.add_subcommand("eval", "per-class IoU and mIoU on the test split"), true);
  eval->add_option("--init", flags.init, "model checkpoint")->check(CLI::ExistingFile);
  auto* profile = common(app.add_subcommand("profile", "AC/MAC counts, energy and latency per layer"), true);
  profile->add_option("--init", flags.init, "model or encoder checkpoint")->check(CLI::ExistingFile);
  auto* grad = common(app.add_subcommand("gradcheck", "finite-difference gradient checks"), false);
  grad->add_option("--fragment", flags.fragment, "single fragment name");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  try {
    if (*synth) return cmd_synth(flags);
    if (*pretrain) return cmd_pretrain(flags);
    if (*finetune) return cmd_finetune(flags);
    if (*eval) return cmd_eval(flags);
    if (*profile) return cmd_profile(flags);
    if (*grad) return cmd_gradcheck(flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
