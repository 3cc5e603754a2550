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

#include "spikeseg/pretrain.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "spikeseg/losses.hpp"

namespace spikeseg {

namespace {

constexpr double kDecoderStd = 0.02;

std::string sub(const std::string& name, const std::string& leaf) {
  return name.empty() ? std::string() : name + "." + leaf;
}

Param zeros(const std::string& name, Dims d) { return Param(name, PotentialTensor(std::move(d))); }
Param ones(const std::string& name, Dims d) { return Param(name, PotentialTensor::filled(std::move(d), 1.0)); }

void check_keep(const Dims& x, const PotentialTensor& keep, const char* what) {
  const Dims& k = keep.dims();
  if (x.size() != 4 || k.size() != 4 || k[0] != x[0] || k[1] != x[1] || k[2] != x[2] || k[3] != 1)
    throw ShapeError(std::string(what) + ": keep map " + dims_to_string(k) + " does not match " + dims_to_string(x));
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a combined word.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void DecoderConfig::validate() const {
  if (depth < 1 || dim < 1 || heads < 1 || mlp_ratio < 1 || patch < 1) throw ValueError("invalid decoder geometry");
  if (dim % heads != 0) throw ValueError("decoder width must be divisible by the head count");
  if (frames < 1 || grid_h < 1 || grid_w < 1) throw ValueError("invalid decoder token grid");
}

DecoderConfig DecoderConfig::for_encoder(const EncoderConfig& enc, const Shape4& clip) {
  clip.validate_encoder_input();
  DecoderConfig d;
  d.dim = enc.stage4_channels;
  d.heads = enc.variant == "tiny" ? 4 : 8;
  d.frames = clip.t;
  d.grid_h = clip.h / 16;
  d.grid_w = clip.w / 16;
  return d;
}

MaskEmbedding::MaskEmbedding(int dim, Rng& rng) : m("mask_emb", trunc_normal({dim}, kDecoderStd, rng)) {}

PotentialTensor fill_masked(const PotentialTensor& u4, const PotentialTensor& keep, const PotentialTensor& m) {
  check_keep(u4.dims(), keep, "fill_masked");
  const int D = u4.dim(3);
  if (m.rank() != 1 || m.dim(0) != D)
    throw ShapeError("mask embedding " + dims_to_string(m.dims()) + " does not match width " + std::to_string(D));
  PotentialTensor out(u4.dims());
  for (std::size_t s = 0; s < keep.numel(); ++s)
    for (int c = 0; c < D; ++c) {
      const std::size_t i = s * D + c;
      out[i] = keep[s] * u4[i] + (1.0 - keep[s]) * m[static_cast<std::size_t>(c)];
    }
  return out;
}

namespace ops {

Var fill_masked(Var u4, const PotentialTensor& keep, Var m) {
  Tape& tp = *u4.tape;
  PotentialTensor out = spikeseg::fill_masked(u4.value(), keep, m.value());
  const int D = u4.dims()[3];
  auto kc = std::make_shared<const PotentialTensor>(keep);
  return tp.emit(std::move(out), {u4, m}, [u4, m, kc, D](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    const bool gu = t.requires_grad(u4), gm = t.requires_grad(m);
    double* du = gu ? t.grad(u4).data() : nullptr;
    double* dm = gm ? t.grad(m).data() : nullptr;
    for (std::size_t s = 0; s < kc->numel(); ++s) {
      const double k = (*kc)[s];
      for (int c = 0; c < D; ++c) {
        const double g = dy[s * D + c];
        if (du) du[s * D + c] += k * g;
        if (dm) dm[c] += (1.0 - k) * g;
      }
    }
  });
}

Var unpatchify(Var tokens, int frames, int grid_h, int grid_w, int patch) {
  Tape& tp = *tokens.tape;
  const Dims& d = tokens.dims();
  const int P = patch * patch * 3;
  if (d.size() != 2 || d[0] != frames * grid_h * grid_w || d[1] != P)
    throw ShapeError("unpatchify: tokens " + dims_to_string(d) + " do not match the grid");
  const int H = grid_h * patch, W = grid_w * patch;
  // index[i] = source token element for output pixel element i.
  auto index = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(frames) * H * W * 3);
  std::size_t i = 0;
  for (int t = 0; t < frames; ++t)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c) {
          const std::size_t tok = (static_cast<std::size_t>(t) * grid_h + y / patch) * grid_w + x / patch;
          (*index)[i++] = tok * P + ((y % patch) * patch + x % patch) * 3 + c;
        }
  const auto& X = tokens.value();
  PotentialTensor out({frames, H, W, 3});
  for (std::size_t j = 0; j < index->size(); ++j) out[j] = X[(*index)[j]];
  return tp.emit(std::move(out), {tokens}, [tokens, index](Tape& t, std::span<const double> dy, const PotentialTensor&) {
    auto& g = t.grad(tokens);
    for (std::size_t j = 0; j < index->size(); ++j) g[(*index)[j]] += dy[j];
  });
}

}  // namespace ops

VitDecoder::VitDecoder(const DecoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int D = cfg_.dim, Hd = cfg_.mlp_ratio * D, P = cfg_.patch * cfg_.patch * 3;
  pos_ = Param("dec.pos", trunc_normal({cfg_.token_count(), D}, kDecoderStd, rng));
  for (int i = 0; i < cfg_.depth; ++i) {
    const std::string n = "dec.blk" + std::to_string(i);
    Block b;
    b.ln1_g = ones(n + ".ln1.g", {D});
    b.ln1_b = zeros(n + ".ln1.b", {D});
    b.qkv_w = Param(n + ".qkv.w", trunc_normal({D, 3 * D}, kDecoderStd, rng));
    b.qkv_b = zeros(n + ".qkv.b", {3 * D});
    b.proj_w = Param(n + ".proj.w", trunc_normal({D, D}, kDecoderStd, rng));
    b.proj_b = zeros(n + ".proj.b", {D});
    b.ln2_g = ones(n + ".ln2.g", {D});
    b.ln2_b = zeros(n + ".ln2.b", {D});
    b.fc1_w = Param(n + ".fc1.w", trunc_normal({D, Hd}, kDecoderStd, rng));
    b.fc1_b = zeros(n + ".fc1.b", {Hd});
    b.fc2_w = Param(n + ".fc2.w", trunc_normal({Hd, D}, kDecoderStd, rng));
    b.fc2_b = zeros(n + ".fc2.b", {D});
    blocks_.push_back(std::move(b));
  }
  ln_g_ = ones("dec.ln.g", {D});
  ln_b_ = zeros("dec.ln.b", {D});
  out_w_ = Param("dec.out.w", trunc_normal({D, P}, kDecoderStd, rng));
  out_b_ = zeros("dec.out.b", {P});
}

Var VitDecoder::forward(Tape& tp, Var tokens, const std::string& name) {
  const Dims& d = tokens.dims();
  if (d.size() != 4 || d[0] != cfg_.frames || d[1] != cfg_.grid_h || d[2] != cfg_.grid_w || d[3] != cfg_.dim)
    throw ShapeError("decoder expects tokens [" + std::to_string(cfg_.frames) + "," + std::to_string(cfg_.grid_h) +
                     "," + std::to_string(cfg_.grid_w) + "," + std::to_string(cfg_.dim) + "], got " +
                     dims_to_string(d));
  auto lin = [&](Var x, Param& w, Param& b, const std::string& leaf) {
    ops::ConvArgs a;
    a.name = sub(name, leaf);
    a.auxiliary = true;
    return ops::linear(x, tp.param(w), tp.param(b), a);
  };
  Var x = ops::add(ops::reshape(tokens, {cfg_.token_count(), cfg_.dim}), tp.param(pos_));
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    Block& b = blocks_[i];
    const std::string n = "blk" + std::to_string(i);
    Var h = ops::layer_norm(x, tp.param(b.ln1_g), tp.param(b.ln1_b));
    Var a = ops::mh_attention(lin(h, b.qkv_w, b.qkv_b, n + ".qkv"), cfg_.heads);
    x = ops::add(x, lin(a, b.proj_w, b.proj_b, n + ".proj"));
    h = ops::layer_norm(x, tp.param(b.ln2_g), tp.param(b.ln2_b));
    h = lin(ops::gelu(lin(h, b.fc1_w, b.fc1_b, n + ".fc1")), b.fc2_w, b.fc2_b, n + ".fc2");
    x = ops::add(x, h);
  }
  x = ops::layer_norm(x, tp.param(ln_g_), tp.param(ln_b_));
  Var px = lin(x, out_w_, out_b_, "out");
  return ops::unpatchify(px, cfg_.frames, cfg_.grid_h, cfg_.grid_w, cfg_.patch);
}

void VitDecoder::collect(ParamList& out) {
  out.push_back(&pos_);
  for (Block& b : blocks_)
    for (Param* p : {&b.ln1_g, &b.ln1_b, &b.qkv_w, &b.qkv_b, &b.proj_w, &b.proj_b, &b.ln2_g, &b.ln2_b, &b.fc1_w,
                     &b.fc1_b, &b.fc2_w, &b.fc2_b})
      out.push_back(p);
  for (Param* p : {&ln_g_, &ln_b_, &out_w_, &out_b_}) out.push_back(p);
}

PotentialTensor vit_decode(VitDecoder& dec, const PotentialTensor& tokens) {
  TapeOptions o;
  o.record = false;
  Tape tp(o);
  return dec.forward(tp, tp.constant(tokens), {}).value();
}

RandomConvTeacher::RandomConvTeacher(int channels, std::uint64_t seed) : channels_(channels) {
  if (channels < 1) throw ValueError("teacher width must be >= 1");
  Rng rng(seed);
  w_ = trunc_normal({16 * 16 * 3, channels}, 1.0 / std::sqrt(16.0 * 16.0 * 3.0), rng);
}

PotentialTensor RandomConvTeacher::features(const std::string&, const PotentialTensor& clip) {
  const Shape4 s = Shape4::from_dims(clip.dims());
  s.validate_encoder_input();
  const int gh = s.h / 16, gw = s.w / 16, C = channels_;
  PotentialTensor out({s.t, gh, gw, C});
  for (int t = 0; t < s.t; ++t)
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) {
        double* o = &out.mutable_data()[((static_cast<std::size_t>(t) * gh + y) * gw + x) * C];
        for (int py = 0; py < 16; ++py)
          for (int pxl = 0; pxl < 16; ++pxl)
            for (int c = 0; c < 3; ++c) {
              const double v = clip.at(t, y * 16 + py, x * 16 + pxl, c);
              const double* wr = &w_.data()[static_cast<std::size_t>((py * 16 + pxl) * 3 + c) * C];
              for (int k = 0; k < C; ++k) o[k] += v * wr[k];
            }
        for (int k = 0; k < C; ++k) o[k] = std::tanh(o[k]);
      }
  return out;
}

PotentialTensor ZeroTeacher::features(const std::string&, const PotentialTensor& clip) {
  const Shape4 s = Shape4::from_dims(clip.dims());
  s.validate_encoder_input();
  return PotentialTensor({s.t, s.h / 16, s.w / 16, channels_});
}

FixtureTeacher::FixtureTeacher(const std::string& dir) : dir_(dir) {
  const std::string path = (std::filesystem::path(dir) / "manifest.json").string();
  std::ifstream is(path);
  if (!is) throw IoError("cannot open teacher manifest '" + path + "'");
  try {
    const auto j = nlohmann::json::parse(is);
    channels_ = j.at("channels").get<int>();
    for (const auto& [id, file] : j.at("clips").items()) files_[id] = file.get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad teacher manifest '" + path + "': " + e.what());
  }
  if (channels_ < 1) throw IoError("teacher manifest '" + path + "': channels must be >= 1");
}

PotentialTensor FixtureTeacher::features(const std::string& clip_id, const PotentialTensor& clip) {
  auto hit = cache_.find(clip_id);
  if (hit == cache_.end()) {
    auto f = files_.find(clip_id);
    if (f == files_.end()) throw IoError("teacher fixture has no features for clip '" + clip_id + "'");
    AnyTensor t = load_tensor((std::filesystem::path(dir_) / f->second).string());
    if (!std::holds_alternative<PotentialTensor>(t)) throw IoError("teacher features must be real-valued");
    hit = cache_.emplace(clip_id, std::get<PotentialTensor>(std::move(t))).first;
  }
  const Shape4 s = Shape4::from_dims(clip.dims());
  const Dims want = {s.t, s.h / 16, s.w / 16, channels_};
  if (hit->second.dims() != want)
    throw ShapeError("teacher features for '" + clip_id + "' are " + dims_to_string(hit->second.dims()) +
                     ", expected " + dims_to_string(want));
  return hit->second;
}

TeacherAdapter::TeacherAdapter(int teacher_channels, int dim, Rng& rng)
    : w("adapter.w", trunc_normal({3, 3, teacher_channels, dim}, 1.0 / std::sqrt(9.0 * teacher_channels), rng)),
      b("adapter.b", PotentialTensor({dim})) {}

Var TeacherAdapter::forward(Tape& tp, Var feats, const std::string& name) {
  ops::ConvArgs a;
  a.name = name;
  a.auxiliary = true;
  return ops::conv2d(feats, tp.param(w), tp.param(b), a);
}

void TeacherAdapter::collect(ParamList& out) {
  out.push_back(&w);
  out.push_back(&b);
}

Var kd_loss(Tape& tp, Var u4, const PotentialTensor& teacher_feats, TeacherAdapter& adapter,
            const PotentialTensor* keep) {
  // The teacher enters as a constant, so no gradient can reach it.
  Var aligned = adapter.forward(tp, tp.constant(teacher_feats));
  if (aligned.dims() != u4.dims())
    throw ShapeError("adapted teacher features " + dims_to_string(aligned.dims()) + " do not match u4 " +
                     dims_to_string(u4.dims()));
  if (!keep) return ops::mse(u4, aligned);
  check_keep(u4.dims(), *keep, "kd_loss");
  double kept = 0.0;
  for (double k : keep->data()) kept += k;
  if (kept <= 0.0) throw ValueError("kd_loss restricted to kept positions, but none are kept");
  const double rescale = static_cast<double>(keep->numel()) / kept;
  return ops::scale(ops::mse(ops::mask_mul(u4, *keep), ops::mask_mul(aligned, *keep)), rescale);
}

double kd_loss(const PotentialTensor& u4, const PotentialTensor& adapted) {
  if (u4.dims() != adapted.dims()) throw ShapeError("kd_loss shapes differ");
  if (u4.numel() == 0) throw ShapeError("kd_loss of empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < u4.numel(); ++i) s += (u4[i] - adapted[i]) * (u4[i] - adapted[i]);
  return s / static_cast<double>(u4.numel());
}

PretrainModel::PretrainModel(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg, int teacher_channels,
                             std::uint64_t seed)
    : encoder_(enc_cfg, seed), decoder_(dec_cfg, mix_seed(seed, 1)) {
  if (dec_cfg.dim != enc_cfg.stage4_channels) throw ValueError("decoder width must equal the stage-4 width");
  Rng rng(mix_seed(seed, 2));
  emb_ = MaskEmbedding(dec_cfg.dim, rng);
  adapter_ = TeacherAdapter(teacher_channels, dec_cfg.dim, rng);
}

ParamList PretrainModel::params() {
  ParamList p = encoder_.params();
  emb_.collect(p);
  decoder_.collect(p);
  adapter_.collect(p);
  return p;
}

PretrainLoss pretrain_loss(Tape& tp, PretrainModel& model, const LabeledClip& clip, const TubeMaskSet& masks,
                           Teacher* teacher, const PretrainConfig& cfg) {
  Encoder::Taps f = model.encoder().forward(tp, tp.constant(clip.clip), &masks);
  const PotentialTensor& keep4 = masks.level(4);
  Var filled = ops::fill_masked(f.u4, keep4, tp.param(model.mask_embedding().m));
  Var recon = model.decoder().forward(tp, filled);
  PretrainLoss l;
  l.recon = ops::recon_loss(recon, clip.clip, masks.level(0));
  if (teacher && cfg.lambda_kd != 0.0) {
    l.kd = kd_loss(tp, f.u4, teacher->features(clip.id, clip.clip), model.adapter(),
                   cfg.kd_unmasked_only ? &keep4 : nullptr);
    l.total = ops::add(l.recon, ops::scale(l.kd, cfg.lambda_kd));
  } else {
    l.kd = tp.constant(PotentialTensor(l.recon.dims()));
    l.total = l.recon;
  }
  return l;
}

PretrainMetrics pretrain_step(PretrainModel& model, const std::vector<const LabeledClip*>& batch, Teacher* teacher,
                              const PretrainConfig& cfg, AdamW& opt, double lr, std::uint64_t step_seed) {
  if (batch.empty()) throw ValueError("empty pretraining batch");
  const ParamList params = model.params();
  zero_grads(params);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  PretrainMetrics m;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LabeledClip& c = *batch[i];
    const TubeMaskSet masks =
        TubeMaskSet::sample(Shape4::from_dims(c.clip.dims()), cfg.mask_ratio, mix_seed(step_seed, i));
    Tape tp;
    PretrainLoss l = pretrain_loss(tp, model, c, masks, teacher, cfg);
    m.recon += l.recon.value()[0] * inv_b;
    if (l.kd.valid()) m.kd += l.kd.value()[0] * inv_b;
    m.total += l.total.value()[0] * inv_b;
    tp.backward(ops::scale(l.total, inv_b));
  }
  opt.step(params, lr);
  return m;
}

}  // namespace spikeseg
