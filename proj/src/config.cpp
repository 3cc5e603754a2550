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

#include "spikeseg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <iomanip>
#include <functional>
#include <map>
#include <sstream>

namespace spikeseg {

namespace {

namespace pt = boost::property_tree;

// Every key is bound to a field through a setter and a getter so parsing,
// validation of unknown keys and formatting share one table.
struct Binding {
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};
using Table = std::map<std::string, std::map<std::string, Binding>>;

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ValueError("config key '" + key + "': expected a boolean, got '" + text + "'");
  } else {
    is >> v;
    if (is.fail() || !(is >> std::ws).eof())
      throw ValueError("config key '" + key + "': cannot parse '" + text + "'");
  }
  return v;
}

template <typename T>
Binding bind(const std::string& key, T& field) {
  return {[&field, key](const std::string& s) { field = parse_value<T>(key, s); },
          [&field] {
            std::ostringstream os;
            if constexpr (std::is_same_v<T, bool>)
              os << (field ? "true" : "false");
            else
              os << std::setprecision(17) << field;
            return os.str();
          }};
}

Binding bind_string(std::string& field) {
  return {[&field](const std::string& s) { field = s; }, [&field] { return field; }};
}

Table table(RunConfig& c) {
  Table t;
  t["run"]["seed"] = bind("run.seed", c.seed);
  auto& m = t["model"];
  m["variant"] = bind_string(c.variant);
  m["head_channels"] = bind("model.head_channels", c.head.head_channels);
  m["classes"] = bind("model.classes", c.head.classes);
  m["z_levels"] = bind("model.z_levels", c.head.z_levels);
  m["memory_capacity"] = bind("model.memory_capacity", c.head.memory_capacity);
  m["focal_gamma"] = bind("model.focal_gamma", c.head.focal_gamma);
  m["init_gain"] = bind("model.init_gain", c.init_gain);
  auto& d = t["data"];
  d["source"] = bind_string(c.data_source);
  d["dir"] = bind_string(c.data_dir);
  d["height"] = bind("data.height", c.synth.height);
  d["width"] = bind("data.width", c.synth.width);
  d["frames"] = bind("data.frames", c.synth.frames);
  d["train_clips"] = bind("data.train_clips", c.train_clips);
  d["test_clips"] = bind("data.test_clips", c.test_clips);
  d["unlabeled_clips"] = bind("data.unlabeled_clips", c.unlabeled_clips);
  d["blobs"] = bind("data.blobs", c.synth.blobs);
  d["radius_min"] = bind("data.radius_min", c.synth.radius_min);
  d["radius_max"] = bind("data.radius_max", c.synth.radius_max);
  d["speed_max"] = bind("data.speed_max", c.synth.speed_max);
  d["deform"] = bind("data.deform", c.synth.deform);
  d["occluders"] = bind("data.occluders", c.synth.occluders);
  d["noise"] = bind("data.noise", c.synth.noise);
  d["area_fraction"] = bind("data.area_fraction", c.synth.area_fraction);
  auto& p = t["pretrain"];
  p["steps"] = bind("pretrain.steps", c.pretrain.steps);
  p["batch"] = bind("pretrain.batch", c.pretrain.batch);
  p["lr"] = bind("pretrain.lr", c.pretrain.lr);
  p["weight_decay"] = bind("pretrain.weight_decay", c.pretrain.weight_decay);
  p["mask_ratio"] = bind("pretrain.mask_ratio", c.pretrain_loss.mask_ratio);
  p["lambda_kd"] = bind("pretrain.lambda_kd", c.pretrain_loss.lambda_kd);
  p["kd_unmasked_only"] = bind("pretrain.kd_unmasked_only", c.pretrain_loss.kd_unmasked_only);
  p["teacher"] = bind_string(c.teacher);
  p["teacher_channels"] = bind("pretrain.teacher_channels", c.teacher_channels);
  p["teacher_dir"] = bind_string(c.teacher_dir);
  auto& f = t["finetune"];
  f["steps"] = bind("finetune.steps", c.finetune.steps);
  f["batch"] = bind("finetune.batch", c.finetune.batch);
  f["lr"] = bind("finetune.lr", c.finetune.lr);
  f["weight_decay"] = bind("finetune.weight_decay", c.finetune.weight_decay);
  f["freeze_encoder"] = bind("finetune.freeze_encoder", c.freeze_encoder);
  return t;
}

// read_ini only treats whole-line comments; drop "value ; note" tails too.
std::string strip_inline_comment(const std::string& v) {
  std::size_t cut = v.size();
  for (std::size_t i = 1; i < v.size(); ++i)
    if ((v[i] == ';' || v[i] == '#') && (v[i - 1] == ' ' || v[i - 1] == '\t')) {
      cut = i;
      break;
    }
  const std::size_t end = v.find_last_not_of(" \t", cut == 0 ? 0 : cut - 1);
  return end == std::string::npos ? std::string() : v.substr(0, end + 1);
}

RunConfig from_tree(const pt::ptree& tree) {
  RunConfig c;
  Table t = table(c);
  for (const auto& [section, keys] : tree) {
    auto s = t.find(section);
    if (s == t.end()) throw ValueError("unknown config section [" + section + "]");
    if (!keys.data().empty()) throw ValueError("config key '" + section + "' is outside any section");
    for (const auto& [key, value] : keys) {
      auto b = s->second.find(key);
      if (b == s->second.end()) throw ValueError("unknown config key '" + section + "." + key + "'");
      b->second.set(strip_inline_comment(value.data()));
    }
  }
  // The class count lives under [model] and drives the generator too.
  c.synth.classes = c.head.classes;
  c.validate();
  return c;
}

}  // namespace

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e = EncoderConfig::from_variant(variant);
  e.init.gain = init_gain;
  return e;
}

void RunConfig::validate() const {
  encoder_config().validate();
  head.validate();
  if (!(init_gain > 0.0)) throw ValueError("init_gain must be > 0");
  if (data_source != "synth" && data_source != "dir") throw ValueError("data.source must be 'synth' or 'dir'");
  if (data_source == "dir" && data_dir.empty()) throw ValueError("data.dir is required when data.source = dir");
  if (data_source == "synth") {
    synth.validate();
    if (synth.classes != head.classes) throw ValueError("data and model class counts differ");
  }
  if (train_clips < 1 || test_clips < 1) throw ValueError("clip counts must be >= 1");
  if (unlabeled_clips < 0) throw ValueError("unlabeled clip count must be >= 0");
  for (const StageSchedule* s : {&pretrain, &finetune}) {
    if (s->steps < 0 || s->batch < 1) throw ValueError("steps must be >= 0 and batch >= 1");
    if (!(s->lr > 0.0) || !(s->weight_decay >= 0.0)) throw ValueError("lr must be > 0 and weight_decay >= 0");
  }
  if (!(pretrain_loss.mask_ratio > 0.0 && pretrain_loss.mask_ratio < 1.0)) throw ValueError("mask_ratio must be in (0,1)");
  if (!(pretrain_loss.lambda_kd >= 0.0)) throw ValueError("lambda_kd must be >= 0");
  if (teacher != "random" && teacher != "zero" && teacher != "fixture")
    throw ValueError("pretrain.teacher must be random, zero or fixture");
  if (teacher == "fixture" && teacher_dir.empty()) throw ValueError("pretrain.teacher_dir is required for a fixture teacher");
  if (teacher_channels < 1) throw ValueError("teacher_channels must be >= 1");
}

RunConfig parse_config(const std::string& text) {
  std::istringstream is(text);
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValueError(std::string("config: ") + e.what());
  }
  return from_tree(tree);
}

RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const RunConfig& cfg) {
  RunConfig c = cfg;
  Table t = table(c);
  std::ostringstream os;
  for (const char* section : {"run", "model", "data", "pretrain", "finetune"}) {
    os << '[' << section << "]\n";
    for (const auto& [key, b] : t.at(section)) os << key << " = " << b.get() << '\n';
    os << '\n';
  }
  return os.str();
}

}  // namespace spikeseg
