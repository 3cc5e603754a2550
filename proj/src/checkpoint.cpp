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

#include "spikeseg/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <map>

#include "json.hpp"

namespace spikeseg {

namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'S', 'P', 'K', 'C'};

json config_to_json(const EncoderConfig& c) {
  return {{"variant", c.variant},
          {"base_channels", c.base_channels},
          {"stage4_channels", c.stage4_channels},
          {"depths", {c.stage1_pre_blocks, c.stage1_blocks, c.stage2_blocks, c.stage3_blocks, c.stage4_blocks}},
          {"sep_expansion", c.sep_expansion},
          {"channel_ratio", c.channel_ratio},
          {"mlp_ratio", c.mlp_ratio},
          {"u_th", c.spikes.u_th},
          {"surrogate_width", c.spikes.width},
          {"init_gain", c.init.gain}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.variant = j.at("variant").get<std::string>();
  c.base_channels = j.at("base_channels").get<int>();
  c.stage4_channels = j.at("stage4_channels").get<int>();
  const auto d = j.at("depths").get<std::vector<int>>();
  if (d.size() != 5) throw IoError("checkpoint manifest: depths must have 5 entries");
  c.stage1_pre_blocks = d[0];
  c.stage1_blocks = d[1];
  c.stage2_blocks = d[2];
  c.stage3_blocks = d[3];
  c.stage4_blocks = d[4];
  c.sep_expansion = j.at("sep_expansion").get<int>();
  c.channel_ratio = j.at("channel_ratio").get<double>();
  c.mlp_ratio = j.at("mlp_ratio").get<int>();
  c.spikes.u_th = j.at("u_th").get<double>();
  c.spikes.width = j.at("surrogate_width").get<double>();
  c.init.gain = j.at("init_gain").get<double>();
  c.validate();
  return c;
}

json read_manifest(std::istream& is, const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4))
    throw IoError("'" + path + "' is not a checkpoint (bad magic)");
  unsigned char len_bytes[4];
  if (!is.read(reinterpret_cast<char*>(len_bytes), 4)) throw IoError("'" + path + "': truncated header");
  const std::uint32_t len = static_cast<std::uint32_t>(len_bytes[0]) | (static_cast<std::uint32_t>(len_bytes[1]) << 8) |
                            (static_cast<std::uint32_t>(len_bytes[2]) << 16) |
                            (static_cast<std::uint32_t>(len_bytes[3]) << 24);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError("'" + path + "': truncated manifest");
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw IoError("'" + path + "': bad manifest: " + e.what());
  }
}

CheckpointInfo info_from(const json& m, const std::string& path) {
  try {
    CheckpointInfo info;
    info.kind = m.at("kind").get<std::string>();
    info.encoder = config_from_json(m.at("encoder"));
    for (const auto& p : m.at("params")) info.names.push_back(p.at("name").get<std::string>());
    return info;
  } catch (const json::exception& e) {
    throw IoError("'" + path + "': bad manifest: " + e.what());
  }
}

}  // namespace

void save_params(const std::string& path, const ParamList& params, const std::string& kind,
                 const EncoderConfig& enc_cfg) {
  json m;
  m["format"] = 1;
  m["kind"] = kind;
  m["encoder"] = config_to_json(enc_cfg);
  m["params"] = json::array();
  for (const Param* p : params) m["params"].push_back({{"name", p->name}, {"dims", p->value.dims()}});
  const std::string text = m.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  const auto len = static_cast<std::uint32_t>(text.size());
  const unsigned char lb[4] = {static_cast<unsigned char>(len), static_cast<unsigned char>(len >> 8),
                               static_cast<unsigned char>(len >> 16), static_cast<unsigned char>(len >> 24)};
  os.write(reinterpret_cast<const char*>(lb), 4);
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Param* p : params) write_tensor(os, p->value, DType::kF64);
  if (!os) throw IoError("write to '" + path + "' failed");
}

CheckpointInfo read_checkpoint_info(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  return info_from(read_manifest(is, path), path);
}

CheckpointInfo load_params(const std::string& path, const ParamList& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path + "'");
  const CheckpointInfo info = info_from(read_manifest(is, path), path);
  std::map<std::string, PotentialTensor> stored;
  for (const auto& n : info.names) {
    AnyTensor t = read_tensor(is);
    if (!std::holds_alternative<PotentialTensor>(t)) throw IoError("'" + path + "': parameter " + n + " is not real");
    stored[n] = std::get<PotentialTensor>(std::move(t));
  }
  for (Param* p : params) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw IoError("'" + path + "' has no parameter " + p->name);
    if (it->second.dims() != p->value.dims())
      throw IoError("'" + path + "': " + p->name + " has shape " + dims_to_string(it->second.dims()) + ", expected " +
                    dims_to_string(p->value.dims()));
    p->value = it->second;
  }
  return info;
}

void save_encoder(const std::string& path, Encoder& enc) { save_params(path, enc.params(), "encoder", enc.config()); }

Encoder load_encoder(const std::string& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  Encoder enc(info.encoder, 0);
  load_params(path, enc.params());
  return enc;
}

}  // namespace spikeseg
