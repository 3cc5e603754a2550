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

#include "spikeseg/clip_io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <regex>

namespace spikeseg {

namespace fs = std::filesystem;

namespace {

constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette = {{
    {0, 0, 0},
    {220, 20, 60},
    {40, 180, 80},
    {50, 90, 220},
    {240, 200, 30},
    {160, 60, 200},
    {30, 200, 200},
    {255, 255, 255},
}};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::string& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  if (!f) {
    if (mode[0] == 'r') throw UnreadableFileError("cannot open '" + path + "'");
    throw IoError("cannot open '" + path + "' for writing");
  }
  return f;
}

// Numbered PNGs in `dir`, sorted by frame number, with the numbers checked
// to be contiguous from 0.
std::vector<fs::path> numbered_pngs(const fs::path& dir, const char* what) {
  static const std::regex kName(R"((\d+)\.png)");
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && std::regex_match(name, m, kName)) found.emplace_back(std::stol(m[1]), e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (found[i].first != static_cast<long>(i))
      throw MissingFrameError(std::string(what) + " " + std::to_string(i) + " missing in '" + dir.string() + "'");
    out.push_back(found[i].second);
  }
  return out;
}

}  // namespace

RgbImage read_png_rgb(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw UnreadableFileError("cannot read PNG '" + path + "': " + img.message);
  img.format = PNG_FORMAT_RGB;
  RgbImage out{static_cast<int>(img.height), static_cast<int>(img.width), {}};
  out.rgb.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw UnreadableFileError("cannot decode PNG '" + path + "': " + img.message);
  }
  return out;
}

void write_png_rgb(const std::string& path, const RgbImage& img) {
  if (img.rgb.size() != static_cast<std::size_t>(img.h) * img.w * 3) throw ShapeError("RGB buffer size mismatch");
  png_image p{};
  p.version = PNG_IMAGE_VERSION;
  p.width = static_cast<png_uint_32>(img.w);
  p.height = static_cast<png_uint_32>(img.h);
  p.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&p, path.c_str(), 0, img.rgb.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path + "': " + p.message);
}

std::vector<std::uint8_t> read_png_index(const std::string& path, int& h, int& w) {
  File f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw UnreadableFileError("libpng init failed for '" + path + "'");
  }
  std::vector<std::uint8_t> out;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableFileError("cannot decode PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_read_info(png, info);
  const int ct = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (ct != PNG_COLOR_TYPE_PALETTE && ct != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw UnreadableFileError("label PNG '" + path + "' is neither palette nor grey");
  }
  if (depth == 16) png_set_strip_16(png);
  if (depth < 8) png_set_packing(png);
  png_read_update_info(png, info);
  h = static_cast<int>(png_get_image_height(png, info));
  w = static_cast<int>(png_get_image_width(png, info));
  out.resize(static_cast<std::size_t>(h) * w);
  rows.resize(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = out.data() + static_cast<std::size_t>(y) * w;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png_index(const std::string& path, const std::vector<std::uint8_t>& index, int h, int w) {
  if (index.size() != static_cast<std::size_t>(h) * w) throw ShapeError("index map size mismatch");
  for (std::uint8_t v : index)
    if (v >= kPalette.size()) throw ValueError("class index " + std::to_string(v) + " exceeds the palette");
  File f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("libpng init failed for '" + path + "'");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot write PNG '" + path + "'");
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_PALETTE,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  std::array<png_color, kPalette.size()> pal;
  for (std::size_t i = 0; i < kPalette.size(); ++i) pal[i] = {kPalette[i][0], kPalette[i][1], kPalette[i][2]};
  png_set_PLTE(png, info, pal.data(), static_cast<int>(pal.size()));
  png_write_info(png, info);
  for (int y = 0; y < h; ++y)
    rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(index.data() + static_cast<std::size_t>(y) * w);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

ClipRecord load_clip(const std::string& dir, int expected_frames) {
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw MissingFrameError("clip directory '" + dir + "' does not exist");
  ClipRecord rec;
  rec.id = root.filename().string();
  if (rec.id.empty()) rec.id = root.parent_path().filename().string();
  const auto frames = numbered_pngs(root, "frame");
  if (frames.empty()) throw MissingFrameError("no frames in '" + dir + "'");
  if (expected_frames > 0 && static_cast<int>(frames.size()) < expected_frames)
    throw MissingFrameError("'" + dir + "' has " + std::to_string(frames.size()) + " frames, expected " +
                            std::to_string(expected_frames));
  for (const auto& p : frames) {
    rec.frames.push_back(read_png_rgb(p.string()));
    const RgbImage& f = rec.frames.back();
    if (f.h != rec.frames.front().h || f.w != rec.frames.front().w)
      throw FrameSizeError("frame '" + p.string() + "' is " + std::to_string(f.h) + "x" + std::to_string(f.w) +
                           ", expected " + std::to_string(rec.frames.front().h) + "x" +
                           std::to_string(rec.frames.front().w));
  }
  const fs::path ldir = root / "labels";
  if (fs::is_directory(ldir)) {
    const auto lfiles = numbered_pngs(ldir, "label");
    if (lfiles.size() < frames.size())
      throw MissingFrameError("label " + std::to_string(lfiles.size()) + " missing in '" + ldir.string() + "'");
    std::vector<std::vector<std::uint8_t>> labels;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      int h = 0, w = 0;
      labels.push_back(read_png_index(lfiles[i].string(), h, w));
      if (h != rec.frames.front().h || w != rec.frames.front().w)
        throw FrameSizeError("label map '" + lfiles[i].string() + "' does not match the frame size");
    }
    rec.labels = std::move(labels);
  }
  rec.validate();
  return rec;
}

void save_clip(const std::string& dir, const ClipRecord& clip) {
  clip.validate();
  const fs::path root(dir);
  fs::create_directories(root);
  auto name = [](std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%03zu.png", i);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < clip.frames.size(); ++i) write_png_rgb((root / name(i)).string(), clip.frames[i]);
  if (clip.labels) {
    fs::create_directories(root / "labels");
    for (std::size_t i = 0; i < clip.labels->size(); ++i)
      write_png_index((root / "labels" / name(i)).string(), (*clip.labels)[i], clip.frames[0].h, clip.frames[0].w);
  }
}

std::vector<ClipRecord> load_clip_set(const std::string& root, int expected_frames) {
  if (!fs::is_directory(root)) throw IoError("clip set '" + root + "' is not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  std::vector<ClipRecord> out;
  for (const auto& d : dirs) out.push_back(load_clip(d.string(), expected_frames));
  return out;
}

}  // namespace spikeseg
