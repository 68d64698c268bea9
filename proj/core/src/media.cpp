#include "attnmark/media.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attnmark/noise.hpp"
#include "jpeg_codec.hpp"

namespace attnmark::media {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "'");
}

std::string to_string(Format format) { return format == Format::mjpeg_avi ? "mjpeg_avi" : "png_frames"; }

Format format_from_string(const std::string& name) {
  if (name == "mjpeg_avi") return Format::mjpeg_avi;
  if (name == "png_frames") return Format::png_frames;
  throw ConfigError("unknown video format '" + name + "'");
}

void CorpusManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (!ids.insert(e.id).second) throw ConfigError("manifest: duplicate clip id '" + e.id + "'");
    if (e.frames == 0 || e.width == 0 || e.height == 0) throw ConfigError("manifest: clip '" + e.id + "' has an empty shape");
    if (e.path.empty() && !e.recipe_seed) throw ConfigError("manifest: clip '" + e.id + "' has neither path nor recipe");
  }
}

std::vector<ManifestEntry> CorpusManifest::in_split(Split split) const {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [split](const ManifestEntry& e) { return e.split == split; });
  return out;
}

std::string CorpusManifest::to_json() const {
  json doc;
  doc["seed"] = seed;
  doc["entries"] = json::array();
  for (const auto& e : entries) {
    json j{{"id", e.id}, {"frames", e.frames}, {"width", e.width}, {"height", e.height}, {"split", to_string(e.split)}};
    if (!e.path.empty()) j["path"] = e.path;
    if (e.recipe_seed) j["recipe"] = {{"generator", "procedural-v1"}, {"seed", *e.recipe_seed}};
    doc["entries"].push_back(std::move(j));
  }
  return doc.dump(2) + "\n";
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
  CorpusManifest m;
  try {
    const json doc = json::parse(text);
    m.seed = doc.value("seed", std::uint64_t{0});
    for (const auto& j : doc.at("entries")) {
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.frames = j.at("frames").get<std::size_t>();
      e.width = j.at("width").get<std::size_t>();
      e.height = j.at("height").get<std::size_t>();
      e.split = split_from_string(j.at("split").get<std::string>());
      e.path = j.value("path", std::string{});
      if (j.contains("recipe")) e.recipe_seed = j.at("recipe").at("seed").get<std::uint64_t>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

void CorpusManifest::save(const fs::path& path) const {
  std::ofstream out(path);
  out << to_json();
  if (!out) throw DataError("cannot write manifest " + path.string());
}

CorpusManifest CorpusManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

namespace {

constexpr double kTwoPi = 6.283185307179586;

struct Rect {
  double x, y, w, h, vx, vy;
  std::array<double, 3> color_a, color_b;
  double period;
  int pattern;  // 0 stripes, 1 checker, 2 rings
};

std::array<double, 3> random_color(Rng& rng) {
  return {rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)};
}

}  // namespace

VideoClip synth_clip(std::uint64_t seed, std::size_t frames, std::size_t width, std::size_t height) {
  require(frames >= 1 && width >= 1 && height >= 1, "synth_clip: dimensions must be positive");
  Rng rng(seed);
  const int kind = static_cast<int>(seed % 3);
  const double scale = double(std::min(width, height));

  // Background parameters.
  const auto base = random_color(rng);
  std::array<double, 3> amp{rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)};
  const double theta = rng.uniform(0, kTwoPi);
  const double cycles = rng.uniform(0.5, 1.5);
  const double drift = rng.uniform(-0.08, 0.08);
  struct Wave {
    double fx, fy, phase, speed;
    std::array<double, 3> gain;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i)
    waves.push_back({rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(0, kTwoPi), rng.uniform(-0.4, 0.4),
                     {rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25)}});

  std::vector<Rect> rects;
  const int n_rects = kind == 1 ? 2 + int(rng.below(3)) : 1;
  for (int i = 0; i < n_rects; ++i) {
    Rect r;
    r.w = rng.uniform(0.2, 0.45) * double(width);
    r.h = rng.uniform(0.2, 0.45) * double(height);
    r.x = rng.uniform(0, double(width) - r.w);
    r.y = rng.uniform(0, double(height) - r.h);
    r.vx = rng.uniform(-1.5, 1.5);
    r.vy = rng.uniform(-1.5, 1.5);
    r.color_a = random_color(rng);
    r.color_b = random_color(rng);
    r.period = rng.uniform(3, 9);
    r.pattern = int(rng.below(3));
    rects.push_back(r);
  }

  Tensor<float> out(Shape{frames, width, height, kChannels});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t w = 0; w < width; ++w)
      for (std::size_t h = 0; h < height; ++h) {
        const double u = double(w) / scale, v = double(h) / scale;
        std::array<double, 3> px{};
        if (kind == 0) {
          const double s = std::sin(kTwoPi * (cycles * (u * std::cos(theta) + v * std::sin(theta)) + drift * double(t)));
          for (int c = 0; c < 3; ++c) px[c] = base[c] + amp[c] * s;
        } else if (kind == 1) {
          px = base;
        } else {
          px = base;
          for (const auto& wv : waves) {
            const double s = std::sin(kTwoPi * (wv.fx * u + wv.fy * v) + wv.phase + wv.speed * double(t));
            for (int c = 0; c < 3; ++c) px[c] += wv.gain[c] * s;
          }
        }
        for (const auto& r : rects) {
          const double rx = double(w) - (r.x + r.vx * double(t));
          const double ry = double(h) - (r.y + r.vy * double(t));
          if (rx < 0 || ry < 0 || rx >= r.w || ry >= r.h) continue;
          bool on = false;
          if (r.pattern == 0) on = std::fmod(rx + ry, r.period) < r.period / 2;
          if (r.pattern == 1) on = (int(rx / r.period) + int(ry / r.period)) % 2 == 0;
          if (r.pattern == 2) on = std::fmod(std::hypot(rx - r.w / 2, ry - r.h / 2), r.period) < r.period / 2;
          px = on ? r.color_a : r.color_b;
        }
        for (std::size_t c = 0; c < 3; ++c)
          out[((t * width + w) * height + h) * 3 + c] = static_cast<float>(std::clamp(px[c], -1.0, 1.0));
      }
  return VideoClip(std::move(out));
}

CorpusManifest synth_corpus(std::uint64_t seed, std::size_t n_clips, std::size_t frames, std::size_t width,
                            std::size_t height) {
  require(n_clips >= 3, "synth_corpus: need at least 3 clips");
  const std::size_t n_val = std::max<std::size_t>(1, n_clips * 15 / 100);
  const std::size_t n_test = n_val;
  const std::size_t n_train = n_clips - n_val - n_test;
  CorpusManifest m;
  m.seed = seed;
  for (std::size_t i = 0; i < n_clips; ++i) {
    ManifestEntry e;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%03zu", i);
    e.id = id;
    // Cycle through the three background kinds.
    e.recipe_seed = mix_seed(seed, i) / 3 * 3 + i % 3;
    e.frames = frames;
    e.width = width;
    e.height = height;
    e.split = i < n_train ? Split::train : (i < n_train + n_val ? Split::val : Split::test);
    m.entries.push_back(std::move(e));
  }
  return m;
}

VideoClip load_entry(const ManifestEntry& entry, const fs::path& base) {
  if (entry.path.empty()) return synth_clip(*entry.recipe_seed, entry.frames, entry.width, entry.height);
  const fs::path p = fs::path(entry.path).is_absolute() ? fs::path(entry.path) : base / entry.path;
  try {
    return load_clip(p, entry.frames, entry.width, entry.height);
  } catch (const DataError& e) {
    throw DataError("clip '" + entry.id + "': " + e.what());
  }
}

namespace {

// Decoded frame as floats in (W, H, 3) layout.
Tensor<float> to_frame(const detail::RgbImage& image) {
  Tensor<float> frame(Shape{image.columns, image.rows, 3});
  for (std::size_t w = 0; w < image.columns; ++w)
    for (std::size_t h = 0; h < image.rows; ++h)
      for (std::size_t c = 0; c < 3; ++c)
        frame[(w * image.rows + h) * 3 + c] = noise::dequantize(image.pixels[(h * image.columns + w) * 3 + c]);
  return frame;
}

detail::RgbImage to_image(const float* frame, std::size_t width, std::size_t height) {
  detail::RgbImage image;
  image.columns = width;
  image.rows = height;
  image.pixels.resize(width * height * 3);
  for (std::size_t w = 0; w < width; ++w)
    for (std::size_t h = 0; h < height; ++h)
      for (std::size_t c = 0; c < 3; ++c)
        image.pixels[(h * width + w) * 3 + c] = noise::quantize(frame[(w * height + h) * 3 + c]);
  return image;
}

std::vector<detail::RgbImage> read_images(const fs::path& path) {
  std::vector<detail::RgbImage> images;
  try {
    if (fs::is_directory(path)) {
      std::vector<fs::path> files;
      for (const auto& item : fs::directory_iterator(path))
        if (item.path().extension() == ".png") files.push_back(item.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) images.push_back(detail::decode_png(f.string()));
    } else {
      if (!fs::exists(path)) throw DataError("missing video file " + path.string());
      for (const auto& bytes : read_mjpeg_avi(path)) images.push_back(detail::decode_jpeg(bytes.data(), bytes.size()));
    }
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("corrupt video " + path.string() + ": " + e.what());
  }
  if (images.empty()) throw DataError("video " + path.string() + " contains no frames");
  for (const auto& im : images)
    if (im.columns != images[0].columns || im.rows != images[0].rows)
      throw DataError("video " + path.string() + " has frames of differing size");
  return images;
}

}  // namespace

VideoClip load_clip(const fs::path& path) {
  const auto images = read_images(path);
  const std::size_t width = images[0].columns, height = images[0].rows;
  Tensor<float> out(Shape{images.size(), width, height, 3});
  for (std::size_t t = 0; t < images.size(); ++t) {
    const Tensor<float> frame = to_frame(images[t]);
    std::copy(frame.values().begin(), frame.values().end(), out.data() + t * frame.size());
  }
  return VideoClip(std::move(out));
}

VideoClip load_clip(const fs::path& path, std::size_t frames, std::size_t width, std::size_t height) {
  require(frames >= 1 && width >= 1 && height >= 1, "load_clip: target shape must be positive");
  const VideoClip full = load_clip(path);
  if (full.length() < frames)
    throw DataError("video " + path.string() + " has " + std::to_string(full.length()) + " frames, need " +
                    std::to_string(frames));
  const std::size_t sw = full.width(), sh = full.height();
  // Largest centered window with the target aspect ratio.
  std::size_t cw = sw, ch = sh;
  if (sw * height > sh * width)
    cw = std::max<std::size_t>(1, sh * width / height);
  else
    ch = std::max<std::size_t>(1, sw * height / width);
  const noise::CropWindow win{(sw - cw) / 2, (sh - ch) / 2, cw, ch};
  Tensor<float> head(Shape{frames, sw, sh, 3},
                     std::vector<float>(full.frames().data(), full.frames().data() + frames * sw * sh * 3));
  Var<float> x(std::move(head));
  x = noise::resize_bilinear(noise::crop(x, win), width, height);
  return VideoClip::clamped(x.value());
}

void save_frame_png(const Tensor<float>& frame, const fs::path& path) {
  require(frame.rank() == 3 && frame.dim(2) == 3, "save_frame_png expects a (W,H,3) frame");
  try {
    detail::write_file(path.string(), detail::encode_png(to_image(frame.data(), frame.dim(0), frame.dim(1))));
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

void save_clip(const VideoClip& clip, const fs::path& path, Format format, int quality, bool subsample_chroma) {
  const std::size_t w = clip.width(), h = clip.height(), frame_size = w * h * 3;
  try {
    if (format == Format::png_frames) {
      fs::create_directories(path);
      for (std::size_t t = 0; t < clip.length(); ++t) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.png", t);
        detail::write_file((path / name).string(),
                           detail::encode_png(to_image(clip.frames().data() + t * frame_size, w, h)));
      }
      return;
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::vector<std::vector<std::uint8_t>> jpegs;
    for (std::size_t t = 0; t < clip.length(); ++t)
      jpegs.push_back(detail::encode_jpeg(to_image(clip.frames().data() + t * frame_size, w, h), quality,
                                          !subsample_chroma));
    write_mjpeg_avi(path, jpegs, w, h);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("cannot write video " + path.string() + ": " + e.what());
  }
}

namespace {

class RiffWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u16(std::uint16_t v) {
    bytes.push_back(static_cast<std::uint8_t>(v));
    bytes.push_back(static_cast<std::uint8_t>(v >> 8));
  }
  void fourcc(const char* code) { bytes.insert(bytes.end(), code, code + 4); }
  std::size_t begin_chunk(const char* code) {
    fourcc(code);
    u32(0);
    return bytes.size();
  }
  void end_chunk(std::size_t start) {
    const auto size = static_cast<std::uint32_t>(bytes.size() - start);
    for (int i = 0; i < 4; ++i) bytes[start - 4 + i] = static_cast<std::uint8_t>(size >> (8 * i));
    if (bytes.size() % 2) bytes.push_back(0);
  }
  std::vector<std::uint8_t> bytes;
};

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  if (at + 4 > b.size()) throw DataError("truncated AVI file");
  return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
         std::uint32_t(b[at + 3]) << 24;
}

bool is_code(const std::vector<std::uint8_t>& b, std::size_t at, const char* code) {
  return at + 4 <= b.size() && std::memcmp(b.data() + at, code, 4) == 0;
}

}  // namespace

void write_mjpeg_avi(const fs::path& path, const std::vector<std::vector<std::uint8_t>>& jpeg_frames,
                     std::size_t width, std::size_t height, std::uint32_t fps) {
  std::size_t largest = 0;
  for (const auto& f : jpeg_frames) largest = std::max(largest, f.size());
  const auto n = static_cast<std::uint32_t>(jpeg_frames.size());
  const auto w = static_cast<std::uint32_t>(width), h = static_cast<std::uint32_t>(height);

  RiffWriter out;
  out.fourcc("RIFF");
  out.u32(0);
  out.fourcc("AVI ");
  const std::size_t hdrl = out.begin_chunk("LIST");
  out.fourcc("hdrl");
  const std::size_t avih = out.begin_chunk("avih");
  out.u32(1000000 / fps);
  out.u32(static_cast<std::uint32_t>(largest * fps));
  out.u32(0);
  out.u32(0x10);  // AVIF_HASINDEX
  out.u32(n);
  out.u32(0);
  out.u32(1);
  out.u32(static_cast<std::uint32_t>(largest));
  out.u32(w);
  out.u32(h);
  for (int i = 0; i < 4; ++i) out.u32(0);
  out.end_chunk(avih);
  const std::size_t strl = out.begin_chunk("LIST");
  out.fourcc("strl");
  const std::size_t strh = out.begin_chunk("strh");
  out.fourcc("vids");
  out.fourcc("MJPG");
  out.u32(0);
  out.u16(0);
  out.u16(0);
  out.u32(0);
  out.u32(1);
  out.u32(fps);
  out.u32(0);
  out.u32(n);
  out.u32(static_cast<std::uint32_t>(largest));
  out.u32(0xFFFFFFFF);
  out.u32(0);
  out.u16(0);
  out.u16(0);
  out.u16(static_cast<std::uint16_t>(w));
  out.u16(static_cast<std::uint16_t>(h));
  out.end_chunk(strh);
  const std::size_t strf = out.begin_chunk("strf");
  out.u32(40);
  out.u32(w);
  out.u32(h);
  out.u16(1);
  out.u16(24);
  out.fourcc("MJPG");
  out.u32(w * h * 3);
  for (int i = 0; i < 4; ++i) out.u32(0);
  out.end_chunk(strf);
  out.end_chunk(strl);
  out.end_chunk(hdrl);

  const std::size_t movi = out.begin_chunk("LIST");
  const std::size_t movi_code = out.bytes.size();
  out.fourcc("movi");
  std::vector<std::pair<std::uint32_t, std::uint32_t>> index;
  for (const auto& frame : jpeg_frames) {
    index.emplace_back(static_cast<std::uint32_t>(out.bytes.size() - movi_code), static_cast<std::uint32_t>(frame.size()));
    const std::size_t chunk = out.begin_chunk("00dc");
    out.bytes.insert(out.bytes.end(), frame.begin(), frame.end());
    out.end_chunk(chunk);
  }
  out.end_chunk(movi);
  const std::size_t idx1 = out.begin_chunk("idx1");
  for (const auto& [offset, size] : index) {
    out.fourcc("00dc");
    out.u32(0x10);  // AVIIF_KEYFRAME
    out.u32(offset);
    out.u32(size);
  }
  out.end_chunk(idx1);
  const auto riff_size = static_cast<std::uint32_t>(out.bytes.size() - 8);
  for (int i = 0; i < 4; ++i) out.bytes[4 + i] = static_cast<std::uint8_t>(riff_size >> (8 * i));

  try {
    detail::write_file(path.string(), out.bytes);
  } catch (const std::exception& e) {
    throw DataError(e.what());
  }
}

std::vector<std::vector<std::uint8_t>> read_mjpeg_avi(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open video " + path.string());
  const std::vector<std::uint8_t> b((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!is_code(b, 0, "RIFF") || !is_code(b, 8, "AVI ")) throw DataError(path.string() + " is not an AVI file");
  std::vector<std::vector<std::uint8_t>> frames;
  // Walk top-level chunks, descending into LIST 'movi'.
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = read_u32(b, at + 4);
    if (is_code(b, at, "LIST") && is_code(b, at + 8, "movi")) {
      std::size_t p = at + 12;
      const std::size_t end = std::min(b.size(), at + 8 + std::size_t(size));
      while (p + 8 <= end) {
        const std::uint32_t csize = read_u32(b, p + 4);
        if (p + 8 + csize > b.size()) throw DataError("truncated frame in " + path.string());
        if (b[p + 2] == 'd' && (b[p + 3] == 'c' || b[p + 3] == 'b'))
          frames.emplace_back(b.begin() + std::ptrdiff_t(p + 8), b.begin() + std::ptrdiff_t(p + 8 + csize));
        p += 8 + csize + (csize % 2);
      }
    }
    at += 8 + size + (size % 2);
  }
  if (frames.empty()) throw DataError("no video frames in " + path.string());
  return frames;
}

}  // namespace attnmark::media
