#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "attnmark/types.hpp"

namespace attnmark::media {

enum class Split { train, val, test };
enum class Format { mjpeg_avi, png_frames };

std::string to_string(Split split);
Split split_from_string(const std::string& name);
std::string to_string(Format format);
Format format_from_string(const std::string& name);

/// One clip of a corpus: either a file on disk (relative to the manifest) or a
/// procedural recipe seed.
struct ManifestEntry {
  std::string id;
  std::string path;
  std::optional<std::uint64_t> recipe_seed;
  std::size_t frames = 0;
  std::size_t width = 0;
  std::size_t height = 0;
  Split split = Split::train;
};

struct CorpusManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;

  /// Unique ids, positive shapes, and a path or recipe per entry.
  void validate() const;
  std::vector<ManifestEntry> in_split(Split split) const;

  std::string to_json() const;
  static CorpusManifest from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static CorpusManifest load(const std::filesystem::path& path);
};

/// Procedural clip: a moving gradient or band-limited field background with
/// translating textured rectangles. Pure function of its arguments.
VideoClip synth_clip(std::uint64_t seed, std::size_t frames, std::size_t width, std::size_t height);

/// Recipe-only manifest of n_clips procedural clips, split 70/15/15 with at
/// least one validation and one test clip.
CorpusManifest synth_corpus(std::uint64_t seed, std::size_t n_clips, std::size_t frames, std::size_t width,
                            std::size_t height);

/// Materializes an entry; `base` resolves relative paths.
VideoClip load_entry(const ManifestEntry& entry, const std::filesystem::path& base);

/// First `frames` frames, center-cropped to the target aspect and resized to
/// (width, height). Accepts an MJPEG .avi file or a directory of PNG frames.
VideoClip load_clip(const std::filesystem::path& path, std::size_t frames, std::size_t width, std::size_t height);
/// Every frame at native resolution.
VideoClip load_clip(const std::filesystem::path& path);

/// 8-bit quantization, then MJPEG-in-AVI at `quality` (4:4:4 unless
/// `subsample_chroma`) or lossless PNG frames in a directory.
void save_clip(const VideoClip& clip, const std::filesystem::path& path, Format format, int quality = 90,
               bool subsample_chroma = false);

/// Writes one frame as an 8-bit PNG (values in [-1, 1]).
void save_frame_png(const Tensor<float>& frame, const std::filesystem::path& path);

/// Raw MJPEG AVI container access.
void write_mjpeg_avi(const std::filesystem::path& path, const std::vector<std::vector<std::uint8_t>>& jpeg_frames,
                     std::size_t width, std::size_t height, std::uint32_t fps = 25);
std::vector<std::vector<std::uint8_t>> read_mjpeg_avi(const std::filesystem::path& path);

}  // namespace attnmark::media
