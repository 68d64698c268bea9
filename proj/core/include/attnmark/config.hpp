#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "attnmark/model.hpp"
#include "attnmark/noise.hpp"
#include "attnmark/objectives.hpp"

namespace attnmark {

/// Everything fit() needs. Read from a flat `key = value` document; every
/// field has one key with the same name.
struct TrainConfig {
  std::size_t batch_size = 12;
  std::size_t data_dim = 32;
  std::size_t epochs = 30;
  std::size_t batches_per_epoch = 0;  // 0: one pass over the training split
  double lr = 1e-3;
  double lr_decay = 0.5;
  std::size_t lr_patience = 5;
  double lr_min_delta = 1e-3;
  double lr_floor = 1e-5;
  double lr_smoothing = 0.3;
  double critic_clip = 0.1;
  std::size_t critic_steps = 1;
  bool critic = true;
  bool adversary = true;
  bool hamming_pairs = true;
  Architecture architecture = Architecture::attention;
  noise::NoiseConfig noise;
  bool ld_star = true;
  loss::LdStarMode ldstar_mode = loss::LdStarMode::straight_through;
  int mjpeg_quality = 80;
  noise::ChromaSubsampling chroma = noise::ChromaSubsampling::yuv444;
  loss::LossWeights weights;
  std::size_t train_frames = 8;
  std::size_t train_width = 64;
  std::size_t train_height = 64;
  std::size_t val_frames = 0;  // 0: whole clips
  std::uint64_t seed = 0;
  std::string corpus;  // manifest path
  std::string out_dir = "run";

  /// Throws ConfigError naming the offending key.
  void validate() const;
  /// Sets one key from its textual value; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  /// `key=value` form used by command-line overrides.
  void apply_override(const std::string& assignment);
  /// Every key in a fixed order; parse(to_text()) reproduces the config.
  std::string to_text() const;
  static std::vector<std::string> keys();

  static TrainConfig parse(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

}  // namespace attnmark
