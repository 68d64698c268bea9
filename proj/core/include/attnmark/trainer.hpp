#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "attnmark/config.hpp"
#include "attnmark/evaluation.hpp"
#include "attnmark/optimizer.hpp"

namespace attnmark {

struct Sample {
  VideoClip clip;
  BitMessage message;
};

/// With hamming_pairs, takes batch_size / 2 clips and returns
/// (v1, M1), (v1, ~M1), (v2, M2), ...; otherwise batch_size clips with
/// independent messages. Throws ConfigError on an odd paired batch and
/// ContractError on a wrong clip count.
std::vector<Sample> build_batch(const std::vector<VideoClip>& videos, Rng& rng, const TrainConfig& cfg);

/// Stacks clips and messages of one batch into (B, T, W, H, 3) and (B, D).
Tensor<float> stack_clips(const std::vector<Sample>& batch);
Tensor<float> stack_bits(const std::vector<Sample>& batch);

/// Mirrors every frame along the width axis.
VideoClip flip_horizontal(const VideoClip& clip);

/// Concatenated shuffles of 0..n-1, at least `count` long, so every clip
/// is visited before any repeats.
std::vector<std::size_t> epoch_order(std::size_t n, std::size_t count, Rng& rng);

/// Flips all frames horizontally with probability 0.5, then cuts one random
/// (train_frames, train_width, train_height) window shared by every frame.
/// Throws DataError naming the clip when it is too small.
VideoClip augment(const VideoClip& clip, Rng& rng, const TrainConfig& cfg, const std::string& name = "clip");

/// Model plus one Adam instance per optimized party.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg);
  Trainer(TrainConfig cfg, WatermarkModel<float> model);

  /// Encoder/decoder/attention step, then critic steps with clipping, then
  /// the adversary step. Throws NumericError naming a non-finite loss.
  loss::LossBundle train_step(const std::vector<Sample>& batch);

  /// The phases of train_step on stacked (B, T, W, H, 3) videos and (B, D)
  /// bits. codec_step returns the watermarked batch the other two consume.
  Tensor<float> codec_step(const Tensor<float>& videos, const Tensor<float>& bits, loss::LossBundle& out);
  void critic_step(const Tensor<float>& videos, const Tensor<float>& marked, loss::LossBundle& out);
  void adversary_step(const Tensor<float>& marked, const Tensor<float>& bits, loss::LossBundle& out);

  WatermarkModel<float>& model() { return model_; }
  const TrainConfig& config() const { return cfg_; }
  double lr() const { return codec_opt_.lr(); }
  void set_lr(double lr);

 private:
  void init_optimizers();

  TrainConfig cfg_;
  WatermarkModel<float> model_;
  Adam<float> codec_opt_, critic_opt_, adversary_opt_;
  noise::NoisePipeline noise_;
};

/// EMA-smoothed plateau detector driving the learning-rate decay.
class PlateauSchedule {
 public:
  PlateauSchedule(double lr, double decay, std::size_t patience, double min_delta, double floor, double smoothing);
  /// Feeds one epoch's training loss and returns the learning rate to use next.
  double update(double loss);
  double lr() const { return lr_; }
  double smoothed() const { return smoothed_; }

 private:
  double lr_, decay_, min_delta_, floor_, smoothing_;
  std::size_t patience_, stale_ = 0;
  double smoothed_ = 0, best_ = 0;
  bool started_ = false;
};

struct FitResult {
  WatermarkModel<float> model;
  std::vector<eval::TrainLogRecord> log;
  std::filesystem::path best_checkpoint;
  std::filesystem::path final_checkpoint;
};

/// Loads the training and validation splits named by cfg.corpus (or, when
/// empty, a procedural corpus of 20 clips at 8x64x64 seeded by cfg.seed).
struct Corpus {
  std::vector<eval::NamedClip> train, val, test;
};
Corpus load_corpus(const TrainConfig& cfg);

/// Epoch loop with validation, plateau decay, per-epoch and best checkpoints
/// and a JSON-lines log in cfg.out_dir. `progress` is called after each epoch.
FitResult fit(const TrainConfig& cfg, const std::function<void(const eval::TrainLogRecord&)>& progress = {});
FitResult fit(const TrainConfig& cfg, const Corpus& corpus,
              const std::function<void(const eval::TrainLogRecord&)>& progress = {});

/// fit() with the attention module replaced by message replication.
FitResult baseline_no_attention(TrainConfig cfg, const std::function<void(const eval::TrainLogRecord&)>& progress = {});

}  // namespace attnmark
