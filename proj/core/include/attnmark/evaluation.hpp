#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnmark/config.hpp"
#include "attnmark/model.hpp"
#include "attnmark/noise.hpp"

namespace attnmark::eval {

/// Fraction of positions where predict_bits(logits) matches the message.
double bit_accuracy(const BitMessage& message, std::span<const float> logits);

/// 10 log10(4 / MSE); nullopt when the clips are identical.
std::optional<double> psnr(const Tensor<float>& a, const Tensor<float>& b);
std::optional<double> psnr(const VideoClip& a, const VideoClip& b);

/// Mean over frames of luminance SSIM with an 11x11 Gaussian window
/// (sigma 1.5), k1 = 0.01, k2 = 0.03 and dynamic range 2. Frames must be at
/// least 11x11; only fully covered window positions are averaged.
double ssim(const VideoClip& a, const VideoClip& b);

struct NamedClip {
  std::string id;
  VideoClip clip;
};

struct EvalOptions {
  int mjpeg_quality = 80;
  noise::ChromaSubsampling chroma = noise::ChromaSubsampling::yuv444;
  double crop_area = 0.8;
  double scale = 0.8;
  bool randomized = false;  // random crop position and scale in [scale, 1]
  bool post_quantization_quality = false;
  std::uint64_t seed = 0;
};

struct ClipReport {
  std::string id;
  std::string message;  // hex
  std::optional<double> psnr;
  double ssim = 0;
  double identity = 0, mjpeg = 0, cropped = 0, scaled = 0;
};

struct RobustnessReport {
  std::string model_id;
  std::size_t data_dim = 0;
  std::optional<double> psnr;  // from the MSE pooled over all clips
  double ssim = 0;
  double identity = 0, mjpeg = 0, cropped = 0, scaled = 0;
  std::vector<ClipReport> clips;
  EvalOptions options;

  std::string to_json() const;
};

/// The message embedded in a clip depends only on (seed, clip id).
BitMessage evaluation_message(std::uint64_t seed, const std::string& clip_id, std::size_t width);

/// Encodes every clip with its seeded message, measures quality against the
/// source and decodes through identity (8-bit quantization), MJPEG,
/// crop-then-MJPEG and scale-then-MJPEG. Throws ConfigError on no clips.
RobustnessReport evaluate_model(WatermarkModel<float>& model, const std::vector<NamedClip>& clips,
                                const EvalOptions& options, const std::string& model_id = "model");

/// Writes watermarked_NNNN.png and residual_xA_NNNN.png per frame, where the
/// residual |encode(v, m) - v| is multiplied by A = 1 / 0.01 so the largest
/// allowed perturbation is white. Returns the largest raw residual.
double residual_images(WatermarkModel<float>& model, const VideoClip& clip, const BitMessage& message,
                       const std::filesystem::path& out_dir);

struct BitFlipResult {
  std::vector<std::size_t> bits;
  std::vector<Tensor<float>> masks;  // |encode(v, m) - encode(v, m ^ e_i)|, (T, W, H, 3)
  std::vector<std::vector<double>> correlation;
};

/// Normalized cross-correlation of two equally sized arrays. Two constant
/// arrays correlate 1 when equal and 0 otherwise.
double normalized_cross_correlation(std::span<const float> a, std::span<const float> b);

/// Difference masks for each flipped bit and their pairwise correlations.
/// When out_dir is given, writes diff_bitI_NNNN.png scaled like residuals.
BitFlipResult bit_flip_difference(WatermarkModel<float>& model, const VideoClip& clip, const BitMessage& message,
                                  const std::vector<std::size_t>& bits,
                                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// One line of a training log.
struct TrainLogRecord {
  std::size_t epoch = 0;
  double seconds = 0;
  double l_d = 0, l_d_star = 0, l_c = 0, l_a = 0, l_w = 0, l_r = 0;
  double identity = 0, mjpeg = 0, cropped = 0, scaled = 0;
  double lr = 0;

  std::string to_json() const;
  static TrainLogRecord from_json(const std::string& line);
};

std::vector<TrainLogRecord> read_log(const std::filesystem::path& path);

struct LabeledLog {
  std::string label;
  std::vector<TrainLogRecord> records;
};

struct ConvergenceSummary {
  std::vector<double> thresholds;
  /// crossing[run][k]: first epoch whose identity accuracy reaches
  /// thresholds[k], if any.
  std::vector<std::vector<std::optional<std::size_t>>> crossing;
  std::vector<std::string> labels;

  std::string to_json() const;
};

/// First epoch whose identity accuracy is at least `threshold`.
std::optional<std::size_t> first_crossing(const std::vector<TrainLogRecord>& records, double threshold);

/// Writes convergence.svg (loss and accuracy against wall-clock time) and
/// convergence.json. Throws ConfigError on an empty list.
ConvergenceSummary convergence_report(const std::vector<LabeledLog>& logs, const std::filesystem::path& out_dir,
                                      const std::vector<double>& thresholds = {0.6, 0.7, 0.8, 0.9});

}  // namespace attnmark::eval
