#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnmark/layers.hpp"
#include "attnmark/types.hpp"

namespace attnmark {

/// Largest per-pixel perturbation the encoder and adversary may apply.
inline constexpr double kResidualBound = 0.01;

enum class Architecture {
  attention,     // shared attention mask, compact data tensor, attention pooling
  no_attention,  // message repeated across space, plain mean pooling
};

enum class Party { attention, encoder, decoder, critic, adversary };

std::string to_string(Architecture arch);
Architecture architecture_from_string(const std::string& name);
std::string to_string(Party party);

/// The attention module, encoder, decoder, critic and adversary. Video
/// arguments are (B, T, W, H, 3) tensors; messages are (B, D) with entries in
/// {0, 1}. All forward passes are differentiable.
template <class T>
class WatermarkModel {
 public:
  WatermarkModel(std::size_t data_dim, Architecture arch = Architecture::attention, std::uint64_t seed = 0);
  WatermarkModel(const WatermarkModel&) = delete;
  WatermarkModel& operator=(const WatermarkModel&) = delete;
  WatermarkModel(WatermarkModel&&) noexcept = default;
  WatermarkModel& operator=(WatermarkModel&&) noexcept = default;

  std::size_t data_dim() const { return data_dim_; }
  Architecture architecture() const { return arch_; }
  bool training() const { return training_; }
  void set_training(bool training) { training_ = training; }

  /// Per-pixel distribution over the D message dimensions, (B, T, W, H, D).
  Var<T> attention(const Var<T>& video);
  /// Mask-weighted message at every pixel, (B, T, W, H, 1).
  Var<T> compact_data(const Var<T>& mask, const Var<T>& bits);
  /// Watermarked video, clamped to [-1, 1], within kResidualBound of the input.
  Var<T> encode(const Var<T>& video, const Var<T>& bits);
  /// Encoder residual before scaling: the c in video + 0.01 tanh(c).
  Var<T> encoder_features(const Var<T>& video, const Var<T>& bits);
  /// Message logits (B, D). Reads only the given video.
  Var<T> decode(const Var<T>& video);
  /// Unbounded realism score per clip, (B, 1).
  Var<T> critic(const Var<T>& video);
  /// Watermark removal attempt, bounded like the encoder.
  Var<T> adversary(const Var<T>& video);

  std::vector<NamedParam<T>> parameters(Party party);
  std::vector<NamedParam<T>> parameters();
  std::vector<NamedBuffer<T>> buffers();
  std::size_t parameter_count();

  void set_frozen(Party party, bool frozen);
  void zero_grad();

  ConvBlock<T> attention_in, attention_out;
  ConvBlock<T> encoder_in, encoder_out;
  ConvBlock<T> decoder_in, decoder_out;
  ConvBlock<T> critic_in, critic_mid;
  Linear<T> critic_head;
  ConvBlock<T> adversary_in, adversary_out;

 private:
  std::size_t data_dim_;
  Architecture arch_;
  bool training_ = true;
};

/// Bit d is 1 iff logit d > 0.
BitMessage predict_bits(std::span<const float> logits);

/// Batch-of-one conveniences on validated clips; the model is switched to
/// inference mode.
VideoClip encode_clip(WatermarkModel<float>& model, const VideoClip& clip, const BitMessage& message);
std::vector<float> decode_clip(WatermarkModel<float>& model, const VideoClip& clip);
Tensor<float> attention_mask(WatermarkModel<float>& model, const VideoClip& clip);
float critic_score(WatermarkModel<float>& model, const VideoClip& clip);
VideoClip adversary_clip(WatermarkModel<float>& model, const VideoClip& clip);

}  // namespace attnmark
