#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnmark/rng.hpp"
#include "attnmark/tensor.hpp"

namespace attnmark {

inline constexpr std::size_t kChannels = 3;

/// RGB video of shape (T, W, H, 3) with entries in [-1, 1].
class VideoClip {
 public:
  VideoClip() = default;
  /// Validates shape and range.
  explicit VideoClip(Tensor<float> frames);

  const Tensor<float>& frames() const { return frames_; }
  Tensor<float>& mutable_frames() { return frames_; }
  std::size_t length() const { return frames_.dim(0); }
  std::size_t width() const { return frames_.dim(1); }
  std::size_t height() const { return frames_.dim(2); }

  /// Clamps into [-1, 1] instead of rejecting out-of-range values.
  static VideoClip clamped(Tensor<float> frames);

  friend bool operator==(const VideoClip& a, const VideoClip& b) { return a.frames_ == b.frames_; }

 private:
  Tensor<float> frames_;
};

/// Binary watermark of width D. Bit 0 is the most significant bit of the
/// first hex digit.
class BitMessage {
 public:
  BitMessage() = default;
  explicit BitMessage(std::vector<std::uint8_t> bits);

  static BitMessage random(std::size_t width, Rng& rng);
  static BitMessage zeros(std::size_t width) { return BitMessage(std::vector<std::uint8_t>(width, 0)); }
  /// Uppercase or lowercase hex; length must be width / 4.
  static BitMessage from_hex(const std::string& hex, std::size_t width);

  std::size_t width() const { return bits_.size(); }
  std::uint8_t operator[](std::size_t i) const { return bits_[i]; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  BitMessage complement() const;
  BitMessage flipped(std::size_t index) const;
  std::string to_hex() const;

  template <class T>
  Tensor<T> as_tensor() const {
    Tensor<T> out(Shape{bits_.size()});
    for (std::size_t i = 0; i < bits_.size(); ++i) out[i] = static_cast<T>(bits_[i]);
    return out;
  }

  friend bool operator==(const BitMessage&, const BitMessage&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Message widths accepted by the model.
bool supported_width(std::size_t width);

}  // namespace attnmark
