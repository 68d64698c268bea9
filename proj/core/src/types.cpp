#include "attnmark/types.hpp"

#include <algorithm>
#include <cctype>

namespace attnmark {

VideoClip::VideoClip(Tensor<float> frames) : frames_(std::move(frames)) {
  require(frames_.rank() == 4 && frames_.dim(3) == kChannels,
          "video clip must have shape (T,W,H,3), got " + shape_string(frames_.shape()));
  require(frames_.dim(0) >= 1 && frames_.dim(1) >= 1 && frames_.dim(2) >= 1, "video clip dimensions must be positive");
  for (float v : frames_.values())
    require(std::isfinite(v) && v >= -1.0f && v <= 1.0f, "video clip values must lie in [-1, 1]");
}

VideoClip VideoClip::clamped(Tensor<float> frames) {
  for (auto& v : frames.values()) v = std::isfinite(v) ? std::clamp(v, -1.0f, 1.0f) : 0.0f;
  return VideoClip(std::move(frames));
}

BitMessage::BitMessage(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_) require(b == 0 || b == 1, "message bits must be 0 or 1");
}

BitMessage BitMessage::random(std::size_t width, Rng& rng) {
  std::vector<std::uint8_t> bits(width);
  for (auto& b : bits) b = rng.coin() ? 1 : 0;
  return BitMessage(std::move(bits));
}

BitMessage BitMessage::from_hex(const std::string& hex, std::size_t width) {
  require(width % 4 == 0 && hex.size() * 4 == width,
          "message \"" + hex + "\" has " + std::to_string(hex.size() * 4) + " bits, expected " + std::to_string(width));
  std::vector<std::uint8_t> bits;
  bits.reserve(width);
  for (char ch : hex) {
    const int c = std::toupper(static_cast<unsigned char>(ch));
    int nibble = -1;
    if (c >= '0' && c <= '9') nibble = c - '0';
    if (c >= 'A' && c <= 'F') nibble = c - 'A' + 10;
    require(nibble >= 0, std::string("invalid hex digit '") + ch + "'");
    for (int shift = 3; shift >= 0; --shift) bits.push_back(static_cast<std::uint8_t>((nibble >> shift) & 1));
  }
  return BitMessage(std::move(bits));
}

BitMessage BitMessage::complement() const {
  std::vector<std::uint8_t> bits(bits_);
  for (auto& b : bits) b ^= 1;
  return BitMessage(std::move(bits));
}

BitMessage BitMessage::flipped(std::size_t index) const {
  require(index < bits_.size(), "bit index out of range");
  std::vector<std::uint8_t> bits(bits_);
  bits[index] ^= 1;
  return BitMessage(std::move(bits));
}

std::string BitMessage::to_hex() const {
  static constexpr char kDigits[] = "0123456789ABCDEF";
  std::string out;
  for (std::size_t i = 0; i + 3 < bits_.size(); i += 4)
    out += kDigits[(bits_[i] << 3) | (bits_[i + 1] << 2) | (bits_[i + 2] << 1) | bits_[i + 3]];
  return out;
}

bool supported_width(std::size_t width) { return width == 32 || width == 64; }

}  // namespace attnmark
