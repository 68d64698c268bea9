#include "attnmark/objectives.hpp"

#include <cmath>

namespace attnmark::loss {

std::string to_string(LdStarMode mode) {
  return mode == LdStarMode::straight_through ? "straight_through" : "decoder_only";
}

LdStarMode ld_star_mode_from_string(const std::string& name) {
  if (name == "straight_through") return LdStarMode::straight_through;
  if (name == "decoder_only") return LdStarMode::decoder_only;
  throw ConfigError("unknown ldstar_mode '" + name + "'");
}

template <class T>
Var<T> message_loss(const Var<T>& logits, const Tensor<T>& bits) {
  return ops::bce_with_logits(logits, bits);
}

double message_loss(std::span<const std::uint8_t> bits, std::span<const double> logits) {
  require(bits.size() == logits.size() && !bits.empty(), "message_loss: width mismatch");
  double total = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    const double z = logits[i];
    total += std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))) - double(bits[i]) * z;
  }
  return total / double(bits.size());
}

template <class T>
Var<T> l_d(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits, noise::NoisePipeline& noise) {
  return message_loss(model.decode(noise(watermarked)), bits);
}

template <class T>
Var<T> l_d_star(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits, int quality,
                LdStarMode mode, noise::ChromaSubsampling subsampling) {
  Tensor<T> compressed = noise::mjpeg_roundtrip(watermarked.value(), quality, subsampling);
  const Var<T> received = mode == LdStarMode::straight_through ? ops::straight_through(watermarked, std::move(compressed))
                                                               : Var<T>(std::move(compressed));
  return message_loss(model.decode(received), bits);
}

template <class T>
std::pair<Var<T>, Var<T>> critic_scores(WatermarkModel<T>& model, const Var<T>& source, const Var<T>& watermarked) {
  const Var<T> a = ops::as_batch(source);
  const Var<T> b = ops::as_batch(watermarked);
  require(a.shape() == b.shape(), "critic: source and watermarked batches differ in shape");
  const std::size_t n = a.dim(0);
  const Var<T> scores = model.critic(ops::concat_batch(a, b));
  return {ops::slice_batch(scores, 0, n), ops::slice_batch(scores, n, 2 * n)};
}

template <class T>
Var<T> l_c(WatermarkModel<T>& model, const Var<T>& source, const Var<T>& watermarked) {
  return ops::mean_all(critic_scores(model, source, watermarked).second);
}

template <class T>
Var<T> l_w(WatermarkModel<T>& model, const Var<T>& source, const Var<T>& watermarked) {
  const auto [real, marked] = critic_scores(model, source, watermarked);
  return ops::sub(ops::mean_all(real), ops::mean_all(marked));
}

template <class T>
Var<T> l_a(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits) {
  return message_loss(model.decode(model.adversary(watermarked)), bits);
}

template <class T>
Var<T> l_r(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits) {
  return ops::neg(l_a(model, watermarked, bits));
}

double encoder_decoder_objective(const LossBundle& b, const LossWeights& w) {
  require(w.d >= 0 && w.d_star >= 0 && w.c >= 0 && w.a >= 0, "loss weights must be nonnegative");
  return w.d * b.l_d + w.d_star * b.l_d_star + w.c * b.l_c + w.a * b.l_a;
}

#define ATTNMARK_INSTANTIATE(T)                                                                                  \
  template Var<T> message_loss(const Var<T>&, const Tensor<T>&);                                                \
  template Var<T> l_d(WatermarkModel<T>&, const Var<T>&, const Tensor<T>&, noise::NoisePipeline&);              \
  template Var<T> l_d_star(WatermarkModel<T>&, const Var<T>&, const Tensor<T>&, int, LdStarMode,                \
                           noise::ChromaSubsampling);                                                           \
  template std::pair<Var<T>, Var<T>> critic_scores(WatermarkModel<T>&, const Var<T>&, const Var<T>&);           \
  template Var<T> l_c(WatermarkModel<T>&, const Var<T>&, const Var<T>&);                                        \
  template Var<T> l_w(WatermarkModel<T>&, const Var<T>&, const Var<T>&);                                        \
  template Var<T> l_a(WatermarkModel<T>&, const Var<T>&, const Tensor<T>&);                                     \
  template Var<T> l_r(WatermarkModel<T>&, const Var<T>&, const Tensor<T>&);

ATTNMARK_INSTANTIATE(float)
ATTNMARK_INSTANTIATE(double)
#undef ATTNMARK_INSTANTIATE

}  // namespace attnmark::loss
