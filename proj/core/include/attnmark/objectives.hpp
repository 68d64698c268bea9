#pragma once

#include <span>
#include <utility>

#include "attnmark/model.hpp"
#include "attnmark/noise.hpp"

namespace attnmark::loss {

/// How the non-differentiable MJPEG term reaches the encoder.
enum class LdStarMode {
  straight_through,  // encoder sees the round trip as the identity
  decoder_only,      // encoder receives no gradient from this term
};

std::string to_string(LdStarMode mode);
LdStarMode ld_star_mode_from_string(const std::string& name);

struct LossWeights {
  double d = 1.0;
  double d_star = 1.0;
  double c = 0.1;
  double a = 0.1;
};

/// Scalar loss values of one training step. Terms that were not computed
/// stay at zero.
struct LossBundle {
  double l_d = 0;
  double l_d_star = 0;
  double l_c = 0;
  double l_a = 0;
  double l_w = 0;
  double l_r = 0;
};

/// Mean over bits of softplus(z) - m z.
template <class T>
Var<T> message_loss(const Var<T>& logits, const Tensor<T>& bits);
double message_loss(std::span<const std::uint8_t> bits, std::span<const double> logits);

/// Cross-entropy after the differentiable noise layers.
template <class T>
Var<T> l_d(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits, noise::NoisePipeline& noise);

/// Cross-entropy after an MJPEG round trip of the watermarked frames.
template <class T>
Var<T> l_d_star(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits, int quality,
                LdStarMode mode, noise::ChromaSubsampling subsampling = noise::ChromaSubsampling::yuv444);

/// Critic scores of source and watermarked clips from one joint pass, so
/// training-mode batch statistics are shared by both halves.
template <class T>
std::pair<Var<T>, Var<T>> critic_scores(WatermarkModel<T>& model, const Var<T>& source, const Var<T>& watermarked);

/// Mean critic score of the watermarked clips (the encoder minimizes it).
template <class T>
Var<T> l_c(WatermarkModel<T>& model, const Var<T>& source, const Var<T>& watermarked);

/// mean C(source) - mean C(watermarked) (the critic minimizes it).
template <class T>
Var<T> l_w(WatermarkModel<T>& model, const Var<T>& source, const Var<T>& watermarked);

/// Cross-entropy after the adversary tampered with the watermarked clips.
template <class T>
Var<T> l_a(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits);

/// Negated l_a, the adversary's objective.
template <class T>
Var<T> l_r(WatermarkModel<T>& model, const Var<T>& watermarked, const Tensor<T>& bits);

/// Weighted sum of the encoder/decoder terms.
double encoder_decoder_objective(const LossBundle& bundle, const LossWeights& weights);

}  // namespace attnmark::loss
