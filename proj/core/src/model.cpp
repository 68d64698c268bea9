#include "attnmark/model.hpp"

namespace attnmark {

std::string to_string(Architecture arch) { return arch == Architecture::attention ? "attention" : "no_attention"; }

Architecture architecture_from_string(const std::string& name) {
  if (name == "attention") return Architecture::attention;
  if (name == "no_attention") return Architecture::no_attention;
  throw ConfigError("unknown architecture '" + name + "'");
}

std::string to_string(Party party) {
  switch (party) {
    case Party::attention: return "attention";
    case Party::encoder: return "encoder";
    case Party::decoder: return "decoder";
    case Party::critic: return "critic";
    case Party::adversary: return "adversary";
  }
  return "unknown";
}

template <class T>
WatermarkModel<T>::WatermarkModel(std::size_t data_dim, Architecture arch, std::uint64_t seed)
    : data_dim_(data_dim), arch_(arch) {
  require(data_dim >= 1, "message width must be positive");
  Rng rng(seed);
  const std::size_t d = data_dim;
  const std::size_t enc_in = arch == Architecture::attention ? kChannels + 1 : kChannels + d;
  if (arch == Architecture::attention) {
    attention_in = ConvBlock<T>(kChannels, 32, rng);
    attention_out = ConvBlock<T>(32, d, rng);
  }
  encoder_in = ConvBlock<T>(enc_in, 32, rng);
  encoder_out = ConvBlock<T>(32, kChannels, rng);
  decoder_in = ConvBlock<T>(kChannels, 32, rng);
  decoder_out = ConvBlock<T>(32, d, rng, /*plain=*/true);
  critic_in = ConvBlock<T>(kChannels, 16, rng);
  critic_mid = ConvBlock<T>(16, 32, rng);
  critic_head = Linear<T>(32, 1, rng);
  adversary_in = ConvBlock<T>(kChannels, 16, rng);
  adversary_out = ConvBlock<T>(16, kChannels, rng);
}

template <class T>
Var<T> WatermarkModel<T>::attention(const Var<T>& video) {
  require(arch_ == Architecture::attention, "attention: model was built without the attention module");
  const Var<T> x = ops::as_batch(video);
  return ops::softmax_last(attention_out.forward(attention_in.forward(x, training_), training_));
}

template <class T>
Var<T> WatermarkModel<T>::compact_data(const Var<T>& mask, const Var<T>& bits) {
  require(bits.value().last() == data_dim_, "message width " + std::to_string(bits.value().last()) +
                                                " does not match model width " + std::to_string(data_dim_));
  return ops::channel_dot(mask, bits);
}

template <class T>
Var<T> WatermarkModel<T>::encoder_features(const Var<T>& video, const Var<T>& bits) {
  require(bits.value().last() == data_dim_, "message width " + std::to_string(bits.value().last()) +
                                                " does not match model width " + std::to_string(data_dim_));
  const Var<T> x = ops::as_batch(video);
  const Var<T> joined = arch_ == Architecture::attention ? ops::concat_last(x, compact_data(attention(x), bits))
                                                         : ops::concat_broadcast(x, bits);
  return encoder_out.forward(encoder_in.forward(joined, training_), training_);
}

template <class T>
Var<T> WatermarkModel<T>::encode(const Var<T>& video, const Var<T>& bits) {
  const Var<T> x = ops::as_batch(video);
  const Var<T> residual = ops::scale(ops::tanh(encoder_features(x, bits)), static_cast<T>(kResidualBound));
  return ops::clamp(ops::add(x, residual), T{-1}, T{1});
}

template <class T>
Var<T> WatermarkModel<T>::decode(const Var<T>& video) {
  const Var<T> x = ops::as_batch(video);
  const Var<T> per_pixel = decoder_out.forward(decoder_in.forward(x, training_), training_);
  if (arch_ == Architecture::no_attention) return ops::mean_pool(per_pixel);
  return ops::mean_pool(ops::mul(attention(x), per_pixel));
}

template <class T>
Var<T> WatermarkModel<T>::critic(const Var<T>& video) {
  const Var<T> x = ops::as_batch(video);
  const Var<T> features = critic_mid.forward(critic_in.forward(x, training_), training_);
  return critic_head.forward(ops::mean_pool(features));
}

template <class T>
Var<T> WatermarkModel<T>::adversary(const Var<T>& video) {
  const Var<T> x = ops::as_batch(video);
  const Var<T> r = adversary_out.forward(adversary_in.forward(x, training_), training_);
  const Var<T> residual = ops::scale(ops::tanh(r), static_cast<T>(kResidualBound));
  return ops::clamp(ops::add(x, residual), T{-1}, T{1});
}

template <class T>
std::vector<NamedParam<T>> WatermarkModel<T>::parameters(Party party) {
  std::vector<NamedParam<T>> params;
  std::vector<NamedBuffer<T>> ignored;
  switch (party) {
    case Party::attention:
      if (arch_ == Architecture::attention) {
        attention_in.collect("attention.0", params, ignored);
        attention_out.collect("attention.1", params, ignored);
      }
      break;
    case Party::encoder:
      encoder_in.collect("encoder.0", params, ignored);
      encoder_out.collect("encoder.1", params, ignored);
      break;
    case Party::decoder:
      decoder_in.collect("decoder.0", params, ignored);
      decoder_out.collect("decoder.1", params, ignored);
      break;
    case Party::critic:
      critic_in.collect("critic.0", params, ignored);
      critic_mid.collect("critic.1", params, ignored);
      critic_head.collect("critic.head", params);
      break;
    case Party::adversary:
      adversary_in.collect("adversary.0", params, ignored);
      adversary_out.collect("adversary.1", params, ignored);
      break;
  }
  return params;
}

template <class T>
std::vector<NamedParam<T>> WatermarkModel<T>::parameters() {
  std::vector<NamedParam<T>> all;
  for (Party p : {Party::attention, Party::encoder, Party::decoder, Party::critic, Party::adversary}) {
    auto part = parameters(p);
    all.insert(all.end(), part.begin(), part.end());
  }
  return all;
}

template <class T>
std::vector<NamedBuffer<T>> WatermarkModel<T>::buffers() {
  std::vector<NamedParam<T>> ignored;
  std::vector<NamedBuffer<T>> buffers;
  if (arch_ == Architecture::attention) {
    attention_in.collect("attention.0", ignored, buffers);
    attention_out.collect("attention.1", ignored, buffers);
  }
  encoder_in.collect("encoder.0", ignored, buffers);
  encoder_out.collect("encoder.1", ignored, buffers);
  decoder_in.collect("decoder.0", ignored, buffers);
  decoder_out.collect("decoder.1", ignored, buffers);
  critic_in.collect("critic.0", ignored, buffers);
  critic_mid.collect("critic.1", ignored, buffers);
  adversary_in.collect("adversary.0", ignored, buffers);
  adversary_out.collect("adversary.1", ignored, buffers);
  return buffers;
}

template <class T>
std::size_t WatermarkModel<T>::parameter_count() {
  std::size_t total = 0;
  for (auto& p : parameters()) total += p.var.value().size();
  return total;
}

template <class T>
void WatermarkModel<T>::set_frozen(Party party, bool frozen) {
  for (auto& p : parameters(party)) p.var.set_requires_grad(!frozen);
}

template <class T>
void WatermarkModel<T>::zero_grad() {
  for (auto& p : parameters()) p.var.zero_grad();
}

template class WatermarkModel<float>;
template class WatermarkModel<double>;

BitMessage predict_bits(std::span<const float> logits) {
  std::vector<std::uint8_t> bits(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) bits[i] = logits[i] > 0.0f ? 1 : 0;
  return BitMessage(std::move(bits));
}

namespace {

Var<float> clip_var(const VideoClip& clip) {
  Shape shape = clip.frames().shape();
  shape.insert(shape.begin(), 1);
  return Var<float>(clip.frames().reshaped(shape));
}

Tensor<float> unbatch(const Tensor<float>& t) {
  Shape shape(t.shape().begin() + 1, t.shape().end());
  return t.reshaped(shape);
}

Var<float> message_var(const BitMessage& message) {
  return Var<float>(message.as_tensor<float>().reshaped(Shape{1, message.width()}));
}

}  // namespace

VideoClip encode_clip(WatermarkModel<float>& model, const VideoClip& clip, const BitMessage& message) {
  model.set_training(false);
  return VideoClip::clamped(unbatch(model.encode(clip_var(clip), message_var(message)).value()));
}

std::vector<float> decode_clip(WatermarkModel<float>& model, const VideoClip& clip) {
  model.set_training(false);
  return model.decode(clip_var(clip)).value().storage();
}

Tensor<float> attention_mask(WatermarkModel<float>& model, const VideoClip& clip) {
  model.set_training(false);
  return unbatch(model.attention(clip_var(clip)).value());
}

float critic_score(WatermarkModel<float>& model, const VideoClip& clip) {
  model.set_training(false);
  return model.critic(clip_var(clip)).value()[0];
}

VideoClip adversary_clip(WatermarkModel<float>& model, const VideoClip& clip) {
  model.set_training(false);
  return VideoClip::clamped(unbatch(model.adversary(clip_var(clip)).value()));
}

}  // namespace attnmark
