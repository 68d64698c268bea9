#include "attnmark/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "attnmark/checkpoint.hpp"
#include "attnmark/media.hpp"

namespace attnmark {

namespace fs = std::filesystem;

namespace {

constexpr Party kCodecParties[] = {Party::attention, Party::encoder, Party::decoder};

std::vector<NamedParam<float>> codec_parameters(WatermarkModel<float>& model) {
  std::vector<NamedParam<float>> params;
  for (Party p : kCodecParties) {
    auto part = model.parameters(p);
    params.insert(params.end(), part.begin(), part.end());
  }
  return params;
}

void train_only(WatermarkModel<float>& model, std::initializer_list<Party> active) {
  for (Party p : {Party::attention, Party::encoder, Party::decoder, Party::critic, Party::adversary})
    model.set_frozen(p, std::find(active.begin(), active.end(), p) == active.end());
}

void check_finite(const char* name, double value) {
  if (!std::isfinite(value)) throw NumericError(std::string("non-finite ") + name + " (" + std::to_string(value) + ")");
}

VideoClip first_frames(const VideoClip& clip, std::size_t frames) {
  if (frames == 0 || frames >= clip.length()) return clip;
  const std::size_t per = clip.width() * clip.height() * 3;
  Tensor<float> out(Shape{frames, clip.width(), clip.height(), 3});
  std::copy_n(clip.frames().data(), frames * per, out.data());
  return VideoClip(std::move(out));
}

}  // namespace

Tensor<float> stack_clips(const std::vector<Sample>& batch) {
  require(!batch.empty(), "train_step: empty batch");
  const Shape& s = batch.front().clip.frames().shape();
  Tensor<float> out(Shape{batch.size(), s[0], s[1], s[2], s[3]});
  const std::size_t n = shape_size(s);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    require(batch[i].clip.frames().shape() == s, "train_step: clips in a batch must share one shape");
    std::copy_n(batch[i].clip.frames().data(), n, out.data() + i * n);
  }
  return out;
}

Tensor<float> stack_bits(const std::vector<Sample>& batch) {
  const std::size_t d = batch.front().message.width();
  Tensor<float> out(Shape{batch.size(), d});
  for (std::size_t i = 0; i < batch.size(); ++i) {
    require(batch[i].message.width() == d, "train_step: messages in a batch must share one width");
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = batch[i].message[j];
  }
  return out;
}

VideoClip flip_horizontal(const VideoClip& clip) {
  const std::size_t t = clip.length(), w = clip.width(), h = clip.height();
  Tensor<float> out(clip.frames().shape());
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < w; ++i)
      std::copy_n(clip.frames().data() + ((f * w + (w - 1 - i)) * h) * 3, h * 3, out.data() + ((f * w + i) * h) * 3);
  return VideoClip(std::move(out));
}

std::vector<std::size_t> epoch_order(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> order;
  while (order.size() < count) {
    std::vector<std::size_t> pass(n);
    std::iota(pass.begin(), pass.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(pass[i - 1], pass[rng.below(i)]);
    order.insert(order.end(), pass.begin(), pass.end());
  }
  return order;
}

std::vector<Sample> build_batch(const std::vector<VideoClip>& videos, Rng& rng, const TrainConfig& cfg) {
  if (cfg.hamming_pairs && cfg.batch_size % 2 != 0)
    throw ConfigError("batch_size must be even when hamming_pairs is on (got " + std::to_string(cfg.batch_size) + ")");
  const std::size_t needed = cfg.hamming_pairs ? cfg.batch_size / 2 : cfg.batch_size;
  require(videos.size() == needed, "build_batch: expected " + std::to_string(needed) + " clips, got " +
                                       std::to_string(videos.size()));
  std::vector<Sample> batch;
  batch.reserve(cfg.batch_size);
  for (const auto& v : videos) {
    BitMessage m = BitMessage::random(cfg.data_dim, rng);
    if (cfg.hamming_pairs) {
      batch.push_back({v, m});
      batch.push_back({v, m.complement()});
    } else {
      batch.push_back({v, std::move(m)});
    }
  }
  return batch;
}

VideoClip augment(const VideoClip& clip, Rng& rng, const TrainConfig& cfg, const std::string& name) {
  const std::size_t t = cfg.train_frames, w = cfg.train_width, h = cfg.train_height;
  if (clip.length() < t || clip.width() < w || clip.height() < h)
    throw DataError("clip '" + name + "' (" + shape_string(clip.frames().shape()) + ") is smaller than the training window " +
                    shape_string(Shape{t, w, h, 3}));
  const bool flip = rng.coin();
  const std::size_t t0 = rng.below(clip.length() - t + 1);
  const std::size_t w0 = rng.below(clip.width() - w + 1);
  const std::size_t h0 = rng.below(clip.height() - h + 1);
  const std::size_t sw = clip.width(), sh = clip.height();
  const Tensor<float>& src = clip.frames();
  Tensor<float> out(Shape{t, w, h, 3});
  for (std::size_t f = 0; f < t; ++f)
    for (std::size_t i = 0; i < w; ++i) {
      const std::size_t col = flip ? sw - 1 - (w0 + i) : w0 + i;
      std::copy_n(src.data() + (((t0 + f) * sw + col) * sh + h0) * 3, h * 3, out.data() + ((f * w + i) * h) * 3);
    }
  return VideoClip(std::move(out));
}

Trainer::Trainer(TrainConfig cfg)
    : Trainer(cfg, WatermarkModel<float>(cfg.data_dim, cfg.architecture, mix_seed(cfg.seed, 1))) {}

Trainer::Trainer(TrainConfig cfg, WatermarkModel<float> model)
    : cfg_(std::move(cfg)), model_(std::move(model)), noise_([&] {
        noise::NoiseConfig n = cfg_.noise;
        n.seed = mix_seed(cfg_.seed, 2);
        return n;
      }()) {
  cfg_.validate();
  require(model_.data_dim() == cfg_.data_dim, "trainer: model width does not match data_dim");
  init_optimizers();
}

void Trainer::init_optimizers() {
  codec_opt_ = Adam<float>(codec_parameters(model_), cfg_.lr);
  critic_opt_ = Adam<float>(model_.parameters(Party::critic), cfg_.lr);
  adversary_opt_ = Adam<float>(model_.parameters(Party::adversary), cfg_.lr);
}

void Trainer::set_lr(double lr) {
  codec_opt_.set_lr(lr);
  critic_opt_.set_lr(lr);
  adversary_opt_.set_lr(lr);
}

loss::LossBundle Trainer::train_step(const std::vector<Sample>& batch) {
  const Tensor<float> videos = stack_clips(batch);
  const Tensor<float> bits = stack_bits(batch);
  loss::LossBundle out;
  const Tensor<float> marked = codec_step(videos, bits, out);
  if (cfg_.critic) critic_step(videos, marked, out);
  if (cfg_.adversary) adversary_step(marked, bits, out);
  return out;
}

Tensor<float> Trainer::codec_step(const Tensor<float>& videos, const Tensor<float>& bits, loss::LossBundle& out) {
  require(bits.rank() == 2 && bits.dim(1) == cfg_.data_dim, "train_step: message width does not match data_dim");
  const loss::LossWeights& w = cfg_.weights;
  model_.set_training(true);
  train_only(model_, {Party::attention, Party::encoder, Party::decoder});
  codec_opt_.zero_grad();
  const Var<float> source(videos);
  const Var<float> marked = model_.encode(source, Var<float>(bits));
  const Var<float> ld = loss::l_d(model_, marked, bits, noise_);
  out.l_d = ld.value()[0];
  check_finite("l_d", out.l_d);
  Var<float> objective = ops::scale(ld, static_cast<float>(w.d));
  if (cfg_.ld_star && w.d_star > 0) {
    const Var<float> term = loss::l_d_star(model_, marked, bits, cfg_.mjpeg_quality, cfg_.ldstar_mode, cfg_.chroma);
    out.l_d_star = term.value()[0];
    check_finite("l_d_star", out.l_d_star);
    objective = ops::add(objective, ops::scale(term, static_cast<float>(w.d_star)));
  }
  if (cfg_.critic && w.c > 0) {
    const Var<float> term = loss::l_c(model_, source, marked);
    out.l_c = term.value()[0];
    check_finite("l_c", out.l_c);
    objective = ops::add(objective, ops::scale(term, static_cast<float>(w.c)));
  }
  if (cfg_.adversary && w.a > 0) {
    const Var<float> term = loss::l_a(model_, marked, bits);
    out.l_a = term.value()[0];
    check_finite("l_a", out.l_a);
    objective = ops::add(objective, ops::scale(term, static_cast<float>(w.a)));
  }
  backward(objective);
  codec_opt_.step();
  train_only(model_, {Party::attention, Party::encoder, Party::decoder, Party::critic, Party::adversary});
  return marked.value();
}

void Trainer::critic_step(const Tensor<float>& videos, const Tensor<float>& marked, loss::LossBundle& out) {
  model_.set_training(true);
  train_only(model_, {Party::critic});
  const Var<float> source(videos), fixed(marked);
  for (std::size_t k = 0; k < cfg_.critic_steps; ++k) {
    critic_opt_.zero_grad();
    const Var<float> lw = loss::l_w(model_, source, fixed);
    out.l_w = lw.value()[0];
    check_finite("l_w", out.l_w);
    backward(lw);
    critic_opt_.step();
    critic_opt_.clip(cfg_.critic_clip);
  }
  train_only(model_, {Party::attention, Party::encoder, Party::decoder, Party::critic, Party::adversary});
}

void Trainer::adversary_step(const Tensor<float>& marked, const Tensor<float>& bits, loss::LossBundle& out) {
  model_.set_training(true);
  train_only(model_, {Party::adversary});
  adversary_opt_.zero_grad();
  const Var<float> lr = loss::l_r(model_, Var<float>(marked), bits);
  out.l_r = lr.value()[0];
  check_finite("l_r", out.l_r);
  backward(lr);
  adversary_opt_.step();
  train_only(model_, {Party::attention, Party::encoder, Party::decoder, Party::critic, Party::adversary});
}

PlateauSchedule::PlateauSchedule(double lr, double decay, std::size_t patience, double min_delta, double floor,
                                 double smoothing)
    : lr_(lr), decay_(decay), min_delta_(min_delta), floor_(floor), smoothing_(smoothing), patience_(patience) {}

double PlateauSchedule::update(double loss) {
  if (!started_) {
    smoothed_ = best_ = loss;
    started_ = true;
    return lr_;
  }
  smoothed_ = smoothing_ * loss + (1 - smoothing_) * smoothed_;
  if (smoothed_ < best_ - min_delta_) {
    best_ = smoothed_;
    stale_ = 0;
  } else if (++stale_ >= patience_) {
    lr_ = std::max(floor_, lr_ * decay_);
    stale_ = 0;
  }
  return lr_;
}

Corpus load_corpus(const TrainConfig& cfg) {
  media::CorpusManifest manifest;
  fs::path base = ".";
  if (cfg.corpus.empty()) {
    manifest = media::synth_corpus(cfg.seed, 20, 8, 64, 64);
  } else {
    manifest = media::CorpusManifest::load(cfg.corpus);
    base = fs::path(cfg.corpus).parent_path();
  }
  Corpus corpus;
  for (const auto& e : manifest.entries) {
    eval::NamedClip item{e.id, media::load_entry(e, base)};
    switch (e.split) {
      case media::Split::train: corpus.train.push_back(std::move(item)); break;
      case media::Split::val: corpus.val.push_back(std::move(item)); break;
      case media::Split::test: corpus.test.push_back(std::move(item)); break;
    }
  }
  return corpus;
}

FitResult fit(const TrainConfig& cfg, const std::function<void(const eval::TrainLogRecord&)>& progress) {
  cfg.validate();
  return fit(cfg, load_corpus(cfg), progress);
}

FitResult fit(const TrainConfig& cfg, const Corpus& corpus,
              const std::function<void(const eval::TrainLogRecord&)>& progress) {
  cfg.validate();
  if (corpus.train.empty()) throw ConfigError("training split is empty");
  const fs::path out = cfg.out_dir;
  fs::create_directories(out / "checkpoints");
  cfg.save(out / "config.txt");
  std::ofstream log_file(out / "train_log.jsonl");
  if (!log_file) throw DataError("cannot write " + (out / "train_log.jsonl").string());

  std::vector<eval::NamedClip> val;
  for (const auto& c : (corpus.val.empty() ? corpus.train : corpus.val))
    val.push_back({c.id, first_frames(c.clip, cfg.val_frames)});
  eval::EvalOptions options;
  options.mjpeg_quality = cfg.mjpeg_quality;
  options.chroma = cfg.chroma;
  options.seed = cfg.seed;

  Trainer trainer(cfg);
  PlateauSchedule schedule(cfg.lr, cfg.lr_decay, cfg.lr_patience, cfg.lr_min_delta, cfg.lr_floor, cfg.lr_smoothing);
  Rng rng(mix_seed(cfg.seed, 3));
  const std::size_t per_batch = cfg.hamming_pairs ? cfg.batch_size / 2 : cfg.batch_size;
  const std::size_t n = corpus.train.size();
  const std::size_t batches = cfg.batches_per_epoch ? cfg.batches_per_epoch : (n + per_batch - 1) / per_batch;

  FitResult result{WatermarkModel<float>(1), {}, out / "best.ckpt", out / "final.ckpt"};
  double best_score = -1;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(n, batches * per_batch, rng);
    loss::LossBundle sum;
    double objective = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<VideoClip> clips;
      for (std::size_t k = 0; k < per_batch; ++k) {
        const auto& item = corpus.train[order[b * per_batch + k]];
        clips.push_back(augment(item.clip, rng, cfg, item.id));
      }
      const loss::LossBundle step = trainer.train_step(build_batch(clips, rng, cfg));
      sum.l_d += step.l_d;
      sum.l_d_star += step.l_d_star;
      sum.l_c += step.l_c;
      sum.l_a += step.l_a;
      sum.l_w += step.l_w;
      sum.l_r += step.l_r;
      objective += loss::encoder_decoder_objective(step, cfg.weights);
    }
    const double nb = double(batches);
    eval::TrainLogRecord record;
    record.epoch = epoch;
    record.l_d = sum.l_d / nb;
    record.l_d_star = sum.l_d_star / nb;
    record.l_c = sum.l_c / nb;
    record.l_a = sum.l_a / nb;
    record.l_w = sum.l_w / nb;
    record.l_r = sum.l_r / nb;
    record.lr = trainer.lr();
    const eval::RobustnessReport report = eval::evaluate_model(trainer.model(), val, options, "validation");
    record.identity = report.identity;
    record.mjpeg = report.mjpeg;
    record.cropped = report.cropped;
    record.scaled = report.scaled;
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    char name[32];
    std::snprintf(name, sizeof name, "epoch_%03zu.ckpt", epoch);
    save_checkpoint(trainer.model(), out / "checkpoints" / name);
    const double score = (record.identity + record.mjpeg + record.cropped + record.scaled) / 4;
    if (score > best_score) {
      best_score = score;
      save_checkpoint(trainer.model(), result.best_checkpoint);
    }
    log_file << record.to_json() << "\n" << std::flush;
    result.log.push_back(record);
    if (progress) progress(record);
    trainer.set_lr(schedule.update(objective / nb));
  }
  save_checkpoint(trainer.model(), result.final_checkpoint);
  result.model = std::move(trainer.model());
  return result;
}

FitResult baseline_no_attention(TrainConfig cfg, const std::function<void(const eval::TrainLogRecord&)>& progress) {
  cfg.architecture = Architecture::no_attention;
  return fit(cfg, progress);
}

}  // namespace attnmark
