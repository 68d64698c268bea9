// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// nonzero when any selected criterion fails.
#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "attnmark/checkpoint.hpp"
#include "attnmark/evaluation.hpp"
#include "attnmark/media.hpp"
#include "attnmark/trainer.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace attnmark;
using testing::gradient_error;
using testing::leaf;
using testing::probe;
using testing::random_clip;
using testing::random_tensor;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, const std::string& what) {
    pass = pass && ok;
    notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Context {
  fs::path work;
  std::string cli;
  double train_budget_s = 1800;
};

// ---------------------------------------------------------------- 1

Outcome invariants() {
  Outcome o;
  Rng rng(1);

  {
    WatermarkModel<float> model(32, Architecture::attention, 2);
    double worst = 0;
    for (bool training : {true, false}) {
      model.set_training(training);
      const Tensor<float> mask =
          model.attention(Var<float>(random_tensor<float>(Shape{2, 2, 16, 16, 3}, rng))).value();
      for (std::size_t r = 0; r < mask.rows(); ++r) {
        double sum = 0;
        for (std::size_t d = 0; d < 32; ++d) sum += mask[r * 32 + d];
        worst = std::max(worst, std::abs(sum - 1));
      }
    }
    o.check(worst <= 1e-6, "attention mask sums to 1 (max error " + fmt("%.2e", worst) + ")");
  }

  {
    WatermarkModel<float> model(32, Architecture::attention, 3);
    model.set_training(false);
    for (auto& w : model.encoder_out.weight.mutable_value().values()) w *= 50;
    for (auto& w : model.adversary_out.weight.mutable_value().values()) w *= 50;
    const VideoClip clip = random_clip(2, 24, 24, rng);
    const float enc = max_abs_diff(encode_clip(model, clip, BitMessage::random(32, rng)).frames(), clip.frames());
    const float adv = max_abs_diff(adversary_clip(model, clip).frames(), clip.frames());
    o.check(enc <= 0.01 + 1e-7, "encoder residual " + fmt("%.6f", enc) + " <= 0.01");
    o.check(adv <= 0.01 + 1e-7, "adversary residual " + fmt("%.6f", adv) + " <= 0.01");
  }

  {
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.train_frames = 1;
    cfg.train_width = cfg.train_height = 16;
    Trainer trainer(cfg);
    float worst = 0;
    for (int step = 0; step < 5; ++step) {
      std::vector<VideoClip> clips{random_clip(1, 16, 16, rng), random_clip(1, 16, 16, rng)};
      trainer.train_step(build_batch(clips, rng, cfg));
      for (auto& p : trainer.model().parameters(Party::critic))
        for (float w : p.var.value().values()) worst = std::max(worst, std::abs(w));
    }
    o.check(worst <= 0.1f, "critic weights within +-0.1 after every step (max " + fmt("%.4f", worst) + ")");
  }

  {
    WatermarkModel<float> model(32, Architecture::attention, 4);
    model.set_training(false);
    const VideoClip marked = encode_clip(model, media::synth_clip(5, 2, 32, 32), BitMessage::random(32, rng));
    const fs::path dir = fs::temp_directory_path() / "attnmark_acceptance_blind";
    fs::remove_all(dir);
    media::save_clip(marked, dir, media::Format::png_frames);
    const auto from_disk = decode_clip(model, media::load_clip(dir));
    const auto in_memory = decode_clip(model, VideoClip(noise::quantize_roundtrip(marked.frames())));
    fs::remove_all(dir);
    o.check(from_disk == in_memory, "blind decode of the saved file is bitwise identical");
  }

  {
    TrainConfig cfg;
    std::vector<VideoClip> clips;
    for (int i = 0; i < 6; ++i) clips.push_back(random_clip(1, 12, 12, rng));
    const auto batch = build_batch(clips, rng, cfg);
    bool ok = batch.size() == 12;
    for (std::size_t i = 0; ok && i < 12; i += 2) {
      ok = batch[i].clip == batch[i + 1].clip;
      for (std::size_t d = 0; d < 32; ++d) ok = ok && (batch[i].message[d] ^ batch[i + 1].message[d]) == 1;
    }
    o.check(ok, "Hamming pairs share a clip and XOR to all ones");
  }

  {
    WatermarkModel<double> model(8, Architecture::attention, 6);
    const Var<double> video(random_tensor(Shape{2, 1, 16, 16, 3}, rng, -0.9, 0.9));
    Tensor<double> bits(Shape{2, 8});
    for (auto& b : bits.values()) b = rng.coin();
    const Var<double> marked = model.encode(video, Var<double>(bits));
    double worst = 0;
    for (bool training : {true, false}) {
      model.set_training(training);
      worst = std::max(worst, std::abs(loss::l_r(model, marked, bits).value()[0] +
                                       loss::l_a(model, marked, bits).value()[0]));
    }
    o.check(worst <= 1e-9, "l_r = -l_a (max error " + fmt("%.2e", worst) + ")");
  }
  return o;
}

// ---------------------------------------------------------------- 2

Outcome oracles() {
  Outcome o;
  Rng rng(11);

  {
    const Tensor<double> v = random_tensor(Shape{1, 8, 16, 16, 3}, rng);
    const Tensor<double> c = noise::dct3(v);
    const double inv = max_abs_diff(noise::idct3(c), v);
    double ev = 0, ec = 0;
    for (double x : v.values()) ev += x * x;
    for (double x : c.values()) ec += x * x;
    o.check(inv <= 1e-5, "DCT inverse error " + fmt("%.2e", inv));
    o.check(std::abs(ec - ev) <= 1e-4 * ev, "Parseval relative error " + fmt("%.2e", std::abs(ec - ev) / ev));
  }
  {
    const Var<double> v(random_tensor(Shape{2, 8, 8, 3}, rng));
    const double err = max_abs_diff(noise::ycrcb_to_rgb(noise::rgb_to_ycrcb(v)).value(), v.value());
    o.check(err <= 1e-5, "YCrCb round trip error " + fmt("%.2e", err));
  }

  auto grad = [&](const std::string& name, double tol, std::vector<std::pair<std::string, Var<double>>> leaves,
                  const std::function<Var<double>()>& f, std::size_t samples = 0) {
    const auto r = gradient_error(std::move(leaves), f, samples);
    o.check(r.max_rel <= tol, "gradient " + name + " rel " + fmt("%.2e", r.max_rel));
  };
  for (bool training : {true, false}) {
    Rng init(9);
    ConvBlock<double> block(4, 3, init);
    block.running_mean = random_tensor(Shape{3}, rng, -0.2, 0.2);
    block.running_var = random_tensor(Shape{3}, rng, 0.5, 1.5);
    auto x = leaf(random_tensor(Shape{2, 1, 8, 8, 4}, rng));
    grad(std::string("conv block ") + (training ? "(training)" : "(inference)"), 1e-3,
         {{"x", x}, {"w", block.weight}, {"b", block.bias}, {"gamma", block.gamma}, {"beta", block.beta}},
         [&] { return probe(block.forward(x, training)); }, 40);
  }
  {
    auto z = leaf(random_tensor(Shape{2, 1, 6, 6, 5}, rng, -3, 3));
    grad("softmax", 1e-3, {{"z", z}}, [&] { return probe(ops::softmax_last(z)); });
  }
  {
    auto v = leaf(random_tensor(Shape{2, 8, 8, 3}, rng, -0.8, 0.8));
    grad("dct_compress", 1e-3, {{"v", v}}, [&] { return probe(noise::dct_compress(v, 0.1)); });
    grad("rgb<->ycrcb", 1e-3, {{"v", v}},
         [&] { return probe(noise::ycrcb_to_rgb(ops::scale(noise::rgb_to_ycrcb(v), 1.1))); });
  }
  for (Architecture arch : {Architecture::attention, Architecture::no_attention}) {
    WatermarkModel<double> model(4, arch, 23);
    const Var<double> video(random_tensor(Shape{1, 2, 16, 16, 3}, rng, -0.9, 0.9));
    const Tensor<double> bits(Shape{1, 4}, {1, 0, 0, 1});
    noise::NoiseDraw draw;
    draw.crop = noise::CropWindow{1, 2, 14, 14};
    draw.scaled_size = std::pair<std::size_t, std::size_t>{12, 13};
    draw.drop_fraction = 0.1;
    std::vector<std::pair<std::string, Var<double>>> leaves;
    for (Party p : {Party::attention, Party::encoder, Party::decoder})
      for (auto& np : model.parameters(p)) leaves.push_back({np.name, np.var});
    grad("end-to-end L_d (" + to_string(arch) + ")", 1e-2, leaves,
         [&] {
           const Var<double> marked = model.encode(video, Var<double>(bits));
           return loss::message_loss(model.decode(noise::apply_noise(marked, draw)), bits);
         },
         6);
  }

  {
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<std::uint8_t> bits(32);
      std::vector<double> logits(32);
      double brute = 0;
      for (std::size_t i = 0; i < 32; ++i) {
        bits[i] = rng.coin();
        logits[i] = rng.uniform(-15, 15);
        const double p = 1 / (1 + std::exp(-logits[i]));
        brute -= bits[i] * std::log(p) + (1 - bits[i]) * std::log(1 - p);
      }
      worst = std::max(worst, std::abs(loss::message_loss(bits, logits) - brute / 32));
    }
    o.check(worst <= 1e-6, "message_loss vs probability-space oracle " + fmt("%.2e", worst));
  }

  {
    double worst_psnr = 0, worst_ssim = 0;
    const double c1 = 0.02 * 0.02, c2 = 0.06 * 0.06;
    std::vector<double> g(11);
    double gs = 0;
    for (int i = 0; i < 11; ++i) gs += g[i] = std::exp(-(i - 5.0) * (i - 5.0) / 4.5);
    for (double& v : g) v /= gs;
    for (int trial = 0; trial < 5; ++trial) {
      const VideoClip a = random_clip(1, 16, 16, rng), b = random_clip(1, 16, 16, rng);
      long double se = 0;
      for (std::size_t i = 0; i < a.frames().size(); ++i) {
        const long double e = (long double)a.frames()[i] - b.frames()[i];
        se += e * e;
      }
      const double brute_psnr = double(10 * std::log10(4.0L / (se / a.frames().size())));
      worst_psnr = std::max(worst_psnr, std::abs(*eval::psnr(a, b) - brute_psnr));

      auto luma = [](const VideoClip& c, std::size_t x, std::size_t y) {
        const float* p = c.frames().data() + (x * 16 + y) * 3;
        return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
      };
      double total = 0;
      for (std::size_t x = 0; x + 11 <= 16; ++x)
        for (std::size_t y = 0; y + 11 <= 16; ++y) {
          double mx = 0, my = 0, vx = 0, vy = 0, cov = 0;
          for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
              mx += g[i] * g[j] * luma(a, x + i, y + j);
              my += g[i] * g[j] * luma(b, x + i, y + j);
            }
          for (int i = 0; i < 11; ++i)
            for (int j = 0; j < 11; ++j) {
              const double dx = luma(a, x + i, y + j) - mx, dy = luma(b, x + i, y + j) - my;
              vx += g[i] * g[j] * dx * dx;
              vy += g[i] * g[j] * dy * dy;
              cov += g[i] * g[j] * dx * dy;
            }
          total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
      worst_ssim = std::max(worst_ssim, std::abs(eval::ssim(a, b) - total / 36));
    }
    o.check(worst_psnr <= 1e-9, "PSNR vs direct formula " + fmt("%.2e", worst_psnr));
    o.check(worst_ssim <= 1e-6, "SSIM vs direct formula " + fmt("%.2e", worst_ssim));
  }
  return o;
}

// ------------------------------------------------------ desk training

TrainConfig desk_config(const Context& ctx, const std::string& name) {
  TrainConfig cfg;
  cfg.seed = 7;
  cfg.epochs = 30;
  cfg.batch_size = 12;
  cfg.train_frames = 1;
  cfg.train_width = cfg.train_height = 16;
  cfg.batches_per_epoch = 80;
  cfg.val_frames = 1;
  cfg.out_dir = (ctx.work / name).string();
  return cfg;
}

struct DeskRun {
  fs::path checkpoint;
  std::vector<eval::TrainLogRecord> log;
  double seconds = 0;
};

// Trains once per configuration; later calls reuse the finished run when
// its stored config matches.
DeskRun desk_train(const TrainConfig& cfg) {
  const fs::path dir = cfg.out_dir;
  const fs::path stamp = dir / "done.txt";
  if (fs::exists(stamp) && fs::exists(dir / "final.ckpt") && fs::exists(dir / "config.txt") &&
      TrainConfig::load(dir / "config.txt").to_text() == cfg.to_text()) {
    DeskRun run{dir / "final.ckpt", eval::read_log(dir / "train_log.jsonl"), 0};
    std::ifstream(stamp) >> run.seconds;
    std::cout << "  reusing " << dir.string() << " (trained in " << fmt("%.0f", run.seconds) << " s)\n";
    return run;
  }
  fs::remove(stamp);
  std::cout << "  training " << dir.string() << "\n" << std::flush;
  const auto t0 = std::chrono::steady_clock::now();
  const FitResult fit_result = fit(cfg, [](const eval::TrainLogRecord& r) {
    std::printf("    epoch %2zu %6.0fs l_d %.4f identity %.3f cropped %.3f scaled %.3f\n", r.epoch, r.seconds, r.l_d,
                r.identity, r.cropped, r.scaled);
    std::fflush(stdout);
  });
  DeskRun run{fit_result.final_checkpoint, fit_result.log, seconds_since(t0)};
  std::ofstream(stamp) << run.seconds << "\n";
  return run;
}

Outcome desk_overfit(const Context& ctx) {
  Outcome o;
  const TrainConfig cfg = desk_config(ctx, "attention");
  const DeskRun run = desk_train(cfg);
  o.check(run.seconds < ctx.train_budget_s, "training took " + fmt("%.0f", run.seconds) + " s (budget " +
                                                fmt("%.0f", ctx.train_budget_s) + " s)");
  o.check(cfg.epochs <= 30, "epochs " + std::to_string(cfg.epochs) + " <= 30");

  WatermarkModel<float> model = load_checkpoint(run.checkpoint);
  const Corpus corpus = load_corpus(cfg);
  eval::EvalOptions opts;
  opts.seed = 1;
  const auto train = eval::evaluate_model(model, corpus.train, opts, "acceptance");
  const auto test = eval::evaluate_model(model, corpus.test, opts, "acceptance");
  std::ofstream(ctx.work / "attention" / "train_report.json") << train.to_json();
  std::ofstream(ctx.work / "attention" / "test_report.json") << test.to_json();
  o.check(train.identity >= 0.98, "train identity accuracy " + fmt("%.4f", train.identity) + " >= 0.98");
  o.check(test.identity >= 0.95, "test identity accuracy " + fmt("%.4f", test.identity) + " >= 0.95");
  o.check(test.cropped >= 0.90, "test cropped accuracy " + fmt("%.4f", test.cropped) + " >= 0.90");
  o.check(test.scaled >= 0.90, "test scaled accuracy " + fmt("%.4f", test.scaled) + " >= 0.90");
  o.check(test.psnr.value_or(1e9) >= 38, "test PSNR " + fmt("%.2f", test.psnr.value_or(1e9)) + " dB >= 38");
  return o;
}

// ---------------------------------------------------------------- 4

Outcome ablations(const Context& ctx) {
  Outcome o;
  eval::EvalOptions opts;
  opts.seed = 1;
  double training = 0;
  auto test_report = [&](const TrainConfig& cfg) {
    const DeskRun run = desk_train(cfg);
    training += run.seconds;
    WatermarkModel<float> model = load_checkpoint(run.checkpoint);
    return eval::evaluate_model(model, load_corpus(cfg).test, opts, cfg.out_dir);
  };

  const TrainConfig attn = desk_config(ctx, "attention");
  TrainConfig plain = desk_config(ctx, "no_attention");
  plain.architecture = Architecture::no_attention;
  TrainConfig plain_clean = plain;
  plain_clean.noise = noise::NoiseConfig::none();
  plain_clean.out_dir = (ctx.work / "no_attention_no_noise").string();
  TrainConfig unpaired = attn;
  unpaired.hamming_pairs = false;
  unpaired.out_dir = (ctx.work / "attention_no_pairs").string();

  const auto a = test_report(attn), p = test_report(plain), pc = test_report(plain_clean);
  o.check(a.cropped >= p.cropped, "cropped: attention " + fmt("%.4f", a.cropped) + " >= no-attention " +
                                      fmt("%.4f", p.cropped));
  o.check(a.scaled >= p.scaled, "scaled: attention " + fmt("%.4f", a.scaled) + " >= no-attention " +
                                    fmt("%.4f", p.scaled));
  o.check(p.scaled > pc.scaled, "no-attention scaled: with noise " + fmt("%.4f", p.scaled) + " > without " +
                                    fmt("%.4f", pc.scaled));

  const DeskRun unpaired_run = desk_train(unpaired);
  training += unpaired_run.seconds;
  const auto paired_log = desk_train(attn).log, unpaired_log = unpaired_run.log;
  const auto cp = eval::first_crossing(paired_log, 0.9), cu = eval::first_crossing(unpaired_log, 0.9);
  auto show = [](const std::optional<std::size_t>& e) { return e ? std::to_string(*e) : std::string("never"); };
  o.check(cp.has_value() && (!cu || *cp <= *cu),
          "epochs to 0.9 accuracy: pairs " + show(cp) + ", no pairs " + show(cu));
  o.check(training < 7200, "training time of the four runs " + fmt("%.0f", training) + " s (budget 7200 s)");
  return o;
}

// ---------------------------------------------------------------- 5

int run_cli(const Context& ctx, const std::string& args, std::string* out = nullptr) {
  const fs::path capture = ctx.work / "cli_stdout.txt";
  const std::string cmd = ctx.cli + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) {
    std::ifstream in(capture);
    std::stringstream s;
    s << in.rdbuf();
    *out = s.str();
  }
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t matching_bits(const std::string& a, const std::string& b) {
  const BitMessage x = BitMessage::from_hex(a, 32), y = BitMessage::from_hex(b, 32);
  std::size_t n = 0;
  for (std::size_t i = 0; i < 32; ++i) n += x[i] == y[i];
  return n;
}

Outcome cli_roundtrip(const Context& ctx) {
  Outcome o;
  const TrainConfig cfg = desk_config(ctx, "attention");
  const DeskRun run = desk_train(cfg);
  const Corpus corpus = load_corpus(cfg);
  const fs::path dir = ctx.work / "cli";
  fs::remove_all(dir);
  fs::create_directories(dir);
  media::save_clip(corpus.test.front().clip, dir / "source", media::Format::png_frames);

  const std::string message = "DEADBEEF";
  const std::string ckpt = run.checkpoint.string();
  o.check(run_cli(ctx, "embed --checkpoint " + ckpt + " --input " + (dir / "source").string() + " --message " +
                           message + " --output " + (dir / "marked").string()) == 0,
          "embed exits 0");
  std::string out;
  o.check(run_cli(ctx, "extract --checkpoint " + ckpt + " --input " + (dir / "marked").string(), &out) == 0,
          "extract exits 0");
  const std::string plain = out.substr(0, out.find('\n'));
  o.check(plain == message, "untransformed: recovered " + plain + ", embedded " + message);

  const VideoClip marked = media::load_clip(dir / "marked");
  const auto window = noise::centered_crop_window(marked.width(), marked.height(), 0.8);
  const VideoClip cropped(noise::crop(Var<float>(marked.frames()), window).value());
  media::save_clip(cropped, dir / "cropped.avi", media::Format::mjpeg_avi, 80);
  o.check(run_cli(ctx, "extract --checkpoint " + ckpt + " --input " + (dir / "cropped.avi").string(), &out) == 0,
          "extract of the cropped clip exits 0");
  const std::string crop_hex = out.substr(0, out.find('\n'));
  const std::size_t good = crop_hex.size() == 8 ? matching_bits(crop_hex, message) : 0;
  o.check(good >= 29, "80% crop then MJPEG: " + std::to_string(good) + "/32 bits correct (need 29)");
  return o;
}

// ---------------------------------------------------------------- 6

Outcome bit_sensitivity(const Context& ctx) {
  Outcome o;
  const TrainConfig attn_cfg = desk_config(ctx, "attention");
  TrainConfig plain_cfg = desk_config(ctx, "no_attention");
  plain_cfg.architecture = Architecture::no_attention;
  WatermarkModel<float> attn = load_checkpoint(desk_train(attn_cfg).checkpoint);
  WatermarkModel<float> plain = load_checkpoint(desk_train(plain_cfg).checkpoint);

  std::size_t lower = 0;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const VideoClip clip = media::synth_clip(9000 + i, 8, 64, 64);
    const BitMessage m = eval::evaluation_message(1, "sensitivity" + std::to_string(i), 32);
    const double ca = eval::bit_flip_difference(attn, clip, m, {0, 1}).correlation[0][1];
    const double cp = eval::bit_flip_difference(plain, clip, m, {0, 1}).correlation[0][1];
    lower += ca < cp;
    o.notes.push_back("     clip " + std::to_string(i) + ": attention " + fmt("%.4f", ca) + ", no-attention " +
                      fmt("%.4f", cp));
  }
  o.check(lower >= 4, "attention correlation lower on " + std::to_string(lower) + "/5 clips (need 4)");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected{1, 2, 3, 5, 6};
  Context ctx;
  std::string work = "acceptance_work";
  app.add_option("--criterion", selected, "criteria to run (1-6)");
  app.add_option("--work", work, "cache directory for trained models");
  app.add_option("--cli", ctx.cli, "path to the attnmark tool")->required();
  app.add_option("--budget", ctx.train_budget_s, "training time budget in seconds");
  CLI11_PARSE(app, argc, argv);
  ctx.work = fs::weakly_canonical(fs::absolute(work));
  fs::create_directories(ctx.work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"invariant suite", [] { return invariants(); }},
      {"numerical oracles", [] { return oracles(); }},
      {"desk-scale overfit run", [&] { return desk_overfit(ctx); }},
      {"directional ablations", [&] { return ablations(ctx); }},
      {"CLI embed/extract round trip", [&] { return cli_roundtrip(ctx); }},
      {"bit-sensitivity diagnostic", [&] { return bit_sensitivity(ctx); }},
  };
  bool all = true;
  for (int id : selected) {
    if (id < 1 || id > 6) {
      std::cerr << "unknown criterion " << id << "\n";
      return 2;
    }
    const auto& [name, run] = criteria[id - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome.check(false, std::string("threw: ") + e.what());
    }
    for (const auto& n : outcome.notes) std::cout << "  " << n << "\n";
    std::cout << "criterion " << id << " " << name << ": " << (outcome.pass ? "PASS" : "FAIL") << " ("
              << fmt("%.1f", seconds_since(t0)) << " s)\n"
              << std::flush;
    all = all && outcome.pass;
  }
  return all ? 0 : 1;
}
