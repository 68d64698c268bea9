#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "attnmark/checkpoint.hpp"
#include "attnmark/config.hpp"
#include "attnmark/evaluation.hpp"
#include "attnmark/media.hpp"
#include "attnmark/trainer.hpp"

namespace fs = std::filesystem;
using namespace attnmark;

namespace {

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key = value config file");
  cmd->add_option("--set", c.overrides, "override one config key (key=value)")->allow_extra_args(false);
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output directory");
}

TrainConfig resolve(const Common& c) {
  TrainConfig cfg = c.config.empty() ? TrainConfig{} : TrainConfig::load(c.config);
  for (const auto& o : c.overrides) cfg.apply_override(o);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out_dir = c.out;
  cfg.validate();
  return cfg;
}

void snapshot(const TrainConfig& cfg) {
  fs::create_directories(cfg.out_dir);
  cfg.save(fs::path(cfg.out_dir) / "config.txt");
}

std::string format_db(const std::optional<double>& db) {
  if (!db) return "identical";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f dB", *db);
  return buf;
}

media::Format format_for(const fs::path& path, const std::string& requested) {
  if (!requested.empty()) return media::format_from_string(requested);
  return path.extension() == ".avi" ? media::Format::mjpeg_avi : media::Format::png_frames;
}

std::vector<eval::NamedClip> split_clips(const Corpus& corpus, const std::string& split) {
  switch (media::split_from_string(split)) {
    case media::Split::train: return corpus.train;
    case media::Split::val: return corpus.val;
    case media::Split::test: return corpus.test;
  }
  return {};
}

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw ConfigError("bad bit index '" + item + "'");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based robust video watermarking"};
  app.require_subcommand(1);

  Common synth_c;
  std::size_t clips = 20, frames = 8, width = 64, height = 64;
  bool materialize = false;
  auto* synth = app.add_subcommand("synth", "write a procedural corpus manifest");
  add_common(synth, synth_c);
  synth->add_option("--clips", clips, "number of clips");
  synth->add_option("--frames", frames, "frames per clip");
  synth->add_option("--width", width, "frame width");
  synth->add_option("--height", height, "frame height");
  synth->add_flag("--materialize", materialize, "also write every clip as PNG frames");

  Common train_c;
  auto* train = app.add_subcommand("train", "train a model");
  add_common(train, train_c);

  Common embed_c;
  std::string checkpoint, input, output, message, format;
  int quality = 90;
  auto* embed = app.add_subcommand("embed", "watermark a video");
  add_common(embed, embed_c);
  embed->add_option("--checkpoint", checkpoint)->required();
  embed->add_option("--input", input, "source video (.avi or PNG frame directory)")->required();
  embed->add_option("--message", message, "hex message, D/4 digits")->required();
  embed->add_option("--output", output, "watermarked video path")->required();
  embed->add_option("--format", format, "mjpeg_avi or png_frames (default from extension)");
  embed->add_option("--quality", quality, "JPEG quality for .avi output");

  Common extract_c;
  auto* extract = app.add_subcommand("extract", "recover a message");
  add_common(extract, extract_c);
  extract->add_option("--checkpoint", checkpoint)->required();
  extract->add_option("--input", input, "watermarked video")->required();

  Common evaluate_c;
  std::string split = "test";
  bool randomized = false, post_quantization = false;
  auto* evaluate = app.add_subcommand("evaluate", "robustness report on a corpus split");
  add_common(evaluate, evaluate_c);
  evaluate->add_option("--checkpoint", checkpoint)->required();
  evaluate->add_option("--split", split, "train, val or test");
  evaluate->add_flag("--randomized", randomized, "random crop position and scale factor");
  evaluate->add_flag("--post-quantization", post_quantization, "measure PSNR/SSIM after 8-bit quantization");

  Common inspect_c;
  bool residuals = false;
  std::string bit_flip;
  std::vector<std::string> logs;
  auto* inspect = app.add_subcommand("inspect", "residual images, bit-flip masks, convergence plots");
  add_common(inspect, inspect_c);
  inspect->add_option("--checkpoint", checkpoint);
  inspect->add_option("--input", input, "video for residual and bit-flip images");
  inspect->add_option("--message", message, "hex message (default: seeded random)");
  inspect->add_flag("--residuals", residuals, "write amplified residual images");
  inspect->add_option("--bit-flip", bit_flip, "comma-separated bit indices to flip");
  inspect->add_option("--log", logs, "label=train_log.jsonl, repeatable");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      throw ConfigError(e.what());
    }

    if (synth->parsed()) {
      TrainConfig cfg = resolve(synth_c);
      const fs::path dir = cfg.out_dir;
      media::CorpusManifest manifest = media::synth_corpus(cfg.seed, clips, frames, width, height);
      fs::create_directories(dir);
      if (materialize) {
        for (auto& e : manifest.entries) {
          media::save_clip(media::load_entry(e, dir), dir / e.id, media::Format::png_frames);
          e.path = e.id;
        }
      }
      manifest.save(dir / "manifest.json");
      snapshot(cfg);
      std::cout << (dir / "manifest.json").string() << "\n";
    } else if (train->parsed()) {
      const TrainConfig cfg = resolve(train_c);
      const FitResult result = fit(cfg, [](const eval::TrainLogRecord& r) {
        std::printf("epoch %zu  %.0fs  l_d %.4f  l_d* %.4f  val identity %.3f mjpeg %.3f cropped %.3f scaled %.3f  lr %.2g\n",
                    r.epoch, r.seconds, r.l_d, r.l_d_star, r.identity, r.mjpeg, r.cropped, r.scaled, r.lr);
        std::fflush(stdout);
      });
      std::cout << result.final_checkpoint.string() << "\n";
    } else if (embed->parsed()) {
      WatermarkModel<float> model = load_checkpoint(checkpoint);
      const BitMessage bits = BitMessage::from_hex(message, model.data_dim());
      const VideoClip source = media::load_clip(input);
      const VideoClip marked = encode_clip(model, source, bits);
      media::save_clip(marked, output, format_for(output, format), quality);
      std::cout << "psnr " << format_db(eval::psnr(source, marked)) << "\n";
    } else if (extract->parsed()) {
      WatermarkModel<float> model = load_checkpoint(checkpoint);
      const std::vector<float> logits = decode_clip(model, media::load_clip(input));
      std::cout << predict_bits(logits).to_hex() << "\n";
      for (std::size_t i = 0; i < logits.size(); ++i)
        std::printf("%s%.4f", i ? " " : "", 1.0 / (1.0 + std::exp(-double(logits[i]))));
      std::printf("\n");
    } else if (evaluate->parsed()) {
      const TrainConfig cfg = resolve(evaluate_c);
      WatermarkModel<float> model = load_checkpoint(checkpoint);
      const Corpus corpus = load_corpus(cfg);
      eval::EvalOptions options;
      options.mjpeg_quality = cfg.mjpeg_quality;
      options.chroma = cfg.chroma;
      options.seed = cfg.seed;
      options.randomized = randomized;
      options.post_quantization_quality = post_quantization;
      const eval::RobustnessReport report =
          eval::evaluate_model(model, split_clips(corpus, split), options, fs::path(checkpoint).filename().string());
      snapshot(cfg);
      std::ofstream(fs::path(cfg.out_dir) / "report.json") << report.to_json();
      std::printf("psnr %s  ssim %.4f  identity %.4f  mjpeg %.4f  cropped %.4f  scaled %.4f\n",
                  format_db(report.psnr).c_str(), report.ssim, report.identity, report.mjpeg, report.cropped,
                  report.scaled);
    } else if (inspect->parsed()) {
      if (!residuals && bit_flip.empty() && logs.empty())
        throw ConfigError("inspect: choose at least one of --residuals, --bit-flip, --log");
      const TrainConfig cfg = resolve(inspect_c);
      const fs::path out = cfg.out_dir;
      snapshot(cfg);
      if (residuals || !bit_flip.empty()) {
        if (checkpoint.empty() || input.empty()) throw ConfigError("inspect: images need --checkpoint and --input");
        WatermarkModel<float> model = load_checkpoint(checkpoint);
        const VideoClip clip = media::load_clip(input);
        const BitMessage bits = message.empty() ? eval::evaluation_message(cfg.seed, input, model.data_dim())
                                                : BitMessage::from_hex(message, model.data_dim());
        if (residuals) {
          const double largest = eval::residual_images(model, clip, bits, out / "residuals");
          std::printf("max residual %.6f\n", largest);
        }
        if (!bit_flip.empty()) {
          const auto flips = eval::bit_flip_difference(model, clip, bits, parse_indices(bit_flip), out / "bit_flip");
          for (std::size_t i = 0; i < flips.bits.size(); ++i)
            for (std::size_t j = i + 1; j < flips.bits.size(); ++j)
              std::printf("ncc bit %zu vs bit %zu: %.6f\n", flips.bits[i], flips.bits[j], flips.correlation[i][j]);
        }
      }
      if (!logs.empty()) {
        std::vector<eval::LabeledLog> runs;
        for (const auto& item : logs) {
          const auto eq = item.find('=');
          const std::string label = eq == std::string::npos ? item : item.substr(0, eq);
          const std::string path = eq == std::string::npos ? item : item.substr(eq + 1);
          runs.push_back({label, eval::read_log(path)});
        }
        const auto summary = eval::convergence_report(runs, out / "convergence");
        std::cout << summary.to_json();
      }
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
