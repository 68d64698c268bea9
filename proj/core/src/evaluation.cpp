#include "attnmark/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "attnmark/media.hpp"

namespace attnmark::eval {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json optional_db(const std::optional<double>& db) { return db ? json(*db) : json("identical"); }

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<double> luminance(const Tensor<float>& frames, std::size_t f) {
  const std::size_t w = frames.dim(1), h = frames.dim(2);
  std::vector<double> y(w * h);
  const float* p = frames.data() + f * w * h * 3;
  for (std::size_t i = 0; i < w * h; ++i) y[i] = 0.299 * p[3 * i] + 0.587 * p[3 * i + 1] + 0.114 * p[3 * i + 2];
  return y;
}

std::vector<double> gaussian_window() {
  constexpr int k = 11;
  constexpr double sigma = 1.5;
  std::vector<double> g(k * k);
  double total = 0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - k / 2, dj = j - k / 2;
      total += g[i * k + j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
    }
  for (double& v : g) v /= total;
  return g;
}

double frame_ssim(const std::vector<double>& x, const std::vector<double>& y, std::size_t w, std::size_t h) {
  constexpr std::size_t k = 11;
  constexpr double range = 2.0;
  constexpr double c1 = (0.01 * range) * (0.01 * range);
  constexpr double c2 = (0.03 * range) * (0.03 * range);
  static const std::vector<double> g = gaussian_window();
  double sum = 0;
  for (std::size_t i = 0; i + k <= w; ++i) {
    for (std::size_t j = 0; j + k <= h; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          const double wt = g[a * k + b];
          const double xv = x[(i + a) * h + j + b], yv = y[(i + a) * h + j + b];
          mx += wt * xv;
          my += wt * yv;
          sxx += wt * xv * xv;
          syy += wt * yv * yv;
          sxy += wt * xv * yv;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my, cov = sxy - mx * my;
      sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
  }
  return sum / double((w - k + 1) * (h - k + 1));
}

double accuracy_of(WatermarkModel<float>& model, const BitMessage& message, const Tensor<float>& frames) {
  const auto logits = decode_clip(model, VideoClip::clamped(frames));
  return bit_accuracy(message, logits);
}

Tensor<float> cropped(const Tensor<float>& frames, const noise::CropWindow& window) {
  return noise::crop(Var<float>(frames), window).value();
}

Tensor<float> scaled(const Tensor<float>& frames, double factor) {
  const auto w = static_cast<std::size_t>(std::lround(factor * double(frames.dim(1))));
  const auto h = static_cast<std::size_t>(std::lround(factor * double(frames.dim(2))));
  return noise::resize_bilinear(Var<float>(frames), std::max<std::size_t>(w, 1), std::max<std::size_t>(h, 1)).value();
}

void write_scaled_frames(const Tensor<float>& magnitude, double gain, const fs::path& dir, const std::string& stem) {
  const std::size_t w = magnitude.dim(1), h = magnitude.dim(2);
  for (std::size_t f = 0; f < magnitude.dim(0); ++f) {
    Tensor<float> frame(Shape{w, h, 3});
    const float* src = magnitude.data() + f * w * h * 3;
    for (std::size_t i = 0; i < frame.size(); ++i)
      frame[i] = static_cast<float>(std::clamp(2.0 * gain * src[i] - 1.0, -1.0, 1.0));
    char name[32];
    std::snprintf(name, sizeof name, "_%04zu.png", f);
    media::save_frame_png(frame, dir / (stem + name));
  }
}

}  // namespace

double bit_accuracy(const BitMessage& message, std::span<const float> logits) {
  require(message.width() == logits.size(), "bit_accuracy: message width " + std::to_string(message.width()) +
                                                " does not match " + std::to_string(logits.size()) + " logits");
  const BitMessage predicted = predict_bits(logits);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < message.width(); ++i) hits += predicted[i] == message[i];
  return double(hits) / double(message.width());
}

std::optional<double> psnr(const Tensor<float>& a, const Tensor<float>& b) {
  require(a.shape() == b.shape(), "psnr: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  double sq = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    sq += d * d;
  }
  if (sq == 0) return std::nullopt;
  return 10.0 * std::log10(4.0 / (sq / double(a.size())));
}

std::optional<double> psnr(const VideoClip& a, const VideoClip& b) { return psnr(a.frames(), b.frames()); }

double ssim(const VideoClip& a, const VideoClip& b) {
  require(a.frames().shape() == b.frames().shape(), "ssim: shape mismatch");
  require(a.width() >= 11 && a.height() >= 11, "ssim: frames must be at least 11x11");
  double total = 0;
  for (std::size_t f = 0; f < a.length(); ++f)
    total += frame_ssim(luminance(a.frames(), f), luminance(b.frames(), f), a.width(), a.height());
  return total / double(a.length());
}

BitMessage evaluation_message(std::uint64_t seed, const std::string& clip_id, std::size_t width) {
  Rng rng(mix_seed(seed, fnv1a(clip_id)));
  return BitMessage::random(width, rng);
}

RobustnessReport evaluate_model(WatermarkModel<float>& model, const std::vector<NamedClip>& clips,
                                const EvalOptions& options, const std::string& model_id) {
  if (clips.empty()) throw ConfigError("evaluate: no clips to evaluate");
  RobustnessReport report;
  report.model_id = model_id;
  report.data_dim = model.data_dim();
  report.options = options;
  double sq = 0;
  std::size_t count = 0;
  for (const auto& item : clips) {
    const VideoClip& source = item.clip;
    const BitMessage message = evaluation_message(options.seed, item.id, model.data_dim());
    const VideoClip marked = encode_clip(model, source, message);
    const Tensor<float> quantized = noise::quantize_roundtrip(marked.frames());
    const VideoClip measured = options.post_quantization_quality ? VideoClip::clamped(quantized) : marked;

    ClipReport c;
    c.id = item.id;
    c.message = message.to_hex();
    c.psnr = psnr(source, measured);
    c.ssim = ssim(source, measured);
    for (std::size_t i = 0; i < source.frames().size(); ++i) {
      const double d = double(source.frames()[i]) - double(measured.frames()[i]);
      sq += d * d;
    }
    count += source.frames().size();

    auto mjpeg = [&](const Tensor<float>& t) { return noise::mjpeg_roundtrip(t, options.mjpeg_quality, options.chroma); };
    Rng rng(mix_seed(options.seed ^ 0x5eedull, fnv1a(item.id)));
    const noise::CropWindow window =
        options.randomized ? noise::crop_window_for_area(source.width(), source.height(), options.crop_area, rng)
                           : noise::centered_crop_window(source.width(), source.height(), options.crop_area);
    const double factor = options.randomized ? rng.uniform(options.scale, 1.0) : options.scale;

    c.identity = accuracy_of(model, message, quantized);
    c.mjpeg = accuracy_of(model, message, mjpeg(marked.frames()));
    c.cropped = accuracy_of(model, message, mjpeg(cropped(marked.frames(), window)));
    c.scaled = accuracy_of(model, message, mjpeg(scaled(marked.frames(), factor)));
    report.clips.push_back(c);
  }
  const double n = double(report.clips.size());
  for (const auto& c : report.clips) {
    report.ssim += c.ssim / n;
    report.identity += c.identity / n;
    report.mjpeg += c.mjpeg / n;
    report.cropped += c.cropped / n;
    report.scaled += c.scaled / n;
  }
  if (sq > 0) report.psnr = 10.0 * std::log10(4.0 / (sq / double(count)));
  return report;
}

std::string RobustnessReport::to_json() const {
  json j;
  j["model_id"] = model_id;
  j["data_dim"] = data_dim;
  j["quality"] = {{"psnr_db", optional_db(psnr)}, {"ssim", ssim}};
  j["accuracy"] = {{"identity", identity}, {"mjpeg", mjpeg}, {"cropped", cropped}, {"scaled", scaled}};
  j["clips"] = json::array();
  for (const auto& c : clips) {
    j["clips"].push_back({{"id", c.id},
                          {"message", c.message},
                          {"psnr_db", optional_db(c.psnr)},
                          {"ssim", c.ssim},
                          {"identity", c.identity},
                          {"mjpeg", c.mjpeg},
                          {"cropped", c.cropped},
                          {"scaled", c.scaled}});
  }
  j["protocol"] = {{"seed", options.seed},
                   {"mjpeg_quality", options.mjpeg_quality},
                   {"chroma", options.chroma == noise::ChromaSubsampling::yuv444 ? "444" : "420"},
                   {"crop_area", options.crop_area},
                   {"scale", options.scale},
                   {"randomized", options.randomized},
                   {"post_quantization_quality", options.post_quantization_quality}};
  j["tool_version"] = "attnmark 0.1.0";
  return j.dump(2) + "\n";
}

double residual_images(WatermarkModel<float>& model, const VideoClip& clip, const BitMessage& message,
                       const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const VideoClip marked = encode_clip(model, clip, message);
  Tensor<float> residual(clip.frames().shape());
  double largest = 0;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    residual[i] = std::abs(marked.frames()[i] - clip.frames()[i]);
    largest = std::max(largest, double(residual[i]));
  }
  const double gain = 1.0 / kResidualBound;
  const std::size_t w = clip.width(), h = clip.height();
  for (std::size_t f = 0; f < clip.length(); ++f) {
    Tensor<float> frame(Shape{w, h, 3});
    std::copy_n(marked.frames().data() + f * w * h * 3, w * h * 3, frame.data());
    char name[32];
    std::snprintf(name, sizeof name, "watermarked_%04zu.png", f);
    media::save_frame_png(frame, out_dir / name);
  }
  write_scaled_frames(residual, gain, out_dir, "residual_x" + std::to_string(int(gain)));
  return largest;
}

double normalized_cross_correlation(std::span<const float> a, std::span<const float> b) {
  require(a.size() == b.size() && !a.empty(), "normalized_cross_correlation: sizes differ or are zero");
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(a.size());
  mb /= double(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0 || sbb == 0) return std::equal(a.begin(), a.end(), b.begin()) ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

BitFlipResult bit_flip_difference(WatermarkModel<float>& model, const VideoClip& clip, const BitMessage& message,
                                  const std::vector<std::size_t>& bits, const std::optional<fs::path>& out_dir) {
  BitFlipResult result;
  result.bits = bits;
  const VideoClip base = encode_clip(model, clip, message);
  if (out_dir) fs::create_directories(*out_dir);
  for (std::size_t bit : bits) {
    require(bit < message.width(), "bit_flip_difference: bit " + std::to_string(bit) + " out of range");
    const VideoClip flipped = encode_clip(model, clip, message.flipped(bit));
    Tensor<float> mask(clip.frames().shape());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = std::abs(base.frames()[i] - flipped.frames()[i]);
    if (out_dir) write_scaled_frames(mask, 1.0 / kResidualBound, *out_dir, "diff_bit" + std::to_string(bit));
    result.masks.push_back(std::move(mask));
  }
  const std::size_t n = bits.size();
  result.correlation.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      result.correlation[i][j] = result.correlation[j][i] =
          normalized_cross_correlation(result.masks[i].values(), result.masks[j].values());
  return result;
}

std::string TrainLogRecord::to_json() const {
  json j;
  j["epoch"] = epoch;
  j["seconds"] = seconds;
  j["losses"] = {{"l_d", l_d}, {"l_d_star", l_d_star}, {"l_c", l_c}, {"l_a", l_a}, {"l_w", l_w}, {"l_r", l_r}};
  j["val"] = {{"identity", identity}, {"mjpeg", mjpeg}, {"cropped", cropped}, {"scaled", scaled}};
  j["lr"] = lr;
  return j.dump();
}

TrainLogRecord TrainLogRecord::from_json(const std::string& line) {
  try {
    const json j = json::parse(line);
    TrainLogRecord r;
    r.epoch = j.at("epoch").get<std::size_t>();
    r.seconds = j.at("seconds").get<double>();
    const json& l = j.at("losses");
    r.l_d = l.at("l_d");
    r.l_d_star = l.at("l_d_star");
    r.l_c = l.at("l_c");
    r.l_a = l.at("l_a");
    r.l_w = l.at("l_w");
    r.l_r = l.at("l_r");
    const json& v = j.at("val");
    r.identity = v.at("identity");
    r.mjpeg = v.at("mjpeg");
    r.cropped = v.at("cropped");
    r.scaled = v.at("scaled");
    r.lr = j.at("lr");
    return r;
  } catch (const json::exception& e) {
    throw DataError(std::string("bad training log record: ") + e.what());
  }
}

std::vector<TrainLogRecord> read_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read training log " + path.string());
  std::vector<TrainLogRecord> records;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) records.push_back(TrainLogRecord::from_json(line));
  return records;
}

std::optional<std::size_t> first_crossing(const std::vector<TrainLogRecord>& records, double threshold) {
  for (const auto& r : records)
    if (r.identity >= threshold) return r.epoch;
  return std::nullopt;
}

std::string ConvergenceSummary::to_json() const {
  json j;
  j["thresholds"] = thresholds;
  j["runs"] = json::array();
  for (std::size_t r = 0; r < labels.size(); ++r) {
    json cross = json::array();
    for (const auto& c : crossing[r]) cross.push_back(c ? json(*c) : json(nullptr));
    j["runs"].push_back({{"label", labels[r]}, {"first_epoch", cross}});
  }
  return j.dump(2) + "\n";
}

namespace {

std::string svg_panel(const std::vector<LabeledLog>& logs, double x0, double y0, const std::string& title,
                      double (*value)(const TrainLogRecord&)) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  constexpr double width = 420, height = 260;
  double tmax = 0, vmin = std::numeric_limits<double>::infinity(), vmax = -vmin;
  for (const auto& log : logs)
    for (const auto& r : log.records) {
      tmax = std::max(tmax, r.seconds);
      vmin = std::min(vmin, value(r));
      vmax = std::max(vmax, value(r));
    }
  if (!(vmax > vmin)) {
    vmin -= 0.5;
    vmax += 0.5;
  }
  if (tmax <= 0) tmax = 1;
  std::ostringstream s;
  s << "<g transform=\"translate(" << x0 << "," << y0 << ")\">\n";
  s << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"none\" stroke=\"#444\"/>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"-8\" text-anchor=\"middle\" font-size=\"13\">" << title << "</text>\n";
  s << "<text x=\"" << width / 2 << "\" y=\"" << height + 28
    << "\" text-anchor=\"middle\" font-size=\"11\">wall-clock seconds (max " << tmax << ")</text>\n";
  s << "<text x=\"-6\" y=\"10\" text-anchor=\"end\" font-size=\"10\">" << vmax << "</text>\n";
  s << "<text x=\"-6\" y=\"" << height << "\" text-anchor=\"end\" font-size=\"10\">" << vmin << "</text>\n";
  for (std::size_t k = 0; k < logs.size(); ++k) {
    s << "<polyline fill=\"none\" stroke=\"" << colors[k % 6] << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& r : logs[k].records)
      s << r.seconds / tmax * width << "," << height - (value(r) - vmin) / (vmax - vmin) * height << " ";
    s << "\"/>\n";
  }
  s << "</g>\n";
  return s.str();
}

}  // namespace

ConvergenceSummary convergence_report(const std::vector<LabeledLog>& logs, const fs::path& out_dir,
                                      const std::vector<double>& thresholds) {
  if (logs.empty()) throw ConfigError("convergence report: no training logs given");
  ConvergenceSummary summary;
  summary.thresholds = thresholds;
  for (const auto& log : logs) {
    summary.labels.push_back(log.label);
    std::vector<std::optional<std::size_t>> row;
    for (double t : thresholds) row.push_back(first_crossing(log.records, t));
    summary.crossing.push_back(row);
  }
  fs::create_directories(out_dir);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"" << 360 + 18 * logs.size() << "\">\n";
  svg << svg_panel(logs, 60, 30, "training loss l_d", [](const TrainLogRecord& r) { return r.l_d; });
  svg << svg_panel(logs, 550, 30, "validation identity accuracy", [](const TrainLogRecord& r) { return r.identity; });
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
  for (std::size_t k = 0; k < logs.size(); ++k)
    svg << "<text x=\"60\" y=\"" << 345 + 18 * k << "\" font-size=\"12\" fill=\"" << colors[k % 6] << "\">"
        << logs[k].label << "</text>\n";
  svg << "</svg>\n";
  std::ofstream(out_dir / "convergence.svg") << svg.str();
  std::ofstream(out_dir / "convergence.json") << summary.to_json();
  return summary;
}

}  // namespace attnmark::eval
