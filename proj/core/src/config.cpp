#include "attnmark/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace attnmark {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class N>
N parse_number(const std::string& key, const std::string& text) {
  N value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError("key '" + key + "': cannot parse '" + text + "' as a number");
  return value;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + text + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct Field {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

template <class N>
Field number(std::string key, N TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_number<N>(key, v); },
          [member](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<N>) return format_double(c.*member);
            else return std::to_string(c.*member);
          }};
}

Field flag(std::string key, bool TrainConfig::*member) {
  return {key, [key, member](TrainConfig& c, const std::string& v) { c.*member = parse_bool(key, v); },
          [member](const TrainConfig& c) { return std::string(c.*member ? "true" : "false"); }};
}

Field text(std::string key, std::string TrainConfig::*member) {
  return {key, [member](TrainConfig& c, const std::string& v) { c.*member = v; },
          [member](const TrainConfig& c) { return c.*member; }};
}

Field real(std::string key, std::function<double&(TrainConfig&)> ref) {
  return {key, [key, ref](TrainConfig& c, const std::string& v) { ref(c) = parse_number<double>(key, v); },
          [ref](const TrainConfig& c) { return format_double(ref(const_cast<TrainConfig&>(c))); }};
}

Field toggle(std::string key, std::function<bool&(TrainConfig&)> ref) {
  return {key, [key, ref](TrainConfig& c, const std::string& v) { ref(c) = parse_bool(key, v); },
          [ref](const TrainConfig& c) { return std::string(ref(const_cast<TrainConfig&>(c)) ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      number("batch_size", &TrainConfig::batch_size),
      number("data_dim", &TrainConfig::data_dim),
      number("epochs", &TrainConfig::epochs),
      number("batches_per_epoch", &TrainConfig::batches_per_epoch),
      number("lr", &TrainConfig::lr),
      number("lr_decay", &TrainConfig::lr_decay),
      number("lr_patience", &TrainConfig::lr_patience),
      number("lr_min_delta", &TrainConfig::lr_min_delta),
      number("lr_floor", &TrainConfig::lr_floor),
      number("lr_smoothing", &TrainConfig::lr_smoothing),
      number("critic_clip", &TrainConfig::critic_clip),
      number("critic_steps", &TrainConfig::critic_steps),
      flag("critic", &TrainConfig::critic),
      flag("adversary", &TrainConfig::adversary),
      flag("hamming_pairs", &TrainConfig::hamming_pairs),
      {"architecture",
       [](TrainConfig& c, const std::string& v) { c.architecture = architecture_from_string(v); },
       [](const TrainConfig& c) { return to_string(c.architecture); }},
      toggle("noise_crop", [](TrainConfig& c) -> bool& { return c.noise.crop; }),
      toggle("noise_scale", [](TrainConfig& c) -> bool& { return c.noise.scale; }),
      toggle("noise_compress", [](TrainConfig& c) -> bool& { return c.noise.compress; }),
      real("crop_min", [](TrainConfig& c) -> double& { return c.noise.crop_min; }),
      real("crop_max", [](TrainConfig& c) -> double& { return c.noise.crop_max; }),
      real("scale_min", [](TrainConfig& c) -> double& { return c.noise.scale_min; }),
      real("scale_max", [](TrainConfig& c) -> double& { return c.noise.scale_max; }),
      real("drop_min", [](TrainConfig& c) -> double& { return c.noise.drop_min; }),
      real("drop_max", [](TrainConfig& c) -> double& { return c.noise.drop_max; }),
      flag("ld_star", &TrainConfig::ld_star),
      {"ldstar_mode",
       [](TrainConfig& c, const std::string& v) { c.ldstar_mode = loss::ld_star_mode_from_string(v); },
       [](const TrainConfig& c) { return loss::to_string(c.ldstar_mode); }},
      number("mjpeg_quality", &TrainConfig::mjpeg_quality),
      {"chroma",
       [](TrainConfig& c, const std::string& v) {
         if (v == "444") c.chroma = noise::ChromaSubsampling::yuv444;
         else if (v == "420") c.chroma = noise::ChromaSubsampling::yuv420;
         else throw ConfigError("key 'chroma': expected 444 or 420, got '" + v + "'");
       },
       [](const TrainConfig& c) {
         return std::string(c.chroma == noise::ChromaSubsampling::yuv444 ? "444" : "420");
       }},
      real("weight_d", [](TrainConfig& c) -> double& { return c.weights.d; }),
      real("weight_d_star", [](TrainConfig& c) -> double& { return c.weights.d_star; }),
      real("weight_c", [](TrainConfig& c) -> double& { return c.weights.c; }),
      real("weight_a", [](TrainConfig& c) -> double& { return c.weights.a; }),
      number("train_frames", &TrainConfig::train_frames),
      number("train_width", &TrainConfig::train_width),
      number("train_height", &TrainConfig::train_height),
      number("val_frames", &TrainConfig::val_frames),
      number("seed", &TrainConfig::seed),
      text("corpus", &TrainConfig::corpus),
      text("out_dir", &TrainConfig::out_dir),
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  check(batch_size >= 1, "batch_size must be positive");
  check(!hamming_pairs || batch_size % 2 == 0,
        "batch_size must be even when hamming_pairs is on (got " + std::to_string(batch_size) + ")");
  check(data_dim >= 1, "data_dim must be positive");
  check(epochs >= 1, "epochs must be positive");
  check(lr > 0, "lr must be positive");
  check(lr_decay > 0 && lr_decay <= 1, "lr_decay must be in (0, 1]");
  check(lr_floor > 0 && lr_floor <= lr, "lr_floor must be in (0, lr]");
  check(lr_smoothing > 0 && lr_smoothing <= 1, "lr_smoothing must be in (0, 1]");
  check(lr_min_delta >= 0, "lr_min_delta must be nonnegative");
  check(critic_clip > 0, "critic_clip must be positive");
  check(critic_steps >= 1, "critic_steps must be positive");
  check(mjpeg_quality >= 1 && mjpeg_quality <= 100, "mjpeg_quality must be in [1, 100]");
  check(weights.d >= 0 && weights.d_star >= 0 && weights.c >= 0 && weights.a >= 0, "loss weights must be nonnegative");
  check(train_frames >= 1, "train_frames must be positive");
  check(train_width >= 11 && train_height >= 11, "train_width and train_height must be at least 11");
  noise.validate();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

void TrainConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(*this) << "\n";
  return out.str();
}

std::vector<std::string> TrainConfig::keys() {
  std::vector<std::string> names;
  for (const auto& f : fields()) names.push_back(f.key);
  return names;
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  return cfg;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void TrainConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_text();
}

}  // namespace attnmark
