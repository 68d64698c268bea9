#include <doctest.h>

#include <fstream>

#include "attnmark/checkpoint.hpp"
#include "attnmark/config.hpp"
#include "attnmark/media.hpp"
#include "support.hpp"

using namespace attnmark;
using testing::TempDir;

namespace {

template <class F>
std::string error_text(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("checkpoint header and corruption") {
  WatermarkModel<float> model(16, Architecture::no_attention, 1);
  const auto bytes = serialize(model);
  const CheckpointInfo info = read_info(bytes);
  CHECK(info.version == kCheckpointVersion);
  CHECK(info.data_dim == 16);
  CHECK(info.architecture == Architecture::no_attention);
  CHECK(info.parameter_count == model.parameter_count());

  auto bad = bytes;
  bad[0] = 'X';
  CHECK(error_text([&] { deserialize(bad); }).find("magic") != std::string::npos);
  bad = bytes;
  bad[4] = 9;
  CHECK_THROWS_AS(deserialize(bad), DataError);
  bad = bytes;
  bad[12] = 7;
  CHECK_THROWS_AS(deserialize(bad), DataError);
  // Claiming a different width makes the tensor shapes disagree.
  bad = bytes;
  bad[8] = 32;
  CHECK_THROWS_AS(deserialize(bad), DataError);

  for (std::size_t cut : {std::size_t(3), std::size_t(20), bytes.size() / 2, bytes.size() - 1})
    CHECK_THROWS_AS(deserialize(std::span(bytes.data(), cut)), DataError);
  auto longer = bytes;
  longer.push_back(0);
  CHECK(error_text([&] { deserialize(longer); }).find("trailing") != std::string::npos);

  WatermarkModel<float> back = deserialize(bytes);
  CHECK(serialize(back) == bytes);
}

TEST_CASE("checkpoint files") {
  TempDir dir("ckpt");
  WatermarkModel<float> model(32, Architecture::attention, 2);
  model.set_training(true);
  Rng rng(3);
  // Move the batchnorm running statistics off their defaults.
  model.attention(Var<float>(testing::random_tensor<float>(Shape{1, 2, 16, 16, 3}, rng)));
  save_checkpoint(model, dir / "m.ckpt");
  WatermarkModel<float> loaded = load_checkpoint(dir / "m.ckpt");
  CHECK(serialize(loaded) == serialize(model));
  const CheckpointInfo info = inspect_checkpoint(dir / "m.ckpt");
  CHECK(info.architecture == Architecture::attention);
  CHECK(info.tensor_count > 0);

  const std::string missing = error_text([&] { load_checkpoint(dir / "absent.ckpt"); });
  CHECK(missing.find("absent.ckpt") != std::string::npos);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), DataError);
}

TEST_CASE("config text round trip") {
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.lr = 2.5e-4;
  cfg.architecture = Architecture::no_attention;
  cfg.noise.crop = false;
  cfg.chroma = noise::ChromaSubsampling::yuv420;
  cfg.weights.a = 0.25;
  cfg.corpus = "data/manifest.json";
  const TrainConfig back = TrainConfig::parse(cfg.to_text());
  CHECK(back.to_text() == cfg.to_text());
  CHECK(back.batch_size == 6);
  CHECK(back.lr == 2.5e-4);
  CHECK(back.architecture == Architecture::no_attention);
  CHECK(!back.noise.crop);

  const std::string text = cfg.to_text();
  CHECK(TrainConfig::keys().size() == std::size_t(std::count(text.begin(), text.end(), '\n')));

  TempDir dir("config");
  cfg.save(dir / "c.txt");
  CHECK(TrainConfig::load(dir / "c.txt").to_text() == cfg.to_text());
}

TEST_CASE("config parsing rules") {
  const TrainConfig c = TrainConfig::parse("# a comment\n\n  epochs = 7   # trailing\nseed=11\n");
  CHECK(c.epochs == 7);
  CHECK(c.seed == 11);
  CHECK(TrainConfig::parse("").to_text() == TrainConfig().to_text());

  const std::string unknown = error_text([] { TrainConfig::parse("epochs = 3\nbogus = 1\n"); });
  CHECK(unknown.find("line 2") != std::string::npos);
  CHECK(unknown.find("bogus") != std::string::npos);
  CHECK_THROWS_AS(TrainConfig::parse("epochs 3\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("epochs = three\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("critic = maybe\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("chroma = 422\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("architecture = transformer\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST_CASE("overrides and validation") {
  TrainConfig cfg;
  cfg.apply_override("lr=0.01");
  cfg.apply_override("hamming_pairs=false");
  CHECK(cfg.lr == 0.01);
  CHECK(!cfg.hamming_pairs);
  CHECK_THROWS_AS(cfg.apply_override("lr"), ConfigError);
  CHECK_THROWS_AS(cfg.apply_override("nope=1"), ConfigError);

  CHECK_NOTHROW(TrainConfig().validate());
  TrainConfig odd;
  odd.batch_size = 5;
  CHECK(error_text([&] { odd.validate(); }).find("batch_size") != std::string::npos);
  odd.hamming_pairs = false;
  CHECK_NOTHROW(odd.validate());

  TrainConfig small;
  small.train_width = 8;
  CHECK_THROWS_AS(small.validate(), ConfigError);
  TrainConfig quality;
  quality.mjpeg_quality = 0;
  CHECK_THROWS_AS(quality.validate(), ConfigError);
  TrainConfig floor;
  floor.lr_floor = 1.0;
  CHECK_THROWS_AS(floor.validate(), ConfigError);
  TrainConfig crop;
  crop.noise.crop_min = 1.5;
  CHECK_THROWS_AS(crop.validate(), ConfigError);
}
