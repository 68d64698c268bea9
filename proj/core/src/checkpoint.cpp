#include "attnmark/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "jpeg_codec.hpp"

namespace attnmark {

namespace {

constexpr char kMagic[4] = {'A', 'T', 'M', 'K'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void tensor(const std::string& name, const Tensor<float>& t) {
    str(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) u64(d);
    for (float v : t.values()) u32(std::bit_cast<std::uint32_t>(v));
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
  const std::uint8_t* take(std::size_t n) {
    if (data_.size() - pos_ < n) throw DataError("checkpoint truncated at byte " + std::to_string(pos_));
    const std::uint8_t* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  void tensor_into(const std::string& expected, Tensor<float>& t) {
    const std::string name = str();
    if (name != expected) throw DataError("checkpoint: expected tensor '" + expected + "', found '" + name + "'");
    const std::uint32_t rank = u32();
    Shape shape(rank);
    for (auto& d : shape) d = u64();
    if (shape != t.shape())
      throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                      shape_string(t.shape()));
    for (float& v : t.values()) v = std::bit_cast<float>(u32());
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

CheckpointInfo read_header(Reader& r) {
  const std::uint8_t* magic = r.take(4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint file (bad magic)");
  CheckpointInfo info;
  info.version = r.u32();
  if (info.version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(info.version));
  info.data_dim = r.u32();
  const std::uint8_t arch = r.u8();
  if (arch > 1) throw DataError("checkpoint: unknown architecture code " + std::to_string(arch));
  info.architecture = arch == 0 ? Architecture::attention : Architecture::no_attention;
  info.parameter_count = r.u64();
  info.tensor_count = r.u32();
  if (info.data_dim == 0) throw DataError("checkpoint: message width is zero");
  return info;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

std::vector<std::uint8_t> serialize(WatermarkModel<float>& model) {
  auto params = model.parameters();
  auto buffers = model.buffers();
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model.data_dim()));
  w.u8(model.architecture() == Architecture::attention ? 0 : 1);
  w.u64(model.parameter_count());
  w.u32(static_cast<std::uint32_t>(params.size() + buffers.size()));
  for (auto& p : params) w.tensor(p.name, p.var.value());
  for (auto& b : buffers) w.tensor(b.name, *b.tensor);
  return std::move(w.out);
}

CheckpointInfo read_info(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  return read_header(r);
}

WatermarkModel<float> deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const CheckpointInfo info = read_header(r);
  WatermarkModel<float> model(info.data_dim, info.architecture);
  auto params = model.parameters();
  auto buffers = model.buffers();
  if (info.tensor_count != params.size() + buffers.size())
    throw DataError("checkpoint: holds " + std::to_string(info.tensor_count) + " tensors, architecture needs " +
                    std::to_string(params.size() + buffers.size()));
  for (auto& p : params) r.tensor_into(p.name, p.var.mutable_value());
  for (auto& b : buffers) r.tensor_into(b.name, *b.tensor);
  if (!r.done()) throw DataError("checkpoint: trailing bytes after last tensor");
  model.set_training(false);
  return model;
}

void save_checkpoint(WatermarkModel<float>& model, const std::filesystem::path& path) {
  detail::write_file(path, serialize(model));
}

WatermarkModel<float> load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return deserialize(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

CheckpointInfo inspect_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return read_info(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace attnmark
