#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "attnmark/model.hpp"

namespace attnmark {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header fields of a checkpoint, readable without building a model.
struct CheckpointInfo {
  std::uint32_t version = 0;
  std::size_t data_dim = 0;
  Architecture architecture = Architecture::attention;
  std::size_t parameter_count = 0;
  std::size_t tensor_count = 0;
};

/// Little-endian binary layout: magic, version, D, architecture, parameter
/// count, then every named parameter followed by every batchnorm buffer.
/// Equal models serialize to equal bytes.
std::vector<std::uint8_t> serialize(WatermarkModel<float>& model);
/// Throws DataError on a bad magic, unknown version, truncation, or a tensor
/// whose name or shape does not match the architecture in the header.
WatermarkModel<float> deserialize(std::span<const std::uint8_t> bytes);
CheckpointInfo read_info(std::span<const std::uint8_t> bytes);

void save_checkpoint(WatermarkModel<float>& model, const std::filesystem::path& path);
WatermarkModel<float> load_checkpoint(const std::filesystem::path& path);
CheckpointInfo inspect_checkpoint(const std::filesystem::path& path);

}  // namespace attnmark
