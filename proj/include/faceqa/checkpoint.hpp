#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "faceqa/parameters.hpp"

namespace faceqa {

// On-disk layout, all integers little-endian:
//   "FQACKPT1"                      8-byte magic
//   u32 header_len, header bytes    model configuration (JSON text)
//   u64 count
//   count x { u32 name_len, name, u32 rank, u64 dims[rank], f64 values[numel] }
struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

struct CheckpointData {
  std::string header;
  std::vector<CheckpointEntry> entries;
};

std::string encode_checkpoint(std::string_view header, const ParameterSet& params);
std::string encode_checkpoint(const CheckpointData& data);
CheckpointData decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, std::string_view header,
                     const ParameterSet& params);
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint values into matching parameters. Every parameter must be
/// present with the same shape; extra entries are an error.
void restore_parameters(const CheckpointData& data, ParameterSet& params);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace faceqa
