#include "faceqa/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace faceqa {

namespace {

constexpr std::string_view kMagic = "FQACKPT1";

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
  }
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get_le() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw DataError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const CheckpointData& data) {
  std::string out(kMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(data.header.size()));
  out += data.header;
  put_le<std::uint64_t>(out, data.entries.size());
  for (const auto& e : data.entries) {
    if (shape_numel(e.shape) != e.values.size()) {
      throw DataError("checkpoint entry " + e.name + " has inconsistent shape");
    }
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.name.size()));
    out += e.name;
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.shape.size()));
    for (auto d : e.shape) put_le<std::uint64_t>(out, d);
    for (double v : e.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::string encode_checkpoint(std::string_view header, const ParameterSet& params) {
  CheckpointData data;
  data.header = std::string(header);
  for (const auto& p : params.items()) {
    data.entries.push_back(
        {p.name, p.tensor.shape(), std::vector<double>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  return encode_checkpoint(data);
}

CheckpointData decode_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw DataError("not a checkpoint (bad magic)");
  CheckpointData data;
  data.header = std::string(r.take(r.get_le<std::uint32_t>()));
  const auto count = r.get_le<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name = std::string(r.take(r.get_le<std::uint32_t>()));
    const auto rank = r.get_le<std::uint32_t>();
    for (std::uint32_t a = 0; a < rank; ++a) e.shape.push_back(r.get_le<std::uint64_t>());
    const std::size_t n = shape_numel(e.shape);
    e.values.resize(n);
    for (std::size_t j = 0; j < n; ++j) e.values[j] = std::bit_cast<double>(r.get_le<std::uint64_t>());
    data.entries.push_back(std::move(e));
  }
  if (!r.done()) throw DataError("trailing bytes after checkpoint payload");
  return data;
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void save_checkpoint(const std::filesystem::path& path, std::string_view header,
                     const ParameterSet& params) {
  write_file_bytes(path, encode_checkpoint(header, params));
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

void restore_parameters(const CheckpointData& data, ParameterSet& params) {
  if (data.entries.size() != params.size()) {
    throw DataError("checkpoint has " + std::to_string(data.entries.size()) +
                    " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& e : data.entries) {
    if (!params.contains(e.name)) throw DataError("checkpoint tensor not in model: " + e.name);
    Tensor t = params.at(e.name);
    if (t.shape() != e.shape) {
      throw DataError("shape mismatch for " + e.name + ": " + shape_str(e.shape) + " vs " +
                      shape_str(t.shape()));
    }
    std::copy(e.values.begin(), e.values.end(), t.mutable_data().begin());
  }
}

}  // namespace faceqa
