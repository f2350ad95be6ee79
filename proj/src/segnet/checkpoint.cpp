#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "ciss/segnet.hpp"

namespace ciss {
namespace {

constexpr char kMagic[8] = {'C', 'I', 'S', 'S', 'C', 'K', 'P', 'T'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32(std::istream& in, const std::filesystem::path& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path.string() + ": truncated checkpoint");
  return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
         static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kCheckpointVersion);
  for (const auto& r : records) {
    if (shape_numel(r.dims) != r.data.size()) throw ShapeError("checkpoint record '" + r.name + "' size mismatch");
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
    put_u32(out, static_cast<std::uint32_t>(r.dims.size()));
    for (auto d : r.dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : r.data) put_u32(out, std::bit_cast<std::uint32_t>(v));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<CheckpointRecord> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw DataError(path.string() + ": not a checkpoint");
  const auto version = get_u32(in, path);
  if (version != kCheckpointVersion) {
    throw DataError(path.string() + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  std::vector<CheckpointRecord> records;
  while (in.peek() != std::char_traits<char>::eof()) {
    CheckpointRecord r;
    const auto name_len = get_u32(in, path);
    if (name_len > 4096) throw DataError(path.string() + ": implausible record name length");
    r.name.resize(name_len);
    if (!in.read(r.name.data(), name_len)) throw DataError(path.string() + ": truncated checkpoint");
    const auto ndim = get_u32(in, path);
    if (ndim > 8) throw DataError(path.string() + ": implausible rank for '" + r.name + "'");
    for (std::uint32_t i = 0; i < ndim; ++i) r.dims.push_back(get_u32(in, path));
    r.data.resize(shape_numel(r.dims));
    for (auto& v : r.data) v = std::bit_cast<float>(get_u32(in, path));
    records.push_back(std::move(r));
  }
  return records;
}

template <typename T>
void append_records(std::vector<CheckpointRecord>& out, const std::string& prefix, const SegNetParams<T>& params) {
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    const auto& t = params.tensors[i];
    out.push_back({prefix + kParamNames[i], t.shape(), std::vector<float>(t.data().begin(), t.data().end())});
  }
}

template <typename T>
SegNetParams<T> params_from_records(const std::vector<CheckpointRecord>& records, const std::string& prefix) {
  SegNetParams<T> p;
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    const std::string name = prefix + kParamNames[i];
    auto it = std::find_if(records.begin(), records.end(), [&](const auto& r) { return r.name == name; });
    if (it == records.end()) throw DataError("checkpoint has no record '" + name + "'");
    p.tensors[i] = Tensor<T>(it->dims, std::vector<T>(it->data.begin(), it->data.end()));
  }
  const auto expected = param_shapes(p.classes());
  for (std::size_t i = 0; i < kParamTensors; ++i) {
    if (p.tensors[i].shape() != expected[i]) {
      throw DataError("checkpoint record '" + prefix + kParamNames[i] + "' has shape " +
                      shape_str(p.tensors[i].shape()) + ", expected " + shape_str(expected[i]));
    }
  }
  return p;
}

template void append_records(std::vector<CheckpointRecord>&, const std::string&, const SegNetParams<float>&);
template void append_records(std::vector<CheckpointRecord>&, const std::string&, const SegNetParams<double>&);
template SegNetParams<float> params_from_records(const std::vector<CheckpointRecord>&, const std::string&);
template SegNetParams<double> params_from_records(const std::vector<CheckpointRecord>&, const std::string&);

}  // namespace ciss
