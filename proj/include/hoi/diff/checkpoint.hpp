#pragma once

// Checkpoint container: binary file with magic bytes, a format version, and
// a named tensor table.  Layout (all integers little-endian):
//
//   bytes 0..7   magic "HOICKPT1"
//   uint32       version (currently 1)
//   uint32       entry count
//   per entry:
//     uint32       name length, then name bytes (UTF-8, no terminator)
//     uint32       ndim, then ndim int64 dims
//     float64[n]   row-major payload, n = product(dims)
//
// Floats are written as raw IEEE-754 doubles in host order; the format is
// specified as little-endian (all supported targets are).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hoi/diff/tensor.hpp"

namespace hoi::diff {

inline constexpr char kCheckpointMagic[8] = {'H', 'O', 'I', 'C', 'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {
template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) fail(str_cat("checkpoint: truncated file while reading ", what));
  return v;
}
}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(str_cat("checkpoint: cannot open '", path, "' for writing"));
  os.write(kCheckpointMagic, 8);
  detail::write_pod(os, kCheckpointVersion);
  detail::write_pod(os, static_cast<uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::write_pod(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(os, static_cast<uint32_t>(t.shape().size()));
    for (int64_t d : t.shape()) detail::write_pod(os, d);
    os.write(reinterpret_cast<const char*>(t.value().data()),
             static_cast<std::streamsize>(t.value().size() * sizeof(double)));
  }
  if (!os) fail(str_cat("checkpoint: write to '", path, "' failed"));
}

struct CheckpointEntry {
  Shape shape;
  std::vector<double> values;
};

inline std::map<std::string, CheckpointEntry> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(str_cat("checkpoint: cannot open '", path, "'"));
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    fail(str_cat("checkpoint: '", path, "' is not a checkpoint file (bad magic)"));
  uint32_t version = detail::read_pod<uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    fail(str_cat("checkpoint: '", path, "' has unsupported version ", version));
  uint32_t count = detail::read_pod<uint32_t>(is, "entry count");
  std::map<std::string, CheckpointEntry> out;
  for (uint32_t e = 0; e < count; ++e) {
    uint32_t name_len = detail::read_pod<uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) fail("checkpoint: truncated file while reading name");
    uint32_t ndim = detail::read_pod<uint32_t>(is, "ndim");
    Shape shape(ndim);
    for (uint32_t d = 0; d < ndim; ++d) shape[d] = detail::read_pod<int64_t>(is, "dim");
    int64_t n = shape_numel(shape);
    CheckpointEntry entry;
    entry.shape = std::move(shape);
    entry.values.resize(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(entry.values.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) fail(str_cat("checkpoint: truncated payload for entry '", name, "'"));
    if (out.count(name)) fail(str_cat("checkpoint: duplicate entry '", name, "'"));
    out.emplace(std::move(name), std::move(entry));
  }
  return out;
}

// Copy a loaded entry into an existing parameter tensor (shapes must match).
inline void load_into(const std::map<std::string, CheckpointEntry>& ckpt, const std::string& name,
                      Tensor& param) {
  auto it = ckpt.find(name);
  if (it == ckpt.end()) fail(str_cat("checkpoint: missing entry '", name, "'"));
  if (it->second.shape != param.shape())
    fail(str_cat("checkpoint: entry '", name, "' has shape ", shape_str(it->second.shape),
                 ", expected ", shape_str(param.shape())));
  param.mutable_value() = it->second.values;
}

}  // namespace hoi::diff
