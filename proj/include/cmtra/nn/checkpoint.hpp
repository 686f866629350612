#pragma once

// Tensor container format, version 1. All integers little-endian.
//
//   magic    8 bytes  "CMTRATNS"
//   version  u32      1
//   count    u32      number of tensors
//   count x {
//     name_len u32, name bytes (UTF-8)
//     rows u64, cols u64
//     rows*cols IEEE-754 binary64 values, row-major
//   }
//
// The JSON manifest written next to it carries the architecture and vocab.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "cmtra/errors.hpp"
#include "cmtra/nn/matrix.hpp"

namespace cmtra::nn {

inline constexpr char kTensorMagic[8] = {'C', 'M', 'T', 'R', 'A', 'T', 'N', 'S'};
inline constexpr std::uint32_t kTensorFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix value;
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "tensor I/O assumes a little-endian host");

template <typename U>
void put(std::ostream& out, U v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

template <typename U>
U get(std::istream& in) {
  U v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(U));
  if (!in) throw IoError("truncated tensor file");
  return v;
}

}  // namespace detail

inline void write_tensors(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kTensorMagic, sizeof(kTensorMagic));
  detail::put<std::uint32_t>(out, kTensorFormatVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    detail::put<std::uint64_t>(out, t.value.rows());
    detail::put<std::uint64_t>(out, t.value.cols());
    out.write(reinterpret_cast<const char*>(t.value.flat().data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing tensors");
}

inline std::vector<NamedTensor> read_tensors(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) throw IoError("not a tensor file");
  const auto version = detail::get<std::uint32_t>(in);
  if (version != kTensorFormatVersion) throw IoError("unsupported tensor format version " + std::to_string(version));
  const auto count = detail::get<std::uint32_t>(in);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::get<std::uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const auto rows = detail::get<std::uint64_t>(in);
    const auto cols = detail::get<std::uint64_t>(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.flat().data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw IoError("truncated tensor '" + name + "'");
    out.push_back({std::move(name), std::move(m)});
  }
  return out;
}

inline void save_tensors(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_tensors(out, tensors);
}

inline std::vector<NamedTensor> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return read_tensors(in);
}

}  // namespace cmtra::nn
