#pragma once

// Binary tensor format, little-endian throughout:
//
//   bytes 0..3   magic "TNSR"
//   byte  4      dtype: 1 = float32, 2 = float64
//   bytes 5..7   reserved, zero
//   u32          rank
//   i64 x rank   dims
//   values       numel() values of the dtype, row-major
//
// A named tensor is a u32 name length, the UTF-8 name bytes, then a tensor.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "cpnet/tensor.hpp"

namespace cpnet {

static_assert(std::endian::native == std::endian::little, "serialization assumes a little-endian host");

namespace io {

template <class U>
void write_pod(std::ostream& os, const U& value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(U));
}

template <class U>
U read_pod(std::istream& is) {
  U value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(U));
  if (!is) fail(ErrorKind::io, "unexpected end of stream");
  return value;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, std::size_t limit = 1u << 20) {
  const auto n = read_pod<std::uint32_t>(is);
  if (n > limit) fail(ErrorKind::io, "string length " + std::to_string(n) + " exceeds limit");
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) fail(ErrorKind::io, "unexpected end of stream");
  return s;
}

template <class T>
constexpr std::uint8_t dtype_code() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? 1 : 2;
}

}  // namespace io

template <class T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write("TNSR", 4);
  const std::uint8_t header[4] = {io::dtype_code<T>(), 0, 0, 0};
  os.write(reinterpret_cast<const char*>(header), 4);
  io::write_pod(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) io::write_pod(os, static_cast<std::int64_t>(d));
  os.write(reinterpret_cast<const char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
  if (!os) fail(ErrorKind::io, "failed writing tensor");
}

// Reads a tensor stored in either dtype and converts it to T.
template <class T>
Tensor<T> read_tensor(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0) fail(ErrorKind::io, "bad tensor magic");
  std::uint8_t header[4];
  is.read(reinterpret_cast<char*>(header), 4);
  if (!is) fail(ErrorKind::io, "truncated tensor header");
  const auto rank = io::read_pod<std::uint32_t>(is);
  if (rank > 8) fail(ErrorKind::io, "implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) {
    d = io::read_pod<std::int64_t>(is);
    if (d <= 0 || d > (std::int64_t{1} << 32)) fail(ErrorKind::io, "bad tensor dim");
  }
  const auto n = static_cast<std::size_t>(shape_numel(shape));
  std::vector<T> values(n);
  auto read_as = [&](auto tag) {
    using Stored = decltype(tag);
    std::vector<Stored> raw(n);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(Stored)));
    if (!is) fail(ErrorKind::io, "truncated tensor payload");
    for (std::size_t i = 0; i < n; ++i) values[i] = static_cast<T>(raw[i]);
  };
  switch (header[0]) {
    case 1: read_as(float{}); break;
    case 2: read_as(double{}); break;
    default: fail(ErrorKind::io, "unknown tensor dtype code " + std::to_string(header[0]));
  }
  return Tensor<T>(std::move(shape), std::move(values));
}

template <class T>
void write_named_tensor(std::ostream& os, const std::string& name, const Tensor<T>& t) {
  io::write_string(os, name);
  write_tensor(os, t);
}

template <class T>
std::pair<std::string, Tensor<T>> read_named_tensor(std::istream& is) {
  auto name = io::read_string(is);
  return {std::move(name), read_tensor<T>(is)};
}

}  // namespace cpnet
