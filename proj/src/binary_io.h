#pragma once

#include "gsc/errors.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <type_traits>

namespace gsc::detail {

template <typename T>
T byteSwap(T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T) / 2; ++i) {
    std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

template <typename T>
T readLittle(std::istream& in) {
  T value;
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) {
    throw IoError("unexpected end of binary data");
  }
  if constexpr (std::endian::native == std::endian::big) {
    value = byteSwap(value);
  }
  return value;
}

template <typename T>
void writeLittle(std::ostream& out, T value) {
  if constexpr (std::endian::native == std::endian::big) {
    value = byteSwap(value);
  }
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

} // namespace gsc::detail
