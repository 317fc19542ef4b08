// SPDX-License-Identifier: Apache-2.0
#pragma once

// Little-endian field readers/writers shared by the .pingfb, PINGDATA and
// PINGCKPT formats. Reads report the byte offset of any truncation.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "ping/errors.hpp"

namespace ping::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <typename T>
  void put(T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void put_bytes(std::string_view bytes) { os_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }
  void put_zeros(std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) os_.put('\0');
  }
  bool good() const { return os_.good(); }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  template <typename T>
  T get(const char* what) {
    static_assert(std::is_trivially_copyable_v<T>);
    T v{};
    read_raw(reinterpret_cast<char*>(&v), sizeof(T), what);
    return v;
  }
  std::string get_bytes(std::size_t n, const char* what) {
    std::string s(n, '\0');
    read_raw(s.data(), n, what);
    return s;
  }
  std::size_t offset() const noexcept { return offset_; }
  /// True when the stream holds no further bytes.
  bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

 private:
  void read_raw(char* dst, std::size_t n, const char* what) {
    is_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(is_.gcount());
    if (got != n) {
      throw FormatError(std::string("truncated file while reading ") + what, offset_ + got);
    }
    offset_ += n;
  }

  std::istream& is_;
  std::size_t offset_ = 0;
};

}  // namespace ping::io
