#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "percreach/errors.hpp"

namespace percreach::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

// Little-endian writer. Tracks bytes written so callers can report sizes.
class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void bytes(std::string_view s) {
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
    count_ += s.size();
  }
  template <typename T>
  void put(T v) {
    v = to_little(v);
    os_.write(reinterpret_cast<const char*>(&v), sizeof(T));
    count_ += sizeof(T);
  }
  void u8(std::uint8_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void f64(double v) { put(v); }
  void f64s(const std::vector<double>& v) {
    if constexpr (std::endian::native == std::endian::little) {
      os_.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
      count_ += v.size() * sizeof(double);
    } else {
      for (double x : v) f64(x);
    }
  }
  std::size_t count() const { return count_; }

 private:
  std::ostream& os_;
  std::size_t count_ = 0;
};

// Little-endian reader that throws FormatError with the failing byte offset.
class Reader {
 public:
  explicit Reader(std::istream& is, std::size_t start = 0) : is_(is), offset_(start) {}

  std::string bytes(std::size_t n, std::string_view what) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError("truncated input while reading " + std::string(what), offset_);
    }
    offset_ += n;
    return s;
  }
  template <typename T>
  T get(std::string_view what) {
    T v{};
    is_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (static_cast<std::size_t>(is_.gcount()) != sizeof(T)) {
      throw FormatError("truncated input while reading " + std::string(what), offset_);
    }
    offset_ += sizeof(T);
    return to_little(v);
  }
  std::uint8_t u8(std::string_view what) { return get<std::uint8_t>(what); }
  std::uint32_t u32(std::string_view what) { return get<std::uint32_t>(what); }
  double f64(std::string_view what) { return get<double>(what); }
  std::vector<double> f64s(std::size_t n, std::string_view what) {
    std::vector<double> v(n);
    is_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (static_cast<std::size_t>(is_.gcount()) != n * sizeof(double)) {
      throw FormatError("truncated input while reading " + std::string(what), offset_);
    }
    offset_ += n * sizeof(double);
    for (auto& x : v) x = to_little(x);
    return v;
  }
  void expect_end() {
    if (is_.peek() != std::char_traits<char>::eof()) {
      throw FormatError("trailing bytes after payload", offset_);
    }
  }
  std::size_t offset() const { return offset_; }

 private:
  std::istream& is_;
  std::size_t offset_;
};

}  // namespace percreach::io
