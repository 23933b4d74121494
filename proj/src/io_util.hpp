#ifndef UWLOC_SRC_IO_UTIL_HPP
#define UWLOC_SRC_IO_UTIL_HPP

#include <charconv>
#include <cstdint>
#include <fstream>
#include <string>

#include "uwloc/common.hpp"

namespace uwloc::detail {

// Shortest representation that round-trips exactly; keeps CSV exports
// lossless and byte-deterministic.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + path);
  return out;
}

inline std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream in(path, binary ? std::ios::binary : std::ios::in);
  if (!in) fail(ErrorCode::IoError, "cannot open for reading: " + path);
  return in;
}

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) fail(ErrorCode::IoError, "truncated file while reading " + what);
  return v;
}

inline void write_doubles(std::ofstream& out, const double* data, std::size_t n) {
  out.write(reinterpret_cast<const char*>(data), sizeof(double) * n);
}

inline void read_doubles(std::ifstream& in, double* data, std::size_t n,
                         const std::string& what) {
  in.read(reinterpret_cast<char*>(data), sizeof(double) * n);
  if (!in) fail(ErrorCode::IoError, "truncated file while reading " + what);
}

}  // namespace uwloc::detail

#endif  // UWLOC_SRC_IO_UTIL_HPP
