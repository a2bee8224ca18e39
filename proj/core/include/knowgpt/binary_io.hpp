#pragma once

// Little-endian readers/writers shared by the KGEB, KGPL and KGMB formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "knowgpt/error.hpp"

namespace knowgpt::io {

template <typename T>
  requires std::is_arithmetic_v<T>
void write_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
  requires std::is_arithmetic_v<T>
T read_le(std::istream& in, std::string_view what) {
  std::array<char, sizeof(T)> bytes;
  in.read(bytes.data(), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw FormatError("truncated file while reading " + std::string(what));
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

void write_magic(std::ostream& out, std::string_view magic);
// Throws FormatError when the next bytes do not equal `magic`.
void expect_magic(std::istream& in, std::string_view magic);

std::ifstream open_binary_input(const std::filesystem::path& path);
std::ofstream open_binary_output(const std::filesystem::path& path);

// Verifies the stream has been fully consumed.
void expect_eof(std::istream& in, const std::filesystem::path& path);

}  // namespace knowgpt::io
