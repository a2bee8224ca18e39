#include "knowgpt/binary_io.hpp"

namespace knowgpt::io {

void write_magic(std::ostream& out, std::string_view magic) {
  out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

void expect_magic(std::istream& in, std::string_view magic) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || got != magic) {
    throw FormatError("bad magic: expected '" + std::string(magic) + "'");
  }
}

std::ifstream open_binary_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error("cannot open " + path.string() + " for reading");
  }
  return in;
}

std::ofstream open_binary_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error("cannot open " + path.string() + " for writing");
  }
  return out;
}

void expect_eof(std::istream& in, const std::filesystem::path& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after payload");
  }
}

}  // namespace knowgpt::io
