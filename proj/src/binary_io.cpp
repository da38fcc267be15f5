#include "pprobe/binary_io.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "pprobe/error.hpp"

namespace pprobe {

void Fnv1a::update(std::string_view bytes) {
  for (unsigned char c : bytes) {
    state_ ^= c;
    state_ *= 1099511628211ULL;
  }
}

void Fnv1a::update_u64(std::uint64_t value) {
  for (int i = 0; i < 8; ++i) {
    state_ ^= (value >> (8 * i)) & 0xFFU;
    state_ *= 1099511628211ULL;
  }
}

std::uint64_t hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Fnv1a h;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return h.digest();
}

std::string hex64(std::uint64_t value) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << value;
  return os.str();
}

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw IoError("cannot open " + path.string() + " for writing");
}

void BinaryWriter::raw(const unsigned char* bytes, std::size_t n) {
  out_.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
  if (!out_) throw IoError("write failure on " + path_.string());
}

void BinaryWriter::write_magic(std::string_view magic) {
  raw(reinterpret_cast<const unsigned char*>(magic.data()), magic.size());
}

void BinaryWriter::u32(std::uint32_t value) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(value >> (8 * i));
  raw(b, 4);
}

void BinaryWriter::u64(std::uint64_t value) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(value >> (8 * i));
  raw(b, 8);
}

void BinaryWriter::f64(double value) { u64(std::bit_cast<std::uint64_t>(value)); }

void BinaryWriter::u32_array(std::span<const std::uint32_t> values) {
  if constexpr (std::endian::native == std::endian::little) {
    raw(reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes());
  } else {
    for (auto v : values) u32(v);
  }
}

void BinaryWriter::u64_array(std::span<const std::uint64_t> values) {
  if constexpr (std::endian::native == std::endian::little) {
    raw(reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes());
  } else {
    for (auto v : values) u64(v);
  }
}

void BinaryWriter::f64_array(std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    raw(reinterpret_cast<const unsigned char*>(values.data()), values.size_bytes());
  } else {
    for (auto v : values) f64(v);
  }
}

void BinaryWriter::close() {
  out_.flush();
  if (!out_) throw IoError("flush failure on " + path_.string());
  out_.close();
}

BinaryReader::BinaryReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw IoError("cannot open " + path.string());
}

void BinaryReader::raw(unsigned char* bytes, std::size_t n) {
  in_.read(reinterpret_cast<char*>(bytes), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in_.gcount()) != n) {
    throw ParseError("truncated file " + path_.string());
  }
}

void BinaryReader::expect_magic(std::string_view magic) {
  std::string got(magic.size(), '\0');
  raw(reinterpret_cast<unsigned char*>(got.data()), got.size());
  if (got != magic) {
    throw ParseError(path_.string() + ": bad magic, expected " + std::string(magic));
  }
}

std::uint32_t BinaryReader::u32() {
  unsigned char b[4];
  raw(b, 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  unsigned char b[8];
  raw(b, 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::vector<std::uint32_t> BinaryReader::u32_array(std::size_t n) {
  std::vector<std::uint32_t> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    raw(reinterpret_cast<unsigned char*>(out.data()), n * sizeof(std::uint32_t));
  } else {
    for (auto& v : out) v = u32();
  }
  return out;
}

std::vector<std::uint64_t> BinaryReader::u64_array(std::size_t n) {
  std::vector<std::uint64_t> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    raw(reinterpret_cast<unsigned char*>(out.data()), n * sizeof(std::uint64_t));
  } else {
    for (auto& v : out) v = u64();
  }
  return out;
}

std::vector<double> BinaryReader::f64_array(std::size_t n) {
  std::vector<double> out(n);
  if constexpr (std::endian::native == std::endian::little) {
    raw(reinterpret_cast<unsigned char*>(out.data()), n * sizeof(double));
  } else {
    for (auto& v : out) v = f64();
  }
  return out;
}

void BinaryReader::expect_end() {
  if (in_.peek() != std::char_traits<char>::eof()) {
    throw ParseError("trailing bytes in " + path_.string());
  }
}

}  // namespace pprobe
