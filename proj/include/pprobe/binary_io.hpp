#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pprobe {

// FNV-1a, 64 bit. Used for vocabulary fingerprints and artifact hashes.
class Fnv1a {
 public:
  void update(std::string_view bytes);
  void update_u64(std::uint64_t value);
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 14695981039346656037ULL;
};

std::uint64_t hash_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t value);

// Little-endian writer. Throws IoError on stream failure.
class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  void write_magic(std::string_view magic);
  void u32(std::uint32_t value);
  void u64(std::uint64_t value);
  void f64(double value);
  void u32_array(std::span<const std::uint32_t> values);
  void u64_array(std::span<const std::uint64_t> values);
  void f64_array(std::span<const double> values);
  void close();

 private:
  void raw(const unsigned char* bytes, std::size_t n);

  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  // Throws ParseError if the next bytes are not `magic`.
  void expect_magic(std::string_view magic);
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::vector<std::uint32_t> u32_array(std::size_t n);
  std::vector<std::uint64_t> u64_array(std::size_t n);
  std::vector<double> f64_array(std::size_t n);
  // Throws ParseError when trailing bytes remain.
  void expect_end();

 private:
  void raw(unsigned char* bytes, std::size_t n);

  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace pprobe
