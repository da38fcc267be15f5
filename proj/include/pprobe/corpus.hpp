#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pprobe {

using WordId = std::uint32_t;

inline bool is_space_byte(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Tokens are maximal runs of non-whitespace bytes. The views alias `bytes`.
std::vector<std::string_view> tokenize(std::string_view bytes);

// Stream version. Throws IoError carrying the byte offset of a failed read.
std::vector<std::string> tokenize(std::istream& in);

// Reads a corpus file. With max_bytes set, the content is cut to at most
// that many bytes and a trailing partial token is dropped.
std::string read_corpus(const std::filesystem::path& path,
                        std::optional<std::uint64_t> max_bytes = std::nullopt);

// Splits `bytes` into at most `shards` consecutive ranges whose boundaries
// fall on whitespace, so no token straddles two ranges.
std::vector<std::string_view> split_on_whitespace(std::string_view bytes, unsigned shards);

struct StringHash {
  using is_transparent = void;
  std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
};

template <typename V>
using StringMap = std::unordered_map<std::string, V, StringHash, std::equal_to<>>;

struct TokenTally {
  StringMap<std::uint64_t> counts;
  std::uint64_t total_tokens = 0;

  void merge(const TokenTally& other);
};

TokenTally tally_tokens(std::string_view bytes, unsigned shards = 1);

class Vocabulary {
 public:
  Vocabulary() = default;

  // Keeps tokens seen at least `min_count` times. Ids follow descending
  // frequency, ties broken by byte-wise token order.
  static Vocabulary build(const TokenTally& tally, std::uint64_t min_count);
  static Vocabulary build(std::span<const std::string_view> tokens, std::uint64_t min_count);
  static Vocabulary build(std::span<const std::string> tokens, std::uint64_t min_count);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(WordId id) const;
  std::uint64_t count(WordId id) const;
  std::span<const std::uint64_t> counts() const { return counts_; }
  std::uint64_t total_tokens() const { return total_tokens_; }
  std::uint64_t min_count() const { return min_count_; }

  std::optional<WordId> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }

  // The k most frequent words, i.e. ids 0..k-1. Throws BoundsError if k > size().
  std::vector<WordId> top_k(std::size_t k) const;

  // Fingerprint over tokens, counts and the corpus length.
  std::uint64_t hash() const;

  // `#vocab<TAB>total_tokens<TAB>min_count` header, then `token<TAB>count` by id.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.counts_ == b.counts_ &&
           a.total_tokens_ == b.total_tokens_ && a.min_count_ == b.min_count_;
  }

 private:
  void index();

  std::vector<std::string> tokens_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_tokens_ = 0;
  std::uint64_t min_count_ = 1;
  StringMap<WordId> ids_;
};

// Corpus as in-vocabulary ids. Out-of-vocabulary tokens are dropped, so
// windows close over the gap.
struct TokenStream {
  std::vector<WordId> ids;
  std::uint64_t source_length = 0;  // tokens before OOV removal
};

TokenStream encode(std::string_view bytes, const Vocabulary& vocab);

void save_tokens(const TokenStream& stream, std::uint64_t vocab_hash,
                 const std::filesystem::path& path);
// Throws IncompatibleError when the stored vocabulary hash differs.
TokenStream load_tokens(const std::filesystem::path& path, std::uint64_t vocab_hash);

}  // namespace pprobe
