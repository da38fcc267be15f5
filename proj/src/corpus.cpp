#include "pprobe/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>
#include <thread>

#include "pprobe/binary_io.hpp"
#include "pprobe/error.hpp"

namespace pprobe {

namespace {

constexpr std::string_view kTokensMagic = "PPTOKEN1";

template <typename Fn>
void for_each_token(std::string_view bytes, Fn&& fn) {
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    while (i < n && is_space_byte(static_cast<unsigned char>(bytes[i]))) ++i;
    std::size_t start = i;
    while (i < n && !is_space_byte(static_cast<unsigned char>(bytes[i]))) ++i;
    if (i > start) fn(bytes.substr(start, i - start));
  }
}

}  // namespace

std::vector<std::string_view> tokenize(std::string_view bytes) {
  std::vector<std::string_view> out;
  for_each_token(bytes, [&](std::string_view t) { out.push_back(t); });
  return out;
}

std::vector<std::string> tokenize(std::istream& in) {
  std::vector<std::string> out;
  std::string current;
  std::uint64_t offset = 0;
  char buf[1 << 16];
  for (;;) {
    in.read(buf, sizeof buf);
    const auto got = static_cast<std::size_t>(in.gcount());
    if (in.bad()) {
      throw IoError("read failure at byte offset " + std::to_string(offset));
    }
    for (std::size_t i = 0; i < got; ++i) {
      if (is_space_byte(static_cast<unsigned char>(buf[i]))) {
        if (!current.empty()) out.push_back(std::move(current)), current.clear();
      } else {
        current.push_back(buf[i]);
      }
    }
    offset += got;
    if (got < sizeof buf) break;
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::string read_corpus(const std::filesystem::path& path,
                        std::optional<std::uint64_t> max_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus " + path.string());
  std::string content;
  char buf[1 << 20];
  for (;;) {
    std::size_t want = sizeof buf;
    if (max_bytes) want = std::min<std::uint64_t>(want, *max_bytes - content.size());
    if (want == 0) break;
    in.read(buf, static_cast<std::streamsize>(want));
    if (in.bad()) {
      throw IoError(path.string() + ": read failure at byte offset " +
                    std::to_string(content.size()));
    }
    content.append(buf, static_cast<std::size_t>(in.gcount()));
    if (static_cast<std::size_t>(in.gcount()) < want) break;
  }
  if (max_bytes && content.size() == *max_bytes) {
    // Only keep a trailing token if the file really ends or breaks there.
    char next = 0;
    if (in.get(next) && !is_space_byte(static_cast<unsigned char>(next))) {
      while (!content.empty() && !is_space_byte(static_cast<unsigned char>(content.back()))) {
        content.pop_back();
      }
    }
  }
  return content;
}

std::vector<std::string_view> split_on_whitespace(std::string_view bytes, unsigned shards) {
  shards = std::max(1U, shards);
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  for (unsigned s = 1; s <= shards && begin < bytes.size(); ++s) {
    std::size_t end = s == shards ? bytes.size() : bytes.size() * s / shards;
    end = std::max(end, begin);
    while (end < bytes.size() && !is_space_byte(static_cast<unsigned char>(bytes[end]))) ++end;
    out.push_back(bytes.substr(begin, end - begin));
    begin = end;
  }
  if (out.empty()) out.push_back(bytes);
  return out;
}

void TokenTally::merge(const TokenTally& other) {
  for (const auto& [tok, n] : other.counts) counts[tok] += n;
  total_tokens += other.total_tokens;
}

TokenTally tally_tokens(std::string_view bytes, unsigned shards) {
  auto ranges = split_on_whitespace(bytes, shards);
  std::vector<TokenTally> partial(ranges.size());
  auto work = [&](std::size_t s) {
    auto& t = partial[s];
    for_each_token(ranges[s], [&](std::string_view tok) {
      auto it = t.counts.find(tok);
      if (it == t.counts.end()) {
        t.counts.emplace(tok, 1);
      } else {
        ++it->second;
      }
      ++t.total_tokens;
    });
  };
  if (ranges.size() == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t s = 0; s < ranges.size(); ++s) pool.emplace_back(work, s);
  }
  TokenTally out = std::move(partial[0]);
  for (std::size_t s = 1; s < partial.size(); ++s) out.merge(partial[s]);
  return out;
}

Vocabulary Vocabulary::build(const TokenTally& tally, std::uint64_t min_count) {
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (tally.total_tokens == 0) throw UndefinedError("empty token sequence: vocabulary would be empty");
  std::vector<std::pair<std::string_view, std::uint64_t>> kept;
  for (const auto& [tok, n] : tally.counts) {
    if (n >= min_count) kept.emplace_back(tok, n);
  }
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocabulary v;
  v.tokens_.reserve(kept.size());
  v.counts_.reserve(kept.size());
  for (const auto& [tok, n] : kept) {
    v.tokens_.emplace_back(tok);
    v.counts_.push_back(n);
  }
  v.total_tokens_ = tally.total_tokens;
  v.min_count_ = min_count;
  v.index();
  return v;
}

Vocabulary Vocabulary::build(std::span<const std::string_view> tokens, std::uint64_t min_count) {
  TokenTally tally;
  for (auto t : tokens) {
    auto it = tally.counts.find(t);
    if (it == tally.counts.end()) {
      tally.counts.emplace(t, 1);
    } else {
      ++it->second;
    }
  }
  tally.total_tokens = tokens.size();
  return build(tally, min_count);
}

Vocabulary Vocabulary::build(std::span<const std::string> tokens, std::uint64_t min_count) {
  TokenTally tally;
  for (const auto& t : tokens) ++tally.counts[t];
  tally.total_tokens = tokens.size();
  return build(tally, min_count);
}

void Vocabulary::index() {
  ids_.clear();
  ids_.reserve(tokens_.size());
  for (WordId i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], i);
}

const std::string& Vocabulary::token(WordId id) const {
  if (id >= tokens_.size()) throw BoundsError("word id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::uint64_t Vocabulary::count(WordId id) const {
  if (id >= counts_.size()) throw BoundsError("word id " + std::to_string(id) + " out of range");
  return counts_[id];
}

std::optional<WordId> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::vector<WordId> Vocabulary::top_k(std::size_t k) const {
  if (k > size()) {
    throw BoundsError("top_k: k=" + std::to_string(k) + " exceeds vocabulary size " +
                      std::to_string(size()));
  }
  std::vector<WordId> ids(k);
  std::iota(ids.begin(), ids.end(), WordId{0});
  return ids;
}

std::uint64_t Vocabulary::hash() const {
  Fnv1a h;
  h.update_u64(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    h.update(tokens_[i]);
    h.update_u64(counts_[i]);
  }
  h.update_u64(total_tokens_);
  return h.digest();
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#vocab\t" << total_tokens_ << '\t' << min_count_ << '\n';
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << counts_[i] << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

namespace {

std::uint64_t parse_u64(std::string_view s, const std::string& where) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw ParseError(where + ": bad integer '" + std::string(s) + "'");
  return v;
}

}  // namespace

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::string_view sv(line);
    if (lineno == 1) {
      auto t1 = sv.find('\t');
      auto t2 = sv.find('\t', t1 + 1);
      if (sv.substr(0, t1) != "#vocab" || t1 == std::string_view::npos || t2 == std::string_view::npos) {
        throw ParseError(where + ": missing #vocab header");
      }
      v.total_tokens_ = parse_u64(sv.substr(t1 + 1, t2 - t1 - 1), where);
      v.min_count_ = parse_u64(sv.substr(t2 + 1), where);
      continue;
    }
    auto tab = sv.rfind('\t');
    if (tab == std::string_view::npos || tab == 0) throw ParseError(where + ": expected token<TAB>count");
    v.tokens_.emplace_back(sv.substr(0, tab));
    v.counts_.push_back(parse_u64(sv.substr(tab + 1), where));
  }
  if (lineno == 0) throw ParseError(path.string() + ": empty vocabulary file");
  v.index();
  if (v.ids_.size() != v.tokens_.size()) throw ParseError(path.string() + ": duplicate tokens");
  return v;
}

TokenStream encode(std::string_view bytes, const Vocabulary& vocab) {
  TokenStream out;
  for_each_token(bytes, [&](std::string_view tok) {
    ++out.source_length;
    if (auto id = vocab.find(tok)) out.ids.push_back(*id);
  });
  return out;
}

void save_tokens(const TokenStream& stream, std::uint64_t vocab_hash,
                 const std::filesystem::path& path) {
  BinaryWriter w(path);
  w.write_magic(kTokensMagic);
  w.u64(vocab_hash);
  w.u64(stream.source_length);
  w.u64(stream.ids.size());
  w.u32_array(stream.ids);
  w.close();
}

TokenStream load_tokens(const std::filesystem::path& path, std::uint64_t vocab_hash) {
  BinaryReader r(path);
  r.expect_magic(kTokensMagic);
  if (r.u64() != vocab_hash) {
    throw IncompatibleError(path.string() + " was built with a different vocabulary");
  }
  TokenStream out;
  out.source_length = r.u64();
  out.ids = r.u32_array(r.u64());
  r.expect_end();
  return out;
}

}  // namespace pprobe
