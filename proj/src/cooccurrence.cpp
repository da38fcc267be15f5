#include "pprobe/cooccurrence.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "pprobe/binary_io.hpp"
#include "pprobe/error.hpp"

namespace pprobe {

namespace {

constexpr std::string_view kPairsMagic = "PPPAIRS1";
constexpr std::string_view kTripletsMagic = "PPTRIPL1";
constexpr std::string_view kMarginalsMagic = "PPMARG01";
constexpr std::uint32_t kFormatVersion = 1;

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  s += ".marg";
  return s;
}

void write_header(BinaryWriter& w, std::string_view magic, const CountProvenance& p,
                  std::uint64_t records) {
  w.write_magic(magic);
  w.u32(kFormatVersion);
  w.u64(p.vocab_hash);
  w.u32(p.radius);
  w.u32(p.universe_size);
  w.u64(p.vocab_size);
  w.u64(p.universe_hash);
  w.u64(records);
}

std::pair<CountProvenance, std::uint64_t> read_header(BinaryReader& r, std::string_view magic) {
  r.expect_magic(magic);
  if (auto v = r.u32(); v != kFormatVersion) {
    throw ParseError("unsupported count file version " + std::to_string(v));
  }
  CountProvenance p;
  p.vocab_hash = r.u64();
  p.radius = r.u32();
  p.universe_size = r.u32();
  p.vocab_size = r.u64();
  p.universe_hash = r.u64();
  std::uint64_t records = r.u64();
  return {p, records};
}

void write_records(BinaryWriter& w, const SortedCounts& c) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    w.u64(c.keys[i]);
    w.u32(c.counts[i]);
  }
}

SortedCounts read_records(BinaryReader& r, std::uint64_t n) {
  SortedCounts c;
  c.keys.reserve(n);
  c.counts.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::uint64_t key = r.u64();
    if (!c.keys.empty() && key <= c.keys.back()) throw ParseError("count records not strictly sorted");
    c.keys.push_back(key);
    c.counts.push_back(r.u32());
    if (c.counts.back() == 0) throw ParseError("zero count record");
  }
  return c;
}

void check_compatible(const CountProvenance& a, const CountProvenance& b) {
  if (a.vocab_hash != b.vocab_hash || a.vocab_size != b.vocab_size) {
    throw IncompatibleError("count stores built from different vocabularies");
  }
  if (!(a == b)) throw IncompatibleError("count stores differ in radius or pair universe");
}

// Centre positions [0, n) cut into contiguous shards. Each shard reads
// the neighbouring tokens it needs but owns only its centres.
std::vector<std::pair<std::size_t, std::size_t>> centre_shards(std::size_t n, unsigned shards) {
  shards = std::max(1U, shards);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (unsigned s = 0; s < shards; ++s) {
    std::size_t b = n * s / shards, e = n * (s + 1) / shards;
    if (b < e) out.emplace_back(b, e);
  }
  if (out.empty()) out.emplace_back(0, 0);
  return out;
}

template <typename Work>
void run_shards(std::size_t count, Work&& work) {
  if (count == 1) {
    work(0);
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t s = 0; s < count; ++s) pool.emplace_back(work, s);
}

void check_radius(std::uint32_t radius) {
  if (radius < 1) throw ConfigError("window radius must be >= 1");
}

}  // namespace

// ---------------------------------------------------------------- universe

PairUniverse::PairUniverse(std::span<const WordId> members, std::size_t vocab_size)
    : members_(members.begin(), members.end()), slots_(vocab_size, -1) {
  if (members_.size() > kMaxUniverse) {
    throw ConfigError("pair universe of " + std::to_string(members_.size()) +
                      " words exceeds the 2^16 index width");
  }
  for (std::size_t s = 0; s < members_.size(); ++s) {
    WordId w = members_[s];
    if (w >= vocab_size) throw BoundsError("pair universe member outside vocabulary");
    if (slots_[w] >= 0) throw ConfigError("duplicate pair universe member");
    slots_[w] = static_cast<std::int32_t>(s);
  }
}

PairUniverse PairUniverse::top_k(std::size_t k, std::size_t vocab_size) {
  if (k > vocab_size) {
    throw BoundsError("top-k universe " + std::to_string(k) + " exceeds vocabulary size " +
                      std::to_string(vocab_size));
  }
  if (k > kMaxUniverse) {
    throw ConfigError("pair universe of " + std::to_string(k) + " words exceeds the 2^16 index width");
  }
  std::vector<WordId> ids(k);
  for (std::size_t i = 0; i < k; ++i) ids[i] = static_cast<WordId>(i);
  return PairUniverse(ids, vocab_size);
}

std::uint64_t PairUniverse::hash() const {
  Fnv1a h;
  h.update_u64(slots_.size());
  for (auto m : members_) h.update_u64(m);
  return h.digest();
}

PairIndex::PairIndex(std::size_t universe_size) : universe_size_(universe_size) {
  if (universe_size > kMaxUniverse) throw ConfigError("pair universe exceeds the 2^16 index width");
  size_ = universe_size < 2 ? 0 : std::uint64_t{universe_size} * (universe_size - 1) / 2;
}

std::uint32_t PairIndex::index(std::uint32_t i, std::uint32_t j) const {
  if (i == j) throw ConfigError("a paraphrase pair needs two distinct words");
  if (i > j) std::swap(i, j);
  if (j >= universe_size_) throw BoundsError("pair slot out of range");
  return static_cast<std::uint32_t>(std::uint64_t{j} * (j - 1) / 2 + i);
}

std::pair<std::uint32_t, std::uint32_t> PairIndex::slots(std::uint32_t l) const {
  if (l >= size_) throw BoundsError("pair index out of range");
  auto j = static_cast<std::uint64_t>((1.0 + std::sqrt(1.0 + 8.0 * static_cast<double>(l))) / 2.0);
  while (j * (j - 1) / 2 > l) --j;
  while ((j + 1) * j / 2 <= l) ++j;
  auto i = l - j * (j - 1) / 2;
  return {static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)};
}

// ---------------------------------------------------------------- pairs

PairCounts::PairCounts(CountProvenance provenance, SortedCounts entries)
    : provenance_(provenance), entries_(std::move(entries)) {
  derive();
}

void PairCounts::derive() {
  const std::size_t v = provenance_.vocab_size;
  row_offsets_.assign(v + 1, 0);
  row_marginals_.assign(v, 0);
  col_marginals_.assign(v, 0);
  total_ = 0;
  for (std::size_t e = 0; e < entries_.size(); ++e) {
    WordId w = key_high(entries_.keys[e]), c = key_low(entries_.keys[e]);
    if (w >= v || c >= v) throw BoundsError("pair count key outside vocabulary");
    ++row_offsets_[w + 1];
    row_marginals_[w] += entries_.counts[e];
    col_marginals_[c] += entries_.counts[e];
    total_ += entries_.counts[e];
  }
  for (std::size_t w = 0; w < v; ++w) row_offsets_[w + 1] += row_offsets_[w];
}

std::uint64_t PairCounts::count(WordId word, WordId context) const {
  auto key = pack_key(word, context);
  auto it = std::lower_bound(entries_.keys.begin(), entries_.keys.end(), key);
  if (it == entries_.keys.end() || *it != key) return 0;
  return entries_.counts[static_cast<std::size_t>(it - entries_.keys.begin())];
}

std::pair<std::size_t, std::size_t> PairCounts::row_range(WordId word) const {
  if (word >= provenance_.vocab_size) throw BoundsError("word id out of range");
  return {row_offsets_[word], row_offsets_[word + 1]};
}

void PairCounts::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  write_header(w, kPairsMagic, provenance_, entries_.size());
  write_records(w, entries_);
  w.close();

  BinaryWriter m(sidecar(path));
  m.write_magic(kMarginalsMagic);
  m.u64(provenance_.vocab_hash);
  m.u64(total_);
  m.u64_array(row_marginals_);
  m.u64_array(col_marginals_);
  m.close();
}

PairCounts PairCounts::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  auto [prov, n] = read_header(r, kPairsMagic);
  PairCounts out(prov, read_records(r, n));
  r.expect_end();

  BinaryReader m(sidecar(path));
  m.expect_magic(kMarginalsMagic);
  if (m.u64() != prov.vocab_hash) throw IncompatibleError("pair marginals sidecar does not match");
  std::uint64_t total = m.u64();
  auto rows = m.u64_array(prov.vocab_size);
  auto cols = m.u64_array(prov.vocab_size);
  m.expect_end();
  if (total != out.total_ || rows != out.row_marginals_ || cols != out.col_marginals_) {
    throw ParseError(path.string() + ": marginals sidecar disagrees with records");
  }
  return out;
}

PairCounts count_pairs(const TokenStream& tokens, const Vocabulary& vocab, std::uint32_t radius,
                       const CountingOptions& options) {
  check_radius(radius);
  const auto& ids = tokens.ids;
  const std::size_t n = ids.size();
  auto shards = centre_shards(n, options.shards);
  std::vector<CountAccumulator> acc;
  for (std::size_t s = 0; s < shards.size(); ++s) {
    acc.emplace_back(options.memory_budget_bytes / shards.size(), options.spill_dir);
  }
  run_shards(shards.size(), [&](std::size_t s) {
    auto [begin, end] = shards[s];
    for (std::size_t t = begin; t < end; ++t) {
      std::size_t lo = t >= radius ? t - radius : 0;
      std::size_t hi = std::min(n - 1, t + radius);
      for (std::size_t u = lo; u <= hi; ++u) {
        if (u != t) acc[s].add(pack_key(ids[t], ids[u]));
      }
    }
  });
  std::vector<CountAccumulator> rest;
  for (std::size_t s = 1; s < acc.size(); ++s) rest.push_back(std::move(acc[s]));
  CountProvenance prov{vocab.hash(), vocab.size(), radius, 0, 0};
  return PairCounts(prov, acc[0].finish(&rest));
}

PairCounts merge(const PairCounts& a, const PairCounts& b) {
  check_compatible(a.provenance(), b.provenance());
  return PairCounts(a.provenance(), merge_counts(a.entries(), b.entries()));
}

// ---------------------------------------------------------------- triplets

TripletCounts::TripletCounts(CountProvenance provenance, PairUniverse universe, SortedCounts entries,
                             std::vector<std::uint64_t> center_marginals)
    : provenance_(provenance),
      universe_(std::move(universe)),
      index_(universe_.size()),
      center_marginals_(std::move(center_marginals)) {
  if (center_marginals_.size() != provenance_.vocab_size) {
    throw ConfigError("centre marginals must cover the vocabulary");
  }
  for (auto m : center_marginals_) total_centers_ += m;
  centers_.reserve(entries.size());
  counts_.reserve(entries.size());
  col_offsets_.push_back(0);
  for (std::size_t e = 0; e < entries.size(); ++e) {
    std::uint32_t l = key_high(entries.keys[e]);
    WordId k = key_low(entries.keys[e]);
    if (l >= index_.size() || k >= provenance_.vocab_size) throw BoundsError("triplet key out of range");
    if (pair_ids_.empty() || pair_ids_.back() != l) {
      if (!pair_ids_.empty()) col_offsets_.push_back(centers_.size());
      pair_ids_.push_back(l);
      pair_totals_.push_back(0);
    }
    centers_.push_back(k);
    counts_.push_back(entries.counts[e]);
    pair_totals_.back() += entries.counts[e];
    total_triplets_ += entries.counts[e];
  }
  if (!pair_ids_.empty()) col_offsets_.push_back(centers_.size());
}

std::optional<std::uint32_t> TripletCounts::pair_column(WordId a, WordId b) const {
  auto sa = universe_.slot(a), sb = universe_.slot(b);
  if (sa < 0 || sb < 0 || a == b) return std::nullopt;
  return index_.index(static_cast<std::uint32_t>(sa), static_cast<std::uint32_t>(sb));
}

std::optional<std::size_t> TripletCounts::column_position(std::uint32_t pair_id) const {
  auto it = std::lower_bound(pair_ids_.begin(), pair_ids_.end(), pair_id);
  if (it == pair_ids_.end() || *it != pair_id) return std::nullopt;
  return static_cast<std::size_t>(it - pair_ids_.begin());
}

TripletCounts::Column TripletCounts::column_at(std::size_t position) const {
  auto b = col_offsets_[position], e = col_offsets_[position + 1];
  return Column{std::span<const WordId>(centers_).subspan(b, e - b),
                std::span<const std::uint32_t>(counts_).subspan(b, e - b), pair_totals_[position]};
}

TripletCounts::Column TripletCounts::column(std::uint32_t pair_id) const {
  auto pos = column_position(pair_id);
  return pos ? column_at(*pos) : Column{};
}

std::uint64_t TripletCounts::count(WordId a, WordId b, WordId center) const {
  auto l = pair_column(a, b);
  if (!l) return 0;
  auto col = column(*l);
  auto it = std::lower_bound(col.centers.begin(), col.centers.end(), center);
  if (it == col.centers.end() || *it != center) return 0;
  return col.counts[static_cast<std::size_t>(it - col.centers.begin())];
}

std::uint64_t TripletCounts::pair_total(WordId a, WordId b) const {
  auto l = pair_column(a, b);
  return l ? column(*l).total : 0;
}

SortedCounts TripletCounts::entries() const {
  SortedCounts out;
  out.keys.reserve(centers_.size());
  out.counts = counts_;
  for (std::size_t p = 0; p < pair_ids_.size(); ++p) {
    for (auto e = col_offsets_[p]; e < col_offsets_[p + 1]; ++e) {
      out.keys.push_back(pack_key(pair_ids_[p], centers_[e]));
    }
  }
  return out;
}

void TripletCounts::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  write_header(w, kTripletsMagic, provenance_, centers_.size());
  write_records(w, entries());
  w.close();

  BinaryWriter m(sidecar(path));
  m.write_magic(kMarginalsMagic);
  m.u64(provenance_.vocab_hash);
  m.u64(universe_.size());
  m.u32_array(universe_.members());
  m.u64_array(center_marginals_);
  m.u64(pair_ids_.size());
  m.u64_array(pair_totals_);
  m.close();
}

TripletCounts TripletCounts::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  auto [prov, n] = read_header(r, kTripletsMagic);
  SortedCounts entries = read_records(r, n);
  r.expect_end();

  BinaryReader m(sidecar(path));
  m.expect_magic(kMarginalsMagic);
  if (m.u64() != prov.vocab_hash) throw IncompatibleError("triplet marginals sidecar does not match");
  auto members = m.u32_array(m.u64());
  PairUniverse universe(members, prov.vocab_size);
  if (universe.hash() != prov.universe_hash) throw ParseError(path.string() + ": universe hash mismatch");
  auto centers = m.u64_array(prov.vocab_size);
  auto pair_totals = m.u64_array(m.u64());
  m.expect_end();
  TripletCounts out(prov, std::move(universe), std::move(entries), std::move(centers));
  if (pair_totals != out.pair_totals_) {
    throw ParseError(path.string() + ": pair marginals disagree with records");
  }
  return out;
}

TripletCounts count_triplets(const TokenStream& tokens, const Vocabulary& vocab,
                             const PairUniverse& universe, std::uint32_t radius,
                             const CountingOptions& options) {
  check_radius(radius);
  if (universe.vocab_size() != vocab.size()) throw IncompatibleError("pair universe built for another vocabulary");
  if (universe.size() > kMaxUniverse) throw ConfigError("pair universe exceeds the 2^16 index width");
  const auto& ids = tokens.ids;
  const std::size_t n = ids.size();
  const PairIndex index(universe.size());
  auto shards = centre_shards(n, options.shards);
  std::vector<CountAccumulator> acc;
  std::vector<std::vector<std::uint64_t>> centres(shards.size(), std::vector<std::uint64_t>(vocab.size(), 0));
  for (std::size_t s = 0; s < shards.size(); ++s) {
    acc.emplace_back(options.memory_budget_bytes / shards.size(), options.spill_dir);
  }
  run_shards(shards.size(), [&](std::size_t s) {
    auto [begin, end] = shards[s];
    std::vector<std::uint32_t> window;
    window.reserve(2 * radius);
    for (std::size_t t = begin; t < end; ++t) {
      ++centres[s][ids[t]];
      window.clear();
      std::size_t lo = t >= radius ? t - radius : 0;
      std::size_t hi = std::min(n - 1, t + radius);
      for (std::size_t u = lo; u <= hi; ++u) {
        if (u == t) continue;
        if (auto slot = universe.slot(ids[u]); slot >= 0) window.push_back(static_cast<std::uint32_t>(slot));
      }
      for (std::size_t x = 0; x < window.size(); ++x) {
        for (std::size_t y = x + 1; y < window.size(); ++y) {
          if (window[x] != window[y]) acc[s].add(pack_key(index.index(window[x], window[y]), ids[t]));
        }
      }
    }
  });
  std::vector<std::uint64_t> centre_total(vocab.size(), 0);
  for (const auto& c : centres) {
    for (std::size_t w = 0; w < c.size(); ++w) centre_total[w] += c[w];
  }
  std::vector<CountAccumulator> rest;
  for (std::size_t s = 1; s < acc.size(); ++s) rest.push_back(std::move(acc[s]));
  CountProvenance prov{vocab.hash(), vocab.size(), radius, static_cast<std::uint32_t>(universe.size()),
                       universe.hash()};
  return TripletCounts(prov, universe, acc[0].finish(&rest), std::move(centre_total));
}

TripletCounts merge(const TripletCounts& a, const TripletCounts& b) {
  check_compatible(a.provenance(), b.provenance());
  std::vector<std::uint64_t> centres(a.center_marginals().begin(), a.center_marginals().end());
  for (std::size_t w = 0; w < centres.size(); ++w) centres[w] += b.center_marginals()[w];
  return TripletCounts(a.provenance(), a.universe(), merge_counts(a.entries(), b.entries()),
                       std::move(centres));
}

double well_defined_fraction(const TripletCounts& triplets,
                             std::span<const std::pair<WordId, WordId>> candidate_pairs) {
  if (candidate_pairs.empty()) throw UndefinedError("well-defined fraction of an empty pair list");
  std::size_t defined = 0;
  for (auto [a, b] : candidate_pairs) {
    if (triplets.pair_total(a, b) > 0) ++defined;
  }
  return static_cast<double>(defined) / static_cast<double>(candidate_pairs.size());
}

}  // namespace pprobe
