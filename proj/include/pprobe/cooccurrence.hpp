#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "pprobe/corpus.hpp"
#include "pprobe/count_accumulator.hpp"

namespace pprobe {

inline constexpr std::uint64_t pack_key(std::uint32_t high, std::uint32_t low) {
  return (std::uint64_t{high} << 32) | low;
}
inline constexpr std::uint32_t key_high(std::uint64_t key) { return static_cast<std::uint32_t>(key >> 32); }
inline constexpr std::uint32_t key_low(std::uint64_t key) { return static_cast<std::uint32_t>(key); }

inline constexpr std::size_t kMaxUniverse = std::size_t{1} << 16;

// The words allowed to form paraphrase pairs, with a dense slot per member.
class PairUniverse {
 public:
  PairUniverse() = default;
  // Members must be distinct ids below vocab_size; slot order follows `members`.
  PairUniverse(std::span<const WordId> members, std::size_t vocab_size);
  static PairUniverse top_k(std::size_t k, std::size_t vocab_size);

  std::size_t size() const { return members_.size(); }
  std::size_t vocab_size() const { return slots_.size(); }
  // -1 for non-members.
  std::int32_t slot(WordId w) const { return w < slots_.size() ? slots_[w] : -1; }
  bool contains(WordId w) const { return slot(w) >= 0; }
  WordId member(std::uint32_t slot) const { return members_[slot]; }
  std::span<const WordId> members() const { return members_; }
  std::uint64_t hash() const;

 private:
  std::vector<WordId> members_;
  std::vector<std::int32_t> slots_;
};

// Dense column index over unordered slot pairs {i, j}, i < j:
// l(i, j) = j(j-1)/2 + i, which is independent of the universe size.
class PairIndex {
 public:
  explicit PairIndex(std::size_t universe_size = 0);

  std::uint64_t size() const { return size_; }
  std::size_t universe_size() const { return universe_size_; }
  // Order-insensitive. Throws ConfigError if i == j, BoundsError if out of range.
  std::uint32_t index(std::uint32_t i, std::uint32_t j) const;
  std::pair<std::uint32_t, std::uint32_t> slots(std::uint32_t l) const;

 private:
  std::size_t universe_size_ = 0;
  std::uint64_t size_ = 0;
};

struct CountingOptions {
  unsigned shards = 1;
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
  std::filesystem::path spill_dir;
};

// Identity of a count store; merge and load check it.
struct CountProvenance {
  std::uint64_t vocab_hash = 0;
  std::uint64_t vocab_size = 0;
  std::uint32_t radius = 0;
  std::uint32_t universe_size = 0;
  std::uint64_t universe_hash = 0;
  friend bool operator==(const CountProvenance&, const CountProvenance&) = default;
};

// Windowed word-context counts, keyed (word << 32 | context).
class PairCounts {
 public:
  PairCounts() = default;
  PairCounts(CountProvenance provenance, SortedCounts entries);

  const CountProvenance& provenance() const { return provenance_; }
  std::size_t vocab_size() const { return provenance_.vocab_size; }
  const SortedCounts& entries() const { return entries_; }
  std::size_t nnz() const { return entries_.size(); }

  std::uint64_t count(WordId word, WordId context) const;
  // Entry index range of `word`'s row.
  std::pair<std::size_t, std::size_t> row_range(WordId word) const;
  std::span<const std::uint64_t> row_marginals() const { return row_marginals_; }
  std::span<const std::uint64_t> col_marginals() const { return col_marginals_; }
  std::uint64_t total() const { return total_; }

  void save(const std::filesystem::path& path) const;
  static PairCounts load(const std::filesystem::path& path);

 private:
  void derive();

  CountProvenance provenance_;
  SortedCounts entries_;
  std::vector<std::uint64_t> row_offsets_;
  std::vector<std::uint64_t> row_marginals_;
  std::vector<std::uint64_t> col_marginals_;
  std::uint64_t total_ = 0;
};

// Sparse N(w_i, w_j, w_k): the pair {w_i, w_j} seen inside the window
// centred on w_k. Stored column-wise by pair index; only non-empty pair
// columns are materialised.
class TripletCounts {
 public:
  struct Column {
    std::span<const WordId> centers;
    std::span<const std::uint32_t> counts;
    std::uint64_t total = 0;
  };

  TripletCounts() = default;
  TripletCounts(CountProvenance provenance, PairUniverse universe, SortedCounts entries,
                std::vector<std::uint64_t> center_marginals);

  const CountProvenance& provenance() const { return provenance_; }
  const PairUniverse& universe() const { return universe_; }
  const PairIndex& pair_index() const { return index_; }
  std::size_t vocab_size() const { return provenance_.vocab_size; }

  // Canonical pair index of two universe words. nullopt if either word is
  // outside the universe or the words are equal.
  std::optional<std::uint32_t> pair_column(WordId a, WordId b) const;

  std::size_t nonempty_columns() const { return pair_ids_.size(); }
  std::uint32_t pair_id_at(std::size_t position) const { return pair_ids_[position]; }
  // Columns are addressed either by pair index or by their position among
  // the non-empty columns.
  std::optional<std::size_t> column_position(std::uint32_t pair_id) const;
  Column column_at(std::size_t position) const;
  Column column(std::uint32_t pair_id) const;  // empty Column if absent

  std::uint64_t count(WordId a, WordId b, WordId center) const;
  std::uint64_t pair_total(WordId a, WordId b) const;  // N(W)
  std::span<const std::uint64_t> center_marginals() const { return center_marginals_; }
  std::uint64_t total_centers() const { return total_centers_; }
  std::uint64_t total_triplets() const { return total_triplets_; }
  std::size_t nnz() const { return centers_.size(); }

  // Flattened back to sorted (pair << 32 | center) records.
  SortedCounts entries() const;

  void save(const std::filesystem::path& path) const;
  static TripletCounts load(const std::filesystem::path& path);

 private:
  CountProvenance provenance_;
  PairUniverse universe_;
  PairIndex index_;
  std::vector<std::uint32_t> pair_ids_;
  std::vector<std::uint64_t> col_offsets_;
  std::vector<WordId> centers_;
  std::vector<std::uint32_t> counts_;
  std::vector<std::uint64_t> pair_totals_;
  std::vector<std::uint64_t> center_marginals_;
  std::uint64_t total_centers_ = 0;
  std::uint64_t total_triplets_ = 0;
};

// Every position u with 0 < |u - t| <= radius adds one to (token[t], token[u]).
PairCounts count_pairs(const TokenStream& tokens, const Vocabulary& vocab, std::uint32_t radius,
                       const CountingOptions& options = {});

// For each centre t and each unordered pair of distinct window positions
// u != v (both != t) holding distinct universe words, adds one to
// N(token[u], token[v], token[t]). Every centre position also adds one to
// its word's centre marginal.
TripletCounts count_triplets(const TokenStream& tokens, const Vocabulary& vocab,
                             const PairUniverse& universe, std::uint32_t radius,
                             const CountingOptions& options = {});

// Keywise sums. Throws IncompatibleError on differing provenance.
PairCounts merge(const PairCounts& a, const PairCounts& b);
TripletCounts merge(const TripletCounts& a, const TripletCounts& b);

// Fraction of candidate pairs with N(W) > 0. Pairs with a word outside the
// universe, or two equal words, count as not well-defined.
double well_defined_fraction(const TripletCounts& triplets,
                             std::span<const std::pair<WordId, WordId>> candidate_pairs);

}  // namespace pprobe
