#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pprobe/analogy_bats.hpp"
#include "pprobe/cooccurrence.hpp"

namespace pprobe {

struct PciOptions {
  // Keep only entries with log p(W|w_k) > 0 instead of every entry with
  // positive support.
  bool positive_values_only = false;
};

// Paraphrase Conditional Information: column per candidate pair, row per
// centre word, entry log p(W_ij | w_k) = log N(w_i,w_j,w_k) / N(w_k as centre).
// Only non-empty columns are kept. A row-wise inverted index and the
// squared column norms are cached for ranking.
class PciMatrix {
 public:
  struct Column {
    std::span<const WordId> rows;
    std::span<const double> values;
  };
  struct RowEntries {
    std::span<const std::uint32_t> columns;  // column positions
    std::span<const double> values;
  };

  PciMatrix() = default;
  static PciMatrix build(const TripletCounts& triplets, PciOptions options = {});

  std::size_t columns() const { return pair_ids_.size(); }
  std::size_t rows() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t nnz() const { return values_.size(); }
  bool positive_values_only() const { return positive_only_; }
  const CountProvenance& provenance() const { return provenance_; }
  const PairUniverse& universe() const { return universe_; }
  const PairIndex& pair_index() const { return index_; }

  std::uint32_t pair_id(std::size_t position) const { return pair_ids_[position]; }
  std::optional<std::size_t> position(std::uint32_t pair_id) const;
  // Position of the column for two words; nullopt if not a stored column.
  std::optional<std::size_t> position_of(WordId a, WordId b) const;

  Column column(std::size_t position) const;
  double norm_squared(std::size_t position) const { return norms2_[position]; }
  RowEntries row(WordId center) const;
  // Squared norms in ascending order.
  std::span<const double> sorted_norms_squared() const { return sorted_norms2_; }

  void save(const std::filesystem::path& path) const;
  static PciMatrix load(const std::filesystem::path& path);

 private:
  void finalize();

  CountProvenance provenance_;
  PairUniverse universe_;
  PairIndex index_;
  bool positive_only_ = false;
  std::vector<std::uint32_t> pair_ids_;
  std::vector<std::uint64_t> col_offsets_;
  std::vector<WordId> rows_;
  std::vector<double> values_;
  std::vector<double> norms2_;
  std::vector<double> sorted_norms2_;
  std::vector<std::uint64_t> row_offsets_;
  std::vector<std::uint32_t> row_columns_;
  std::vector<double> row_values_;
};

// Euclidean distance between two columns given by position, computed as
// sqrt(n1^2 + n2^2 - 2 dot) with the dot product taken over the shorter column.
double column_distance(const PciMatrix& pci, std::size_t position1, std::size_t position2);

struct RankResult {
  WordPair w{}, w_star{};
  double distance = 0.0;            // d(W, W*)
  std::uint64_t rank = 0;           // 1 + #{X : d(W, X) < d(W, W*)}
  std::uint64_t ties = 0;           // #{X != W* : d(W, X) = d(W, W*)}
  std::uint64_t universe_size = 0;  // candidate columns considered (W excluded)
};

// Reusable per-thread buffers for full scans.
struct RankScratch {
  std::vector<double> dot;
  std::vector<std::uint8_t> touched;
  std::vector<std::uint32_t> touched_list;
};

// Rank of W* among all candidate columns X != W by d(W, X). With
// restrict_to_w_star_words only pairs sharing a word with W* are candidates.
// Throws UndefinedError if W or W* has no stored column.
RankResult rank_true_paraphrase(const PciMatrix& pci, WordPair w, WordPair w_star,
                                bool restrict_to_w_star_words = false, RankScratch* scratch = nullptr);

struct CategoryRankRow {
  std::string code;
  std::size_t analogies = 0;
  std::size_t ranked = 0;
  double average_rank = 0.0;
  double median_rank = 0.0;
  double average_universe = 0.0;
  bool empty() const { return ranked == 0; }
};

struct RankDetailRow {
  std::string category;
  AnalogyInstance analogy;
  RankResult result;
};

std::vector<CategoryRankRow> category_rank_table(std::span<const BatsCategory> categories, const Vocabulary& vocab,
                                                 const PciMatrix& pci, bool restrict_to_w_star_words = false,
                                                 std::vector<RankDetailRow>* detail = nullptr,
                                                 unsigned threads = 1);

// Statistic-per-row, category-per-column TSV; ranks also shown rounded to
// thousands ("7762K").
void write_rank_table(const std::filesystem::path& path, std::span<const CategoryRankRow> rows);
void write_rank_detail(const std::filesystem::path& path, std::span<const RankDetailRow> rows,
                       const Vocabulary& vocab);

std::string thousands_label(double rank);

}  // namespace pprobe
