#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pprobe/cooccurrence.hpp"
#include "pprobe/sgns.hpp"

namespace pprobe {

// Row-compressed |V| x |V| PMI. Rows are words, columns contexts; pairs
// never seen together are absent and read as 0.
class SparsePmiMatrix {
 public:
  struct Row {
    std::span<const WordId> columns;
    std::span<const double> values;
  };

  SparsePmiMatrix() = default;

  // log[p(w,c) / (p(w) p(c))] from relative frequencies of the counts.
  static SparsePmiMatrix build(const PairCounts& counts);
  // Stores every non-zero entry of `dense`. Non-finite entries become 0.
  static SparsePmiMatrix from_dense(const Eigen::MatrixXd& dense, std::uint64_t vocab_hash = 0);

  std::size_t size() const { return row_offsets_.empty() ? 0 : row_offsets_.size() - 1; }
  std::size_t nnz() const { return columns_.size(); }
  std::uint64_t vocab_hash() const { return vocab_hash_; }

  Row row(WordId word) const;
  double at(WordId word, WordId context) const;
  Eigen::VectorXd dense_row(WordId word) const;

  void save(const std::filesystem::path& path) const;
  static SparsePmiMatrix load(const std::filesystem::path& path);

 private:
  std::uint64_t vocab_hash_ = 0;
  std::vector<std::uint64_t> row_offsets_;
  std::vector<WordId> columns_;
  std::vector<double> values_;
};

// Moore-Penrose pseudo-inverse of a d x |V| context matrix, stored |V| x d
// row-major so each row (one context word) is contiguous.
struct PseudoInverse {
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> matrix;
  Eigen::Index source_rows = 0;
  Eigen::Index source_cols = 0;
  double cutoff = 0.0;  // absolute singular value threshold applied
  Eigen::Index rank = 0;
};

// Thin SVD; singular values below relative_cutoff * largest count as zero.
PseudoInverse pseudo_inverse(const Eigen::MatrixXd& c, double relative_cutoff = 1e-10);

// Image of a PMI row under the pseudo-inverse: row . C^+, length d.
Eigen::VectorXd approximate_embedding(const PseudoInverse& pinv, const SparsePmiMatrix::Row& pmi_row);
Eigen::VectorXd approximate_embedding(const PseudoInverse& pinv, const Eigen::VectorXd& pmi_row);

// nullopt when either vector has zero variance.
std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

struct CorrelationReport {
  std::vector<WordId> words;
  std::vector<std::optional<double>> pearson_r;  // aligned with `words`
  double mean = 0.0;
  double variance = 0.0;  // population variance over defined values
  std::size_t defined = 0;
  std::size_t missing = 0;

  // Counts per bin [-1 + i * width, -1 + (i+1) * width); r = 1 lands in the last bin.
  std::vector<std::size_t> histogram(double bin_width = 0.02) const;
  void write_tsv(const std::filesystem::path& path, const Vocabulary& vocab) const;
  void write_histogram_tsv(const std::filesystem::path& path, double bin_width = 0.02) const;
};

CorrelationReport correlation_report(const Eigen::MatrixXf& words, const PseudoInverse& pinv,
                                     const SparsePmiMatrix& pmi, std::span<const WordId> word_ids,
                                     unsigned threads = 1);
CorrelationReport correlation_report(const EmbeddingPair& embeddings, const SparsePmiMatrix& pmi,
                                     std::span<const WordId> word_ids, unsigned threads = 1);

}  // namespace pprobe
