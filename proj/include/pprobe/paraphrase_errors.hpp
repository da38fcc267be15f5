#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pprobe/analogy_bats.hpp"
#include "pprobe/cooccurrence.hpp"
#include "pprobe/pmi_linearity.hpp"

namespace pprobe {

inline constexpr double kDefaultEpsilon = 1e-15;

// How often each substitution fired while evaluating log ratios.
struct ClipStats {
  std::size_t log_infinity = 0;   // x/0 with x > 0, replaced by -log(eps)
  std::size_t log_zero = 0;       // 0/y with y > 0, replaced by log(eps)
  std::size_t zero_over_zero = 0; // replaced by 0

  std::size_t total() const { return log_infinity + log_zero + zero_over_zero; }
  ClipStats& operator+=(const ClipStats& o) {
    log_infinity += o.log_infinity;
    log_zero += o.log_zero;
    zero_over_zero += o.zero_over_zero;
    return *this;
  }
};

// log(numerator / denominator) with the substitutions above.
double clipped_log_ratio(double numerator, double denominator, double epsilon, ClipStats* stats = nullptr);

// Estimated distributions around a paraphrase pair W = {first, second}.
// Vectors are indexed by context word and have vocabulary length.
struct ParaphraseDistribution {
  WordId first = 0, second = 0;
  Eigen::VectorXd context_given_pair;    // p(c | W)
  Eigen::VectorXd pair_given_context;    // p(W | c)
  Eigen::VectorXd first_given_context;   // p(first | c)
  Eigen::VectorXd second_given_context;  // p(second | c)
  double pair_probability = 0.0;         // p(W)
  double first_probability = 0.0;        // p(first)
  double second_probability = 0.0;       // p(second)
  // Context entries whose conditioning count was zero; their values are 0.
  std::size_t undefined_entries = 0;
};

// Relative-frequency estimates. Pair-level quantities come from the
// triplet store (p(W|c) = N(W,c) / N(c as centre), p(c|W) = N(W,c) / N(W),
// p(W) = N(W) / #centres); single-word ones from the pair counts of the
// same window (p(w|c) = N(c,w) / N(c,.), p(w) = N(.,w) / N), which makes
// log p(w|c)/p(w) equal the PMI entry built from those counts.
class DistributionEstimator {
 public:
  DistributionEstimator(const TripletCounts& triplets, const PairCounts& pairs);

  // Throws UndefinedError if the pair never co-occurs (N(W) = 0) or is
  // not a pair of distinct universe words.
  ParaphraseDistribution estimate(WordId first, WordId second) const;
  bool well_defined(WordId first, WordId second) const;

  const TripletCounts& triplets() const { return *triplets_; }
  std::size_t vocab_size() const { return triplets_->vocab_size(); }

 private:
  const TripletCounts* triplets_;
  const PairCounts* pairs_;
  // Column access into the pair counts: for context word w, (c, N(c, w)).
  std::vector<std::uint64_t> col_offsets_;
  std::vector<WordId> col_rows_;
  std::vector<std::uint32_t> col_counts_;
};

// rho^{W,W*}_c = log p(c|W*) / p(c|W)
Eigen::VectorXd paraphrase_error(const ParaphraseDistribution& w, const ParaphraseDistribution& w_star,
                                 double epsilon = kDefaultEpsilon, ClipStats* stats = nullptr);

struct DependenceErrors {
  Eigen::VectorXd sigma;  // log p(W|c) / (p(w1|c) p(w2|c))
  double tau = 0.0;       // log p(W) / (p(w1) p(w2))
};

DependenceErrors dependence_errors(const ParaphraseDistribution& w, double epsilon = kDefaultEpsilon,
                                   ClipStats* stats = nullptr);

// The five error terms of an analogy with W = {a, b*}, W* = {a*, b}.
// Written out from the definitions of the terms, the exact identity is
//   PMI_b* - PMI_b - PMI_a* + PMI_a = -rho - sigma_W + sigma_W* + (tau_W - tau_W*) 1
// which is the sign convention used throughout.
struct ErrorDecomposition {
  Eigen::VectorXd rho;
  Eigen::VectorXd sigma_w;
  Eigen::VectorXd sigma_w_star;
  double tau_w = 0.0;
  double tau_w_star = 0.0;
  ClipStats clips;

  // sigma_W* - sigma_W + (tau_W - tau_W*) 1
  Eigen::VectorXd dependence_sum() const;
  // -rho + dependence_sum()
  Eigen::VectorXd total() const;
};

ErrorDecomposition decompose(const ParaphraseDistribution& w, const ParaphraseDistribution& w_star,
                             double epsilon = kDefaultEpsilon);

// (PMI_b* - PMI_b - PMI_a* + PMI_a) - errors.total(). Zero on full-support
// estimates; clipping shows up as a non-zero defect.
Eigen::VectorXd decomposition_residual(const Eigen::VectorXd& pmi_a, const Eigen::VectorXd& pmi_a_star,
                                       const Eigen::VectorXd& pmi_b, const Eigen::VectorXd& pmi_b_star,
                                       const ErrorDecomposition& errors);
Eigen::VectorXd decomposition_residual(const AnalogyInstance& analogy, const SparsePmiMatrix& pmi,
                                       const ErrorDecomposition& errors);

struct AnalogyErrorRow {
  std::string category;
  AnalogyInstance analogy;
  double paraphrase_norm = 0.0;
  double dependence_norm = 0.0;
  double total_norm = 0.0;
  double residual_max_abs = 0.0;
  ClipStats clips;
};

struct CategoryNormRow {
  std::string code;
  std::size_t analogies = 0;
  std::size_t well_defined = 0;
  double paraphrase_mean = 0.0, paraphrase_median = 0.0;
  double dependence_mean = 0.0, dependence_median = 0.0;
  double total_mean = 0.0, total_median = 0.0;
  bool empty() const { return well_defined == 0; }
};

// Norms over the analogies of each category whose pairs W and W* are both
// well-defined. `detail` receives one row per evaluated analogy.
std::vector<CategoryNormRow> category_norm_table(std::span<const BatsCategory> categories,
                                                 const Vocabulary& vocab, const DistributionEstimator& estimator,
                                                 const SparsePmiMatrix& pmi, double epsilon = kDefaultEpsilon,
                                                 std::vector<AnalogyErrorRow>* detail = nullptr);

// Statistic-per-row, category-per-column TSV.
void write_norm_table(const std::filesystem::path& path, std::span<const CategoryNormRow> rows);
void write_error_detail(const std::filesystem::path& path, std::span<const AnalogyErrorRow> rows,
                        const Vocabulary& vocab);

double median(std::vector<double> values);

}  // namespace pprobe
