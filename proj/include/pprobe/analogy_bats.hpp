#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pprobe/corpus.hpp"

namespace pprobe {

struct BatsRecord {
  std::string source;
  std::vector<std::string> targets;  // first entry is the primary target
  // Source and primary target both in the vocabulary. Only set when a
  // vocabulary was supplied at load time.
  bool in_vocabulary = false;
};

struct BatsCategory {
  std::string code;  // e.g. I01, D02, E05, L10
  std::filesystem::path file;
  std::vector<BatsRecord> records;
};

// One BATS file: `word<TAB>target1/target2/...` per line. Blank lines are
// skipped; anything else malformed raises ParseError with file:line.
BatsCategory parse_bats_file(const std::filesystem::path& file, std::string code);

// Every `*.txt` under `directory` whose name starts with a category code
// ([IDEL] followed by two digits), sorted by code.
std::vector<BatsCategory> load_bats(const std::filesystem::path& directory,
                                    const Vocabulary* vocab = nullptr);

using WordPair = std::pair<WordId, WordId>;

inline WordPair canonical_pair(WordId x, WordId y) { return x < y ? WordPair{x, y} : WordPair{y, x}; }

// Records (a, a*) and (b, b*) of one relation. The paraphrase pairs are
// W = {a, b*} and W* = {a*, b}.
struct AnalogyInstance {
  WordId a = 0, a_star = 0, b = 0, b_star = 0;
  std::size_t record_a = 0, record_b = 0;

  WordPair paraphrase() const { return canonical_pair(a, b_star); }
  WordPair paraphrase_star() const { return canonical_pair(a_star, b); }
};

// All ordered pairs of distinct in-vocabulary records, using primary targets.
std::vector<AnalogyInstance> enumerate_analogies(const BatsCategory& category, const Vocabulary& vocab);

// 3CosAdd over length-normalised word vectors (columns of `words`).
class AnalogySolver {
 public:
  explicit AnalogySolver(const Eigen::MatrixXf& words);

  // argmax_x cos(w_x, w_a - w_a* + w_b*) over the vocabulary minus
  // {a, a*, b*}. Ties go to the lower id. Throws UndefinedError if a
  // query vector has zero norm.
  WordId predict(WordId a, WordId a_star, WordId b_star) const;

  struct Query {
    WordId a, a_star, b_star;
  };
  std::vector<WordId> predict_batch(std::span<const Query> queries) const;

  std::size_t vocab_size() const { return static_cast<std::size_t>(normalized_.cols()); }

 private:
  Eigen::VectorXf query_vector(const Query& q) const;

  Eigen::MatrixXf normalized_;
  std::vector<bool> zero_norm_;
};

WordId three_cos_add(const Eigen::MatrixXf& words, WordId a, WordId a_star, WordId b_star);

struct CategoryAccuracy {
  std::string code;
  std::size_t analogies = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

// Scores the usual BATS direction for every enumerated analogy: the
// second record's target is predicted from a* - a + b and counts as
// correct when it is any listed target of that record. Throws
// UndefinedError when no analogy can be formed.
CategoryAccuracy evaluate_category(const AnalogySolver& solver, const BatsCategory& category,
                                   const Vocabulary& vocab);

}  // namespace pprobe
