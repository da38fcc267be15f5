#include "pprobe/analogy_bats.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <regex>

#include "pprobe/error.hpp"

namespace pprobe {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space_byte(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space_byte(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::optional<std::string> category_code(const std::filesystem::path& file) {
  static const std::regex code_re("^([IDEL][0-9]{2})");
  std::smatch m;
  const std::string name = file.filename().string();
  if (std::regex_search(name, m, code_re)) return m[1].str();
  return std::nullopt;
}

}  // namespace

BatsCategory parse_bats_file(const std::filesystem::path& file, std::string code) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  BatsCategory cat;
  cat.code = std::move(code);
  cat.file = file;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    const std::string where = file.string() + ":" + std::to_string(lineno);
    std::string_view sv = trim(line);
    if (sv.empty()) continue;
    auto tab = sv.find('\t');
    if (tab == std::string_view::npos) throw ParseError(where + ": expected word<TAB>targets");
    BatsRecord rec;
    rec.source = std::string(trim(sv.substr(0, tab)));
    std::string_view rest = trim(sv.substr(tab + 1));
    if (rec.source.empty() || rest.empty()) throw ParseError(where + ": empty source or target");
    while (!rest.empty()) {
      auto slash = rest.find('/');
      auto t = trim(rest.substr(0, slash));
      if (t.empty()) throw ParseError(where + ": empty target");
      rec.targets.emplace_back(t);
      if (slash == std::string_view::npos) break;
      rest.remove_prefix(slash + 1);
      if (trim(rest).empty()) throw ParseError(where + ": empty target");
    }
    cat.records.push_back(std::move(rec));
  }
  if (in.bad()) throw IoError("read failure on " + file.string());
  return cat;
}

std::vector<BatsCategory> load_bats(const std::filesystem::path& directory, const Vocabulary* vocab) {
  if (!std::filesystem::is_directory(directory)) {
    throw IoError("BATS directory not found: " + directory.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(directory)) {
    if (e.is_regular_file() && e.path().extension() == ".txt" && category_code(e.path())) {
      files.push_back(e.path());
    }
  }
  std::vector<BatsCategory> out;
  for (const auto& f : files) out.push_back(parse_bats_file(f, *category_code(f)));
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return x.code != y.code ? x.code < y.code : x.file < y.file;
  });
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].code == out[i - 1].code) throw ParseError("duplicate BATS category " + out[i].code);
  }
  if (vocab) {
    for (auto& cat : out) {
      for (auto& r : cat.records) r.in_vocabulary = vocab->contains(r.source) && vocab->contains(r.targets.front());
    }
  }
  return out;
}

std::vector<AnalogyInstance> enumerate_analogies(const BatsCategory& category, const Vocabulary& vocab) {
  struct Usable {
    std::size_t record;
    WordId source, target;
  };
  std::vector<Usable> usable;
  for (std::size_t r = 0; r < category.records.size(); ++r) {
    const auto& rec = category.records[r];
    auto s = vocab.find(rec.source);
    auto t = vocab.find(rec.targets.front());
    if (s && t) usable.push_back({r, *s, *t});
  }
  std::vector<AnalogyInstance> out;
  if (usable.size() < 2) return out;
  out.reserve(usable.size() * (usable.size() - 1));
  for (const auto& x : usable) {
    for (const auto& y : usable) {
      if (x.record == y.record) continue;
      out.push_back(AnalogyInstance{x.source, x.target, y.source, y.target, x.record, y.record});
    }
  }
  return out;
}

AnalogySolver::AnalogySolver(const Eigen::MatrixXf& words) : normalized_(words) {
  zero_norm_.resize(static_cast<std::size_t>(words.cols()));
  for (Eigen::Index c = 0; c < normalized_.cols(); ++c) {
    const float n = normalized_.col(c).norm();
    zero_norm_[static_cast<std::size_t>(c)] = !(n > 0.0f);
    if (n > 0.0f) normalized_.col(c) /= n;
  }
}

Eigen::VectorXf AnalogySolver::query_vector(const Query& q) const {
  for (WordId w : {q.a, q.a_star, q.b_star}) {
    if (w >= vocab_size()) throw BoundsError("analogy query id out of range");
    if (zero_norm_[w]) throw UndefinedError("degenerate analogy query: zero-norm vector");
  }
  return normalized_.col(q.a) - normalized_.col(q.a_star) + normalized_.col(q.b_star);
}

std::vector<WordId> AnalogySolver::predict_batch(std::span<const Query> queries) const {
  std::vector<WordId> out;
  out.reserve(queries.size());
  constexpr std::size_t kBatch = 256;
  for (std::size_t start = 0; start < queries.size(); start += kBatch) {
    const std::size_t n = std::min(kBatch, queries.size() - start);
    Eigen::MatrixXf q(normalized_.rows(), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) q.col(static_cast<Eigen::Index>(i)) = query_vector(queries[start + i]);
    const Eigen::MatrixXf scores = normalized_.transpose() * q;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& qu = queries[start + i];
      WordId best = 0;
      float best_score = -std::numeric_limits<float>::infinity();
      bool found = false;
      for (Eigen::Index x = 0; x < scores.rows(); ++x) {
        const auto w = static_cast<WordId>(x);
        if (w == qu.a || w == qu.a_star || w == qu.b_star || zero_norm_[w]) continue;
        const float s = scores(x, static_cast<Eigen::Index>(i));
        if (!found || s > best_score) {
          best = w;
          best_score = s;
          found = true;
        }
      }
      if (!found) throw UndefinedError("no candidate words outside the analogy query");
      out.push_back(best);
    }
  }
  return out;
}

WordId AnalogySolver::predict(WordId a, WordId a_star, WordId b_star) const {
  const Query q{a, a_star, b_star};
  return predict_batch(std::span<const Query>(&q, 1)).front();
}

WordId three_cos_add(const Eigen::MatrixXf& words, WordId a, WordId a_star, WordId b_star) {
  return AnalogySolver(words).predict(a, a_star, b_star);
}

CategoryAccuracy evaluate_category(const AnalogySolver& solver, const BatsCategory& category,
                                   const Vocabulary& vocab) {
  const auto analogies = enumerate_analogies(category, vocab);
  if (analogies.empty()) throw UndefinedError("category " + category.code + " has no usable analogies");
  std::vector<AnalogySolver::Query> queries;
  queries.reserve(analogies.size());
  // a* - a + b should land on b*.
  for (const auto& an : analogies) queries.push_back({an.a_star, an.a, an.b});
  const auto predicted = solver.predict_batch(queries);
  CategoryAccuracy acc;
  acc.code = category.code;
  acc.analogies = analogies.size();
  for (std::size_t i = 0; i < analogies.size(); ++i) {
    const auto& targets = category.records[analogies[i].record_b].targets;
    const auto& guess = vocab.token(predicted[i]);
    if (std::find(targets.begin(), targets.end(), guess) != targets.end()) ++acc.correct;
  }
  acc.accuracy = static_cast<double>(acc.correct) / static_cast<double>(acc.analogies);
  return acc;
}

}  // namespace pprobe
