#include "pprobe/pmi_linearity.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <thread>

#include <Eigen/SVD>

#include "pprobe/binary_io.hpp"
#include "pprobe/error.hpp"

namespace pprobe {

namespace {
constexpr std::string_view kPmiMagic = "PPPMI001";
}

SparsePmiMatrix SparsePmiMatrix::build(const PairCounts& counts) {
  if (counts.total() == 0) throw UndefinedError("PMI from empty counts");
  SparsePmiMatrix m;
  m.vocab_hash_ = counts.provenance().vocab_hash;
  const std::size_t v = counts.vocab_size();
  const auto& e = counts.entries();
  const auto rows = counts.row_marginals();
  const auto cols = counts.col_marginals();
  const double total = static_cast<double>(counts.total());
  m.row_offsets_.assign(v + 1, 0);
  m.columns_.reserve(e.size());
  m.values_.reserve(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    const WordId w = key_high(e.keys[i]), c = key_low(e.keys[i]);
    // Integer products stay exact in double well past corpus sizes of interest,
    // so independent pairs give a ratio of exactly 1.
    const double ratio = (static_cast<double>(e.counts[i]) * total) /
                         (static_cast<double>(rows[w]) * static_cast<double>(cols[c]));
    double value = std::log(ratio);
    if (!std::isfinite(value)) value = 0.0;
    ++m.row_offsets_[w + 1];
    m.columns_.push_back(c);
    m.values_.push_back(value);
  }
  for (std::size_t w = 0; w < v; ++w) m.row_offsets_[w + 1] += m.row_offsets_[w];
  return m;
}

SparsePmiMatrix SparsePmiMatrix::from_dense(const Eigen::MatrixXd& dense, std::uint64_t vocab_hash) {
  if (dense.rows() != dense.cols()) throw ConfigError("PMI matrix must be square");
  SparsePmiMatrix m;
  m.vocab_hash_ = vocab_hash;
  m.row_offsets_.push_back(0);
  for (Eigen::Index r = 0; r < dense.rows(); ++r) {
    for (Eigen::Index c = 0; c < dense.cols(); ++c) {
      const double x = dense(r, c);
      if (x != 0.0 && std::isfinite(x)) {
        m.columns_.push_back(static_cast<WordId>(c));
        m.values_.push_back(x);
      }
    }
    m.row_offsets_.push_back(m.columns_.size());
  }
  return m;
}

SparsePmiMatrix::Row SparsePmiMatrix::row(WordId word) const {
  if (word >= size()) throw BoundsError("PMI row " + std::to_string(word) + " out of range");
  const auto b = row_offsets_[word], e = row_offsets_[word + 1];
  return Row{std::span<const WordId>(columns_).subspan(b, e - b),
             std::span<const double>(values_).subspan(b, e - b)};
}

double SparsePmiMatrix::at(WordId word, WordId context) const {
  auto r = row(word);
  auto it = std::lower_bound(r.columns.begin(), r.columns.end(), context);
  if (it == r.columns.end() || *it != context) return 0.0;
  return r.values[static_cast<std::size_t>(it - r.columns.begin())];
}

Eigen::VectorXd SparsePmiMatrix::dense_row(WordId word) const {
  auto r = row(word);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(size()));
  for (std::size_t i = 0; i < r.columns.size(); ++i) out(r.columns[i]) = r.values[i];
  return out;
}

void SparsePmiMatrix::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.write_magic(kPmiMagic);
  w.u64(vocab_hash_);
  w.u64(size());
  w.u64(nnz());
  w.u64_array(row_offsets_);
  w.u32_array(columns_);
  w.f64_array(values_);
  w.close();
}

SparsePmiMatrix SparsePmiMatrix::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kPmiMagic);
  SparsePmiMatrix m;
  m.vocab_hash_ = r.u64();
  const auto v = r.u64(), nnz = r.u64();
  m.row_offsets_ = r.u64_array(v + 1);
  m.columns_ = r.u32_array(nnz);
  m.values_ = r.f64_array(nnz);
  r.expect_end();
  if (m.row_offsets_.front() != 0 || m.row_offsets_.back() != nnz ||
      !std::is_sorted(m.row_offsets_.begin(), m.row_offsets_.end())) {
    throw ParseError(path.string() + ": corrupt row offsets");
  }
  return m;
}

PseudoInverse pseudo_inverse(const Eigen::MatrixXd& c, double relative_cutoff) {
  if (!c.allFinite()) throw NumericError("pseudo-inverse of a matrix with non-finite entries");
  PseudoInverse out;
  out.source_rows = c.rows();
  out.source_cols = c.cols();
  out.matrix.setZero(c.cols(), c.rows());
  if (c.size() == 0) return out;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("SVD did not converge");
  const auto& s = svd.singularValues();
  out.cutoff = s.size() > 0 ? relative_cutoff * s(0) : 0.0;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > out.cutoff) {
      inv(i) = 1.0 / s(i);
      ++out.rank;
    }
  }
  out.matrix = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  return out;
}

Eigen::VectorXd approximate_embedding(const PseudoInverse& pinv, const SparsePmiMatrix::Row& pmi_row) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(pinv.source_rows);
  for (std::size_t i = 0; i < pmi_row.columns.size(); ++i) {
    const auto j = static_cast<Eigen::Index>(pmi_row.columns[i]);
    if (j >= pinv.matrix.rows()) throw ConfigError("PMI row longer than the pseudo-inverse");
    out += pmi_row.values[i] * pinv.matrix.row(j).transpose();
  }
  return out;
}

Eigen::VectorXd approximate_embedding(const PseudoInverse& pinv, const Eigen::VectorXd& pmi_row) {
  if (pmi_row.size() != pinv.matrix.rows()) {
    throw ConfigError("PMI vector of length " + std::to_string(pmi_row.size()) +
                      " does not match pseudo-inverse with " + std::to_string(pinv.matrix.rows()) + " rows");
  }
  return pinv.matrix.transpose() * pmi_row;
}

std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  if (x.size() != y.size()) throw ConfigError("pearson: length mismatch");
  if (x.size() < 2) return std::nullopt;
  const Eigen::VectorXd dx = x.array() - x.mean();
  const Eigen::VectorXd dy = y.array() - y.mean();
  const double vx = dx.squaredNorm(), vy = dy.squaredNorm();
  if (!(vx > 0.0) || !(vy > 0.0)) return std::nullopt;
  const double r = dx.dot(dy) / std::sqrt(vx * vy);
  return std::clamp(r, -1.0, 1.0);
}

std::vector<std::size_t> CorrelationReport::histogram(double bin_width) const {
  const auto bins = static_cast<std::size_t>(std::llround(2.0 / bin_width));
  std::vector<std::size_t> out(bins, 0);
  for (const auto& r : pearson_r) {
    if (!r) continue;
    auto b = static_cast<std::size_t>(std::floor((*r + 1.0) / bin_width));
    out[std::min(b, bins - 1)]++;
  }
  return out;
}

void CorrelationReport::write_tsv(const std::filesystem::path& path, const Vocabulary& vocab) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  out << "#word\tpearson_r\n";
  for (std::size_t i = 0; i < words.size(); ++i) {
    out << vocab.token(words[i]) << '\t';
    if (pearson_r[i]) {
      out << *pearson_r[i];
    } else {
      out << "NA";
    }
    out << '\n';
  }
  out << "#summary\tmean=" << mean << "\tvariance=" << variance << "\tdefined=" << defined
      << "\tmissing=" << missing << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

void CorrelationReport::write_histogram_tsv(const std::filesystem::path& path, double bin_width) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#bin_left\tcount\n";
  auto h = histogram(bin_width);
  out << std::fixed << std::setprecision(2);
  for (std::size_t b = 0; b < h.size(); ++b) {
    out << -1.0 + static_cast<double>(b) * bin_width << '\t' << h[b] << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

CorrelationReport correlation_report(const Eigen::MatrixXf& words, const PseudoInverse& pinv,
                                     const SparsePmiMatrix& pmi, std::span<const WordId> word_ids,
                                     unsigned threads) {
  if (pmi.size() != static_cast<std::size_t>(words.cols()) || pinv.source_cols != words.cols() ||
      pinv.source_rows != words.rows()) {
    throw IncompatibleError("embeddings, PMI and pseudo-inverse dimensions disagree");
  }
  CorrelationReport report;
  report.words.assign(word_ids.begin(), word_ids.end());
  report.pearson_r.resize(word_ids.size());
  threads = std::max(1U, threads);
  auto work = [&](unsigned shard) {
    for (std::size_t i = shard; i < word_ids.size(); i += threads) {
      const WordId x = word_ids[i];
      Eigen::VectorXd approx = approximate_embedding(pinv, pmi.row(x));
      report.pearson_r[i] = pearson(words.col(x).cast<double>(), approx);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned s = 0; s < threads; ++s) pool.emplace_back(work, s);
  }
  double sum = 0.0;
  for (const auto& r : report.pearson_r) {
    if (r) {
      sum += *r;
      ++report.defined;
    } else {
      ++report.missing;
    }
  }
  if (report.defined > 0) {
    report.mean = sum / static_cast<double>(report.defined);
    double sq = 0.0;
    for (const auto& r : report.pearson_r) {
      if (r) sq += (*r - report.mean) * (*r - report.mean);
    }
    report.variance = sq / static_cast<double>(report.defined);
  }
  return report;
}

CorrelationReport correlation_report(const EmbeddingPair& embeddings, const SparsePmiMatrix& pmi,
                                     std::span<const WordId> word_ids, unsigned threads) {
  const PseudoInverse pinv = pseudo_inverse(embeddings.contexts.cast<double>());
  return correlation_report(embeddings.words, pinv, pmi, word_ids, threads);
}

}  // namespace pprobe
