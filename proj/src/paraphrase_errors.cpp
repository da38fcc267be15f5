#include "pprobe/paraphrase_errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "pprobe/error.hpp"

namespace pprobe {

double clipped_log_ratio(double numerator, double denominator, double epsilon, ClipStats* stats) {
  if (numerator > 0.0 && denominator > 0.0) return std::log(numerator) - std::log(denominator);
  if (numerator > 0.0) {
    if (stats) ++stats->log_infinity;
    return -std::log(epsilon);
  }
  if (denominator > 0.0) {
    if (stats) ++stats->log_zero;
    return std::log(epsilon);
  }
  if (stats) ++stats->zero_over_zero;
  return 0.0;
}

DistributionEstimator::DistributionEstimator(const TripletCounts& triplets, const PairCounts& pairs)
    : triplets_(&triplets), pairs_(&pairs) {
  const auto& tp = triplets.provenance();
  const auto& pp = pairs.provenance();
  if (tp.vocab_hash != pp.vocab_hash || tp.vocab_size != pp.vocab_size) {
    throw IncompatibleError("triplet and pair counts come from different vocabularies");
  }
  if (tp.radius != pp.radius) throw IncompatibleError("triplet and pair counts use different windows");
  const std::size_t v = pairs.vocab_size();
  const auto& e = pairs.entries();
  col_offsets_.assign(v + 1, 0);
  for (auto key : e.keys) ++col_offsets_[key_low(key) + 1];
  for (std::size_t c = 0; c < v; ++c) col_offsets_[c + 1] += col_offsets_[c];
  col_rows_.resize(e.size());
  col_counts_.resize(e.size());
  std::vector<std::uint64_t> fill(col_offsets_.begin(), col_offsets_.end() - 1);
  // Entries are sorted by row, so each column ends up sorted by row too.
  for (std::size_t i = 0; i < e.size(); ++i) {
    const auto pos = fill[key_low(e.keys[i])]++;
    col_rows_[pos] = key_high(e.keys[i]);
    col_counts_[pos] = e.counts[i];
  }
}

bool DistributionEstimator::well_defined(WordId first, WordId second) const {
  return triplets_->pair_total(first, second) > 0;
}

ParaphraseDistribution DistributionEstimator::estimate(WordId first, WordId second) const {
  const auto column_id = triplets_->pair_column(first, second);
  if (!column_id) {
    throw UndefinedError("pair (" + std::to_string(first) + ", " + std::to_string(second) +
                         ") is not a pair of distinct universe words");
  }
  const auto col = triplets_->column(*column_id);
  if (col.total == 0) {
    throw UndefinedError("pair (" + std::to_string(first) + ", " + std::to_string(second) +
                         ") is not well-defined: it never shares a window");
  }
  const std::size_t v = vocab_size();
  const auto n = static_cast<Eigen::Index>(v);
  const auto centres = triplets_->center_marginals();
  const auto row_totals = pairs_->row_marginals();
  const auto col_totals = pairs_->col_marginals();

  ParaphraseDistribution d;
  d.first = first;
  d.second = second;
  d.context_given_pair = Eigen::VectorXd::Zero(n);
  d.pair_given_context = Eigen::VectorXd::Zero(n);
  d.first_given_context = Eigen::VectorXd::Zero(n);
  d.second_given_context = Eigen::VectorXd::Zero(n);
  const double pair_total = static_cast<double>(col.total);
  for (std::size_t i = 0; i < col.centers.size(); ++i) {
    const WordId c = col.centers[i];
    const double joint = static_cast<double>(col.counts[i]);
    d.context_given_pair(c) = joint / pair_total;
    d.pair_given_context(c) = joint / static_cast<double>(centres[c]);
  }
  auto fill_word = [&](WordId w, Eigen::VectorXd& out) {
    for (auto p = col_offsets_[w]; p < col_offsets_[w + 1]; ++p) {
      const WordId c = col_rows_[p];
      out(c) = static_cast<double>(col_counts_[p]) / static_cast<double>(row_totals[c]);
    }
  };
  fill_word(first, d.first_given_context);
  fill_word(second, d.second_given_context);
  for (std::size_t c = 0; c < v; ++c) {
    if (centres[c] == 0 || row_totals[c] == 0) ++d.undefined_entries;
  }
  d.pair_probability = pair_total / static_cast<double>(triplets_->total_centers());
  const double total = static_cast<double>(pairs_->total());
  d.first_probability = static_cast<double>(col_totals[first]) / total;
  d.second_probability = static_cast<double>(col_totals[second]) / total;
  return d;
}

Eigen::VectorXd paraphrase_error(const ParaphraseDistribution& w, const ParaphraseDistribution& w_star,
                                 double epsilon, ClipStats* stats) {
  if (w.context_given_pair.size() != w_star.context_given_pair.size()) {
    throw IncompatibleError("paraphrase distributions over different vocabularies");
  }
  Eigen::VectorXd out(w.context_given_pair.size());
  for (Eigen::Index c = 0; c < out.size(); ++c) {
    out(c) = clipped_log_ratio(w_star.context_given_pair(c), w.context_given_pair(c), epsilon, stats);
  }
  return out;
}

DependenceErrors dependence_errors(const ParaphraseDistribution& w, double epsilon, ClipStats* stats) {
  DependenceErrors out;
  out.sigma.resize(w.pair_given_context.size());
  for (Eigen::Index c = 0; c < out.sigma.size(); ++c) {
    out.sigma(c) = clipped_log_ratio(w.pair_given_context(c),
                                     w.first_given_context(c) * w.second_given_context(c), epsilon, stats);
  }
  out.tau = clipped_log_ratio(w.pair_probability, w.first_probability * w.second_probability, epsilon, stats);
  return out;
}

Eigen::VectorXd ErrorDecomposition::dependence_sum() const {
  return (sigma_w_star - sigma_w).array() + (tau_w - tau_w_star);
}

Eigen::VectorXd ErrorDecomposition::total() const { return dependence_sum() - rho; }

ErrorDecomposition decompose(const ParaphraseDistribution& w, const ParaphraseDistribution& w_star,
                             double epsilon) {
  ErrorDecomposition out;
  out.rho = paraphrase_error(w, w_star, epsilon, &out.clips);
  auto dw = dependence_errors(w, epsilon, &out.clips);
  auto dws = dependence_errors(w_star, epsilon, &out.clips);
  out.sigma_w = std::move(dw.sigma);
  out.sigma_w_star = std::move(dws.sigma);
  out.tau_w = dw.tau;
  out.tau_w_star = dws.tau;
  return out;
}

Eigen::VectorXd decomposition_residual(const Eigen::VectorXd& pmi_a, const Eigen::VectorXd& pmi_a_star,
                                       const Eigen::VectorXd& pmi_b, const Eigen::VectorXd& pmi_b_star,
                                       const ErrorDecomposition& errors) {
  const auto n = errors.rho.size();
  for (const auto* v : {&pmi_a, &pmi_a_star, &pmi_b, &pmi_b_star}) {
    if (v->size() != n) throw IncompatibleError("PMI rows and error terms differ in length");
  }
  Eigen::VectorXd lhs = pmi_b_star - pmi_b - pmi_a_star + pmi_a;
  if (!lhs.allFinite() || !errors.total().allFinite()) throw UndefinedError("residual undefined: non-finite term");
  return lhs - errors.total();
}

Eigen::VectorXd decomposition_residual(const AnalogyInstance& analogy, const SparsePmiMatrix& pmi,
                                       const ErrorDecomposition& errors) {
  return decomposition_residual(pmi.dense_row(analogy.a), pmi.dense_row(analogy.a_star),
                                pmi.dense_row(analogy.b), pmi.dense_row(analogy.b_star), errors);
}

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<CategoryNormRow> category_norm_table(std::span<const BatsCategory> categories,
                                                 const Vocabulary& vocab, const DistributionEstimator& estimator,
                                                 const SparsePmiMatrix& pmi, double epsilon,
                                                 std::vector<AnalogyErrorRow>* detail) {
  if (pmi.size() != estimator.vocab_size()) throw IncompatibleError("PMI matrix and counts differ in size");
  std::vector<CategoryNormRow> rows;
  for (const auto& cat : categories) {
    CategoryNormRow row;
    row.code = cat.code;
    const auto analogies = enumerate_analogies(cat, vocab);
    row.analogies = analogies.size();
    std::vector<double> para, dep, all;
    for (const auto& an : analogies) {
      const auto w = an.paraphrase(), ws = an.paraphrase_star();
      if (w.first == w.second || ws.first == ws.second) continue;
      if (!estimator.well_defined(w.first, w.second) || !estimator.well_defined(ws.first, ws.second)) continue;
      const auto dw = estimator.estimate(w.first, w.second);
      const auto dws = estimator.estimate(ws.first, ws.second);
      const auto errors = decompose(dw, dws, epsilon);
      AnalogyErrorRow r;
      r.category = cat.code;
      r.analogy = an;
      r.paraphrase_norm = errors.rho.norm();
      r.dependence_norm = errors.dependence_sum().norm();
      r.total_norm = errors.total().norm();
      r.residual_max_abs = decomposition_residual(an, pmi, errors).cwiseAbs().maxCoeff();
      r.clips = errors.clips;
      para.push_back(r.paraphrase_norm);
      dep.push_back(r.dependence_norm);
      all.push_back(r.total_norm);
      if (detail) detail->push_back(std::move(r));
    }
    row.well_defined = para.size();
    if (!para.empty()) {
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      row.paraphrase_mean = mean(para);
      row.dependence_mean = mean(dep);
      row.total_mean = mean(all);
      row.paraphrase_median = median(para);
      row.dependence_median = median(dep);
      row.total_median = median(all);
    }
    rows.push_back(row);
  }
  return rows;
}

void write_norm_table(const std::filesystem::path& path, std::span<const CategoryNormRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#statistic";
  for (const auto& r : rows) out << '\t' << r.code;
  out << '\n' << std::fixed << std::setprecision(3);
  auto line = [&](const char* name, auto field, bool needs_data) {
    out << name;
    for (const auto& r : rows) {
      out << '\t';
      if (needs_data && r.empty()) {
        out << "NA";
      } else {
        out << field(r);
      }
    }
    out << '\n';
  };
  line("n_analogies", [](const CategoryNormRow& r) { return r.analogies; }, false);
  line("n_well_defined", [](const CategoryNormRow& r) { return r.well_defined; }, false);
  line("paraphrase_error_norm", [](const CategoryNormRow& r) { return r.paraphrase_mean; }, true);
  line("dependence_errors_sum_norm", [](const CategoryNormRow& r) { return r.dependence_mean; }, true);
  line("all_errors_sum_norm", [](const CategoryNormRow& r) { return r.total_mean; }, true);
  line("paraphrase_error_norm_median", [](const CategoryNormRow& r) { return r.paraphrase_median; }, true);
  line("dependence_errors_sum_norm_median", [](const CategoryNormRow& r) { return r.dependence_median; }, true);
  line("all_errors_sum_norm_median", [](const CategoryNormRow& r) { return r.total_median; }, true);
  if (!out) throw IoError("write failure on " + path.string());
}

void write_error_detail(const std::filesystem::path& path, std::span<const AnalogyErrorRow> rows,
                        const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#category\ta\ta_star\tb\tb_star\tparaphrase_norm\tdependence_norm\tall_norm\tresidual_max_abs"
         "\tclip_log_inf\tclip_log_zero\tclip_zero_over_zero\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.category << '\t' << vocab.token(r.analogy.a) << '\t' << vocab.token(r.analogy.a_star) << '\t'
        << vocab.token(r.analogy.b) << '\t' << vocab.token(r.analogy.b_star) << '\t' << r.paraphrase_norm << '\t'
        << r.dependence_norm << '\t' << r.total_norm << '\t' << r.residual_max_abs << '\t'
        << r.clips.log_infinity << '\t' << r.clips.log_zero << '\t' << r.clips.zero_over_zero << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace pprobe
