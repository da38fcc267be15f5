#include "pprobe/pci_rank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <thread>

#include "pprobe/binary_io.hpp"
#include "pprobe/error.hpp"
#include "pprobe/paraphrase_errors.hpp"

namespace pprobe {

namespace {

constexpr std::string_view kPciMagic = "PPPCI001";
constexpr std::string_view kNormsMagic = "PPNORM01";

std::filesystem::path norms_sidecar(const std::filesystem::path& p) {
  auto s = p;
  s += ".norms";
  return s;
}

double sparse_dot(const PciMatrix::Column& x, const PciMatrix::Column& y) {
  const auto& small = x.rows.size() <= y.rows.size() ? x : y;
  const auto& large = x.rows.size() <= y.rows.size() ? y : x;
  double dot = 0.0;
  for (std::size_t i = 0; i < small.rows.size(); ++i) {
    auto it = std::lower_bound(large.rows.begin(), large.rows.end(), small.rows[i]);
    if (it != large.rows.end() && *it == small.rows[i]) {
      dot += small.values[i] * large.values[static_cast<std::size_t>(it - large.rows.begin())];
    }
  }
  return dot;
}

}  // namespace

PciMatrix PciMatrix::build(const TripletCounts& triplets, PciOptions options) {
  PciMatrix m;
  m.provenance_ = triplets.provenance();
  m.universe_ = triplets.universe();
  m.index_ = triplets.pair_index();
  m.positive_only_ = options.positive_values_only;
  const auto centres = triplets.center_marginals();
  m.col_offsets_.push_back(0);
  for (std::size_t p = 0; p < triplets.nonempty_columns(); ++p) {
    const auto col = triplets.column_at(p);
    const std::size_t before = m.rows_.size();
    for (std::size_t i = 0; i < col.centers.size(); ++i) {
      const WordId k = col.centers[i];
      const double value =
          std::log(static_cast<double>(col.counts[i]) / static_cast<double>(centres[k]));
      if (options.positive_values_only && !(value > 0.0)) continue;
      m.rows_.push_back(k);
      m.values_.push_back(value);
    }
    if (m.rows_.size() == before) continue;
    m.pair_ids_.push_back(triplets.pair_id_at(p));
    m.col_offsets_.push_back(m.rows_.size());
  }
  m.finalize();
  return m;
}

void PciMatrix::finalize() {
  const std::size_t ncols = pair_ids_.size();
  norms2_.assign(ncols, 0.0);
  for (std::size_t c = 0; c < ncols; ++c) {
    double s = 0.0;
    for (auto e = col_offsets_[c]; e < col_offsets_[c + 1]; ++e) s += values_[e] * values_[e];
    norms2_[c] = s;
  }
  sorted_norms2_ = norms2_;
  std::sort(sorted_norms2_.begin(), sorted_norms2_.end());

  const std::size_t nrows = provenance_.vocab_size;
  row_offsets_.assign(nrows + 1, 0);
  for (auto r : rows_) ++row_offsets_[r + 1];
  for (std::size_t r = 0; r < nrows; ++r) row_offsets_[r + 1] += row_offsets_[r];
  row_columns_.resize(rows_.size());
  row_values_.resize(rows_.size());
  std::vector<std::uint64_t> fill(row_offsets_.begin(), row_offsets_.end() - 1);
  for (std::size_t c = 0; c < ncols; ++c) {
    for (auto e = col_offsets_[c]; e < col_offsets_[c + 1]; ++e) {
      const auto pos = fill[rows_[e]]++;
      row_columns_[pos] = static_cast<std::uint32_t>(c);
      row_values_[pos] = values_[e];
    }
  }
}

std::optional<std::size_t> PciMatrix::position(std::uint32_t pair_id) const {
  auto it = std::lower_bound(pair_ids_.begin(), pair_ids_.end(), pair_id);
  if (it == pair_ids_.end() || *it != pair_id) return std::nullopt;
  return static_cast<std::size_t>(it - pair_ids_.begin());
}

std::optional<std::size_t> PciMatrix::position_of(WordId a, WordId b) const {
  const auto sa = universe_.slot(a), sb = universe_.slot(b);
  if (sa < 0 || sb < 0 || a == b) return std::nullopt;
  return position(index_.index(static_cast<std::uint32_t>(sa), static_cast<std::uint32_t>(sb)));
}

PciMatrix::Column PciMatrix::column(std::size_t position) const {
  if (position >= columns()) throw BoundsError("PCI column position out of range");
  const auto b = col_offsets_[position], e = col_offsets_[position + 1];
  return Column{std::span<const WordId>(rows_).subspan(b, e - b), std::span<const double>(values_).subspan(b, e - b)};
}

PciMatrix::RowEntries PciMatrix::row(WordId center) const {
  if (center >= rows()) throw BoundsError("PCI row out of range");
  const auto b = row_offsets_[center], e = row_offsets_[center + 1];
  return RowEntries{std::span<const std::uint32_t>(row_columns_).subspan(b, e - b),
                    std::span<const double>(row_values_).subspan(b, e - b)};
}

void PciMatrix::save(const std::filesystem::path& path) const {
  BinaryWriter w(path);
  w.write_magic(kPciMagic);
  w.u64(provenance_.vocab_hash);
  w.u64(provenance_.vocab_size);
  w.u32(provenance_.radius);
  w.u32(provenance_.universe_size);
  w.u64(provenance_.universe_hash);
  w.u32(positive_only_ ? 1 : 0);
  w.u64(universe_.size());
  w.u32_array(universe_.members());
  w.u64(pair_ids_.size());
  w.u64(values_.size());
  w.u32_array(pair_ids_);
  w.u64_array(col_offsets_);
  w.u32_array(rows_);
  w.f64_array(values_);
  w.close();

  BinaryWriter n(norms_sidecar(path));
  n.write_magic(kNormsMagic);
  n.u64(norms2_.size());
  n.f64_array(norms2_);
  n.close();
}

PciMatrix PciMatrix::load(const std::filesystem::path& path) {
  BinaryReader r(path);
  r.expect_magic(kPciMagic);
  PciMatrix m;
  m.provenance_.vocab_hash = r.u64();
  m.provenance_.vocab_size = r.u64();
  m.provenance_.radius = r.u32();
  m.provenance_.universe_size = r.u32();
  m.provenance_.universe_hash = r.u64();
  m.positive_only_ = r.u32() != 0;
  auto members = r.u32_array(r.u64());
  m.universe_ = PairUniverse(members, m.provenance_.vocab_size);
  if (m.universe_.hash() != m.provenance_.universe_hash) throw ParseError(path.string() + ": universe hash mismatch");
  m.index_ = PairIndex(m.universe_.size());
  const auto ncols = r.u64(), nnz = r.u64();
  m.pair_ids_ = r.u32_array(ncols);
  m.col_offsets_ = r.u64_array(ncols + 1);
  m.rows_ = r.u32_array(nnz);
  m.values_ = r.f64_array(nnz);
  r.expect_end();
  if (m.col_offsets_.back() != nnz) throw ParseError(path.string() + ": corrupt column offsets");
  for (auto row : m.rows_) {
    if (row >= m.provenance_.vocab_size) throw ParseError(path.string() + ": row out of range");
  }
  m.finalize();

  BinaryReader n(norms_sidecar(path));
  n.expect_magic(kNormsMagic);
  auto norms = n.f64_array(n.u64());
  n.expect_end();
  if (norms.size() != m.norms2_.size()) throw ParseError("norm cache does not match PCI columns");
  for (std::size_t c = 0; c < norms.size(); ++c) {
    if (std::abs(norms[c] - m.norms2_[c]) > 1e-9 * std::max(1.0, m.norms2_[c])) {
      throw ParseError("norm cache disagrees with PCI column " + std::to_string(c));
    }
  }
  return m;
}

double column_distance(const PciMatrix& pci, std::size_t position1, std::size_t position2) {
  if (position1 == position2) return 0.0;
  const double d2 = pci.norm_squared(position1) + pci.norm_squared(position2) -
                    2.0 * sparse_dot(pci.column(position1), pci.column(position2));
  return std::sqrt(std::max(0.0, d2));
}

RankResult rank_true_paraphrase(const PciMatrix& pci, WordPair w, WordPair w_star, bool restrict_to_w_star_words,
                                RankScratch* scratch) {
  w = canonical_pair(w.first, w.second);
  w_star = canonical_pair(w_star.first, w_star.second);
  const auto q = pci.position_of(w.first, w.second);
  const auto t = pci.position_of(w_star.first, w_star.second);
  if (!q) throw UndefinedError("paraphrase W has no PCI column");
  if (!t) throw UndefinedError("paraphrase W* has no PCI column");
  RankResult result;
  result.w = w;
  result.w_star = w_star;
  const double nq2 = pci.norm_squared(*q);

  if (restrict_to_w_star_words) {
    std::vector<std::size_t> candidates;
    const auto& universe = pci.universe();
    for (WordId u : {w_star.first, w_star.second}) {
      for (WordId v : universe.members()) {
        if (v == u || (u == w_star.second && v == w_star.first)) continue;
        if (auto p = pci.position_of(u, v); p && *p != *q) candidates.push_back(*p);
      }
    }
    const auto qcol = pci.column(*q);
    auto d2 = [&](std::size_t x) { return nq2 + pci.norm_squared(x) - 2.0 * sparse_dot(qcol, pci.column(x)); };
    const double target = *q == *t ? 0.0 : d2(*t);
    for (auto x : candidates) {
      if (x == *t) continue;
      const double dx = d2(x);
      if (dx < target) {
        ++result.rank;
      } else if (dx == target) {
        ++result.ties;
      }
    }
    result.rank += 1;
    result.distance = std::sqrt(std::max(0.0, target));
    result.universe_size = candidates.size();
    return result;
  }

  result.universe_size = pci.columns() - 1;
  if (*q == *t) {
    result.rank = 1;
    return result;
  }
  RankScratch local;
  RankScratch& s = scratch ? *scratch : local;
  s.dot.resize(pci.columns(), 0.0);
  s.touched.resize(pci.columns(), 0);
  s.touched_list.clear();
  const auto qcol = pci.column(*q);
  for (std::size_t i = 0; i < qcol.rows.size(); ++i) {
    const auto entries = pci.row(qcol.rows[i]);
    const double qv = qcol.values[i];
    for (std::size_t j = 0; j < entries.columns.size(); ++j) {
      const auto c = entries.columns[j];
      if (!s.touched[c]) {
        s.touched[c] = 1;
        s.touched_list.push_back(c);
      }
      s.dot[c] += qv * entries.values[j];
    }
  }
  const double target = nq2 + pci.norm_squared(*t) - 2.0 * s.dot[*t];
  // Columns sharing no row with W sit at nq2 + n2 exactly; count them from
  // the sorted norm cache, then correct for the columns that were touched.
  const auto sorted = pci.sorted_norms_squared();
  auto below = static_cast<std::int64_t>(
      std::partition_point(sorted.begin(), sorted.end(), [&](double x) { return nq2 + x < target; }) - sorted.begin());
  auto at_or_below = static_cast<std::int64_t>(
      std::partition_point(sorted.begin(), sorted.end(), [&](double x) { return nq2 + x <= target; }) -
      sorted.begin());
  std::int64_t equal = at_or_below - below;
  for (auto c : s.touched_list) {
    const double untouched = nq2 + pci.norm_squared(c);
    if (untouched < target) {
      --below;
    } else if (untouched == target) {
      --equal;
    }
    if (c != *q) {
      const double dx = nq2 + pci.norm_squared(c) - 2.0 * s.dot[c];
      if (dx < target) {
        ++below;
      } else if (dx == target) {
        ++equal;
      }
    }
    s.dot[c] = 0.0;
    s.touched[c] = 0;
  }
  s.touched_list.clear();
  result.rank = static_cast<std::uint64_t>(below) + 1;
  result.ties = static_cast<std::uint64_t>(equal - 1);  // W* itself
  result.distance = std::sqrt(std::max(0.0, target));
  return result;
}

std::vector<CategoryRankRow> category_rank_table(std::span<const BatsCategory> categories, const Vocabulary& vocab,
                                                 const PciMatrix& pci, bool restrict_to_w_star_words,
                                                 std::vector<RankDetailRow>* detail, unsigned threads) {
  if (vocab.hash() != pci.provenance().vocab_hash) throw IncompatibleError("PCI matrix built from another vocabulary");
  threads = std::max(1U, threads);
  std::vector<CategoryRankRow> table;
  for (const auto& cat : categories) {
    CategoryRankRow row;
    row.code = cat.code;
    const auto analogies = enumerate_analogies(cat, vocab);
    row.analogies = analogies.size();
    std::vector<const AnalogyInstance*> usable;
    for (const auto& an : analogies) {
      const auto w = an.paraphrase(), ws = an.paraphrase_star();
      if (pci.position_of(w.first, w.second) && pci.position_of(ws.first, ws.second)) usable.push_back(&an);
    }
    std::vector<RankResult> results(usable.size());
    auto work = [&](unsigned shard) {
      RankScratch scratch;
      for (std::size_t i = shard; i < usable.size(); i += threads) {
        results[i] = rank_true_paraphrase(pci, usable[i]->paraphrase(), usable[i]->paraphrase_star(),
                                          restrict_to_w_star_words, &scratch);
      }
    };
    if (threads == 1 || usable.size() < 2) {
      work(0);
      if (threads > 1) {
        for (unsigned s = 1; s < threads; ++s) work(s);
      }
    } else {
      std::vector<std::jthread> pool;
      for (unsigned s = 0; s < threads; ++s) pool.emplace_back(work, s);
    }
    row.ranked = results.size();
    if (!results.empty()) {
      std::vector<double> ranks;
      double sum = 0.0, universe = 0.0;
      for (const auto& r : results) {
        ranks.push_back(static_cast<double>(r.rank));
        sum += static_cast<double>(r.rank);
        universe += static_cast<double>(r.universe_size);
      }
      row.average_rank = sum / static_cast<double>(results.size());
      row.median_rank = median(ranks);
      row.average_universe = universe / static_cast<double>(results.size());
    }
    if (detail) {
      for (std::size_t i = 0; i < usable.size(); ++i) detail->push_back({cat.code, *usable[i], results[i]});
    }
    table.push_back(row);
  }
  return table;
}

std::string thousands_label(double rank) {
  return std::to_string(static_cast<long long>(std::llround(rank / 1000.0))) + "K";
}

void write_rank_table(const std::filesystem::path& path, std::span<const CategoryRankRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#statistic";
  for (const auto& r : rows) out << '\t' << r.code;
  out << '\n' << std::fixed << std::setprecision(1);
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
  line("n_analogies", [](const CategoryRankRow& r) { return r.analogies; }, false);
  line("n_ranked", [](const CategoryRankRow& r) { return r.ranked; }, false);
  line("average_rank", [](const CategoryRankRow& r) { return r.average_rank; }, true);
  line("median_rank", [](const CategoryRankRow& r) { return r.median_rank; }, true);
  line("average_rank_thousands", [](const CategoryRankRow& r) { return thousands_label(r.average_rank); }, true);
  line("median_rank_thousands", [](const CategoryRankRow& r) { return thousands_label(r.median_rank); }, true);
  line("candidate_universe", [](const CategoryRankRow& r) { return r.average_universe; }, true);
  if (!out) throw IoError("write failure on " + path.string());
}

void write_rank_detail(const std::filesystem::path& path, std::span<const RankDetailRow> rows,
                       const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#category\ta\ta_star\tb\tb_star\tdistance\trank\tties\tuniverse\n" << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.category << '\t' << vocab.token(r.analogy.a) << '\t' << vocab.token(r.analogy.a_star) << '\t'
        << vocab.token(r.analogy.b) << '\t' << vocab.token(r.analogy.b_star) << '\t' << r.result.distance << '\t'
        << r.result.rank << '\t' << r.result.ties << '\t' << r.result.universe_size << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

}  // namespace pprobe
