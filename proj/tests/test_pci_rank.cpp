#include <numeric>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "pprobe/cooccurrence.hpp"
#include "pprobe/error.hpp"
#include "pprobe/pci_rank.hpp"
#include "support/synthetic.hpp"

using namespace pprobe;
using pprobe::testing::TempDir;

namespace {

Eigen::VectorXd dense_column(const PciMatrix& pci, std::size_t pos) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(pci.rows()));
  auto col = pci.column(pos);
  for (std::size_t i = 0; i < col.rows.size(); ++i) v[col.rows[i]] = col.values[i];
  return v;
}

// Exhaustive ranking over dense columns.
std::pair<std::uint64_t, std::uint64_t> brute_rank(const PciMatrix& pci, std::size_t q, std::size_t t,
                                                   const std::vector<std::size_t>& candidates) {
  const auto dq = dense_column(pci, q);
  auto dist2 = [&](std::size_t x) {
    return pci.norm_squared(q) + pci.norm_squared(x) - 2.0 * dq.dot(dense_column(pci, x));
  };
  const double target = dist2(t);
  std::uint64_t closer = 0, ties = 0;
  for (auto x : candidates) {
    if (x == q || x == t) continue;
    const double d = dist2(x);
    if (d < target) ++closer;
    else if (d == target) ++ties;
  }
  return {closer + 1, ties};
}

struct Fixture {
  pprobe::testing::TokenFixture f;
  TripletCounts triplets;
  PciMatrix pci;
};

Fixture make(std::size_t tokens, std::size_t vocab, std::size_t universe, std::uint64_t seed, std::uint32_t radius = 2) {
  auto f = pprobe::testing::random_fixture(tokens, vocab, seed);
  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(universe, f.vocab.size()), radius);
  auto pci = PciMatrix::build(t);
  return {std::move(f), std::move(t), std::move(pci)};
}

}  // namespace

TEST_SUITE("pci_rank") {

TEST_CASE("entries equal the brute-force log ratio") {
  auto fx = make(1000, 15, 15, 3);
  const auto& pci = fx.pci;
  auto brute = pprobe::testing::brute_triplets(fx.f.stream.ids, fx.triplets.universe(), 15, 2);
  std::size_t stored = 0;
  for (auto [key, n] : brute.counts) {
    auto pos = pci.position(key_high(key));
    REQUIRE(pos);
    auto col = pci.column(*pos);
    auto it = std::lower_bound(col.rows.begin(), col.rows.end(), key_low(key));
    REQUIRE(it != col.rows.end());
    const double expect = std::log(static_cast<double>(n) / static_cast<double>(brute.centers[key_low(key)]));
    CHECK(col.values[static_cast<std::size_t>(it - col.rows.begin())] == doctest::Approx(expect).epsilon(1e-14));
    ++stored;
  }
  CHECK(stored == pci.nnz());
  for (std::size_t p = 0; p < pci.columns(); ++p) {
    auto col = pci.column(p);
    double s = 0;
    for (auto v : col.values) {
      s += v * v;
      CHECK(v <= 0.0);
    }
    CHECK(std::abs(s - pci.norm_squared(p)) < 1e-9);
  }
  auto sorted = pci.sorted_norms_squared();
  CHECK(std::is_sorted(sorted.begin(), sorted.end()));
}

TEST_CASE("probability one is stored as log 1 under positive support") {
  // x is the only centre ever flanked by a and b, and each x sees them
  auto f = pprobe::testing::fixture_from_text("a x b a x b");
  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(3, 3), 1);
  const auto a = *f.vocab.find("a"), b = *f.vocab.find("b"), x = *f.vocab.find("x");
  auto pci = PciMatrix::build(t);
  auto pos = pci.position_of(a, b);
  REQUIRE(pos);
  auto col = pci.column(*pos);
  REQUIRE(col.rows.size() == 1);
  CHECK(col.rows[0] == x);
  CHECK(col.values[0] == 0.0);

  auto literal = PciMatrix::build(t, PciOptions{true});
  CHECK(literal.positive_values_only());
  CHECK(literal.nnz() == 0);  // p(W|w_k) <= 1, nothing is strictly positive
  CHECK(literal.columns() == 0);
}

TEST_CASE("column distance") {
  auto fx = make(3000, 30, 20, 4);
  const auto& pci = fx.pci;
  REQUIRE(pci.columns() > 20);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> pick(0, pci.columns() - 1);
  for (int i = 0; i < 100; ++i) {
    const auto x = pick(rng), y = pick(rng), z = pick(rng);
    const double dxy = column_distance(pci, x, y);
    CHECK(dxy == doctest::Approx((dense_column(pci, x) - dense_column(pci, y)).norm()).epsilon(1e-9));
    CHECK(std::abs(dxy - column_distance(pci, y, x)) <= 1e-12);
    CHECK(column_distance(pci, x, z) <= dxy + column_distance(pci, y, z) + 1e-9);
  }
  CHECK(column_distance(pci, 3, 3) == 0.0);

  // disjoint supports: {a,b} only around x, {c,d} only around y
  auto g = pprobe::testing::fixture_from_text("a x b x c y d y");
  auto small = PciMatrix::build(count_triplets(g.stream, g.vocab, PairUniverse::top_k(6, 6), 1));
  CHECK(small.norm_squared(*small.position_of(*g.vocab.find("a"), *g.vocab.find("b"))) > 0.0);
  const auto ab = *small.position_of(*g.vocab.find("a"), *g.vocab.find("b"));
  const auto cd = *small.position_of(*g.vocab.find("c"), *g.vocab.find("d"));
  CHECK(column_distance(small, ab, cd) ==
        doctest::Approx(std::sqrt(small.norm_squared(ab) + small.norm_squared(cd))).epsilon(1e-12));
}

TEST_CASE("rank of W against itself is 1") {
  auto fx = make(2000, 20, 20, 5);
  auto [i, j] = fx.pci.pair_index().slots(fx.pci.pair_id(0));
  WordPair w{fx.pci.universe().member(i), fx.pci.universe().member(j)};
  auto r = rank_true_paraphrase(fx.pci, w, w);
  CHECK(r.rank == 1);
  CHECK(r.distance == 0.0);
  CHECK(r.universe_size == fx.pci.columns() - 1);
}

TEST_CASE("ranks equal an exhaustive dense sort") {
  // a wide universe so the scan runs over ~10^4 columns
  auto fx = make(40000, 200, 150, 6, 3);
  const auto& pci = fx.pci;
  MESSAGE("columns: " << pci.columns());
  CHECK(pci.columns() > 5000);
  std::vector<std::size_t> all(pci.columns());
  std::iota(all.begin(), all.end(), 0);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<std::size_t> pick(0, pci.columns() - 1);
  RankScratch scratch;
  auto pair_at = [&](std::size_t pos) {
    auto [i, j] = pci.pair_index().slots(pci.pair_id(pos));
    return WordPair{pci.universe().member(i), pci.universe().member(j)};
  };
  for (int trial = 0; trial < 12; ++trial) {
    const auto q = pick(rng), t = pick(rng);
    if (q == t) continue;
    auto r = rank_true_paraphrase(pci, pair_at(q), pair_at(t), false, &scratch);
    auto [rank, ties] = brute_rank(pci, q, t, all);
    CHECK(r.rank == rank);
    CHECK(r.ties == ties);
    CHECK(r.rank >= 1);
    CHECK(r.rank <= r.universe_size);
    CHECK(r.distance == doctest::Approx(column_distance(pci, q, t)).epsilon(1e-12));
  }
}

TEST_CASE("restricted ranking only looks at pairs sharing a word with W*") {
  auto fx = make(5000, 30, 30, 7);
  const auto& pci = fx.pci;
  auto pair_at = [&](std::size_t pos) {
    auto [i, j] = pci.pair_index().slots(pci.pair_id(pos));
    return WordPair{pci.universe().member(i), pci.universe().member(j)};
  };
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::size_t> pick(0, pci.columns() - 1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto q = pick(rng), t = pick(rng);
    if (q == t) continue;
    const auto ws = pair_at(t);
    std::vector<std::size_t> cands;
    for (std::size_t x = 0; x < pci.columns(); ++x) {
      auto p = pair_at(x);
      if (x != q && (p.first == ws.first || p.first == ws.second || p.second == ws.first || p.second == ws.second)) {
        cands.push_back(x);
      }
    }
    auto r = rank_true_paraphrase(pci, pair_at(q), ws, true);
    auto [rank, ties] = brute_rank(pci, q, t, cands);
    CHECK(r.rank == rank);
    CHECK(r.ties == ties);
    CHECK(r.universe_size == cands.size());
    CHECK(r.rank <= rank_true_paraphrase(pci, pair_at(q), ws).rank);
  }
}

TEST_CASE("missing columns are an error") {
  auto f = pprobe::testing::fixture_from_text("a x b c y d");
  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(6, 6), 1);
  auto pci = PciMatrix::build(t);
  const auto a = *f.vocab.find("a"), b = *f.vocab.find("b"), d = *f.vocab.find("d");
  CHECK_THROWS_AS(rank_true_paraphrase(pci, {a, d}, {a, b}), UndefinedError);
  CHECK_THROWS_AS(rank_true_paraphrase(pci, {a, b}, {a, d}), UndefinedError);
}

TEST_CASE("PCI round-trip and norm cache") {
  TempDir dir;
  auto fx = make(3000, 25, 20, 8);
  fx.pci.save(dir / "pci.bin");
  auto back = PciMatrix::load(dir / "pci.bin");
  REQUIRE(back.columns() == fx.pci.columns());
  CHECK(back.nnz() == fx.pci.nnz());
  CHECK(back.provenance() == fx.pci.provenance());
  for (std::size_t p = 0; p < back.columns(); ++p) {
    CHECK(back.pair_id(p) == fx.pci.pair_id(p));
    CHECK(back.norm_squared(p) == fx.pci.norm_squared(p));
    CHECK(dense_column(back, p) == dense_column(fx.pci, p));
  }
  back.save(dir / "again.bin");
  CHECK(pprobe::testing::read_text(dir / "pci.bin") == pprobe::testing::read_text(dir / "again.bin"));

  auto norms = pprobe::testing::read_text(dir / "pci.bin.norms");
  norms[norms.size() - 2] ^= 0x40;
  pprobe::testing::write_text(dir / "pci.bin.norms", norms);
  CHECK_THROWS_AS(PciMatrix::load(dir / "pci.bin"), ParseError);
}

TEST_CASE("category rank table") {
  TempDir dir;
  auto world = pprobe::testing::make_world({.categories = 2, .records = 6, .tokens = 30000});
  world.write_bats(dir / "bats");
  auto f = pprobe::testing::fixture_from_text(world.corpus, 1);
  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(f.vocab.size(), f.vocab.size()), 5);
  auto pci = PciMatrix::build(t);
  auto cats = load_bats(dir / "bats", &f.vocab);
  std::vector<RankDetailRow> d1, d4;
  auto one = category_rank_table(cats, f.vocab, pci, false, &d1, 1);
  auto four = category_rank_table(cats, f.vocab, pci, false, &d4, 4);
  REQUIRE(one.size() == 2);
  CHECK(one[0].analogies == 30);
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].ranked == four[i].ranked);
    CHECK(one[i].average_rank == four[i].average_rank);
    CHECK(one[i].median_rank == four[i].median_rank);
  }
  CHECK(d1.size() == d4.size());
  write_rank_table(dir / "t2.tsv", one);
  write_rank_detail(dir / "rd.tsv", d1, f.vocab);
  CHECK(pprobe::testing::read_text(dir / "t2.tsv").rfind("#statistic\t", 0) == 0);

  CHECK(thousands_label(7762000) == "7762K");
  CHECK(thousands_label(169400) == "169K");
  CHECK(thousands_label(52182600) == "52183K");
}

}  // TEST_SUITE
