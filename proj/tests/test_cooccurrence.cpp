#include "doctest.h"
#include "pprobe/cooccurrence.hpp"
#include "pprobe/error.hpp"
#include "support/synthetic.hpp"

using namespace pprobe;
using pprobe::testing::TempDir;

namespace {

std::map<std::uint64_t, std::uint64_t> as_map(const SortedCounts& c) {
  std::map<std::uint64_t, std::uint64_t> m;
  for (std::size_t i = 0; i < c.size(); ++i) m[c.keys[i]] = c.counts[i];
  return m;
}

}  // namespace

TEST_SUITE("cooccurrence") {

TEST_CASE("pair index is a bijection onto k(k-1)/2 columns") {
  PairIndex idx(40);
  CHECK(idx.size() == 40 * 39 / 2);
  std::vector<bool> seen(idx.size());
  for (std::uint32_t j = 0; j < 40; ++j) {
    for (std::uint32_t i = 0; i < j; ++i) {
      auto l = idx.index(i, j);
      CHECK(l == idx.index(j, i));
      REQUIRE(l < idx.size());
      CHECK_FALSE(seen[l]);
      seen[l] = true;
      CHECK(idx.slots(l) == std::pair<std::uint32_t, std::uint32_t>{i, j});
    }
  }
  CHECK_THROWS_AS(idx.index(3, 3), ConfigError);
  CHECK_THROWS_AS(idx.index(3, 40), BoundsError);
  CHECK_THROWS(PairUniverse::top_k(kMaxUniverse + 1, kMaxUniverse + 2));
}

TEST_CASE("pair counts on tiny corpora") {
  auto f = pprobe::testing::fixture_from_text("a b c");
  auto p = count_pairs(f.stream, f.vocab, 1);
  const auto a = *f.vocab.find("a"), b = *f.vocab.find("b"), c = *f.vocab.find("c");
  CHECK(p.nnz() == 4);
  CHECK(p.count(a, b) == 1);
  CHECK(p.count(b, a) == 1);
  CHECK(p.count(b, c) == 1);
  CHECK(p.count(c, b) == 1);
  CHECK(p.count(a, c) == 0);

  auto one = pprobe::testing::fixture_from_text("a");
  CHECK(count_pairs(one.stream, one.vocab, 5).nnz() == 0);
}

TEST_CASE("triplet counts on tiny corpora") {
  auto f = pprobe::testing::fixture_from_text("a x b");
  const auto a = *f.vocab.find("a"), b = *f.vocab.find("b"), x = *f.vocab.find("x");
  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(3, 3), 1);
  CHECK(t.count(a, b, x) == 1);
  CHECK(t.count(b, a, x) == 1);
  CHECK(t.total_triplets() == 1);
  CHECK(t.center_marginals()[x] == 1);
  CHECK(t.total_centers() == 3);

  auto g = pprobe::testing::fixture_from_text("a b");
  CHECK(count_triplets(g.stream, g.vocab, PairUniverse::top_k(2, 2), 1).total_triplets() == 0);
}

TEST_CASE("counts equal brute-force enumeration") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    for (std::uint32_t radius : {1U, 2U, 5U}) {
      auto f = pprobe::testing::random_fixture(500, 20, seed);
      const auto& ids = f.stream.ids;
      auto pairs = count_pairs(f.stream, f.vocab, radius);
      CHECK(as_map(pairs.entries()) == pprobe::testing::brute_pairs(ids, radius));

      // closed-form total: every position sees min(t, r) + min(n-1-t, r) neighbours
      std::uint64_t expect = 0;
      const std::uint64_t n = ids.size();
      for (std::uint64_t t = 0; t < n; ++t) expect += std::min<std::uint64_t>(t, radius) + std::min(n - 1 - t, std::uint64_t{radius});
      CHECK(pairs.total() == expect);

      // universe smaller than the vocabulary, so centres range wider than pairs
      auto universe = PairUniverse::top_k(12, f.vocab.size());
      auto trip = count_triplets(f.stream, f.vocab, universe, radius);
      auto brute = pprobe::testing::brute_triplets(ids, universe, f.vocab.size(), radius);
      CHECK(as_map(trip.entries()) == brute.counts);
      CHECK(std::vector<std::uint64_t>(trip.center_marginals().begin(), trip.center_marginals().end()) ==
            brute.centers);
    }
  }
}

TEST_CASE("marginals are consistent") {
  auto f = pprobe::testing::random_fixture(800, 15, 21);
  auto p = count_pairs(f.stream, f.vocab, 3);
  std::uint64_t sum = 0;
  for (WordId w = 0; w < f.vocab.size(); ++w) {
    std::uint64_t row = 0;
    for (WordId c = 0; c < f.vocab.size(); ++c) row += p.count(w, c);
    CHECK(row == p.row_marginals()[w]);
    sum += row;
  }
  CHECK(sum == p.total());

  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(15, 15), 3);
  for (std::size_t pos = 0; pos < t.nonempty_columns(); ++pos) {
    auto col = t.column_at(pos);
    std::uint64_t s = 0;
    for (auto c : col.counts) s += c;
    CHECK(s == col.total);
    auto [i, j] = t.pair_index().slots(t.pair_id_at(pos));
    CHECK(t.pair_total(t.universe().member(i), t.universe().member(j)) == s);
  }
}

TEST_CASE("shard count does not change counts") {
  auto f = pprobe::testing::random_fixture(20000, 60, 4);
  auto universe = PairUniverse::top_k(30, f.vocab.size());
  CountingOptions opts;
  opts.shards = 1;
  auto p1 = count_pairs(f.stream, f.vocab, 5, opts);
  auto t1 = count_triplets(f.stream, f.vocab, universe, 5, opts);
  for (unsigned s : {2U, 8U}) {
    opts.shards = s;
    CHECK(count_pairs(f.stream, f.vocab, 5, opts).entries() == p1.entries());
    CHECK(count_triplets(f.stream, f.vocab, universe, 5, opts).entries() == t1.entries());
  }
}

TEST_CASE("spilling under a tiny memory budget gives the same counts") {
  TempDir dir;
  auto f = pprobe::testing::random_fixture(20000, 60, 8);
  auto universe = PairUniverse::top_k(40, f.vocab.size());
  auto ref = count_triplets(f.stream, f.vocab, universe, 5);
  CountingOptions opts;
  opts.shards = 2;
  opts.memory_budget_bytes = 64 << 10;
  opts.spill_dir = dir.path();
  CHECK(count_triplets(f.stream, f.vocab, universe, 5, opts).entries() == ref.entries());
  CHECK(count_pairs(f.stream, f.vocab, 5, opts).entries() == count_pairs(f.stream, f.vocab, 5).entries());

  CountAccumulator acc(64 << 10, dir.path());
  std::mt19937_64 rng(1);
  std::map<std::uint64_t, std::uint64_t> brute;
  for (int i = 0; i < 200000; ++i) {
    auto k = rng() % 5000;
    acc.add(k);
    ++brute[k];
  }
  CHECK(acc.spilled_runs() > 0);
  CHECK(as_map(acc.finish()) == brute);
}

TEST_CASE("merge") {
  auto f = pprobe::testing::random_fixture(2000, 25, 2);
  auto universe = PairUniverse::top_k(25, 25);
  auto p = count_pairs(f.stream, f.vocab, 2);
  auto t = count_triplets(f.stream, f.vocab, universe, 2);
  TokenStream empty;
  auto pe = count_pairs(empty, f.vocab, 2);
  CHECK(merge(p, pe).entries() == p.entries());
  auto doubled = merge(p, p);
  for (std::size_t i = 0; i < p.nnz(); ++i) CHECK(doubled.entries().counts[i] == 2 * p.entries().counts[i]);
  CHECK(doubled.total() == 2 * p.total());
  auto td = merge(t, t);
  CHECK(td.total_triplets() == 2 * t.total_triplets());

  // halves of the corpus merged = whole corpus, minus the windows crossing the cut
  TokenStream first, second;
  const auto half = f.stream.ids.size() / 2;
  first.ids.assign(f.stream.ids.begin(), f.stream.ids.begin() + half);
  second.ids.assign(f.stream.ids.begin() + half, f.stream.ids.end());
  auto m = merge(count_pairs(first, f.vocab, 2), count_pairs(second, f.vocab, 2));
  std::uint64_t crossing = 0;
  for (std::size_t i = half - 2; i < half + 2; ++i)
    for (std::size_t j = half - 2; j < half + 2; ++j)
      if (i != j && (i < half) != (j < half) && (i > j ? i - j : j - i) <= 2) ++crossing;
  CHECK(m.total() + crossing == p.total());

  auto other = pprobe::testing::random_fixture(2000, 26, 3);
  CHECK_THROWS_AS(merge(p, count_pairs(other.stream, other.vocab, 2)), IncompatibleError);
  CHECK_THROWS_AS(merge(p, count_pairs(f.stream, f.vocab, 3)), IncompatibleError);
}

TEST_CASE("binary round-trip is bit-exact") {
  TempDir dir;
  auto f = pprobe::testing::random_fixture(3000, 30, 6);
  auto p = count_pairs(f.stream, f.vocab, 5);
  p.save(dir / "p.bin");
  auto pb = PairCounts::load(dir / "p.bin");
  CHECK(pb.entries() == p.entries());
  CHECK(pb.provenance() == p.provenance());
  pb.save(dir / "p2.bin");
  CHECK(pprobe::testing::read_text(dir / "p.bin") == pprobe::testing::read_text(dir / "p2.bin"));

  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(20, 30), 5);
  t.save(dir / "t.bin");
  auto tb = TripletCounts::load(dir / "t.bin");
  CHECK(tb.entries() == t.entries());
  CHECK(tb.provenance() == t.provenance());
  CHECK(tb.total_centers() == t.total_centers());
  tb.save(dir / "t2.bin");
  CHECK(pprobe::testing::read_text(dir / "t.bin") == pprobe::testing::read_text(dir / "t2.bin"));
  CHECK(pprobe::testing::read_text(dir / "t.bin.marg") == pprobe::testing::read_text(dir / "t2.bin.marg"));

  auto bytes = pprobe::testing::read_text(dir / "t.bin");
  pprobe::testing::write_text(dir / "cut.bin", bytes.substr(0, bytes.size() - 3));
  std::filesystem::copy_file(dir / "t.bin.marg", dir / "cut.bin.marg");
  CHECK_THROWS_AS(TripletCounts::load(dir / "cut.bin"), ParseError);
}

TEST_CASE("well-defined fraction") {
  auto f = pprobe::testing::fixture_from_text("a b c a b c d e d e");
  auto t = count_triplets(f.stream, f.vocab, PairUniverse::top_k(f.vocab.size(), f.vocab.size()), 1);
  const auto a = *f.vocab.find("a"), c = *f.vocab.find("c"), d = *f.vocab.find("d"), e = *f.vocab.find("e");
  std::vector<std::pair<WordId, WordId>> present = {{a, c}}, absent = {{a, e}}, both = {{a, c}, {d, e}, {a, e}, {c, d}};
  CHECK(well_defined_fraction(t, present) == 1.0);
  CHECK(well_defined_fraction(t, absent) == 0.0);
  // {a,c} flank b; {c,d}? no centre has both; {d,e} flank nothing at radius 1 except e d e / d e d
  double expect = 0;
  for (auto [x, y] : both) expect += t.pair_total(x, y) > 0;
  CHECK(well_defined_fraction(t, both) == doctest::Approx(expect / 4));
  std::vector<std::pair<WordId, WordId>> none;
  CHECK_THROWS_AS(well_defined_fraction(t, none), UndefinedError);

  // the two most frequent words co-occur in a window of any random corpus this dense
  auto r = pprobe::testing::random_fixture(2000, 10, 1);
  auto tr = count_triplets(r.stream, r.vocab, PairUniverse::top_k(10, 10), 5);
  std::vector<std::pair<WordId, WordId>> top = {{0, 1}};
  CHECK(well_defined_fraction(tr, top) == 1.0);
}

}  // TEST_SUITE
