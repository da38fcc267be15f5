#include <sstream>
#include <unordered_map>

#include "doctest.h"
#include "pprobe/corpus.hpp"
#include "pprobe/error.hpp"
#include "support/synthetic.hpp"

using namespace pprobe;
using pprobe::testing::TempDir;

TEST_SUITE("corpus") {

TEST_CASE("whitespace tokenization") {
  auto t = tokenize(std::string_view("the cat sat"));
  REQUIRE(t.size() == 3);
  CHECK(t[0] == "the");
  CHECK(t[2] == "sat");
  CHECK(tokenize(std::string_view("")).empty());
  CHECK(tokenize(std::string_view(" \t\n  ")).empty());
  CHECK(tokenize(std::string_view("  a\t\tb\r\nc ")).size() == 3);

  std::istringstream in("x  y\nz");
  auto s = tokenize(in);
  CHECK(s == std::vector<std::string>{"x", "y", "z"});
}

TEST_CASE("token count matches a naive counter") {
  auto f = pprobe::testing::random_fixture(5000, 37, 3);
  std::size_t naive = 0;
  bool in_word = false;
  for (unsigned char ch : f.text) {
    const bool space = ch == ' ' || ch == '\n' || ch == '\t';
    if (!space && !in_word) ++naive;
    in_word = !space;
  }
  CHECK(tokenize(std::string_view(f.text)).size() == naive);
  CHECK(f.vocab.total_tokens() == naive);
}

TEST_CASE("vocabulary thresholds and orders") {
  std::vector<std::string> toks = {"a", "a", "b"};
  auto v = Vocabulary::build(std::span<const std::string>(toks), 2);
  REQUIRE(v.size() == 1);
  CHECK(v.token(0) == "a");
  CHECK(v.count(0) == 2);
  CHECK(v.total_tokens() == 3);
  CHECK_FALSE(v.contains("b"));

  std::vector<std::string> ties = {"d", "c", "b", "b", "c", "a"};
  auto w = Vocabulary::build(std::span<const std::string>(ties), 1);
  CHECK(w.token(0) == "b");  // ties on count 2 broken lexicographically
  CHECK(w.token(1) == "c");
  CHECK(w.token(2) == "a");
  CHECK(w.token(3) == "d");

  std::vector<std::string> none;
  CHECK_THROWS_AS(Vocabulary::build(std::span<const std::string>(none), 1), UndefinedError);
  CHECK_THROWS_AS(Vocabulary::build(std::span<const std::string>(toks), 0), ConfigError);
}

TEST_CASE("vocabulary counts match a hash-map tally") {
  auto f = pprobe::testing::random_fixture(1000, 50, 11);
  std::unordered_map<std::string, std::uint64_t> tally;
  for (auto t : tokenize(std::string_view(f.text))) ++tally[std::string(t)];
  CHECK(f.vocab.size() == tally.size());
  std::uint64_t sum = 0;
  for (WordId id = 0; id < f.vocab.size(); ++id) {
    CHECK(f.vocab.count(id) == tally.at(f.vocab.token(id)));
    if (id > 0) CHECK(f.vocab.count(id) <= f.vocab.count(id - 1));
    sum += f.vocab.count(id);
  }
  CHECK(sum == f.vocab.total_tokens());  // min_count 1 keeps every token
}

TEST_CASE("sharded tally equals single-threaded tally") {
  auto f = pprobe::testing::random_fixture(20000, 300, 5);
  auto one = Vocabulary::build(tally_tokens(f.text, 1), 3);
  for (unsigned s : {2U, 3U, 8U}) {
    auto many = Vocabulary::build(tally_tokens(f.text, s), 3);
    CHECK(many == one);
  }
}

TEST_CASE("top_k") {
  auto f = pprobe::testing::random_fixture(500, 20, 1);
  CHECK(f.vocab.top_k(1) == std::vector<WordId>{0});
  CHECK(f.vocab.top_k(f.vocab.size()).size() == f.vocab.size());
  auto small = f.vocab.top_k(5), big = f.vocab.top_k(12);
  CHECK(std::includes(big.begin(), big.end(), small.begin(), small.end()));
  CHECK_THROWS_AS(f.vocab.top_k(f.vocab.size() + 1), BoundsError);
}

TEST_CASE("encode drops out-of-vocabulary tokens") {
  std::string text = "a b a c a b z";
  auto v = Vocabulary::build(tally_tokens(text), 2);
  auto s = encode(text, v);
  CHECK(s.source_length == 7);
  CHECK(s.ids == std::vector<WordId>{0, 1, 0, 0, 1});
  CHECK(encode(text, v).ids == s.ids);
}

TEST_CASE("vocabulary and token stream round-trip") {
  TempDir dir;
  auto f = pprobe::testing::random_fixture(3000, 40, 9);
  f.vocab.save(dir / "v.tsv");
  auto back = Vocabulary::load(dir / "v.tsv");
  CHECK(back == f.vocab);
  CHECK(back.hash() == f.vocab.hash());
  save_tokens(f.stream, f.vocab.hash(), dir / "t.bin");
  auto s = load_tokens(dir / "t.bin", f.vocab.hash());
  CHECK(s.ids == f.stream.ids);
  CHECK(s.source_length == f.stream.source_length);
  CHECK_THROWS_AS(load_tokens(dir / "t.bin", f.vocab.hash() + 1), IncompatibleError);
}

TEST_CASE("corpus prefix stops on a token boundary") {
  TempDir dir;
  pprobe::testing::write_text(dir / "c.txt", "alpha beta gamma delta");
  CHECK(read_corpus(dir / "c.txt", 8) == "alpha ");
  CHECK(read_corpus(dir / "c.txt", 11) == "alpha beta ");
  CHECK(read_corpus(dir / "c.txt") == "alpha beta gamma delta");
  CHECK_THROWS_AS(read_corpus(dir / "missing.txt"), IoError);
}

}  // TEST_SUITE
