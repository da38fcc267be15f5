#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "pprobe/error.hpp"
#include "pprobe/pipeline.hpp"
#include "support/synthetic.hpp"

using namespace pprobe;
using pprobe::testing::TempDir;
using pprobe::testing::read_text;
using pprobe::testing::write_text;
namespace fs = std::filesystem;

namespace {

struct Workspace {
  TempDir dir;
  PipelineConfig config;

  explicit Workspace(std::size_t tokens = 30'000) {
    pprobe::testing::WorldOptions o;
    o.tokens = tokens;
    auto world = pprobe::testing::make_world(o);
    write_text(dir / "corpus.txt", world.corpus);
    world.write_bats(dir / "bats");
    config.set("corpus", (dir / "corpus.txt").string());
    config.set("bats", (dir / "bats").string());
    config.set("output_dir", (dir / "out").string());
    config.set("min_count", "2");
    config.set("pair_universe_top_k", "200");
    config.set("dimension", "16");
    config.set("epochs", "1");
    config.set("linearity_top_k", "100");
    config.set("threads", "1");
  }
  PipelineConfig ready() const {
    auto c = config;
    c.finalize();
    return c;
  }
};

int run_cli(const std::string& args) {
  const int status = std::system((std::string(PPROBE_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("config file and overrides") {
  TempDir dir;
  write_text(dir / "run.conf", "# comment\nwindow_radius = 3\n\nmin-count=7\nepsilon = 1e-12\n");
  PipelineConfig c;
  c.load_file(dir / "run.conf");
  c.set("window-radius", "4");
  c.finalize();
  CHECK(c.window_radius == 4);
  CHECK(c.min_count == 7);
  CHECK(c.epsilon == doctest::Approx(1e-12));
  CHECK(c.sgns.dimension == 500);
  CHECK(c.sgns.negative_samples == 1);

  write_text(dir / "bad.conf", "window_radius = 3\nwindow_radios = 4\n");
  PipelineConfig b;
  try {
    b.load_file(dir / "bad.conf");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.conf:2") != std::string::npos);
  }
  CHECK_THROWS_AS(b.set("nonsense", "1"), ConfigError);
  PipelineConfig r;
  r.set("window_radius", "0");
  CHECK_THROWS_AS(r.finalize(), ConfigError);
  PipelineConfig t;
  t.set("positive_values_only", "maybe");
  CHECK_THROWS_AS(t.finalize(), ConfigError);
}

TEST_CASE("presets") {
  PipelineConfig c;
  c.set("mini", "true");
  c.set("deterministic", "true");
  c.set("threads", "8");
  c.finalize();
  CHECK(c.threads == 1);
  CHECK(c.max_corpus_bytes == 10'000'000);
  CHECK(c.pair_universe_top_k == 2000);
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  ArtifactManifest m;
  m.stages["ingest"] = {0xdeadbeefcafef00dULL, "2026-01-01T00:00:00Z", {{"vocab.tsv", 1}, {"tokens.bin", ~0ULL}}};
  m.stages["count-pairs"] = {7, "2026-01-01T00:00:01Z", {}};
  m.save(dir / "manifest.json");
  CHECK(ArtifactManifest::load(dir / "manifest.json") == m);
  CHECK(ArtifactManifest::load(dir / "nothing.json").stages.empty());
  write_text(dir / "broken.json", "{ not json");
  CHECK_THROWS_AS(ArtifactManifest::load(dir / "broken.json"), ParseError);
}

TEST_CASE("caching and invalidation") {
  Workspace ws;
  auto c = ws.ready();
  CHECK_THROWS_AS(run_stage("count-triplets", c), DependencyError);
  try {
    run_stage("count-triplets", c);
  } catch (const DependencyError& e) {
    CHECK(std::string(e.what()).find("ingest") != std::string::npos);
  }
  CHECK_FALSE(run_stage("ingest", c)[0].cached);
  auto first = run_stage("count-triplets", c);
  CHECK_FALSE(first[0].cached);
  auto again = run_stage("count-triplets", c);
  CHECK(again[0].cached);
  CHECK(again[0].record == first[0].record);
  CHECK(run_stage("ingest", c)[0].cached);

  auto changed = ws.config;
  changed.set("window_radius", "3");
  changed.finalize();
  CHECK_FALSE(run_stage("count-triplets", changed)[0].cached);
  CHECK(run_stage("count-triplets", c)[0].cached == false);

  // a tampered artifact forces a rerun
  write_text(ws.dir / "out" / "triplets.bin", "garbage");
  CHECK_FALSE(run_stage("count-triplets", c)[0].cached);

  // a changed upstream makes downstream stale
  auto mc = ws.config;
  mc.set("min_count", "3");
  mc.finalize();
  CHECK_FALSE(run_stage("ingest", mc)[0].cached);
  CHECK_THROWS_AS(run_stage("count-triplets", c), DependencyError);
  CHECK_FALSE(run_stage("count-triplets", mc)[0].cached);

  CHECK_THROWS_AS(run_stage("no-such-stage", c), ConfigError);
}

TEST_CASE("empty BATS directory") {
  Workspace ws;
  fs::create_directories(ws.dir / "emptybats");
  auto cfg = ws.config;
  cfg.set("bats", (ws.dir / "emptybats").string());
  auto c = cfg;
  c.finalize();
  run_stage("ingest", c);
  run_stage("count-triplets", c);
  CHECK_THROWS_AS(run_stage("pci-rank", c), ConfigError);
}

TEST_CASE("full run produces the report") {
  Workspace ws;
  auto c = ws.ready();
  auto outcomes = run_stage("all", c);
  CHECK(outcomes.size() == stage_names().size());
  for (const auto& o : outcomes) CHECK_FALSE(o.cached);
  for (const char* f : {"table1.tsv", "table2.tsv", "fig1_histogram.tsv", "analogy.tsv", "summary.tsv"}) {
    CHECK(fs::exists(ws.dir / "out" / "report" / f));
  }
  const auto t1 = read_text(ws.dir / "out" / "report" / "table1.tsv");
  CHECK(t1.find("I01") != std::string::npos);
  const auto summary = read_text(ws.dir / "out" / "report" / "summary.tsv");
  CHECK(summary.find("pearson") != std::string::npos);
  for (const auto& o : run_stage("all", c)) CHECK(o.cached);
}

TEST_CASE("command line exit codes") {
  Workspace ws;
  const auto out = (ws.dir / "cli").string();
  const auto corpus = (ws.dir / "corpus.txt").string();
  CHECK(run_cli("ingest --corpus " + corpus + " --output-dir " + out + " --min-count 2") == 0);
  CHECK(run_cli("ingest --corpus " + corpus + " --output_dir " + out + " --min_count 2") == 0);
  CHECK(run_cli("ingest --corpus " + corpus + " --output-dir " + out + " --window-radius 0") == 2);
  CHECK(run_cli("ingest --bogus-flag 1") == 2);
  CHECK(run_cli("ingest --corpus /nonexistent/file --output-dir " + out) == 2);
  CHECK(run_cli("build-pmi --corpus " + corpus + " --output-dir " + out + " --min-count 2") == 3);
  write_text(ws.dir / "c.conf", "corpus = " + corpus + "\noutput_dir = " + out + "\nmin_count = 2\n");
  CHECK(run_cli("count-pairs --config " + (ws.dir / "c.conf").string()) == 0);
  CHECK(run_cli("count-pairs --config " + (ws.dir / "c.conf").string() + " --output " + (ws.dir / "x.tsv").string()) == 2);
}

}  // TEST_SUITE
