#include "pprobe/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "pprobe/analogy_bats.hpp"
#include "pprobe/binary_io.hpp"
#include "pprobe/cooccurrence.hpp"
#include "pprobe/corpus.hpp"
#include "pprobe/error.hpp"
#include "pprobe/pci_rank.hpp"
#include "pprobe/pmi_linearity.hpp"

namespace fs = std::filesystem;

namespace pprobe {

namespace {

constexpr PipelineConfig::Key kKeys[] = {
    {"corpus", "", "plain-text corpus file"},
    {"bats", "", "BATS directory"},
    {"output_dir", "pprobe-out", "artifact and report directory"},
    {"window_radius", "5", "symmetric context window radius"},
    {"min_count", "5", "vocabulary frequency threshold"},
    {"pair_universe_top_k", "10000", "most frequent words allowed in paraphrase pairs"},
    {"memory_budget_mb", "1024", "counting memory budget before spilling"},
    {"max_corpus_bytes", "0", "read at most this many corpus bytes (0 = all)"},
    {"dimension", "500", "embedding dimension"},
    {"negative_samples", "1", "negative samples per positive pair"},
    {"noise_exponent", "1", "unigram noise exponent"},
    {"epochs", "5", "training epochs"},
    {"learning_rate", "0.025", "initial learning rate"},
    {"min_learning_rate_fraction", "0.0001", "floor of the linear decay, relative"},
    {"subsample_threshold", "0", "frequent-word subsampling threshold (0 = off)"},
    {"seed", "1", "random seed"},
    {"threads", "0", "worker threads (0 = hardware concurrency)"},
    {"linearity_top_k", "10000", "words probed for PMI linearity"},
    {"epsilon", "1e-15", "log-ratio clipping constant"},
    {"positive_values_only", "false", "keep only log-probabilities > 0 in the PCI matrix"},
    {"restrict_to_wstar_words", "false", "rank only against pairs sharing a word with W*"},
    {"deterministic", "false", "single-threaded, reproducible run"},
    {"mini", "false", "first 10 MB of the corpus and a top-2000 universe"},
};

constexpr std::uint64_t kMiniBytes = 10'000'000;
constexpr std::size_t kMiniUniverse = 2000;

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value for " + std::string(key) + ": '" + std::string(text) + "'");
  }
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean for " + std::string(key) + ": '" + std::string(text) + "'");
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(10) << v;
  return s.str();
}

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::uint64_t parse_hex(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError("bad hash in manifest: " + s);
  return v;
}

void log(std::string_view stage, std::string_view message) {
  std::cerr << "[" << stage << "] " << message << '\n';
}

// --- stage graph ---------------------------------------------------------

struct StageSpec {
  std::string_view name;
  std::vector<std::string_view> upstream;
  std::vector<std::string_view> keys;  // config keys the output depends on
  bool needs_bats = false;
};

const std::vector<StageSpec>& stage_specs() {
  static const std::vector<StageSpec> specs = {
      {"ingest", {}, {"min_count", "max_corpus_bytes"}},
      {"count-pairs", {"ingest"}, {"window_radius"}},
      {"count-triplets", {"ingest"}, {"window_radius", "pair_universe_top_k"}},
      {"train-sgns",
       {"ingest"},
       {"dimension", "negative_samples", "noise_exponent", "epochs", "learning_rate", "min_learning_rate_fraction",
        "subsample_threshold", "seed", "window_radius", "threads"}},
      {"build-pmi", {"count-pairs"}, {}},
      {"linearity", {"train-sgns", "build-pmi"}, {"linearity_top_k"}},
      {"errors", {"ingest", "count-pairs", "count-triplets", "build-pmi"}, {"epsilon"}, true},
      {"pci-rank", {"ingest", "count-triplets"}, {"positive_values_only", "restrict_to_wstar_words"}, true},
      {"analogy", {"ingest", "train-sgns"}, {}, true},
      {"report", {"linearity", "errors", "pci-rank", "analogy"}, {}},
  };
  return specs;
}

const StageSpec& find_spec(std::string_view name) {
  for (const auto& s : stage_specs()) {
    if (s.name == name) return s;
  }
  throw ConfigError("unknown stage '" + std::string(name) + "'");
}

class StageContext {
 public:
  StageContext(const PipelineConfig& config, const StageSpec& spec) : config_(config), spec_(spec) {}

  fs::path path(std::string_view name) const { return config_.output_dir / name; }

  void produced(std::string_view name) { outputs_.emplace_back(name); }
  const std::vector<std::string>& outputs() const { return outputs_; }

  const PipelineConfig& config() const { return config_; }
  std::string_view stage() const { return spec_.name; }

 private:
  const PipelineConfig& config_;
  const StageSpec& spec_;
  std::vector<std::string> outputs_;
};

// Content hashes, memoised on (path, size, mtime): freshness checks walk the
// stage graph and would otherwise rehash large artifacts many times.
std::uint64_t content_hash(const fs::path& p) {
  static std::map<std::string, std::uint64_t> memo;
  const auto key = p.string() + '\0' + std::to_string(fs::file_size(p)) + '\0' +
                   std::to_string(fs::last_write_time(p).time_since_epoch().count());
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  return memo[key] = hash_file(p);
}

bool artifacts_intact(const PipelineConfig& config, const StageRecord& record) {
  for (const auto& a : record.artifacts) {
    const auto p = config.output_dir / a.path;
    if (!fs::exists(p) || content_hash(p) != a.hash) return false;
  }
  return true;
}

std::uint64_t bats_fingerprint(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const auto& f : files) {
    h.update(fs::relative(f, dir).generic_string());
    h.update_u64(content_hash(f));
  }
  return h.digest();
}

std::uint64_t config_hash(const PipelineConfig& config, const ArtifactManifest& manifest, const StageSpec& spec) {
  Fnv1a h;
  h.update(spec.name);
  h.update(config.canonical(spec.keys));
  if (spec.name == "ingest" && !config.corpus.empty()) h.update_u64(content_hash(config.corpus));
  if (spec.needs_bats && !config.bats.empty()) h.update_u64(bats_fingerprint(config.bats));
  for (auto up : spec.upstream) {
    const auto& rec = manifest.stages.at(std::string(up));
    h.update_u64(rec.config_hash);
    for (const auto& a : rec.artifacts) h.update_u64(a.hash);
  }
  return h.digest();
}

// A stage is current when its recorded hash matches what the present config
// and upstream records would produce and its files are untouched.
bool current(const PipelineConfig& config, const ArtifactManifest& manifest, const StageSpec& spec) {
  const auto it = manifest.stages.find(std::string(spec.name));
  if (it == manifest.stages.end()) return false;
  for (auto up : spec.upstream) {
    if (!current(config, manifest, find_spec(up))) return false;
  }
  return it->second.config_hash == config_hash(config, manifest, spec) && artifacts_intact(config, it->second);
}

// --- shared loaders --------------------------------------------------------

Vocabulary load_vocab(const StageContext& ctx) { return Vocabulary::load(ctx.path("vocab.tsv")); }

std::vector<BatsCategory> load_categories(const StageContext& ctx, const Vocabulary& vocab) {
  auto cats = load_bats(ctx.config().bats, &vocab);
  if (cats.empty()) {
    throw ConfigError("BATS directory " + ctx.config().bats.string() + " holds no category files; nothing to report");
  }
  return cats;
}

EmbeddingPair load_embeddings(const StageContext& ctx, const Vocabulary& vocab) {
  EmbeddingPair emb;
  emb.words = load_embedding_text(ctx.path("W.txt"), vocab);
  emb.contexts = load_embedding_text(ctx.path("C.txt"), vocab);
  emb.config = ctx.config().sgns;
  return emb;
}

CountingOptions counting_options(const PipelineConfig& c) {
  CountingOptions o;
  o.shards = c.threads;
  o.memory_budget_bytes = c.memory_budget_mb << 20;
  o.spill_dir = c.output_dir / "spill";
  return o;
}

void write_statistics(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "#statistic\tvalue\n";
  for (const auto& [k, v] : rows) out << k << '\t' << v << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<std::pair<std::string, std::string>> read_statistics(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::string, std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ": malformed statistics line");
    rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return rows;
}

void copy_over(const fs::path& from, const fs::path& to) {
  fs::copy_file(from, to, fs::copy_options::overwrite_existing);
}

// --- stages ------------------------------------------------------------------

void do_ingest(StageContext& ctx) {
  const auto& c = ctx.config();
  std::optional<std::uint64_t> limit;
  if (c.max_corpus_bytes > 0) limit = c.max_corpus_bytes;
  const std::string bytes = read_corpus(c.corpus, limit);
  log(ctx.stage(), "read " + std::to_string(bytes.size()) + " bytes");
  const auto tally = tally_tokens(bytes, c.threads);
  const auto vocab = Vocabulary::build(tally, c.min_count);
  const auto tokens = encode(bytes, vocab);
  log(ctx.stage(), std::to_string(tally.total_tokens) + " tokens, |V| = " + std::to_string(vocab.size()));
  vocab.save(ctx.path("vocab.tsv"));
  save_tokens(tokens, vocab.hash(), ctx.path("tokens.bin"));
  ctx.produced("vocab.tsv");
  ctx.produced("tokens.bin");
}

void do_count_pairs(StageContext& ctx) {
  const auto vocab = load_vocab(ctx);
  const auto tokens = load_tokens(ctx.path("tokens.bin"), vocab.hash());
  const auto pairs = count_pairs(tokens, vocab, ctx.config().window_radius, counting_options(ctx.config()));
  log(ctx.stage(), std::to_string(pairs.nnz()) + " distinct pairs");
  pairs.save(ctx.path("pairs.bin"));
  ctx.produced("pairs.bin");
  ctx.produced("pairs.bin.marg");
}

void do_count_triplets(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto vocab = load_vocab(ctx);
  const auto tokens = load_tokens(ctx.path("tokens.bin"), vocab.hash());
  const auto universe = PairUniverse::top_k(std::min(c.pair_universe_top_k, vocab.size()), vocab.size());
  const auto triplets = count_triplets(tokens, vocab, universe, c.window_radius, counting_options(c));
  log(ctx.stage(), std::to_string(triplets.nnz()) + " distinct triplets over " +
                       std::to_string(triplets.nonempty_columns()) + " pairs");
  triplets.save(ctx.path("triplets.bin"));
  ctx.produced("triplets.bin");
  ctx.produced("triplets.bin.marg");
}

void do_train(StageContext& ctx) {
  const auto vocab = load_vocab(ctx);
  const auto tokens = load_tokens(ctx.path("tokens.bin"), vocab.hash());
  const auto emb = train(tokens, vocab, ctx.config().sgns, [&](std::size_t epoch, const EmbeddingPair&) {
    log(ctx.stage(), "epoch " + std::to_string(epoch + 1) + " done");
  });
  save_embedding_text(emb.words, vocab, ctx.path("W.txt"));
  save_embedding_text(emb.contexts, vocab, ctx.path("C.txt"));
  ctx.produced("W.txt");
  ctx.produced("C.txt");
}

void do_build_pmi(StageContext& ctx) {
  const auto pmi = SparsePmiMatrix::build(PairCounts::load(ctx.path("pairs.bin")));
  pmi.save(ctx.path("pmi.bin"));
  ctx.produced("pmi.bin");
}

void do_linearity(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto vocab = load_vocab(ctx);
  const auto emb = load_embeddings(ctx, vocab);
  const auto pmi = SparsePmiMatrix::load(ctx.path("pmi.bin"));
  const auto ids = vocab.top_k(std::min(c.linearity_top_k, vocab.size()));
  const auto report = correlation_report(emb, pmi, ids, c.threads);
  log(ctx.stage(), "mean r = " + format_double(report.mean) + ", variance = " + format_double(report.variance));
  report.write_tsv(ctx.path("linearity.tsv"), vocab);
  report.write_histogram_tsv(ctx.path("linearity_histogram.tsv"));
  write_statistics(ctx.path("linearity_summary.tsv"), {{"probe_words", std::to_string(report.words.size())},
                                                       {"defined", std::to_string(report.defined)},
                                                       {"mean_pearson_r", format_double(report.mean)},
                                                       {"variance_pearson_r", format_double(report.variance)}});
  ctx.produced("linearity.tsv");
  ctx.produced("linearity_histogram.tsv");
  ctx.produced("linearity_summary.tsv");
}

void do_errors(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto vocab = load_vocab(ctx);
  const auto cats = load_categories(ctx, vocab);
  const auto pairs = PairCounts::load(ctx.path("pairs.bin"));
  const auto triplets = TripletCounts::load(ctx.path("triplets.bin"));
  const auto pmi = SparsePmiMatrix::load(ctx.path("pmi.bin"));
  const DistributionEstimator estimator(triplets, pairs);
  std::vector<AnalogyErrorRow> detail;
  const auto table = category_norm_table(cats, vocab, estimator, pmi, c.epsilon, &detail);
  write_norm_table(ctx.path("table1.tsv"), table);
  write_error_detail(ctx.path("errors_detail.tsv"), detail, vocab);

  // Well-definedness over the distinct paraphrase pairs W and W* of every
  // enumerated analogy; pairs leaving the universe are reported, not scored.
  std::set<WordPair> candidates;
  for (const auto& cat : cats) {
    for (const auto& an : enumerate_analogies(cat, vocab)) {
      candidates.insert(an.paraphrase());
      candidates.insert(an.paraphrase_star());
    }
  }
  std::vector<std::pair<WordId, WordId>> inside;
  for (const auto& p : candidates) {
    if (p.first != p.second && triplets.universe().contains(p.first) && triplets.universe().contains(p.second)) {
      inside.push_back(p);
    }
  }
  std::size_t defined = 0;
  for (const auto& [a, b] : inside) defined += triplets.pair_total(a, b) > 0 ? 1 : 0;
  const std::string fraction = inside.empty() ? "NA" : format_double(well_defined_fraction(triplets, inside));
  log(ctx.stage(), "well-defined fraction " + fraction);
  write_statistics(ctx.path("well_defined.tsv"), {{"candidate_pairs", std::to_string(candidates.size())},
                                                  {"outside_universe", std::to_string(candidates.size() - inside.size())},
                                                  {"in_universe", std::to_string(inside.size())},
                                                  {"well_defined", std::to_string(defined)},
                                                  {"well_defined_fraction", fraction}});
  ctx.produced("table1.tsv");
  ctx.produced("errors_detail.tsv");
  ctx.produced("well_defined.tsv");
}

void do_pci_rank(StageContext& ctx) {
  const auto& c = ctx.config();
  const auto vocab = load_vocab(ctx);
  const auto cats = load_categories(ctx, vocab);
  const auto triplets = TripletCounts::load(ctx.path("triplets.bin"));
  const auto pci = PciMatrix::build(triplets, PciOptions{c.positive_values_only});
  log(ctx.stage(), std::to_string(pci.columns()) + " PCI columns, " + std::to_string(pci.nnz()) + " entries");
  pci.save(ctx.path("pci.bin"));
  std::vector<RankDetailRow> detail;
  const auto table = category_rank_table(cats, vocab, pci, c.restrict_to_wstar_words, &detail, c.threads);
  write_rank_table(ctx.path("table2.tsv"), table);
  write_rank_detail(ctx.path("rank_detail.tsv"), detail, vocab);
  for (auto f : {"pci.bin", "pci.bin.norms", "table2.tsv", "rank_detail.tsv"}) ctx.produced(f);
}

void do_analogy(StageContext& ctx) {
  const auto vocab = load_vocab(ctx);
  const auto cats = load_categories(ctx, vocab);
  const AnalogySolver solver(load_embedding_text(ctx.path("W.txt"), vocab));
  std::ofstream out(ctx.path("analogy.tsv"), std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write analogy.tsv");
  out << "#category\tn_analogies\taccuracy\n" << std::setprecision(6) << std::fixed;
  for (const auto& cat : cats) {
    const auto n = enumerate_analogies(cat, vocab).size();
    out << cat.code << '\t' << n << '\t';
    if (n == 0) {
      out << "NA\n";
      continue;
    }
    const auto acc = evaluate_category(solver, cat, vocab);
    out << acc.accuracy << '\n';
  }
  if (!out) throw IoError("write failure on analogy.tsv");
  ctx.produced("analogy.tsv");
}

void do_report(StageContext& ctx) {
  const auto dir = ctx.path("report");
  fs::create_directories(dir);
  copy_over(ctx.path("table1.tsv"), dir / "table1.tsv");
  copy_over(ctx.path("table2.tsv"), dir / "table2.tsv");
  copy_over(ctx.path("linearity_histogram.tsv"), dir / "fig1_histogram.tsv");
  copy_over(ctx.path("analogy.tsv"), dir / "analogy.tsv");
  auto summary = read_statistics(ctx.path("well_defined.tsv"));
  for (auto& row : read_statistics(ctx.path("linearity_summary.tsv"))) summary.push_back(std::move(row));
  write_statistics(dir / "summary.tsv", summary);
  for (auto f : {"table1.tsv", "table2.tsv", "fig1_histogram.tsv", "analogy.tsv", "summary.tsv"}) {
    ctx.produced(std::string("report/") + f);
  }
}

void dispatch(StageContext& ctx) {
  const auto n = ctx.stage();
  if (n == "ingest") return do_ingest(ctx);
  if (n == "count-pairs") return do_count_pairs(ctx);
  if (n == "count-triplets") return do_count_triplets(ctx);
  if (n == "train-sgns") return do_train(ctx);
  if (n == "build-pmi") return do_build_pmi(ctx);
  if (n == "linearity") return do_linearity(ctx);
  if (n == "errors") return do_errors(ctx);
  if (n == "pci-rank") return do_pci_rank(ctx);
  if (n == "analogy") return do_analogy(ctx);
  if (n == "report") return do_report(ctx);
}

StageOutcome execute(const StageSpec& spec, const PipelineConfig& config, ArtifactManifest& manifest) {
  std::vector<std::string> missing;
  for (auto up : spec.upstream) {
    if (!current(config, manifest, find_spec(up))) missing.emplace_back(up);
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw DependencyError("stage '" + std::string(spec.name) + "' needs up-to-date output of: " + list +
                          "; run `" + missing.front() + "` first");
  }
  if (spec.name == "ingest" && config.corpus.empty()) throw ConfigError("ingest needs a corpus path");
  if (spec.needs_bats && config.bats.empty()) {
    throw ConfigError("stage '" + std::string(spec.name) + "' needs a BATS directory");
  }

  StageOutcome outcome;
  outcome.stage = spec.name;
  const auto hash = config_hash(config, manifest, spec);
  if (auto it = manifest.stages.find(outcome.stage);
      it != manifest.stages.end() && it->second.config_hash == hash && artifacts_intact(config, it->second)) {
    log(spec.name, "up to date, skipped");
    outcome.cached = true;
    outcome.record = it->second;
    return outcome;
  }

  StageContext ctx(config, spec);
  log(spec.name, "running");
  dispatch(ctx);
  StageRecord record;
  record.config_hash = hash;
  record.timestamp = utc_now();
  for (const auto& rel : ctx.outputs()) record.artifacts.push_back({rel, content_hash(config.output_dir / rel)});
  manifest.stages[outcome.stage] = record;
  manifest.save(config.output_dir / kManifestName);
  outcome.record = std::move(record);
  return outcome;
}

}  // namespace

// --- config ----------------------------------------------------------------

std::span<const PipelineConfig::Key> PipelineConfig::keys() { return kKeys; }

PipelineConfig::PipelineConfig() {
  for (const auto& k : kKeys) raw_.emplace(std::string(k.name), std::string(k.default_value));
}

void PipelineConfig::set(std::string_view key, std::string_view value) {
  std::string name(key);
  std::replace(name.begin(), name.end(), '-', '_');
  auto it = raw_.find(name);
  if (it == raw_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  it->second = trim(value);
}

const std::string& PipelineConfig::get(std::string_view key) const {
  auto it = raw_.find(key);
  if (it == raw_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

void PipelineConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    try {
      set(trim(std::string_view(text).substr(0, eq)), std::string_view(text).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

void PipelineConfig::finalize() {
  mini = parse_bool("mini", get("mini"));
  deterministic = parse_bool("deterministic", get("deterministic"));
  if (mini) {
    const auto cap = parse_number<std::uint64_t>("max_corpus_bytes", get("max_corpus_bytes"));
    if (cap == 0 || cap > kMiniBytes) raw_["max_corpus_bytes"] = std::to_string(kMiniBytes);
    raw_["pair_universe_top_k"] = std::to_string(kMiniUniverse);
  }
  if (deterministic) raw_["threads"] = "1";
  if (get("threads") == "0") raw_["threads"] = std::to_string(std::max(1U, std::thread::hardware_concurrency()));

  corpus = get("corpus");
  bats = get("bats");
  output_dir = get("output_dir");
  window_radius = parse_number<std::uint32_t>("window_radius", get("window_radius"));
  min_count = parse_number<std::uint64_t>("min_count", get("min_count"));
  pair_universe_top_k = parse_number<std::size_t>("pair_universe_top_k", get("pair_universe_top_k"));
  memory_budget_mb = parse_number<std::size_t>("memory_budget_mb", get("memory_budget_mb"));
  max_corpus_bytes = parse_number<std::uint64_t>("max_corpus_bytes", get("max_corpus_bytes"));
  linearity_top_k = parse_number<std::size_t>("linearity_top_k", get("linearity_top_k"));
  epsilon = parse_number<double>("epsilon", get("epsilon"));
  positive_values_only = parse_bool("positive_values_only", get("positive_values_only"));
  restrict_to_wstar_words = parse_bool("restrict_to_wstar_words", get("restrict_to_wstar_words"));
  threads = parse_number<unsigned>("threads", get("threads"));

  sgns.dimension = parse_number<std::size_t>("dimension", get("dimension"));
  sgns.negative_samples = parse_number<std::size_t>("negative_samples", get("negative_samples"));
  sgns.noise_exponent = parse_number<double>("noise_exponent", get("noise_exponent"));
  sgns.window_radius = window_radius;
  sgns.epochs = parse_number<std::size_t>("epochs", get("epochs"));
  sgns.initial_learning_rate = parse_number<double>("learning_rate", get("learning_rate"));
  sgns.min_learning_rate_fraction =
      parse_number<double>("min_learning_rate_fraction", get("min_learning_rate_fraction"));
  sgns.subsample_threshold = parse_number<double>("subsample_threshold", get("subsample_threshold"));
  sgns.seed = parse_number<std::uint64_t>("seed", get("seed"));
  sgns.threads = threads;

  if (window_radius < 1 || window_radius > 64) throw ConfigError("window_radius must lie in [1, 64]");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (pair_universe_top_k < 2 || pair_universe_top_k > kMaxUniverse) {
    throw ConfigError("pair_universe_top_k must lie in [2, " + std::to_string(kMaxUniverse) + "]");
  }
  if (memory_budget_mb < 1) throw ConfigError("memory_budget_mb must be >= 1");
  if (linearity_top_k < 1) throw ConfigError("linearity_top_k must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
  if (threads < 1 || threads > 1024) throw ConfigError("threads must lie in [1, 1024]");
  sgns.validate();

  if (!corpus.empty() && !fs::is_regular_file(corpus)) throw ConfigError("corpus not found: " + corpus.string());
  if (!bats.empty() && !fs::is_directory(bats)) throw ConfigError("BATS directory not found: " + bats.string());
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::string PipelineConfig::canonical(std::span<const std::string_view> names) const {
  std::string out;
  for (auto n : names) {
    std::string v = get(n);
    if (n == "threads") v = threads > 1 ? "parallel" : "1";  // only the deterministic path is reproducible
    out.append(n).append("=").append(v).append("\n");
  }
  return out;
}

// --- manifest --------------------------------------------------------------

void ArtifactManifest::save(const fs::path& path) const {
  nlohmann::json j;
  j["version"] = 1;
  j["stages"] = nlohmann::json::object();
  for (const auto& [name, rec] : stages) {
    nlohmann::json s;
    s["config_hash"] = hex64(rec.config_hash);
    s["timestamp"] = rec.timestamp;
    s["artifacts"] = nlohmann::json::array();
    for (const auto& a : rec.artifacts) s["artifacts"].push_back({{"path", a.path}, {"hash", hex64(a.hash)}});
    j["stages"][name] = s;
  }
  const auto tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failure on " + tmp.string());
  }
  fs::rename(tmp, path);
}

ArtifactManifest ArtifactManifest::load(const fs::path& path) {
  ArtifactManifest m;
  if (!fs::exists(path)) return m;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("version").get<int>() != 1) throw ParseError(path.string() + ": unsupported manifest version");
    for (const auto& [name, s] : j.at("stages").items()) {
      StageRecord rec;
      rec.config_hash = parse_hex(s.at("config_hash").get<std::string>());
      rec.timestamp = s.at("timestamp").get<std::string>();
      for (const auto& a : s.at("artifacts")) {
        rec.artifacts.push_back({a.at("path").get<std::string>(), parse_hex(a.at("hash").get<std::string>())});
      }
      m.stages.emplace(name, std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return m;
}

std::span<const std::string_view> stage_names() {
  static const std::vector<std::string_view> names = [] {
    std::vector<std::string_view> n;
    for (const auto& s : stage_specs()) n.push_back(s.name);
    return n;
  }();
  return names;
}

std::vector<StageOutcome> run_stage(std::string_view name, const PipelineConfig& config) {
  fs::create_directories(config.output_dir);
  auto manifest = ArtifactManifest::load(config.output_dir / kManifestName);
  std::vector<StageOutcome> outcomes;
  if (name == "all") {
    for (const auto& spec : stage_specs()) outcomes.push_back(execute(spec, config, manifest));
  } else {
    outcomes.push_back(execute(find_spec(name), config, manifest));
  }
  return outcomes;
}

}  // namespace pprobe
