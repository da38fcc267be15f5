#include "pprobe/sgns.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <fstream>
#include <thread>

#include "pprobe/error.hpp"

namespace pprobe {

void SgnsConfig::validate() const {
  if (dimension < 1) throw ConfigError("embedding dimension must be >= 1");
  if (negative_samples < 1) throw ConfigError("negative_samples must be >= 1");
  if (noise_exponent < 0.0 || noise_exponent > 1.0) throw ConfigError("noise_exponent must lie in [0, 1]");
  if (window_radius < 1) throw ConfigError("window radius must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(initial_learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (min_learning_rate_fraction < 0.0 || min_learning_rate_fraction > 1.0) {
    throw ConfigError("min_learning_rate_fraction must lie in [0, 1]");
  }
  if (subsample_threshold < 0.0) throw ConfigError("subsample threshold must be >= 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

NoiseSampler::NoiseSampler(std::span<const std::uint64_t> counts, double exponent) {
  const std::size_t n = counts.size();
  if (n == 0) throw ConfigError("noise distribution over an empty vocabulary");
  weights_.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    weights_[i] = counts[i] == 0 ? 0.0 : std::pow(static_cast<double>(counts[i]), exponent);
    total += weights_[i];
  }
  if (!(total > 0.0)) throw ConfigError("noise distribution has no mass");
  for (auto& w : weights_) w /= total;

  prob_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  std::vector<std::size_t> small, large;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = weights_[i] * static_cast<double>(n);
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    auto s = small.back(), l = large.back();
    small.pop_back();
    large.pop_back();
    prob_[s] = scaled[s];
    alias_[s] = static_cast<WordId>(l);
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    (scaled[l] < 1.0 ? small : large).push_back(l);
  }
  for (auto i : large) prob_[i] = 1.0;
  for (auto i : small) prob_[i] = 1.0;
}

EmbeddingPair initial_embeddings(std::size_t vocab_size, const SgnsConfig& config) {
  config.validate();
  const auto d = static_cast<Eigen::Index>(config.dimension);
  EmbeddingPair pair;
  pair.config = config;
  pair.words.resize(d, static_cast<Eigen::Index>(vocab_size));
  pair.contexts = Eigen::MatrixXf::Zero(d, static_cast<Eigen::Index>(vocab_size));
  std::mt19937_64 rng(config.seed);
  const double half = 0.5 / static_cast<double>(config.dimension);
  std::uniform_real_distribution<double> u(-half, half);
  for (Eigen::Index c = 0; c < pair.words.cols(); ++c) {
    for (Eigen::Index r = 0; r < d; ++r) pair.words(r, c) = static_cast<float>(u(rng));
  }
  return pair;
}

namespace {

// Per-thread buffers for one event.
struct EventScratch {
  explicit EventScratch(const SgnsConfig& config)
      : grad_word(config.dimension), grad_contexts((1 + config.negative_samples) * config.dimension) {
    ids.reserve(1 + config.negative_samples);
    ptrs.reserve(1 + config.negative_samples);
  }
  std::vector<float> grad_word;
  std::vector<float> grad_contexts;
  std::vector<WordId> ids;
  std::vector<const float*> ptrs;
};

template <typename Rng>
void sample_event(WordId context, const NoiseSampler& noise, std::size_t negatives, Rng& rng,
                  std::vector<WordId>& ids) {
  ids.clear();
  ids.push_back(context);
  for (std::size_t n = 0; n < negatives; ++n) {
    WordId neg = noise(rng);
    if (neg != context) ids.push_back(neg);
  }
}

std::vector<WordId> subsample(std::span<const WordId> ids, const Vocabulary& vocab, double threshold,
                              std::mt19937_64& rng) {
  std::vector<WordId> kept;
  kept.reserve(ids.size());
  const double total = static_cast<double>(vocab.total_tokens());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto w : ids) {
    const double f = static_cast<double>(vocab.count(w));
    const double keep = (std::sqrt(f / (threshold * total)) + 1.0) * (threshold * total) / f;
    if (keep >= 1.0 || u(rng) < keep) kept.push_back(w);
  }
  return kept;
}

}  // namespace

EmbeddingPair train(const TokenStream& tokens, const Vocabulary& vocab, const SgnsConfig& config,
                    const EpochCallback& on_epoch) {
  config.validate();
  if (tokens.ids.empty()) throw ConfigError("cannot train on an empty token stream");
  for (auto w : tokens.ids) {
    if (w >= vocab.size()) throw IncompatibleError("token stream does not match the vocabulary");
  }
  EmbeddingPair pair = initial_embeddings(vocab.size(), config);
  NoiseSampler noise(vocab.counts(), config.noise_exponent);
  const std::size_t d = config.dimension;
  const auto radius = static_cast<std::size_t>(config.window_radius);
  const double total_work = static_cast<double>(config.epochs) * static_cast<double>(tokens.ids.size());
  std::atomic<std::uint64_t> progress{0};

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::vector<WordId> filtered;
    std::span<const WordId> ids = tokens.ids;
    if (config.subsample_threshold > 0.0) {
      std::mt19937_64 rng(config.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));
      filtered = subsample(tokens.ids, vocab, config.subsample_threshold, rng);
      ids = filtered;
    }
    const std::size_t n = ids.size();
    const std::size_t epoch_base = static_cast<std::size_t>(progress.load());
    auto work = [&](unsigned shard) {
      std::mt19937_64 rng(config.seed + 7919ULL * (epoch * config.threads + shard) + 1);
      EventScratch scratch(config);
      const std::size_t begin = n * shard / config.threads, end = n * (shard + 1) / config.threads;
      double lr = config.initial_learning_rate;
      std::size_t local = 0;
      for (std::size_t t = begin; t < end; ++t) {
        if (local % 10000 == 0) {
          const double done = config.threads == 1
                                  ? static_cast<double>(epoch_base + (t - begin))
                                  : static_cast<double>(progress.load(std::memory_order_relaxed));
          lr = config.initial_learning_rate *
               std::max(config.min_learning_rate_fraction, 1.0 - done / total_work);
        }
        ++local;
        if (config.threads > 1 && local % 10000 == 0) progress.fetch_add(10000, std::memory_order_relaxed);
        const WordId centre = ids[t];
        float* w = pair.words.col(centre).data();
        const std::size_t lo = t >= radius ? t - radius : 0, hi = std::min(n - 1, t + radius);
        for (std::size_t u = lo; u <= hi; ++u) {
          if (u == t) continue;
          sample_event(ids[u], noise, config.negative_samples, rng, scratch.ids);
          scratch.ptrs.clear();
          for (auto c : scratch.ids) scratch.ptrs.push_back(pair.contexts.col(c).data());
          sgns_event_gradient<float>(std::span<const float>(w, d), scratch.ptrs, scratch.grad_word,
                                     scratch.grad_contexts);
          const auto step = static_cast<float>(lr);
          for (std::size_t i = 0; i < scratch.ids.size(); ++i) {
            pair.contexts.col(scratch.ids[i]) -=
                step * Eigen::Map<const Eigen::VectorXf>(scratch.grad_contexts.data() + i * d,
                                                         static_cast<Eigen::Index>(d));
          }
          Eigen::Map<Eigen::VectorXf>(w, static_cast<Eigen::Index>(d)) -=
              step * Eigen::Map<const Eigen::VectorXf>(scratch.grad_word.data(), static_cast<Eigen::Index>(d));
        }
      }
      if (config.threads > 1) progress.fetch_add(local % 10000, std::memory_order_relaxed);
    };
    if (config.threads == 1) {
      work(0);
      progress.fetch_add(n);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned s = 0; s < config.threads; ++s) pool.emplace_back(work, s);
    }
    if (!pair.words.allFinite() || !pair.contexts.allFinite()) {
      throw NumericError("SGNS training diverged (non-finite parameters)");
    }
    if (on_epoch) on_epoch(epoch, pair);
  }
  return pair;
}

double mean_sgns_loss(const EmbeddingPair& embeddings, std::span<const WordId> tokens,
                      const NoiseSampler& noise, const SgnsConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::size_t d = embeddings.dimension();
  const auto radius = static_cast<std::size_t>(config.window_radius);
  const std::size_t n = tokens.size();
  std::vector<WordId> ids;
  std::vector<const float*> ptrs;
  double total = 0.0;
  std::size_t events = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const float* w = embeddings.words.col(tokens[t]).data();
    const std::size_t lo = t >= radius ? t - radius : 0, hi = std::min(n - 1, t + radius);
    for (std::size_t u = lo; u <= hi; ++u) {
      if (u == t) continue;
      sample_event(tokens[u], noise, config.negative_samples, rng, ids);
      ptrs.clear();
      for (auto c : ids) ptrs.push_back(embeddings.contexts.col(c).data());
      total += sgns_event_loss<float>(std::span<const float>(w, d), ptrs);
      ++events;
    }
  }
  if (events == 0) throw UndefinedError("no events in loss slice");
  return total / static_cast<double>(events);
}

Eigen::VectorXd DotProductMatrix::row(WordId x) const {
  if (x >= embeddings_->vocab_size()) throw BoundsError("word id out of range");
  return (embeddings_->contexts.transpose() * embeddings_->words.col(x)).cast<double>();
}

void save_embedding_text(const Eigen::MatrixXf& vectors, const Vocabulary& vocab,
                         const std::filesystem::path& path) {
  if (static_cast<std::size_t>(vectors.cols()) != vocab.size()) {
    throw IncompatibleError("embedding matrix does not match the vocabulary");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << vectors.cols() << ' ' << vectors.rows() << '\n';
  std::string line;
  char buf[64];
  for (Eigen::Index c = 0; c < vectors.cols(); ++c) {
    line = vocab.token(static_cast<WordId>(c));
    for (Eigen::Index r = 0; r < vectors.rows(); ++r) {
      auto [p, ec] = std::to_chars(buf, buf + sizeof buf, vectors(r, c));
      line.push_back(' ');
      line.append(buf, p);
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) throw IoError("write failure on " + path.string());
}

Eigen::MatrixXf load_embedding_text(const std::filesystem::path& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::size_t rows_in_file = 0, dim = 0;
  if (!(in >> rows_in_file >> dim) || dim == 0) throw ParseError(path.string() + ": bad header");
  if (rows_in_file != vocab.size()) {
    throw IncompatibleError(path.string() + ": " + std::to_string(rows_in_file) +
                            " vectors for a vocabulary of " + std::to_string(vocab.size()));
  }
  std::string line;
  std::getline(in, line);
  Eigen::MatrixXf out(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(vocab.size()));
  std::vector<bool> seen(vocab.size(), false);
  for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    auto sp = line.find(' ');
    if (sp == std::string::npos) throw ParseError(where + ": missing vector");
    auto id = vocab.find(std::string_view(line).substr(0, sp));
    if (!id) throw IncompatibleError(where + ": token not in vocabulary");
    if (seen[*id]) throw ParseError(where + ": duplicate token");
    seen[*id] = true;
    const char* p = line.data() + sp;
    const char* end = line.data() + line.size();
    for (std::size_t r = 0; r < dim; ++r) {
      while (p < end && *p == ' ') ++p;
      float v = 0;
      auto [q, ec] = std::from_chars(p, end, v);
      if (ec != std::errc{}) throw ParseError(where + ": bad value");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(*id)) = v;
      p = q;
    }
    while (p < end && *p == ' ') ++p;
    if (p != end) throw ParseError(where + ": too many values");
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ParseError(path.string() + ": missing vocabulary tokens");
  }
  return out;
}

}  // namespace pprobe
