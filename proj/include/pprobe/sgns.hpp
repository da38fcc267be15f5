#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pprobe/corpus.hpp"

namespace pprobe {

struct SgnsConfig {
  std::size_t dimension = 500;
  std::size_t negative_samples = 1;
  double noise_exponent = 1.0;
  std::uint32_t window_radius = 5;
  std::size_t epochs = 5;
  double initial_learning_rate = 0.025;
  // The learning rate decays linearly to initial * min_learning_rate_fraction.
  double min_learning_rate_fraction = 1e-4;
  // 0 disables frequent-word subsampling.
  double subsample_threshold = 0.0;
  std::uint64_t seed = 1;
  // 1 gives the deterministic path; more threads share parameters without locks.
  unsigned threads = 1;

  void validate() const;
};

// Word vectors W and context vectors C, one column per word id.
struct EmbeddingPair {
  Eigen::MatrixXf words;
  Eigen::MatrixXf contexts;
  SgnsConfig config;

  std::size_t dimension() const { return static_cast<std::size_t>(words.rows()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(words.cols()); }
};

// Draws word ids with probability proportional to count^exponent in O(1)
// (Vose's alias method).
class NoiseSampler {
 public:
  NoiseSampler(std::span<const std::uint64_t> counts, double exponent);

  template <typename Rng>
  WordId operator()(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto i = static_cast<std::size_t>(u(rng) * static_cast<double>(prob_.size()));
    if (i >= prob_.size()) i = prob_.size() - 1;
    return u(rng) < prob_[i] ? static_cast<WordId>(i) : alias_[i];
  }
  double probability(WordId w) const { return weights_[w]; }

 private:
  std::vector<double> prob_;
  std::vector<WordId> alias_;
  std::vector<double> weights_;
};

// log(sigmoid(x)) without overflow.
template <typename T>
T log_sigmoid(T x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

template <typename T>
T sigmoid(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

// One skip-gram event: a word vector, its observed context (contexts[0])
// and negative samples (contexts[1..]). Returns
//   -log s(w.c0) - sum_n log s(-w.cn)
// and writes d loss / d w and d loss / d c_i (stacked, d values each).
template <typename T>
T sgns_event_gradient(std::span<const T> word, std::span<const T* const> contexts,
                      std::span<T> grad_word, std::span<T> grad_contexts) {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const auto d = static_cast<Eigen::Index>(word.size());
  Eigen::Map<const Vec> w(word.data(), d);
  Eigen::Map<Vec> gw(grad_word.data(), d);
  gw.setZero();
  T loss = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    Eigen::Map<const Vec> c(contexts[i], d);
    const T label = i == 0 ? T(1) : T(0);
    const T score = w.dot(c);
    loss -= i == 0 ? log_sigmoid(score) : log_sigmoid(-score);
    const T g = sigmoid(score) - label;
    gw += g * c;
    Eigen::Map<Vec>(grad_contexts.data() + i * word.size(), d) = g * w;
  }
  return loss;
}

template <typename T>
T sgns_event_loss(std::span<const T> word, std::span<const T* const> contexts) {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const auto d = static_cast<Eigen::Index>(word.size());
  Eigen::Map<const Vec> w(word.data(), d);
  T loss = 0;
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    const T score = w.dot(Eigen::Map<const Vec>(contexts[i], d));
    loss -= i == 0 ? log_sigmoid(score) : log_sigmoid(-score);
  }
  return loss;
}

// W uniform in [-0.5/d, 0.5/d], C zero.
EmbeddingPair initial_embeddings(std::size_t vocab_size, const SgnsConfig& config);

using EpochCallback = std::function<void(std::size_t epoch, const EmbeddingPair&)>;

EmbeddingPair train(const TokenStream& tokens, const Vocabulary& vocab, const SgnsConfig& config,
                    const EpochCallback& on_epoch = {});

// Mean event loss over every (centre, context) position pair of `tokens`,
// with negatives drawn from a generator seeded by `seed`.
double mean_sgns_loss(const EmbeddingPair& embeddings, std::span<const WordId> tokens,
                      const NoiseSampler& noise, const SgnsConfig& config, std::uint64_t seed);

// Rows of W^T C, computed one at a time.
class DotProductMatrix {
 public:
  explicit DotProductMatrix(const EmbeddingPair& embeddings) : embeddings_(&embeddings) {}
  std::size_t size() const { return embeddings_->vocab_size(); }
  // (W col x)^T C, length |V|.
  Eigen::VectorXd row(WordId x) const;

 private:
  const EmbeddingPair* embeddings_;
};

// `|V| d` header then `token v1 ... vd` per column.
void save_embedding_text(const Eigen::MatrixXf& vectors, const Vocabulary& vocab,
                         const std::filesystem::path& path);
// Columns follow the vocabulary ids; every vocabulary token must appear.
Eigen::MatrixXf load_embedding_text(const std::filesystem::path& path, const Vocabulary& vocab);

}  // namespace pprobe
