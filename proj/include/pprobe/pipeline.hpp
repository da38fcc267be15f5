#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pprobe/paraphrase_errors.hpp"
#include "pprobe/sgns.hpp"

namespace pprobe {

// Flat `key = value` configuration. Every key can also be set from the
// command line; later assignments win.
class PipelineConfig {
 public:
  struct Key {
    std::string_view name;
    std::string_view default_value;
    std::string_view help;
  };
  static std::span<const Key> keys();

  PipelineConfig();

  // Unknown keys and malformed values raise ConfigError.
  void set(std::string_view key, std::string_view value);
  const std::string& get(std::string_view key) const;
  void load_file(const std::filesystem::path& path);

  // Applies the --mini and --deterministic presets, parses and range-checks
  // every value, and validates paths. Call once all assignments are in.
  void finalize();

  // Effective values (after finalize), usable for hashing.
  std::string canonical(std::span<const std::string_view> names) const;

  std::filesystem::path corpus, bats, output_dir;
  std::uint32_t window_radius = 5;
  std::uint64_t min_count = 5;
  std::size_t pair_universe_top_k = 10000;
  std::size_t memory_budget_mb = 1024;
  std::uint64_t max_corpus_bytes = 0;  // 0 = whole corpus
  std::size_t linearity_top_k = 10000;
  double epsilon = kDefaultEpsilon;
  bool positive_values_only = false;
  bool restrict_to_wstar_words = false;
  bool deterministic = false;
  bool mini = false;
  unsigned threads = 1;
  SgnsConfig sgns;

 private:
  std::map<std::string, std::string, std::less<>> raw_;
};

struct ArtifactRecord {
  std::string path;  // relative to the output directory
  std::uint64_t hash = 0;
  friend bool operator==(const ArtifactRecord&, const ArtifactRecord&) = default;
};

struct StageRecord {
  std::uint64_t config_hash = 0;
  std::string timestamp;
  std::vector<ArtifactRecord> artifacts;
  friend bool operator==(const StageRecord&, const StageRecord&) = default;
};

class ArtifactManifest {
 public:
  std::map<std::string, StageRecord> stages;

  void save(const std::filesystem::path& path) const;
  static ArtifactManifest load(const std::filesystem::path& path);  // missing file -> empty
  friend bool operator==(const ArtifactManifest&, const ArtifactManifest&) = default;
};

inline constexpr std::string_view kManifestName = "manifest.json";

std::span<const std::string_view> stage_names();  // pipeline order, without `all`

struct StageOutcome {
  std::string stage;
  bool cached = false;
  StageRecord record;
};

// Runs one stage (or every stage for "all"), skipping it when the manifest
// shows identical config and artifact hashes. Missing or stale upstream
// stages raise DependencyError naming the stage to run first.
std::vector<StageOutcome> run_stage(std::string_view name, const PipelineConfig& config);

}  // namespace pprobe
