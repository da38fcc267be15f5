#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pprobe {

// Sorted, duplicate-free (key, count) columns.
struct SortedCounts {
  std::vector<std::uint64_t> keys;
  std::vector<std::uint32_t> counts;

  std::size_t size() const { return keys.size(); }
  bool empty() const { return keys.empty(); }
  friend bool operator==(const SortedCounts&, const SortedCounts&) = default;
};

// Keywise sum of two sorted count sets. Throws NumericError on u32 overflow.
SortedCounts merge_counts(const SortedCounts& a, const SortedCounts& b);

// Counts occurrences of 64-bit keys with bounded memory. Keys are buffered,
// sorted and collapsed into runs; once resident runs exceed the budget they
// are written to temporary files, and finish() k-way merges everything.
class CountAccumulator {
 public:
  explicit CountAccumulator(std::size_t memory_budget_bytes = std::size_t{1} << 30,
                            std::filesystem::path spill_dir = {});
  ~CountAccumulator();
  CountAccumulator(const CountAccumulator&) = delete;
  CountAccumulator& operator=(const CountAccumulator&) = delete;
  CountAccumulator(CountAccumulator&&) noexcept;
  CountAccumulator& operator=(CountAccumulator&&) noexcept;

  void add(std::uint64_t key) {
    buffer_.push_back(key);
    if (buffer_.size() >= buffer_capacity_) flush_buffer();
  }

  // Consumes the accumulator. Also absorbs the runs of `others`, which lets
  // per-shard accumulators be merged in one pass.
  SortedCounts finish(std::vector<CountAccumulator>* others = nullptr);

  std::size_t spilled_runs() const { return spill_files_.size(); }

 private:
  void flush_buffer();
  void spill_runs();
  void cleanup();

  std::size_t budget_ = 0;
  std::size_t buffer_capacity_ = 0;
  std::filesystem::path spill_dir_;
  std::vector<std::uint64_t> buffer_;
  std::vector<SortedCounts> runs_;
  std::size_t resident_run_bytes_ = 0;
  std::vector<std::filesystem::path> spill_files_;
};

}  // namespace pprobe
