#include "pprobe/count_accumulator.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <limits>
#include <memory>
#include <queue>
#include <string>

#include <unistd.h>

#include "pprobe/error.hpp"

namespace pprobe {

namespace {

constexpr std::size_t kRecordBytes = 12;  // [u64 key][u32 count]

std::uint32_t checked_count(std::uint64_t n) {
  if (n > std::numeric_limits<std::uint32_t>::max()) {
    throw NumericError("co-occurrence count exceeds 32 bits");
  }
  return static_cast<std::uint32_t>(n);
}

void put_record(std::vector<unsigned char>& buf, std::uint64_t key, std::uint32_t count) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<unsigned char>(key >> (8 * i)));
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<unsigned char>(count >> (8 * i)));
}

std::filesystem::path unique_spill_path(const std::filesystem::path& dir) {
  static std::atomic<std::uint64_t> serial{0};
  return dir / ("pprobe-run-" + std::to_string(::getpid()) + "-" +
                std::to_string(serial.fetch_add(1)) + ".bin");
}

// Sequential reader over a spilled run.
class RunReader {
 public:
  explicit RunReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot reopen spill file " + path.string());
    advance();
  }
  bool done() const { return done_; }
  std::uint64_t key() const { return key_; }
  std::uint32_t count() const { return count_; }
  void advance() {
    if (pos_ == len_) {
      buf_.resize(kRecordBytes * 65536);
      in_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
      len_ = static_cast<std::size_t>(in_.gcount());
      pos_ = 0;
      if (len_ % kRecordBytes != 0) throw IoError("corrupt spill file");
      if (len_ == 0) {
        done_ = true;
        return;
      }
    }
    key_ = 0;
    count_ = 0;
    for (int i = 0; i < 8; ++i) key_ |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    for (int i = 0; i < 4; ++i) count_ |= static_cast<std::uint32_t>(buf_[pos_ + 8 + i]) << (8 * i);
    pos_ += kRecordBytes;
  }

 private:
  std::ifstream in_;
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0, len_ = 0;
  bool done_ = false;
  std::uint64_t key_ = 0;
  std::uint32_t count_ = 0;
};

}  // namespace

SortedCounts merge_counts(const SortedCounts& a, const SortedCounts& b) {
  SortedCounts out;
  out.keys.reserve(a.size() + b.size());
  out.counts.reserve(a.size() + b.size());
  std::size_t i = 0, j = 0;
  while (i < a.size() || j < b.size()) {
    if (j == b.size() || (i < a.size() && a.keys[i] < b.keys[j])) {
      out.keys.push_back(a.keys[i]);
      out.counts.push_back(a.counts[i++]);
    } else if (i == a.size() || b.keys[j] < a.keys[i]) {
      out.keys.push_back(b.keys[j]);
      out.counts.push_back(b.counts[j++]);
    } else {
      out.keys.push_back(a.keys[i]);
      out.counts.push_back(checked_count(std::uint64_t{a.counts[i++]} + b.counts[j++]));
    }
  }
  return out;
}

CountAccumulator::CountAccumulator(std::size_t memory_budget_bytes, std::filesystem::path spill_dir)
    : budget_(std::max<std::size_t>(memory_budget_bytes, 1 << 16)),
      spill_dir_(spill_dir.empty() ? std::filesystem::temp_directory_path() : std::move(spill_dir)) {
  // Half the budget for the raw key buffer, half for collapsed runs.
  buffer_capacity_ = std::max<std::size_t>(budget_ / 2 / sizeof(std::uint64_t), 1024);
  buffer_.reserve(std::min<std::size_t>(buffer_capacity_, 1 << 20));
}

CountAccumulator::~CountAccumulator() { cleanup(); }

CountAccumulator::CountAccumulator(CountAccumulator&& o) noexcept
    : budget_(o.budget_),
      buffer_capacity_(o.buffer_capacity_),
      spill_dir_(std::move(o.spill_dir_)),
      buffer_(std::move(o.buffer_)),
      runs_(std::move(o.runs_)),
      resident_run_bytes_(o.resident_run_bytes_),
      spill_files_(std::move(o.spill_files_)) {
  o.spill_files_.clear();
  o.runs_.clear();
  o.resident_run_bytes_ = 0;
}

CountAccumulator& CountAccumulator::operator=(CountAccumulator&& o) noexcept {
  if (this != &o) {
    cleanup();
    budget_ = o.budget_;
    buffer_capacity_ = o.buffer_capacity_;
    spill_dir_ = std::move(o.spill_dir_);
    buffer_ = std::move(o.buffer_);
    runs_ = std::move(o.runs_);
    resident_run_bytes_ = o.resident_run_bytes_;
    spill_files_ = std::move(o.spill_files_);
    o.spill_files_.clear();
    o.runs_.clear();
    o.resident_run_bytes_ = 0;
  }
  return *this;
}

void CountAccumulator::cleanup() {
  std::error_code ec;
  for (const auto& p : spill_files_) std::filesystem::remove(p, ec);
  spill_files_.clear();
}

void CountAccumulator::flush_buffer() {
  if (buffer_.empty()) return;
  std::sort(buffer_.begin(), buffer_.end());
  SortedCounts run;
  for (std::size_t i = 0; i < buffer_.size();) {
    std::size_t j = i;
    while (j < buffer_.size() && buffer_[j] == buffer_[i]) ++j;
    run.keys.push_back(buffer_[i]);
    run.counts.push_back(checked_count(j - i));
    i = j;
  }
  buffer_.clear();
  resident_run_bytes_ += run.size() * kRecordBytes;
  runs_.push_back(std::move(run));
  if (resident_run_bytes_ > budget_ / 2) spill_runs();
}

void CountAccumulator::spill_runs() {
  for (auto& run : runs_) {
    auto path = unique_spill_path(spill_dir_);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create spill file " + path.string());
    spill_files_.push_back(path);
    std::vector<unsigned char> buf;
    buf.reserve(kRecordBytes * 65536);
    for (std::size_t i = 0; i < run.size(); ++i) {
      put_record(buf, run.keys[i], run.counts[i]);
      if (buf.size() >= kRecordBytes * 65536) {
        out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
        buf.clear();
      }
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failure on spill file " + path.string());
  }
  runs_.clear();
  resident_run_bytes_ = 0;
}

SortedCounts CountAccumulator::finish(std::vector<CountAccumulator>* others) {
  flush_buffer();
  if (others) {
    for (auto& o : *others) {
      o.flush_buffer();
      for (auto& r : o.runs_) runs_.push_back(std::move(r));
      for (auto& p : o.spill_files_) spill_files_.push_back(p);
      o.runs_.clear();
      o.spill_files_.clear();
    }
  }
  if (spill_files_.empty() && runs_.size() <= 1) {
    SortedCounts out = runs_.empty() ? SortedCounts{} : std::move(runs_.front());
    runs_.clear();
    return out;
  }
  if (spill_files_.empty() && runs_.size() == 2) {
    SortedCounts out = merge_counts(runs_[0], runs_[1]);
    runs_.clear();
    return out;
  }

  // K-way merge over resident runs and spill files.
  struct Cursor {
    const SortedCounts* run = nullptr;
    std::size_t pos = 0;
    std::unique_ptr<RunReader> reader;
    bool done() const { return run ? pos == run->size() : reader->done(); }
    std::uint64_t key() const { return run ? run->keys[pos] : reader->key(); }
    std::uint32_t count() const { return run ? run->counts[pos] : reader->count(); }
    void advance() {
      if (run) {
        ++pos;
      } else {
        reader->advance();
      }
    }
  };
  std::vector<Cursor> cursors;
  for (const auto& r : runs_) cursors.push_back(Cursor{&r, 0, nullptr});
  for (const auto& p : spill_files_) cursors.push_back(Cursor{nullptr, 0, std::make_unique<RunReader>(p)});

  using Item = std::pair<std::uint64_t, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
  for (std::size_t c = 0; c < cursors.size(); ++c) {
    if (!cursors[c].done()) heap.emplace(cursors[c].key(), c);
  }
  SortedCounts out;
  while (!heap.empty()) {
    auto [key, c] = heap.top();
    heap.pop();
    std::uint64_t n = cursors[c].count();
    cursors[c].advance();
    if (!cursors[c].done()) heap.emplace(cursors[c].key(), c);
    if (!out.keys.empty() && out.keys.back() == key) {
      out.counts.back() = checked_count(std::uint64_t{out.counts.back()} + n);
    } else {
      out.keys.push_back(key);
      out.counts.push_back(checked_count(n));
    }
  }
  cursors.clear();
  runs_.clear();
  resident_run_bytes_ = 0;
  cleanup();
  return out;
}

}  // namespace pprobe
