#pragma once

// The per-collector cache table: a tiny fully associative store of register
// values with lock bits, one reuse bit per entry and LRU ordering.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "malekeh/trace.hpp"

namespace malekeh {

// Raised when the engine's own invariants break; never a user error.
class EngineError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct CacheTableEntry {
  RegId tag = 0;
  bool valid = false;
  bool lock = false;
  Reuse reuse = Reuse::Far;
  // 0 is the most recently used valid entry.
  std::uint8_t lru_rank = 0;
  std::uint64_t version = 0;

  bool operator==(const CacheTableEntry&) const = default;
};

class CacheTable {
 public:
  explicit CacheTable(std::size_t entries = 8) : entries_(entries) {}

  std::size_t size() const { return entries_.size(); }
  std::span<const CacheTableEntry> entries() const { return entries_; }
  const CacheTableEntry& operator[](std::size_t i) const { return entries_.at(i); }
  // Raw access for tests and for field updates that keep LRU intact.
  CacheTableEntry& entry(std::size_t i) { return entries_.at(i); }

  std::optional<std::size_t> find(RegId reg) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].valid && entries_[i].tag == reg) return i;
    return std::nullopt;
  }

  // Marks entry i most recently used. Works for valid entries and for a slot
  // that is about to become valid.
  void touch(std::size_t i) {
    auto& e = entries_.at(i);
    for (std::size_t j = 0; j < entries_.size(); ++j) {
      if (j == i || !entries_[j].valid) continue;
      if (!e.valid || entries_[j].lru_rank < e.lru_rank) ++entries_[j].lru_rank;
    }
    e.lru_rank = 0;
  }

  // Installs reg into slot i (evicting whatever was there) as the MRU entry.
  void fill(std::size_t i, RegId reg, Reuse reuse, std::uint64_t version) {
    touch(i);
    auto& e = entries_.at(i);
    e.tag = reg;
    e.valid = true;
    e.lock = false;
    e.reuse = reuse;
    e.version = version;
  }

  void invalidate(std::size_t i) {
    auto& e = entries_.at(i);
    if (!e.valid) return;
    for (auto& o : entries_)
      if (o.valid && o.lru_rank > e.lru_rank) --o.lru_rank;
    e = CacheTableEntry{};
  }

  void flush() { std::fill(entries_.begin(), entries_.end(), CacheTableEntry{}); }

  bool any_valid() const {
    return std::any_of(entries_.begin(), entries_.end(), [](const auto& e) { return e.valid; });
  }
  bool has_near() const {
    return std::any_of(entries_.begin(), entries_.end(),
                       [](const auto& e) { return e.valid && e.reuse == Reuse::Near; });
  }
  std::size_t locked_count() const {
    return static_cast<std::size_t>(std::count_if(entries_.begin(), entries_.end(), [](const auto& e) { return e.lock; }));
  }

  // locked => valid, and valid entries hold distinct tags and distinct ranks
  // below size().
  bool consistent() const {
    std::vector<bool> rank_seen(entries_.size(), false);
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& e = entries_[i];
      if (e.lock && !e.valid) return false;
      if (!e.valid) continue;
      if (e.lru_rank >= entries_.size() || rank_seen[e.lru_rank]) return false;
      rank_seen[e.lru_rank] = true;
      for (std::size_t j = i + 1; j < entries_.size(); ++j)
        if (entries_[j].valid && entries_[j].tag == e.tag) return false;
    }
    return true;
  }

  bool operator==(const CacheTable&) const = default;

 private:
  std::vector<CacheTableEntry> entries_;
};

}  // namespace malekeh
