#pragma once

// Issue priority, collector allocation and cache replacement policies.
//
// All functions here are decisions over snapshots; the engine applies them.
// Warp age is creation order, so a lower warp id is older.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "malekeh/cache_table.hpp"

namespace malekeh {

using Rng = std::mt19937_64;

// Uniform pick in [0, n). Modulo keeps sequences identical across standard
// libraries, which matters more here than the negligible bias.
inline std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// ---------------------------------------------------------------------------
// Replacement

enum class ReplacementPolicy : std::uint8_t {
  FarFirstLru,  // invalid, else random unlocked FAR, else LRU
  Lru,          // invalid, else LRU
};

inline std::size_t replacement_select(const CacheTable& ct, ReplacementPolicy policy, Rng& rng) {
  auto entries = ct.entries();
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!entries[i].valid) return i;

  if (policy == ReplacementPolicy::FarFirstLru) {
    std::vector<std::size_t> far;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (!entries[i].lock && entries[i].reuse == Reuse::Far) far.push_back(i);
    if (!far.empty()) return far[pick(rng, far.size())];
  }

  std::optional<std::size_t> victim;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].lock) continue;
    if (!victim || entries[i].lru_rank > entries[*victim].lru_rank) victim = i;
  }
  if (!victim) throw EngineError("replacement_select: every cache table entry is locked");
  return *victim;
}

// ---------------------------------------------------------------------------
// Issue scheduling

struct SchedulerState {
  std::optional<WarpId> last_issued;
  // Per sub-core; bounded by sthld + 1.
  std::uint32_t waiting_counter = 0;
  // Shared by the whole GPU; the engine refreshes it every cycle.
  std::uint32_t sthld = 0;
};

// What the scheduler can see of a collector through its status port.
struct CcuView {
  bool occupied = false;
  std::optional<WarpId> owner;
  bool has_near = false;
};

inline std::vector<WarpId> gto_priority(std::span<const WarpId> ready, const SchedulerState& state) {
  std::vector<WarpId> order(ready.begin(), ready.end());
  std::sort(order.begin(), order.end());
  if (state.last_issued) {
    auto it = std::find(order.begin(), order.end(), *state.last_issued);
    if (it != order.end()) std::rotate(order.begin(), it, it + 1);
  }
  return order;
}

// Last issued warp first, then warps whose data sits in a collector, then the
// rest; oldest first inside each group.
inline std::vector<WarpId> malekeh_priority(std::span<const WarpId> ready, std::span<const CcuView> ccus,
                                            const SchedulerState& state) {
  auto owns = [&](WarpId w) {
    return std::any_of(ccus.begin(), ccus.end(), [&](const CcuView& c) { return c.owner == w; });
  };
  std::vector<WarpId> first, owners, others;
  for (WarpId w : ready) {
    if (state.last_issued == w) first.push_back(w);
    else if (owns(w)) owners.push_back(w);
    else others.push_back(w);
  }
  std::sort(owners.begin(), owners.end());
  std::sort(others.begin(), others.end());
  first.insert(first.end(), owners.begin(), owners.end());
  first.insert(first.end(), others.begin(), others.end());
  return first;
}

// ---------------------------------------------------------------------------
// Collector allocation

struct AllocationDecision {
  enum class Kind : std::uint8_t { Allocate, StallOccupied, StallAllBusy, StallWaiting };
  Kind kind = Kind::StallAllBusy;
  std::size_t ccu = 0;

  static AllocationDecision allocate(std::size_t c) { return {Kind::Allocate, c}; }
  static AllocationDecision stall(Kind k) { return {k, 0}; }
  bool allocated() const { return kind == Kind::Allocate; }
  bool operator==(const AllocationDecision&) const = default;
};

inline std::string_view to_string(AllocationDecision::Kind k) {
  switch (k) {
    case AllocationDecision::Kind::Allocate: return "ALLOCATE";
    case AllocationDecision::Kind::StallOccupied: return "OCCUPIED";
    case AllocationDecision::Kind::StallAllBusy: return "ALL_BUSY";
    case AllocationDecision::Kind::StallWaiting: return "WAITING";
  }
  return "?";
}

namespace detail {

inline std::optional<std::size_t> owned_ccu(WarpId warp, std::span<const CcuView> ccus) {
  for (std::size_t i = 0; i < ccus.size(); ++i)
    if (ccus[i].owner == warp) return i;
  return std::nullopt;
}

inline std::vector<std::size_t> free_ccus(std::span<const CcuView> ccus) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < ccus.size(); ++i)
    if (!ccus[i].occupied) out.push_back(i);
  return out;
}

}  // namespace detail

// The reuse-aware allocation flow:
//  - a warp that already owns a collector gets it when free, otherwise stalls;
//  - else a random free collector holding only far (or no) values;
//  - else, when every collector is busy, stall;
//  - else the free collectors all hold near values: stall up to sthld times,
//    then take a random one.
inline AllocationDecision ccu_allocation(WarpId warp, std::span<const CcuView> ccus, SchedulerState& state,
                                         Rng& rng) {
  using K = AllocationDecision::Kind;
  if (auto own = detail::owned_ccu(warp, ccus)) {
    if (!ccus[*own].occupied) return AllocationDecision::allocate(*own);
    return AllocationDecision::stall(K::StallOccupied);
  }
  auto free = detail::free_ccus(ccus);
  std::vector<std::size_t> far;
  for (auto i : free)
    if (!ccus[i].has_near) far.push_back(i);
  if (!far.empty()) {
    state.waiting_counter = 0;
    return AllocationDecision::allocate(far[pick(rng, far.size())]);
  }
  if (free.empty()) return AllocationDecision::stall(K::StallAllBusy);
  if (state.waiting_counter < state.sthld) {
    ++state.waiting_counter;
    return AllocationDecision::stall(K::StallWaiting);
  }
  state.waiting_counter = 0;
  return AllocationDecision::allocate(free[pick(rng, free.size())]);
}

// Same collector hardware under traditional management. A warp still keeps
// its values in one collector, so it waits while that one is busy; otherwise
// any free collector is taken at random, and moving away from the old one
// drops its contents.
inline AllocationDecision naive_allocation(WarpId warp, std::span<const CcuView> ccus, Rng& rng) {
  using K = AllocationDecision::Kind;
  if (auto own = detail::owned_ccu(warp, ccus); own && ccus[*own].occupied)
    return AllocationDecision::stall(K::StallOccupied);
  auto free = detail::free_ccus(ccus);
  if (free.empty()) return AllocationDecision::stall(K::StallAllBusy);
  return AllocationDecision::allocate(free[pick(rng, free.size())]);
}

// Plain operand collectors: any free unit, chosen at random.
inline AllocationDecision baseline_allocation(std::span<const CcuView> ccus, Rng& rng) {
  auto free = detail::free_ccus(ccus);
  if (free.empty()) return AllocationDecision::stall(AllocationDecision::Kind::StallAllBusy);
  return AllocationDecision::allocate(free[pick(rng, free.size())]);
}

}  // namespace malekeh
