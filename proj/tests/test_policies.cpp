#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "support.hpp"

using namespace malekeh;
using K = AllocationDecision::Kind;

namespace {

// Entry kinds for the exhaustive sweep.
enum class Cell { Invalid, Far, Near, Locked };

CacheTable build(const std::array<Cell, 8>& cells, const std::array<std::uint8_t, 8>& order) {
  CacheTable ct(8);
  // Fill in `order` so the last filled is most recent.
  for (auto i : order) {
    if (cells[i] == Cell::Invalid) continue;
    ct.fill(i, static_cast<RegId>(i + 1), cells[i] == Cell::Near ? Reuse::Near : Reuse::Far, 0);
    if (cells[i] == Cell::Locked) ct.entry(i).lock = true;
  }
  return ct;
}

// Allowed victims, written straight from the rule: an invalid entry, else
// any unlocked FAR entry, else the least recently used unlocked entry.
std::set<std::size_t> allowed_victims(const CacheTable& ct) {
  std::set<std::size_t> inv, far;
  for (std::size_t i = 0; i < ct.size(); ++i) {
    if (!ct[i].valid) inv.insert(i);
    else if (!ct[i].lock && ct[i].reuse == Reuse::Far) far.insert(i);
  }
  if (!inv.empty()) return inv;
  if (!far.empty()) return far;
  std::size_t best = ct.size();
  for (std::size_t i = 0; i < ct.size(); ++i)
    if (!ct[i].lock && (best == ct.size() || ct[i].lru_rank > ct[best].lru_rank)) best = i;
  if (best == ct.size()) return {};
  return {best};
}

std::vector<CcuView> views(std::initializer_list<CcuView> v) { return v; }

}  // namespace

TEST(Replacement, ExhaustiveAgainstRule) {
  Rng rng(1);
  std::mt19937_64 shuffle(2);
  std::size_t configs = 1;
  for (int i = 0; i < 8; ++i) configs *= 4;
  for (std::size_t code = 0; code < configs; ++code) {
    std::array<Cell, 8> cells{};
    for (std::size_t i = 0, c = code; i < 8; ++i, c /= 4) cells[i] = static_cast<Cell>(c % 4);
    std::array<std::uint8_t, 8> order{};
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle);
    auto ct = build(cells, order);
    ASSERT_TRUE(ct.consistent());
    auto allowed = allowed_victims(ct);
    if (allowed.empty()) {
      EXPECT_THROW(replacement_select(ct, ReplacementPolicy::FarFirstLru, rng), EngineError);
      continue;
    }
    auto v = replacement_select(ct, ReplacementPolicy::FarFirstLru, rng);
    ASSERT_TRUE(allowed.count(v)) << "config " << code << " picked " << v;
    EXPECT_FALSE(ct[v].lock);
  }
}

TEST(Replacement, RandomFarCoversEveryCandidate) {
  CacheTable ct(8);
  for (std::size_t i = 0; i < 8; ++i) ct.fill(i, static_cast<RegId>(i), i % 2 ? Reuse::Far : Reuse::Near, 0);
  Rng rng(9);
  std::set<std::size_t> seen;
  for (int k = 0; k < 200; ++k) seen.insert(replacement_select(ct, ReplacementPolicy::FarFirstLru, rng));
  EXPECT_EQ(seen, (std::set<std::size_t>{1, 3, 5, 7}));
}

TEST(Replacement, AllNearFallsBackToLru) {
  CacheTable ct(8);
  for (std::size_t i = 0; i < 8; ++i) ct.fill(i, static_cast<RegId>(i), Reuse::Near, 0);
  ct.touch(0);
  Rng rng(1);
  EXPECT_EQ(replacement_select(ct, ReplacementPolicy::FarFirstLru, rng), 1u);
  ct.entry(1).lock = true;
  EXPECT_EQ(replacement_select(ct, ReplacementPolicy::FarFirstLru, rng), 2u);
}

TEST(Replacement, LockedFarIsSkipped) {
  CacheTable ct(8);
  for (std::size_t i = 0; i < 8; ++i) ct.fill(i, static_cast<RegId>(i), Reuse::Near, 0);
  ct.entry(4).reuse = Reuse::Far;
  ct.entry(4).lock = true;
  Rng rng(1);
  EXPECT_EQ(replacement_select(ct, ReplacementPolicy::FarFirstLru, rng), 0u);
}

TEST(Replacement, PlainLruIgnoresHints) {
  CacheTable ct(4);
  for (std::size_t i = 0; i < 4; ++i) ct.fill(i, static_cast<RegId>(i), i == 2 ? Reuse::Far : Reuse::Near, 0);
  Rng rng(1);
  EXPECT_EQ(replacement_select(ct, ReplacementPolicy::Lru, rng), 0u);
  ct.invalidate(3);
  EXPECT_EQ(replacement_select(ct, ReplacementPolicy::Lru, rng), 3u);
}

TEST(CacheTableLru, RanksStayConsistent) {
  std::mt19937_64 g(4);
  CacheTable ct(8);
  for (int step = 0; step < 5000; ++step) {
    std::size_t i = g() % 8;
    switch (g() % 3) {
      case 0: ct.fill(i, static_cast<RegId>(g() % 64 + 100 * i), Reuse::Far, 0); break;
      case 1:
        if (ct[i].valid) ct.touch(i);
        break;
      case 2: ct.invalidate(i); break;
    }
    ASSERT_TRUE(ct.consistent());
  }
}

TEST(Priority, GtoKeepsLastIssuedFirst) {
  SchedulerState s;
  std::vector<WarpId> ready{5, 2, 7};
  EXPECT_EQ(gto_priority(ready, s), (std::vector<WarpId>{2, 5, 7}));
  s.last_issued = 7;
  EXPECT_EQ(gto_priority(ready, s), (std::vector<WarpId>{7, 2, 5}));
  s.last_issued = 3;
  EXPECT_EQ(gto_priority(ready, s), (std::vector<WarpId>{2, 5, 7}));
}

TEST(Priority, OwnersBeforeOthers) {
  SchedulerState s;
  s.last_issued = 9;
  auto ccus = views({{false, 4, true}, {true, 6, false}, {false, std::nullopt, false}});
  std::vector<WarpId> ready{1, 6, 4, 9, 2};
  EXPECT_EQ(malekeh_priority(ready, ccus, s), (std::vector<WarpId>{9, 4, 6, 1, 2}));
}

TEST(Priority, IsAPermutation) {
  std::mt19937_64 g(8);
  for (int i = 0; i < 200; ++i) {
    std::vector<WarpId> ready;
    for (WarpId w = 0; w < 16; ++w)
      if (g() % 2) ready.push_back(w);
    std::vector<CcuView> ccus;
    for (int c = 0; c < 4; ++c) ccus.push_back({g() % 2 == 0, static_cast<WarpId>(g() % 16), g() % 2 == 0});
    SchedulerState s;
    if (g() % 2) s.last_issued = static_cast<WarpId>(g() % 16);
    for (auto order : {malekeh_priority(ready, ccus, s), gto_priority(ready, s)}) {
      auto a = order, b = ready;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      EXPECT_EQ(a, b);
    }
  }
}

TEST(Allocation, OwnedCollectorIsReused) {
  SchedulerState s;
  Rng rng(1);
  auto ccus = views({{false, 3, true}, {false, std::nullopt, false}});
  EXPECT_EQ(ccu_allocation(3, ccus, s, rng), AllocationDecision::allocate(0));
}

TEST(Allocation, OwnedButOccupiedStalls) {
  SchedulerState s;
  Rng rng(1);
  auto ccus = views({{true, 3, true}, {false, std::nullopt, false}});
  EXPECT_EQ(ccu_allocation(3, ccus, s, rng).kind, K::StallOccupied);
}

TEST(Allocation, PrefersCollectorsWithoutNearValues) {
  SchedulerState s;
  s.sthld = 5;
  Rng rng(1);
  auto ccus = views({{false, 1, true}, {false, 2, false}, {true, 4, false}});
  for (int i = 0; i < 20; ++i) EXPECT_EQ(ccu_allocation(7, ccus, s, rng), AllocationDecision::allocate(1));
  EXPECT_EQ(s.waiting_counter, 0u);
}

TEST(Allocation, AllBusyStalls) {
  SchedulerState s;
  Rng rng(1);
  auto ccus = views({{true, 1, true}, {true, 2, false}});
  EXPECT_EQ(ccu_allocation(7, ccus, s, rng).kind, K::StallAllBusy);
}

TEST(Allocation, WaitsSthldTimesThenTakesNearCollector) {
  SchedulerState s;
  s.sthld = 3;
  Rng rng(1);
  auto ccus = views({{false, 1, true}, {true, 2, false}});
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(ccu_allocation(7, ccus, s, rng).kind, K::StallWaiting);
    EXPECT_EQ(s.waiting_counter, static_cast<std::uint32_t>(i + 1));
  }
  EXPECT_EQ(ccu_allocation(7, ccus, s, rng), AllocationDecision::allocate(0));
  EXPECT_EQ(s.waiting_counter, 0u);
}

TEST(Allocation, ZeroThresholdNeverWaits) {
  std::mt19937_64 g(6);
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    SchedulerState s;
    std::vector<CcuView> ccus;
    for (int c = 0; c < 4; ++c) {
      CcuView v{g() % 2 == 0, std::nullopt, g() % 2 == 0};
      if (g() % 2) v.owner = static_cast<WarpId>(g() % 8);
      ccus.push_back(v);
    }
    auto d = ccu_allocation(static_cast<WarpId>(g() % 8), ccus, s, rng);
    EXPECT_NE(d.kind, K::StallWaiting);
    if (d.allocated()) EXPECT_FALSE(ccus[d.ccu].occupied);
  }
}

TEST(Allocation, NaiveIgnoresHints) {
  Rng rng(1);
  auto ccus = views({{false, 1, true}, {true, 2, false}});
  EXPECT_EQ(naive_allocation(7, ccus, rng), AllocationDecision::allocate(0));
  EXPECT_EQ(naive_allocation(2, ccus, rng).kind, K::StallOccupied);
  EXPECT_EQ(naive_allocation(1, ccus, rng), AllocationDecision::allocate(0));
  auto busy = views({{true, 1, true}, {true, 2, false}});
  EXPECT_EQ(naive_allocation(5, busy, rng).kind, K::StallAllBusy);
}

TEST(Allocation, BaselineTakesAnyFree) {
  Rng rng(3);
  auto ccus = views({{true, 1, true}, {false, 2, true}, {false, std::nullopt, false}});
  std::set<std::size_t> seen;
  for (int i = 0; i < 100; ++i) {
    auto d = baseline_allocation(ccus, rng);
    ASSERT_TRUE(d.allocated());
    seen.insert(d.ccu);
  }
  EXPECT_EQ(seen, (std::set<std::size_t>{1, 2}));
}
