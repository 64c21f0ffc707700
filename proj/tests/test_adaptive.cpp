#include <gtest/gtest.h>

#include "support.hpp"

using namespace malekeh;
using testing_support::drive;

TEST(Classify, RelativeChange) {
  EXPECT_EQ(classify(1.01, 1.0), IpcChange::Small);
  EXPECT_EQ(classify(1.03, 1.0), IpcChange::Large);
  EXPECT_EQ(classify(0.97, 1.0), IpcChange::Large);
  EXPECT_EQ(classify(1.0, 1.0, 0.0), IpcChange::Large);
  EXPECT_EQ(classify(0.0, 0.0), IpcChange::Small);
  EXPECT_EQ(classify(0.5, 0.0), IpcChange::Large);
}

TEST(Fsm, FirstIntervalCountsAsSmall) {
  auto s = interval_step({}, 3.0);
  EXPECT_EQ(s.fsm_state, 1);
  EXPECT_EQ(s.sthld, 1u);
  EXPECT_EQ(s.prev_ipc, 3.0);
}

TEST(Fsm, AscendThenCap) {
  AdaptiveParams p;
  p.cap = 3;
  AdaptiveState s;
  s.prev_ipc = 1.0;
  for (std::uint32_t i = 1; i <= 3; ++i) {
    s = interval_step(s, 1.0, p);
    EXPECT_EQ(s.sthld, i);
    EXPECT_EQ(s.fsm_state, 1);
  }
  s = interval_step(s, 1.0, p);
  EXPECT_EQ(s.fsm_state, 2);
  EXPECT_EQ(s.sthld, 3u);
  s = interval_step(s, 1.0, p);
  EXPECT_EQ(s.fsm_state, 2);
  s = interval_step(s, 0.5, p);
  EXPECT_EQ(s.fsm_state, 1);
}

TEST(Fsm, LargeChangeWhileAscendingProbes) {
  AdaptiveState s{1, 4, 1.0};
  s = interval_step(s, 1.5);
  EXPECT_EQ(s.fsm_state, 3);
  EXPECT_EQ(s.sthld, 5u);
}

TEST(Fsm, ProbeFallBacksOffTwoSteps) {
  AdaptiveState s{3, 5, 1.0};
  s = interval_step(s, 0.8);
  EXPECT_EQ(s.fsm_state, 4);
  EXPECT_EQ(s.sthld, 3u);
  AdaptiveState rose{3, 5, 1.0};
  EXPECT_EQ(interval_step(rose, 1.2).fsm_state, 1);
  EXPECT_EQ(interval_step(rose, 1.0).fsm_state, 1);
}

TEST(Fsm, DescendKeepsGoingWhileIpcRises) {
  AdaptiveState s{4, 3, 0.8};
  s = interval_step(s, 1.0);
  EXPECT_EQ(s.fsm_state, 4);
  EXPECT_EQ(s.sthld, 2u);
  s = interval_step(s, 1.0);
  EXPECT_EQ(s.fsm_state, 5);
  EXPECT_EQ(s.sthld, 3u);
  AdaptiveState floor{4, 0, 0.8};
  floor = interval_step(floor, 1.0);
  EXPECT_EQ(floor.fsm_state, 5);
  EXPECT_EQ(floor.sthld, 0u);
}

TEST(Fsm, SettleThenConverged) {
  AdaptiveState s{5, 6, 1.0};
  s = interval_step(s, 3.0);
  EXPECT_EQ(s.fsm_state, 6);
  EXPECT_EQ(s.sthld, 6u);
  s = interval_step(s, 3.0);
  EXPECT_EQ(s.fsm_state, 6);
  EXPECT_EQ(s.sthld, 6u);
  s = interval_step(s, 1.0);
  EXPECT_EQ(s.fsm_state, 3);
  EXPECT_EQ(s.sthld, 7u);
}

TEST(Fsm, StaysWithinBounds) {
  std::mt19937_64 g(2);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  AdaptiveParams p;
  p.cap = 10;
  p.delta = 3;
  AdaptiveState s;
  for (int i = 0; i < 20000; ++i) {
    s = interval_step(s, u(g), p);
    ASSERT_LE(s.sthld, p.cap);
    ASSERT_GE(s.fsm_state, 1);
    ASSERT_LE(s.fsm_state, 6);
  }
}

TEST(Knee, ConvergesNearKnee) {
  for (int k : {0, 2, 4, 6, 8, 12}) {
    auto path = drive(KneeCurve{k}, 40);
    for (std::size_t i = 20; i < path.size(); ++i) {
      EXPECT_GE(static_cast<int>(path[i]), k - 1) << "knee " << k << " interval " << i;
      EXPECT_LE(static_cast<int>(path[i]), k + 1) << "knee " << k << " interval " << i;
    }
  }
}

TEST(Knee, QuiescesOnFlatCurve) {
  AdaptiveParams p;
  p.cap = 8;
  auto path = drive(KneeCurve{100}, 30, p);
  for (std::size_t i = 10; i < path.size(); ++i) EXPECT_EQ(path[i], 8u);
}

TEST(PhaseShift, FollowsKneeBothWays) {
  for (auto [k1, k2] : {std::pair{6, 2}, std::pair{2, 8}}) {
    auto curve = PhaseShiftCurve::make(k1, k2, 25);
    auto path = drive(curve, 60);
    EXPECT_NEAR(static_cast<int>(path[24]), k1, 1);
    bool settled = false;
    for (std::size_t i = 25; i <= 45 && !settled; ++i) {
      settled = true;
      for (std::size_t j = i; j < path.size(); ++j) settled &= std::abs(static_cast<int>(path[j]) - k2) <= 1;
    }
    EXPECT_TRUE(settled) << k1 << " -> " << k2;
  }
}

TEST(Curves, Oracle) {
  KneeCurve k{4};
  EXPECT_DOUBLE_EQ(k.ipc(0), 1.0);
  EXPECT_DOUBLE_EQ(k.ipc(4), 1.0);
  EXPECT_DOUBLE_EQ(k.ipc(6), 0.8);
  EXPECT_DOUBLE_EQ(k.ipc(100), 0.05);
  auto p = PhaseShiftCurve::make(4, 2, 10);
  EXPECT_DOUBLE_EQ(synthetic_curve_oracle(p, 4, 9), 1.0);
  EXPECT_DOUBLE_EQ(synthetic_curve_oracle(p, 4, 10), 1.25 * 0.8);
}
