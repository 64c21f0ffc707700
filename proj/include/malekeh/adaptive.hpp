#pragma once

// Interval controller for the allocation-wait threshold (STHLD).
//
// At every interval boundary the IPC of the interval just finished is
// compared with the previous one. A relative change below small_threshold is
// Small, anything else Large. A six-state machine walks the threshold up the
// flat part of the IPC-vs-threshold curve, backs off once IPC falls, and
// parks at the knee until IPC moves again.
//
//   1 ascend    S: +d (at cap -> 2)          L: +d -> 3
//   2 capped    S: stay                      L: -> 1
//   3 probe     L and IPC fell: -2d -> 4     otherwise -> 1
//   4 descend   L and IPC rose: -d (if >= 0, else -> 5)
//               S: +d -> 5                   L and IPC fell: +d -> 5
//   5 settle    any: -> 6
//   6 converged S: stay                      L: +d -> 3

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <type_traits>
#include <variant>

namespace malekeh {

enum class IpcChange : std::uint8_t { Small, Large };

inline constexpr double kIpcEpsilon = 1e-9;

inline IpcChange classify(double ipc_now, double ipc_prev, double small_threshold = 0.02) {
  double rel = std::abs(ipc_now - ipc_prev) / std::max(ipc_prev, kIpcEpsilon);
  return rel < small_threshold ? IpcChange::Small : IpcChange::Large;
}

struct AdaptiveParams {
  std::uint32_t delta = 1;
  double small_threshold = 0.02;
  std::uint32_t cap = 64;
};

struct AdaptiveState {
  int fsm_state = 1;
  std::uint32_t sthld = 0;
  // IPC of the previous interval; empty before the first boundary.
  std::optional<double> prev_ipc;

  bool operator==(const AdaptiveState&) const = default;
};

inline AdaptiveState interval_step(const AdaptiveState& s, double ipc_now, const AdaptiveParams& p = {}) {
  AdaptiveState n = s;
  n.prev_ipc = ipc_now;
  // The first interval has nothing to compare against.
  bool large = s.prev_ipc && classify(ipc_now, *s.prev_ipc, p.small_threshold) == IpcChange::Large;
  bool fell = s.prev_ipc && ipc_now < *s.prev_ipc;
  auto d = static_cast<std::int64_t>(p.delta);
  std::int64_t t = s.sthld;
  auto set = [&](std::int64_t v) { n.sthld = static_cast<std::uint32_t>(std::clamp<std::int64_t>(v, 0, p.cap)); };

  switch (s.fsm_state) {
    case 1:
      if (large) {
        set(t + d);
        n.fsm_state = 3;
      } else if (t >= p.cap) {
        n.fsm_state = 2;
      } else {
        set(t + d);
      }
      break;
    case 2:
      if (large) n.fsm_state = 1;
      break;
    case 3:
      if (large && fell) {
        set(t - 2 * d);
        n.fsm_state = 4;
      } else {
        n.fsm_state = 1;
      }
      break;
    case 4:
      if (large && !fell) {
        if (t - d < 0) n.fsm_state = 5;
        else set(t - d);
      } else {
        set(t + d);
        n.fsm_state = 5;
      }
      break;
    case 5:
      n.fsm_state = 6;
      break;
    case 6:
      if (large) {
        set(t + d);
        n.fsm_state = 3;
      }
      break;
    default:
      n.fsm_state = 1;
      break;
  }
  return n;
}

// ---------------------------------------------------------------------------
// Synthetic IPC-vs-threshold curves used to exercise the controller.

// Flat at `plateau` up to the knee, then falling by `slope * plateau` per
// step, never below `floor * plateau`.
struct KneeCurve {
  int knee = 0;
  double plateau = 1.0;
  double slope = 0.1;
  double floor = 0.05;

  double ipc(std::uint32_t sthld) const {
    double over = std::max(0.0, static_cast<double>(sthld) - knee);
    return plateau * std::max(floor, 1.0 - slope * over);
  }
};

// Switches from `before` to `after` at interval `shift_at`. A program phase
// change also moves the IPC level, which is what makes the switch visible.
struct PhaseShiftCurve {
  KneeCurve before;
  KneeCurve after;
  std::size_t shift_at = 0;

  static PhaseShiftCurve make(int k1, int k2, std::size_t t, double level_ratio = 1.25) {
    PhaseShiftCurve c;
    c.before.knee = k1;
    c.after.knee = k2;
    c.after.plateau = c.before.plateau * level_ratio;
    c.shift_at = t;
    return c;
  }

  double ipc(std::uint32_t sthld, std::size_t interval) const {
    return (interval < shift_at ? before : after).ipc(sthld);
  }
};

using SyntheticCurve = std::variant<KneeCurve, PhaseShiftCurve>;

inline double synthetic_curve_oracle(const SyntheticCurve& curve, std::uint32_t sthld, std::size_t interval) {
  return std::visit(
      [&](const auto& c) {
        if constexpr (std::is_same_v<std::decay_t<decltype(c)>, KneeCurve>) return c.ipc(sthld);
        else return c.ipc(sthld, interval);
      },
      curve);
}

}  // namespace malekeh
