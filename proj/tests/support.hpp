#pragma once

// Independent reference implementations used as oracles by the tests, plus
// small trace-building helpers.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "malekeh/malekeh.hpp"

namespace testing_support {

using namespace malekeh;

// For each operand occurrence, walk forward through the warp until some
// later instruction touches the register. Quadratic on purpose.
inline std::vector<std::uint64_t> brute_force_distances(const KernelTrace& t) {
  std::vector<std::uint64_t> out;
  for (const auto& stream : t.warps)
    for (std::size_t i = 0; i < stream.size(); ++i) {
      auto scan = [&](RegId r) {
        for (std::size_t j = i + 1; j < stream.size(); ++j) {
          const auto& n = stream[j];
          for (RegId x : n.src)
            if (x == r) return static_cast<std::uint64_t>(j - i);
          for (RegId x : n.dst)
            if (x == r) return static_cast<std::uint64_t>(j - i);
        }
        return kInfiniteDistance;
      };
      for (RegId r : stream[i].src) out.push_back(scan(r));
      for (RegId r : stream[i].dst) out.push_back(scan(r));
    }
  return out;
}

// Arbitrary valid trace: random op mix, register ids anywhere in [0, regs).
inline KernelTrace random_trace(std::mt19937_64& g, std::size_t max_warps, std::size_t max_instrs,
                                RegId regs = 32) {
  KernelTrace t;
  std::size_t warps = 1 + g() % max_warps;
  t.warps.resize(warps);
  for (WarpId w = 0; w < warps; ++w) {
    std::size_t n = g() % (max_instrs + 1);
    if (w + 1 == warps && n == 0) n = 1;  // a trailing empty warp has no text form
    for (std::size_t i = 0; i < n; ++i) {
      TraceInstruction in;
      in.warp_id = w;
      in.static_id = static_cast<std::uint32_t>(i);
      in.op = kOpClasses[g() % kOpClasses.size()];
      in.latency = 1 + static_cast<std::uint32_t>(g() % 20);
      std::size_t ns = g() % (kMaxSources + 1), nd = g() % (kMaxDestinations + 1);
      for (std::size_t k = 0; k < ns; ++k) in.src.push_back(static_cast<RegId>(g() % regs));
      for (std::size_t k = 0; k < nd; ++k) in.dst.push_back(static_cast<RegId>(g() % regs));
      t.warps[w].push_back(std::move(in));
    }
  }
  return t;
}

inline TraceInstruction instr(std::string_view text) { return parse_instruction(text); }

inline SimConfig tiny_config(Mode mode, std::uint32_t warps = 1) {
  SimConfig c;
  c.mode = mode;
  c.num_sms = 1;
  c.subcores_per_sm = 1;
  c.warps_per_sm = warps;
  c.sthld_mode = SthldMode::Static;
  c.sthld = 0;
  return c;
}

// Feeds the controller `intervals` IPC samples from a synthetic curve and
// returns the threshold in force after each boundary.
inline std::vector<std::uint32_t> drive(const SyntheticCurve& curve, std::size_t intervals,
                                        AdaptiveParams p = {}, AdaptiveState s = {}) {
  std::vector<std::uint32_t> out;
  for (std::size_t i = 0; i < intervals; ++i) {
    s = interval_step(s, synthetic_curve_oracle(curve, s.sthld, i), p);
    out.push_back(s.sthld);
  }
  return out;
}

}  // namespace testing_support
