#pragma once

// Reuse-distance profiling: exact per-occurrence distances, near/far
// binarization, and the majority vote that turns a profile of the first few
// warps into one reuse bit per static operand.
//
// Distance is counted in dynamic instructions of the same warp: 1 means the
// register is used again by the very next instruction. Reads and writes both
// count as uses. Duplicate uses inside one instruction share a distance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <tuple>
#include <vector>

#include "malekeh/trace.hpp"

namespace malekeh {

inline constexpr std::uint64_t kInfiniteDistance = std::numeric_limits<std::uint64_t>::max();
inline constexpr double kDefaultProfileFraction = 0.05;

enum class OperandRole : std::uint8_t { Src, Dst };

inline std::string_view to_string(OperandRole r) { return r == OperandRole::Src ? "SRC" : "DST"; }

struct ReuseRecord {
  WarpId warp_id = 0;
  std::size_t dynamic_index = 0;
  OperandRole role = OperandRole::Src;
  std::uint8_t slot = 0;
  RegId reg = 0;
  std::uint64_t distance = kInfiniteDistance;

  bool infinite() const { return distance == kInfiniteDistance; }
  bool operator==(const ReuseRecord&) const = default;
};

struct ClassifiedRecord {
  ReuseRecord record;
  Reuse verdict = Reuse::Far;
};

// Records come out per warp, per instruction, sources (slot order) first.
inline std::vector<ReuseRecord> exact_reuse_distances(const KernelTrace& trace) {
  std::vector<ReuseRecord> out;
  out.reserve(trace.num_instructions() * 3);
  for (WarpId w = 0; w < trace.warps.size(); ++w) {
    const auto& stream = trace.warps[w];
    // Backward sweep; next_use[r] is the nearest later instruction touching r.
    std::array<std::uint64_t, kNumArchRegisters> next_use;
    next_use.fill(kInfiniteDistance);
    std::vector<std::vector<ReuseRecord>> per_instr(stream.size());
    for (std::size_t i = stream.size(); i-- > 0;) {
      const auto& in = stream[i];
      auto dist = [&](RegId r) { return next_use[r] == kInfiniteDistance ? kInfiniteDistance : next_use[r] - i; };
      auto& recs = per_instr[i];
      for (std::size_t s = 0; s < in.src.size(); ++s)
        recs.push_back({w, i, OperandRole::Src, static_cast<std::uint8_t>(s), in.src[s], dist(in.src[s])});
      for (std::size_t s = 0; s < in.dst.size(); ++s)
        recs.push_back({w, i, OperandRole::Dst, static_cast<std::uint8_t>(s), in.dst[s], dist(in.dst[s])});
      for (RegId r : in.src) next_use[r] = i;
      for (RegId r : in.dst) next_use[r] = i;
    }
    for (auto& recs : per_instr) out.insert(out.end(), recs.begin(), recs.end());
  }
  return out;
}

// NEAR iff distance < rthld; equality and never-reused are FAR.
inline Reuse binarize(std::uint64_t distance, std::uint32_t rthld) {
  return distance < rthld ? Reuse::Near : Reuse::Far;
}

inline std::vector<ClassifiedRecord> binarize(const std::vector<ReuseRecord>& records,
                                              std::uint32_t rthld = kDefaultRthld) {
  if (rthld < 1) throw std::invalid_argument("rthld must be >= 1");
  std::vector<ClassifiedRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r, binarize(r.distance, rthld)});
  return out;
}

struct StaticOperand {
  std::uint32_t static_id = 0;
  OperandRole role = OperandRole::Src;
  std::uint8_t slot = 0;

  auto operator<=>(const StaticOperand&) const = default;
};

struct StaticAnnotation {
  StaticOperand operand;
  Reuse verdict = Reuse::Far;
  std::uint64_t near_count = 0;
  std::uint64_t far_count = 0;

  bool operator==(const StaticAnnotation&) const = default;
};

// Majority verdict; ties go to FAR.
inline Reuse majority(std::uint64_t near_count, std::uint64_t far_count) {
  return near_count > far_count ? Reuse::Near : Reuse::Far;
}

inline std::size_t profiled_warp_count(std::size_t num_warps, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("profiled warp fraction must be in (0, 1]");
  auto n = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(num_warps) - 1e-9));
  return std::clamp<std::size_t>(n, num_warps ? 1 : 0, num_warps);
}

// Profiles the first ceil(fraction * num_warps) warps. Output is sorted by
// (static_id, role, slot).
inline std::vector<StaticAnnotation> majority_annotate(const KernelTrace& trace,
                                                       double profiled_warp_fraction = kDefaultProfileFraction,
                                                       std::uint32_t rthld = kDefaultRthld) {
  KernelTrace profiled;
  profiled.warps.assign(trace.warps.begin(),
                        trace.warps.begin() + static_cast<std::ptrdiff_t>(
                                                  profiled_warp_count(trace.num_warps(), profiled_warp_fraction)));
  std::map<StaticOperand, std::pair<std::uint64_t, std::uint64_t>> counts;
  for (const auto& c : binarize(exact_reuse_distances(profiled), rthld)) {
    const auto& in = profiled.warps[c.record.warp_id][c.record.dynamic_index];
    auto& [near_n, far_n] = counts[{in.static_id, c.record.role, c.record.slot}];
    (c.verdict == Reuse::Near ? near_n : far_n)++;
  }
  std::vector<StaticAnnotation> out;
  out.reserve(counts.size());
  for (const auto& [op, nf] : counts) out.push_back({op, majority(nf.first, nf.second), nf.first, nf.second});
  return out;
}

// Fills every operand's reuse bit from the table; operands missing from it
// are FAR.
inline KernelTrace annotate_trace(const KernelTrace& trace, const std::vector<StaticAnnotation>& annotations) {
  std::map<StaticOperand, Reuse> table;
  for (const auto& a : annotations) table[a.operand] = a.verdict;
  auto lookup = [&](std::uint32_t sid, OperandRole role, std::size_t slot) {
    auto it = table.find({sid, role, static_cast<std::uint8_t>(slot)});
    return it == table.end() ? Reuse::Far : it->second;
  };
  KernelTrace out = trace;
  for (auto& stream : out.warps)
    for (auto& in : stream) {
      std::vector<Reuse> s(in.src.size()), d(in.dst.size());
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = lookup(in.static_id, OperandRole::Src, i);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = lookup(in.static_id, OperandRole::Dst, i);
      in.src_reuse = std::move(s);
      in.dst_reuse = std::move(d);
    }
  return out;
}

// Convenience: profile and annotate in one go.
inline KernelTrace profile_and_annotate(const KernelTrace& trace, double fraction = kDefaultProfileFraction,
                                        std::uint32_t rthld = kDefaultRthld) {
  return annotate_trace(trace, majority_annotate(trace, fraction, rthld));
}

// Distance histogram with buckets 1..10, >10 and never-reused.
struct DistanceHistogram {
  std::array<std::uint64_t, 10> exact{};
  std::uint64_t beyond_ten = 0;
  std::uint64_t infinite = 0;

  std::uint64_t total() const {
    std::uint64_t t = beyond_ten + infinite;
    for (auto c : exact) t += c;
    return t;
  }
};

inline DistanceHistogram distance_histogram(const std::vector<ReuseRecord>& records) {
  DistanceHistogram h;
  for (const auto& r : records) {
    if (r.infinite()) ++h.infinite;
    else if (r.distance > 10) ++h.beyond_ten;
    else if (r.distance >= 1) ++h.exact[r.distance - 1];
  }
  return h;
}

inline void write_histogram_csv(std::ostream& os, const DistanceHistogram& h) {
  os << "bucket,count\n";
  for (std::size_t i = 0; i < h.exact.size(); ++i) os << (i + 1) << ',' << h.exact[i] << '\n';
  os << ">10," << h.beyond_ten << '\n';
  os << "INFINITE," << h.infinite << '\n';
}

inline void write_annotations_csv(std::ostream& os, const std::vector<StaticAnnotation>& annotations) {
  os << "static_id,role,slot,near,far,verdict\n";
  for (const auto& a : annotations)
    os << a.operand.static_id << ',' << to_string(a.operand.role) << ',' << int(a.operand.slot) << ','
       << a.near_count << ',' << a.far_count << ',' << (a.verdict == Reuse::Near ? "NEAR" : "FAR") << '\n';
}

}  // namespace malekeh
