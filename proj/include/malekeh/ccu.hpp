#pragma once

// Caching collector units and register-file banks.
//
// A collector gathers the source operands of one instruction. Its cache
// table keeps register values after the instruction leaves, so a later
// instruction of the same warp can find them without a bank read. The
// operand collector table (OCT) points each source slot at a cache entry;
// duplicate source registers share one entry.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "malekeh/cache_table.hpp"
#include "malekeh/policies.hpp"

namespace malekeh {

struct OctSlot {
  bool valid = false;
  bool ready = false;
  std::uint8_t index = 0;

  bool operator==(const OctSlot&) const = default;
};

struct CcuMetadata {
  WarpId warp = 0;
  std::uint32_t static_id = 0;
  OpClass op = OpClass::ALU;
  std::uint32_t exec_latency = 1;
  std::vector<RegId> dst;
  std::vector<Reuse> dst_reuse;
  // Issue order, used for oldest-first decisions.
  std::uint64_t seq = 0;
  // Per source slot: the architectural version the instruction must read.
  std::vector<std::uint64_t> expected_src_versions;
  // Per destination slot: version tokens this instruction will write.
  std::vector<std::uint64_t> dst_versions;
};

struct CcuState {
  CcuMetadata meta;
  CacheTable ct;
  std::vector<OctSlot> oct;
  bool occupied = false;
  // Warp whose registers the cache table holds; kept while the unit is free.
  std::optional<WarpId> owner;

  explicit CcuState(std::size_t ct_entries = 8, std::size_t oct_slots = 6) : ct(ct_entries), oct(oct_slots) {}

  // All valid OCT slots have their data.
  bool ready() const {
    for (const auto& s : oct)
      if (s.valid && !s.ready) return false;
    return true;
  }

  CcuView view() const { return {occupied, owner, ct.has_near()}; }
};

struct ReadRequest {
  WarpId warp = 0;
  RegId reg = 0;
  std::size_t ccu = 0;
  std::uint8_t entry = 0;

  bool operator==(const ReadRequest&) const = default;
};

struct AllocateOptions {
  ReplacementPolicy replacement = ReplacementPolicy::FarFirstLru;
  // false models a plain operand collector: nothing survives between
  // instructions.
  bool retain = true;
  // Registers supplied by an operand-forwarding window instead of the banks;
  // returns the forwarded version.
  std::function<std::optional<std::uint64_t>(RegId)> forward;
};

struct AllocationResult {
  std::vector<ReadRequest> requests;
  std::size_t hits = 0;
  // Distinct source registers.
  std::size_t fetches = 0;
  // Valid entries of another warp were dropped.
  bool flushed = false;
};

// Allocates an instruction to a free collector: flush on owner change,
// metadata update, tag check with replacement on miss, lock and refresh the
// source entries, emit bank reads for misses, fill the OCT.
inline AllocationResult ccu_allocate(CcuState& ccu, std::size_t ccu_id, const TraceInstruction& in,
                                     const AllocateOptions& opts, Rng& rng) {
  if (ccu.occupied) throw EngineError("ccu_allocate: collector is occupied");
  if (in.src.size() > ccu.oct.size()) throw EngineError("ccu_allocate: more sources than OCT slots");
  AllocationResult res;

  if (!opts.retain || ccu.owner != in.warp_id) {
    res.flushed = ccu.owner != in.warp_id && ccu.ct.any_valid();
    ccu.ct.flush();
  }
  ccu.owner = in.warp_id;

  ccu.meta.warp = in.warp_id;
  ccu.meta.static_id = in.static_id;
  ccu.meta.op = in.op;
  ccu.meta.exec_latency = in.latency;
  ccu.meta.dst = in.dst;
  ccu.meta.dst_reuse.assign(in.dst.size(), Reuse::Far);
  for (std::size_t d = 0; d < in.dst.size(); ++d) ccu.meta.dst_reuse[d] = in.dst_hint(d);

  for (auto& s : ccu.oct) s = OctSlot{};
  for (std::size_t s = 0; s < in.src.size(); ++s) {
    RegId reg = in.src[s];
    Reuse hint = in.src_hint(s);
    std::optional<std::size_t> dup;
    for (std::size_t p = 0; p < s; ++p)
      if (in.src[p] == reg) dup = p;

    std::size_t idx;
    bool ready;
    if (dup) {
      idx = ccu.oct[*dup].index;
      ready = ccu.oct[*dup].ready;
      if (hint == Reuse::Near) ccu.ct.entry(idx).reuse = Reuse::Near;
    } else {
      ++res.fetches;
      std::optional<std::uint64_t> fwd = opts.forward ? opts.forward(reg) : std::nullopt;
      if (auto hit = ccu.ct.find(reg)) {
        idx = *hit;
        ready = true;
        ++res.hits;
      } else {
        idx = replacement_select(ccu.ct, opts.replacement, rng);
        if (ccu.ct[idx].lock) throw EngineError("ccu_allocate: replacement chose a locked entry");
        ccu.ct.fill(idx, reg, hint, fwd.value_or(0));
        ready = fwd.has_value();
        if (fwd) ++res.hits;
        else res.requests.push_back({in.warp_id, reg, ccu_id, static_cast<std::uint8_t>(idx)});
      }
      auto& e = ccu.ct.entry(idx);
      e.lock = true;
      e.reuse = hint;
      ccu.ct.touch(idx);
    }
    ccu.oct[s] = {true, ready, static_cast<std::uint8_t>(idx)};
  }
  ccu.occupied = true;
  return res;
}

// Data for cache entry `entry` arrived from a bank: every slot pointing at it
// becomes ready.
inline void ccu_receive_entry(CcuState& ccu, std::size_t entry, std::uint64_t version) {
  bool pending = false;
  for (auto& s : ccu.oct)
    if (s.valid && !s.ready && s.index == entry) {
      s.ready = true;
      pending = true;
    }
  if (!pending) throw EngineError("ccu_receive: no pending slot for the delivered entry");
  ccu.ct.entry(entry).version = version;
}

inline void ccu_receive_source(CcuState& ccu, std::size_t slot, std::uint64_t version) {
  if (slot >= ccu.oct.size() || !ccu.oct[slot].valid || ccu.oct[slot].ready)
    throw EngineError("ccu_receive_source: delivery to an invalid or ready slot");
  ccu_receive_entry(ccu, ccu.oct[slot].index, version);
}

// The instruction leaves for its execution unit. The cache table and owner
// stay; only the locks and the OCT are cleared.
inline void ccu_release(CcuState& ccu) {
  for (auto& s : ccu.oct) {
    if (s.valid) ccu.ct.entry(s.index).lock = false;
    s = OctSlot{};
  }
  ccu.occupied = false;
}

// Writes a result into the cache table (no lock); returns the entry used.
inline std::size_t ccu_write(CcuState& ccu, RegId reg, Reuse reuse, std::uint64_t version, ReplacementPolicy policy,
                             Rng& rng) {
  std::size_t idx;
  if (auto hit = ccu.ct.find(reg)) {
    idx = *hit;
    if (ccu.ct[idx].lock) throw EngineError("ccu_write: result targets a locked source entry");
  } else {
    idx = replacement_select(ccu.ct, policy, rng);
    ccu.ct.fill(idx, reg, reuse, version);
  }
  auto& e = ccu.ct.entry(idx);
  e.reuse = reuse;
  e.version = version;
  ccu.ct.touch(idx);
  return idx;
}

inline bool ccu_invalidate(CcuState& ccu, RegId reg) {
  auto idx = ccu.ct.find(reg);
  if (!idx) return false;
  if (ccu.ct[*idx].lock) throw EngineError("ccu_invalidate: entry is locked");
  ccu.ct.invalidate(*idx);
  return true;
}

// ---------------------------------------------------------------------------
// Write-back into collectors

struct Completion {
  WarpId warp = 0;
  RegId reg = 0;
  Reuse reuse = Reuse::Far;
  std::uint64_t version = 0;
  // Issue order of the producing instruction.
  std::uint64_t seq = 0;
};

enum class WritePolicy : std::uint8_t {
  FilterFar,  // only near results enter the cache
  CacheAll,
  None,  // no write-back port
};

struct WritebackStats {
  std::uint64_t cached = 0;
  std::uint64_t filtered_far = 0;
  std::uint64_t filtered_not_resident = 0;
  std::uint64_t filtered_port = 0;
  std::uint64_t filtered_no_port = 0;

  std::uint64_t filtered() const { return filtered_far + filtered_not_resident + filtered_port + filtered_no_port; }
};

// Every completion also goes to its bank (the caller handles that). Here
// each collector owned by the completing warp accepts the result of at most
// one instruction per cycle (both registers of a pair), oldest first. A
// result that is not written invalidates any stale copy so the cache never
// serves an old value.
inline WritebackStats ccu_writeback(std::span<CcuState> ccus, std::span<const Completion> completions,
                                    WritePolicy policy, ReplacementPolicy replacement, Rng& rng) {
  WritebackStats st;
  std::vector<std::optional<std::uint64_t>> port_used(ccus.size());
  std::vector<std::size_t> order(completions.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return completions[a].seq < completions[b].seq; });

  for (auto i : order) {
    const auto& c = completions[i];
    bool resident = false, cached = false, far = false, busy = false;
    for (std::size_t k = 0; k < ccus.size(); ++k) {
      auto& ccu = ccus[k];
      if (ccu.owner != c.warp) continue;
      resident = true;
      bool eligible = policy == WritePolicy::CacheAll || (policy == WritePolicy::FilterFar && c.reuse == Reuse::Near);
      if (policy == WritePolicy::FilterFar && c.reuse == Reuse::Far) far = true;
      if (eligible && (!port_used[k] || *port_used[k] == c.seq) && !cached) {
        ccu_write(ccu, c.reg, c.reuse, c.version, replacement, rng);
        port_used[k] = c.seq;
        cached = true;
      } else {
        if (eligible) busy = true;
        ccu_invalidate(ccu, c.reg);
      }
    }
    if (cached) ++st.cached;
    else if (policy == WritePolicy::None) ++st.filtered_no_port;
    else if (!resident) ++st.filtered_not_resident;
    else if (far) ++st.filtered_far;
    else if (busy) ++st.filtered_port;
    else ++st.filtered_not_resident;
  }
  return st;
}

// ---------------------------------------------------------------------------
// Register file banks

struct WriteRequest {
  WarpId warp = 0;
  RegId reg = 0;
  std::uint64_t version = 0;

  bool operator==(const WriteRequest&) const = default;
};

struct BankState {
  std::deque<ReadRequest> reads;
  std::deque<WriteRequest> writes;
  std::size_t max_read_depth = 0;

  void enqueue(const ReadRequest& r) {
    reads.push_back(r);
    max_read_depth = std::max(max_read_depth, reads.size());
  }
};

struct BankCycleResult {
  std::vector<ReadRequest> grants;
  std::vector<WriteRequest> writes;
};

inline std::size_t bank_of(WarpId warp, RegId reg, std::size_t num_banks) {
  return (static_cast<std::size_t>(reg) + warp) % num_banks;
}

// One cycle of the single-ported banks. A pending write takes the port;
// otherwise the oldest read is granted if its collector can still accept a
// delivery this cycle. ccu_port_busy tracks those deliveries.
inline BankCycleResult bank_cycle(std::span<BankState> banks, std::vector<bool>& ccu_port_busy) {
  BankCycleResult res;
  for (auto& bank : banks) {
    if (!bank.writes.empty()) {
      res.writes.push_back(bank.writes.front());
      bank.writes.pop_front();
      continue;
    }
    if (bank.reads.empty()) continue;
    const auto& head = bank.reads.front();
    if (head.ccu >= ccu_port_busy.size()) throw EngineError("bank_cycle: request for unknown collector");
    if (ccu_port_busy[head.ccu]) continue;
    ccu_port_busy[head.ccu] = true;
    res.grants.push_back(head);
    bank.reads.pop_front();
  }
  return res;
}

// Collectors to dispatch this cycle: per execution-unit class, the oldest
// ready instruction.
inline std::vector<std::size_t> select_dispatch(std::span<const CcuState> ccus) {
  std::vector<std::size_t> out;
  for (OpClass op : kOpClasses) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < ccus.size(); ++i) {
      const auto& c = ccus[i];
      if (!c.occupied || c.meta.op != op || !c.ready()) continue;
      if (!best || c.meta.seq < ccus[*best].meta.seq) best = i;
    }
    if (best) out.push_back(*best);
  }
  return out;
}

}  // namespace malekeh
