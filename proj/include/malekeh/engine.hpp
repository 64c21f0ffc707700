#pragma once

// Cycle-level model of the operand path: issue, collector allocation, bank
// arbitration, dispatch, execution and write-back for every sub-core of the
// GPU, plus the interval controller for the wait threshold.
//
// Per cycle and sub-core the stages run in this order: write-back, bank
// arbitration (grants are delivered in the same cycle), dispatch, issue.
// Requests made at issue are first eligible for a bank in the next cycle.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "malekeh/adaptive.hpp"
#include "malekeh/ccu.hpp"
#include "malekeh/config.hpp"
#include "malekeh/metrics.hpp"
#include "malekeh/policies.hpp"
#include "malekeh/trace.hpp"

namespace malekeh {

// The run made no progress for too long.
class SimulationAbort : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct InstrEvent {
  WarpId warp = 0;
  std::size_t index = 0;
  std::uint64_t seq = 0;
  std::size_t ccu = 0;
  std::uint64_t issue = 0;
  std::uint64_t dispatch = 0;
  std::uint64_t complete = 0;
  std::size_t hits = 0;
  std::size_t bank_reads = 0;
};

struct WarpLocation {
  std::uint32_t sm = 0;
  std::uint32_t subcore = 0;
  // Position among the warps of its sub-core.
  std::uint32_t slot = 0;
};

inline WarpLocation locate_warp(WarpId w, const SimConfig& c) {
  WarpLocation loc;
  loc.sm = w / c.warps_per_sm;
  if (loc.sm >= c.num_sms)
    throw ConfigError("warp " + std::to_string(w) + " does not fit on " + std::to_string(c.num_sms) + " SMs of " +
                      std::to_string(c.warps_per_sm) + " warps");
  std::uint32_t local = w % c.warps_per_sm;
  loc.subcore = local % c.subcores_per_sm;
  loc.slot = local / c.subcores_per_sm;
  return loc;
}

inline std::uint32_t effective_latency(const TraceInstruction& in, const SimConfig& c) {
  if (in.op == OpClass::MEM && c.mem_latency > 0) return c.mem_latency;
  return std::max<std::uint32_t>(1, in.latency);
}

class Simulator {
 public:
  Simulator(const KernelTrace& trace, SimConfig config) : trace_(trace), cfg_(std::move(config)), rng_(cfg_.seed) {
    cfg_.validate();
    if (auto v = validate(trace_); !v.empty())
      throw TraceError(0, "warp " + std::to_string(v.front().warp) + " instruction " +
                              std::to_string(v.front().index) + ": " + v.front().rule);
    if (requires_annotations(cfg_.mode) && !trace_.annotated())
      throw ConfigError("mode " + std::string(to_string(cfg_.mode)) +
                        " needs reuse annotations; profile the trace first");
    build();
  }

  MetricsReport run(const std::string& trace_id = {}) {
    std::uint64_t idle = 0;
    std::uint64_t limit = 10 * std::max<std::uint64_t>(max_latency_, 1) + 10;
    std::uint64_t interval_issued = 0;
    if (finished()) return finalize(c_, cfg_, trace_id);
    for (cycle_ = 0;; ++cycle_) {
      progress_ = false;
      std::uint64_t issued_before = c_.instructions;
      for (std::size_t s = 0; s < subcores_.size(); ++s) writeback_stage(s);
      for (std::size_t s = 0; s < subcores_.size(); ++s) bank_stage(s);
      for (std::size_t s = 0; s < subcores_.size(); ++s) dispatch_stage(s);
      for (std::size_t s = 0; s < subcores_.size(); ++s) issue_stage(s);
      interval_issued += c_.instructions - issued_before;
      if (adaptive_enabled() && (cycle_ + 1) % cfg_.interval == 0) {
        adaptive_boundary(static_cast<double>(interval_issued) / cfg_.interval);
        interval_issued = 0;
      }
      if (finished()) break;
      idle = progress_ ? 0 : idle + 1;
      if (idle > limit)
        throw SimulationAbort("no progress for " + std::to_string(idle) + " cycles at cycle " +
                              std::to_string(cycle_));
    }
    c_.cycles = cycle_ + 1;
    final_audit();
    return finalize(c_, cfg_, trace_id);
  }

  const std::vector<InstrEvent>& timeline() const { return timeline_; }
  const SimConfig& config() const { return cfg_; }

 private:
  struct Executing {
    std::uint64_t complete = 0;
    std::uint64_t seq = 0;
    WarpId warp = 0;
    std::vector<RegId> dst;
    std::vector<Reuse> dst_reuse;
    std::vector<std::uint64_t> versions;
    std::size_t event = 0;
  };

  struct WindowEntry {
    std::uint64_t seq = 0;
    std::vector<RegId> regs;
  };

  struct WarpState {
    WarpLocation loc;
    std::size_t subcore = 0;
    std::size_t pc = 0;
    std::size_t in_flight = 0;
    bool retired = false;
    std::deque<WindowEntry> window;
  };

  struct SubCore {
    std::vector<WarpId> warps;
    std::vector<CcuState> ccus;
    std::vector<BankState> banks;
    std::vector<std::size_t> ccu_event;
    SchedulerState sched;
    std::vector<Executing> executing;
    std::vector<WarpId> active;
  };

  void build() {
    std::size_t nsub = static_cast<std::size_t>(cfg_.num_sms) * cfg_.subcores_per_sm;
    std::size_t nccu = cfg_.effective_ccus();
    if (cfg_.mode == Mode::Bow)
      nccu = (cfg_.warps_per_sm + cfg_.subcores_per_sm - 1) / cfg_.subcores_per_sm;
    subcores_.resize(nsub);
    for (auto& sc : subcores_) {
      sc.ccus.assign(nccu, CcuState(cfg_.ct_entries, cfg_.oct_slots));
      sc.ccu_event.assign(nccu, 0);
      sc.banks.resize(cfg_.banks_per_subcore);
      sc.sched.sthld = cfg_.sthld;
    }
    warps_.resize(trace_.num_warps());
    for (WarpId w = 0; w < trace_.num_warps(); ++w) {
      auto& ws = warps_[w];
      ws.loc = locate_warp(w, cfg_);
      ws.subcore = static_cast<std::size_t>(ws.loc.sm) * cfg_.subcores_per_sm + ws.loc.subcore;
      ws.retired = trace_.warps[w].empty();
      if (!ws.retired) subcores_[ws.subcore].warps.push_back(w);
      for (const auto& in : trace_.warps[w]) max_latency_ = std::max<std::uint64_t>(max_latency_, effective_latency(in, cfg_));
    }
    if (cfg_.mode == Mode::TwoLevel)
      for (auto& sc : subcores_)
        for (WarpId w : sc.warps)
          if (sc.active.size() < cfg_.active_set_size) sc.active.push_back(w);
    std::size_t regs = trace_.num_warps() * kNumArchRegisters;
    pending_writes_.assign(regs, 0);
    pending_reads_.assign(regs, 0);
    expected_.assign(regs, 0);
    bank_version_.assign(regs, 0);
    adaptive_.sthld = cfg_.sthld;
  }

  std::size_t key(WarpId w, RegId r) const { return static_cast<std::size_t>(w) * kNumArchRegisters + r; }

  bool adaptive_enabled() const {
    return cfg_.sthld_mode == SthldMode::Dynamic &&
           (cfg_.mode == Mode::Malekeh || cfg_.mode == Mode::MalekehPrivate);
  }

  ReplacementPolicy replacement() const {
    return cfg_.mode == Mode::Malekeh || cfg_.mode == Mode::MalekehPrivate ? ReplacementPolicy::FarFirstLru
                                                                          : ReplacementPolicy::Lru;
  }

  WritePolicy write_policy() const {
    switch (cfg_.mode) {
      case Mode::Malekeh:
      case Mode::MalekehPrivate: return WritePolicy::FilterFar;
      case Mode::NaiveGtoLru: return WritePolicy::CacheAll;
      default: return WritePolicy::None;
    }
  }

  bool finished() const {
    for (const auto& w : warps_)
      if (!w.retired) return false;
    for (const auto& sc : subcores_)
      for (const auto& b : sc.banks)
        if (!b.writes.empty() || !b.reads.empty()) return false;
    return true;
  }

  bool has_work(WarpId w) const { return warps_[w].pc < trace_.warps[w].size(); }

  bool warp_ready(WarpId w) const {
    if (!has_work(w)) return false;
    const auto& in = trace_.warps[w][warps_[w].pc];
    for (RegId r : in.src)
      if (pending_writes_[key(w, r)]) return false;
    for (RegId r : in.dst)
      if (pending_writes_[key(w, r)] || pending_reads_[key(w, r)]) return false;
    return true;
  }

  // --- write-back ----------------------------------------------------------

  void writeback_stage(std::size_t s) {
    auto& sc = subcores_[s];
    std::vector<Executing> done;
    auto it = std::partition(sc.executing.begin(), sc.executing.end(),
                             [&](const Executing& e) { return e.complete > cycle_; });
    done.assign(std::make_move_iterator(it), std::make_move_iterator(sc.executing.end()));
    sc.executing.erase(it, sc.executing.end());
    if (done.empty()) return;
    std::sort(done.begin(), done.end(), [](const Executing& a, const Executing& b) { return a.seq < b.seq; });
    progress_ = true;

    std::vector<Completion> completions;
    for (const auto& e : done) {
      for (std::size_t d = 0; d < e.dst.size(); ++d) {
        completions.push_back({e.warp, e.dst[d], e.dst_reuse[d], e.versions[d], e.seq});
        auto& bank = sc.banks[bank_of(e.warp, e.dst[d], sc.banks.size())];
        bank.writes.push_back({e.warp, e.dst[d], e.versions[d]});
      }
      c_.dst_completions += e.dst.size();
    }

    if (cfg_.mode == Mode::Bow) {
      for (const auto& cp : completions) {
        const auto& win = warps_[cp.warp].window;
        bool in_window = std::any_of(win.begin(), win.end(), [&](const WindowEntry& x) { return x.seq == cp.seq; });
        if (in_window) ++c_.writes.cached;
        else ++c_.writes.filtered_not_resident;
      }
    } else {
      auto st = ccu_writeback(sc.ccus, completions, write_policy(), replacement(), rng_);
      c_.writes.cached += st.cached;
      c_.writes.filtered_far += st.filtered_far;
      c_.writes.filtered_not_resident += st.filtered_not_resident;
      c_.writes.filtered_port += st.filtered_port;
      c_.writes.filtered_no_port += st.filtered_no_port;
      for (const auto& ccu : sc.ccus)
        if (!ccu.ct.consistent()) ++c_.audit.ct_state;
    }

    for (const auto& e : done) {
      auto& ws = warps_[e.warp];
      --ws.in_flight;
      if (!has_work(e.warp) && ws.in_flight == 0) retire(e.warp);
    }
  }

  void retire(WarpId w) {
    auto& ws = warps_[w];
    ws.retired = true;
    ws.window.clear();
    for (auto& ccu : subcores_[ws.subcore].ccus)
      if (ccu.owner == w && !ccu.occupied) {
        ccu.ct.flush();
        ccu.owner.reset();
      }
  }

  // --- banks ---------------------------------------------------------------

  void bank_stage(std::size_t s) {
    auto& sc = subcores_[s];
    std::vector<bool> port(sc.ccus.size(), false);
    auto res = bank_cycle(sc.banks, port);
    for (const auto& w : res.writes) {
      bank_version_[key(w.warp, w.reg)] = w.version;
      --pending_writes_[key(w.warp, w.reg)];
      ++c_.bank_writes;
      progress_ = true;
    }
    std::vector<int> delivered(sc.ccus.size(), 0);
    for (const auto& g : res.grants) {
      if (++delivered[g.ccu] > 1) ++c_.audit.port;
      ccu_receive_entry(sc.ccus[g.ccu], g.entry, bank_version_[key(g.warp, g.reg)]);
      ++c_.bank_reads;
      ++c_.crossbar_transfers;
      progress_ = true;
    }
  }

  // --- dispatch ------------------------------------------------------------

  void dispatch_stage(std::size_t s) {
    auto& sc = subcores_[s];
    for (std::size_t k : select_dispatch(sc.ccus)) {
      auto& ccu = sc.ccus[k];
      const auto& m = ccu.meta;
      for (std::size_t slot = 0; slot < ccu.oct.size(); ++slot) {
        const auto& o = ccu.oct[slot];
        if (!o.valid) continue;
        if (ccu.ct[o.index].version != m.expected_src_versions.at(slot)) ++c_.audit.stale_read;
      }
      const auto& in = trace_.warps[m.warp][timeline_[sc.ccu_event[k]].index];
      std::vector<RegId> distinct;
      for (RegId r : in.src)
        if (std::find(distinct.begin(), distinct.end(), r) == distinct.end()) distinct.push_back(r);
      for (RegId r : distinct) --pending_reads_[key(m.warp, r)];

      Executing e;
      e.complete = cycle_ + m.exec_latency;
      e.seq = m.seq;
      e.warp = m.warp;
      e.dst = m.dst;
      e.dst_reuse = m.dst_reuse;
      e.versions = m.dst_versions;
      e.event = sc.ccu_event[k];
      timeline_[e.event].dispatch = cycle_;
      timeline_[e.event].complete = e.complete;
      sc.executing.push_back(std::move(e));
      ccu_release(ccu);
      progress_ = true;
    }
  }

  // --- issue ---------------------------------------------------------------

  std::vector<CcuView> views(const SubCore& sc) const {
    std::vector<CcuView> v;
    v.reserve(sc.ccus.size());
    for (const auto& c : sc.ccus) v.push_back(c.view());
    return v;
  }

  AllocationDecision decide(SubCore& sc, WarpId w, std::span<const CcuView> v) {
    using K = AllocationDecision::Kind;
    switch (cfg_.mode) {
      case Mode::Malekeh:
      case Mode::MalekehPrivate: return ccu_allocation(w, v, sc.sched, rng_);
      case Mode::NaiveGtoLru: return naive_allocation(w, v, rng_);
      case Mode::Bow: {
        std::size_t k = warps_[w].loc.slot;
        if (sc.ccus.at(k).occupied) return AllocationDecision::stall(K::StallOccupied);
        return AllocationDecision::allocate(k);
      }
      case Mode::BaselineOcu:
      case Mode::TwoLevel: return baseline_allocation(v, rng_);
    }
    return AllocationDecision::stall(K::StallAllBusy);
  }

  void issue_stage(std::size_t s) {
    auto& sc = subcores_[s];
    bool any_work = std::any_of(sc.warps.begin(), sc.warps.end(), [&](WarpId w) { return has_work(w); });
    if (!any_work) return;
    bool two_level = cfg_.mode == Mode::TwoLevel;
    if (two_level) refill_active(sc);

    std::vector<WarpId> ready;
    for (WarpId w : two_level ? sc.active : sc.warps)
      if (warp_ready(w)) ready.push_back(w);

    std::optional<AllocationDecision::Kind> stall;
    bool issued = false;
    if (!ready.empty()) {
      auto v = views(sc);
      bool reuse_aware = cfg_.mode == Mode::Malekeh || cfg_.mode == Mode::MalekehPrivate;
      auto order = reuse_aware ? malekeh_priority(ready, v, sc.sched) : gto_priority(ready, sc.sched);
      for (WarpId w : order) {
        auto d = decide(sc, w, v);
        if (d.allocated()) {
          issue(sc, w, d.ccu);
          issued = true;
          break;
        }
        if (!stall) stall = d.kind;
        if (d.kind == AllocationDecision::Kind::StallWaiting) progress_ = true;
        if (d.kind != AllocationDecision::Kind::StallOccupied) break;
      }
    }
    if (!issued) {
      if (ready.empty()) ++c_.stalls.no_ready_warp;
      else if (*stall == AllocationDecision::Kind::StallOccupied) ++c_.stalls.occupied;
      else if (*stall == AllocationDecision::Kind::StallWaiting) ++c_.stalls.waiting;
      else ++c_.stalls.all_busy;
    }
    if (two_level) {
      if (issued) ++c_.issue_states.issued;
      else if (std::any_of(sc.warps.begin(), sc.warps.end(), [&](WarpId w) {
                 return warp_ready(w) && std::find(sc.active.begin(), sc.active.end(), w) == sc.active.end();
               }))
        ++c_.issue_states.pending_ready;
      else ++c_.issue_states.idle;
      refill_active(sc);
    }
  }

  // Drops finished warps and fills free places with the oldest ready warps
  // from the pending set.
  void refill_active(SubCore& sc) {
    std::erase_if(sc.active, [&](WarpId w) { return !has_work(w); });
    for (WarpId w : sc.warps) {
      if (sc.active.size() >= cfg_.active_set_size) break;
      if (std::find(sc.active.begin(), sc.active.end(), w) != sc.active.end()) continue;
      if (warp_ready(w)) {
        sc.active.push_back(w);
        progress_ = true;
      }
    }
  }

  void issue(SubCore& sc, WarpId w, std::size_t k) {
    auto& ws = warps_[w];
    const auto& in = trace_.warps[w][ws.pc];
    auto& ccu = sc.ccus[k];

    AllocateOptions opts;
    opts.replacement = replacement();
    opts.retain = caches_values(cfg_.mode);
    if (cfg_.mode == Mode::Bow) {
      opts.forward = [&](RegId r) -> std::optional<std::uint64_t> {
        for (const auto& e : ws.window)
          if (std::find(e.regs.begin(), e.regs.end(), r) != e.regs.end()) return expected_[key(w, r)];
        return std::nullopt;
      };
    }
    auto prev_owner = ccu.owner;
    if (caches_values(cfg_.mode))
      for (std::size_t j = 0; j < sc.ccus.size(); ++j)
        if (j != k && sc.ccus[j].owner == w) {
          if (sc.ccus[j].occupied) throw EngineError("issue: warp moves away from a busy collector");
          if (sc.ccus[j].ct.any_valid()) ++c_.flushes;
          sc.ccus[j].ct.flush();
          sc.ccus[j].owner.reset();
        }
    auto res = ccu_allocate(ccu, k, in, opts, rng_);
    if (caches_values(cfg_.mode)) {
      for (std::size_t j = 0; j < sc.ccus.size(); ++j)
        if (j != k && sc.ccus[j].owner == w) ++c_.audit.single_owner;
      if (!ccu.ct.consistent()) ++c_.audit.ct_state;
    }
    if (res.flushed && prev_owner && caches_values(cfg_.mode)) ++c_.flushes;

    auto& m = ccu.meta;
    m.seq = next_seq_++;
    m.exec_latency = effective_latency(in, cfg_);
    m.expected_src_versions.assign(ccu.oct.size(), 0);
    for (std::size_t slot = 0; slot < in.src.size(); ++slot) m.expected_src_versions[slot] = expected_[key(w, in.src[slot])];
    m.dst_versions.clear();
    for (RegId r : in.dst) {
      auto v = ++version_counter_;
      m.dst_versions.push_back(v);
      expected_[key(w, r)] = v;
      ++pending_writes_[key(w, r)];
    }
    std::vector<RegId> distinct;
    for (RegId r : in.src)
      if (std::find(distinct.begin(), distinct.end(), r) == distinct.end()) distinct.push_back(r);
    for (RegId r : distinct) ++pending_reads_[key(w, r)];

    for (const auto& req : res.requests) {
      auto& bank = sc.banks[bank_of(req.warp, req.reg, sc.banks.size())];
      bank.enqueue(req);
      c_.max_bank_queue = std::max<std::uint64_t>(c_.max_bank_queue, bank.reads.size());
    }

    c_.instructions += 1;
    c_.source_operands += in.src.size();
    c_.source_fetches += res.fetches;
    c_.ccu_hits += res.hits;
    c_.ccu_misses += res.requests.size();

    InstrEvent ev;
    ev.warp = w;
    ev.index = ws.pc;
    ev.seq = m.seq;
    ev.ccu = k;
    ev.issue = cycle_;
    ev.hits = res.hits;
    ev.bank_reads = res.requests.size();
    sc.ccu_event[k] = timeline_.size();
    timeline_.push_back(ev);

    if (cfg_.mode == Mode::Bow) {
      WindowEntry we{m.seq, in.src};
      we.regs.insert(we.regs.end(), in.dst.begin(), in.dst.end());
      ws.window.push_back(std::move(we));
      while (ws.window.size() > cfg_.window_size) ws.window.pop_front();
    }

    ++ws.pc;
    ++ws.in_flight;
    sc.sched.last_issued = w;
    progress_ = true;

    if (cfg_.mode == Mode::TwoLevel && in.op == OpClass::MEM) {
      bool pending_exists = std::any_of(sc.warps.begin(), sc.warps.end(), [&](WarpId x) {
        return has_work(x) && std::find(sc.active.begin(), sc.active.end(), x) == sc.active.end();
      });
      if (pending_exists) std::erase(sc.active, w);
    }
  }

  // --- interval controller -------------------------------------------------

  void adaptive_boundary(double ipc) {
    AdaptiveParams p{cfg_.adaptive_delta, cfg_.adaptive_small_threshold, cfg_.adaptive_cap};
    adaptive_ = interval_step(adaptive_, ipc, p);
    for (auto& sc : subcores_) sc.sched.sthld = adaptive_.sthld;
    c_.intervals.push_back({c_.intervals.size(), ipc, adaptive_.sthld, adaptive_.fsm_state});
  }

  void final_audit() {
    for (std::size_t i = 0; i < expected_.size(); ++i)
      if (bank_version_[i] != expected_[i]) ++c_.audit.write_through;
  }

  const KernelTrace& trace_;
  SimConfig cfg_;
  Rng rng_;
  std::vector<SubCore> subcores_;
  std::vector<WarpState> warps_;
  std::vector<std::uint32_t> pending_writes_;
  std::vector<std::uint32_t> pending_reads_;
  std::vector<std::uint64_t> expected_;
  std::vector<std::uint64_t> bank_version_;
  std::vector<InstrEvent> timeline_;
  AdaptiveState adaptive_;
  Counters c_;
  std::uint64_t cycle_ = 0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t version_counter_ = 0;
  std::uint64_t max_latency_ = 1;
  bool progress_ = false;
};

inline MetricsReport simulate(const KernelTrace& trace, const SimConfig& config) {
  Simulator sim(trace, config);
  return sim.run(trace_id(trace));
}

}  // namespace malekeh
