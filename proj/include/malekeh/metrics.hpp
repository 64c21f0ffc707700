#pragma once

// Run counters, derived statistics, the event-energy model and report
// serialization (JSON report, CSV summary rows, normalized comparison tables).

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "malekeh/ccu.hpp"
#include "malekeh/config.hpp"

namespace malekeh {

using Json = nlohmann::ordered_json;

struct StallCounters {
  std::uint64_t occupied = 0;
  std::uint64_t all_busy = 0;
  std::uint64_t waiting = 0;
  std::uint64_t no_ready_warp = 0;

  bool operator==(const StallCounters&) const = default;
};

// Per sub-core cycle: issued, stalled while a non-active warp was ready, or
// stalled with nothing ready. Only filled for the two-level scheduler.
struct IssueStates {
  std::uint64_t issued = 0;
  std::uint64_t pending_ready = 0;
  std::uint64_t idle = 0;

  std::uint64_t total() const { return issued + pending_ready + idle; }
  bool operator==(const IssueStates&) const = default;
};

struct IntervalSample {
  std::uint64_t index = 0;
  double ipc = 0.0;
  // Threshold in force for the next interval.
  std::uint32_t sthld = 0;
  int fsm_state = 0;

  bool operator==(const IntervalSample&) const = default;
};

// Invariant checks performed during the run; all zero on a correct engine.
struct AuditCounters {
  std::uint64_t port = 0;
  std::uint64_t single_owner = 0;
  std::uint64_t stale_read = 0;
  std::uint64_t write_through = 0;
  std::uint64_t ct_state = 0;

  std::uint64_t total() const { return port + single_owner + stale_read + write_through + ct_state; }
  bool operator==(const AuditCounters&) const = default;
};

struct Counters {
  std::uint64_t cycles = 0;
  std::uint64_t instructions = 0;
  // Every source slot of every instruction.
  std::uint64_t source_operands = 0;
  // Distinct source registers per instruction; what actually needs fetching.
  std::uint64_t source_fetches = 0;
  std::uint64_t ccu_hits = 0;
  std::uint64_t ccu_misses = 0;
  std::uint64_t bank_reads = 0;
  std::uint64_t bank_writes = 0;
  std::uint64_t crossbar_transfers = 0;
  std::uint64_t dst_completions = 0;
  WritebackStats writes;
  std::uint64_t flushes = 0;
  std::uint64_t max_bank_queue = 0;
  StallCounters stalls;
  IssueStates issue_states;
  std::vector<IntervalSample> intervals;
  AuditCounters audit;
};

struct EnergyBreakdown {
  double bank_read = 0;
  double bank_write = 0;
  double crossbar = 0;
  double ccu_read = 0;
  double ccu_write = 0;

  double total() const { return bank_read + bank_write + crossbar + ccu_read + ccu_write; }
};

struct MetricsReport {
  Mode mode = Mode::Malekeh;
  std::string trace_id;
  SimConfig config;
  Counters counters;
  double ipc = 0.0;
  double hit_ratio = 0.0;
  // No source operand was fetched, so the hit ratio is reported as 0.
  bool hit_ratio_undefined = false;
  // 1 - bank_reads / fetches; equals hit_ratio by the fetch identity.
  double read_reduction = 0.0;
  EnergyBreakdown energy;
};

inline EnergyBreakdown energy(const Counters& c, Mode mode, const EnergyModel& m) {
  EnergyBreakdown e;
  e.bank_read = static_cast<double>(c.bank_reads) * m.e_bank_read;
  e.bank_write = static_cast<double>(c.bank_writes) * m.e_bank_write;
  double xbar = mode == Mode::Bow ? m.e_crossbar_transfer * m.wide_crossbar_factor : m.e_crossbar_transfer;
  e.crossbar = static_cast<double>(c.crossbar_transfers) * xbar;
  e.ccu_read = static_cast<double>(c.ccu_hits) * m.e_ccu_read;
  e.ccu_write = static_cast<double>(c.writes.cached) * m.e_ccu_write;
  return e;
}

inline EnergyBreakdown energy(const MetricsReport& r, const EnergyModel& m) {
  return energy(r.counters, r.mode, m);
}

// Derives rates and energy and checks the counter identities.
inline MetricsReport finalize(const Counters& c, const SimConfig& config, std::string trace_id = {}) {
  auto fail = [&](const std::string& what) {
    std::ostringstream os;
    os << "counter identity violated: " << what << " (fetches=" << c.source_fetches << " hits=" << c.ccu_hits
       << " misses=" << c.ccu_misses << " bank_reads=" << c.bank_reads << " completions=" << c.dst_completions
       << " cached=" << c.writes.cached << " filtered=" << c.writes.filtered() << ")";
    throw EngineError(os.str());
  };
  if (c.ccu_hits + c.bank_reads != c.source_fetches) fail("hits + bank_reads != source fetches");
  if (c.ccu_misses != c.bank_reads) fail("misses != bank_reads");
  if (c.writes.cached + c.writes.filtered() != c.dst_completions) fail("cached + filtered != completions");

  MetricsReport r;
  r.mode = config.mode;
  r.trace_id = std::move(trace_id);
  r.config = config;
  r.counters = c;
  r.ipc = c.cycles ? static_cast<double>(c.instructions) / static_cast<double>(c.cycles) : 0.0;
  auto lookups = c.ccu_hits + c.ccu_misses;
  r.hit_ratio_undefined = lookups == 0;
  r.hit_ratio = lookups ? static_cast<double>(c.ccu_hits) / static_cast<double>(lookups) : 0.0;
  r.read_reduction =
      c.source_fetches ? 1.0 - static_cast<double>(c.bank_reads) / static_cast<double>(c.source_fetches) : 0.0;
  r.energy = energy(c, config.mode, config.energy);
  return r;
}

// ---------------------------------------------------------------------------
// Serialization

inline Json config_json(const SimConfig& c) {
  Json j = Json::object();
  for (const auto& [k, v] : config_entries(c)) j[k] = v;
  return j;
}

inline Json to_json(const MetricsReport& r) {
  const auto& c = r.counters;
  Json j;
  j["mode"] = std::string(to_string(r.mode));
  j["trace_id"] = r.trace_id;
  j["seed"] = r.config.seed;
  j["config"] = config_json(r.config);
  j["cycles"] = c.cycles;
  j["instructions"] = c.instructions;
  j["ipc"] = r.ipc;
  j["hit_ratio"] = r.hit_ratio;
  j["hit_ratio_undefined"] = r.hit_ratio_undefined;
  j["read_reduction"] = r.read_reduction;
  j["source_operands"] = c.source_operands;
  j["source_fetches"] = c.source_fetches;
  j["ccu_hits"] = c.ccu_hits;
  j["ccu_misses"] = c.ccu_misses;
  j["bank_reads"] = c.bank_reads;
  j["bank_writes"] = c.bank_writes;
  j["crossbar_transfers"] = c.crossbar_transfers;
  j["dst_completions"] = c.dst_completions;
  j["writes_cached"] = c.writes.cached;
  j["writes_filtered"] = c.writes.filtered();
  j["writes_filtered_detail"] = {{"far", c.writes.filtered_far},
                                 {"not_resident", c.writes.filtered_not_resident},
                                 {"port_conflict", c.writes.filtered_port},
                                 {"no_write_port", c.writes.filtered_no_port}};
  j["flushes"] = c.flushes;
  j["max_bank_queue"] = c.max_bank_queue;
  j["stalls"] = {{"OCCUPIED", c.stalls.occupied},
                 {"ALL_BUSY", c.stalls.all_busy},
                 {"WAITING", c.stalls.waiting},
                 {"NO_READY_WARP", c.stalls.no_ready_warp}};
  if (r.mode == Mode::TwoLevel) {
    double total = static_cast<double>(c.issue_states.total());
    auto frac = [&](std::uint64_t v) { return total > 0 ? static_cast<double>(v) / total : 0.0; };
    j["issue_states"] = {{"issued", c.issue_states.issued},
                         {"pending_ready", c.issue_states.pending_ready},
                         {"idle", c.issue_states.idle},
                         {"fractions",
                          {frac(c.issue_states.issued), frac(c.issue_states.pending_ready), frac(c.issue_states.idle)}}};
  }
  Json iv = Json::array();
  for (const auto& s : c.intervals) iv.push_back({{"interval", s.index}, {"ipc", s.ipc}, {"sthld", s.sthld}, {"state", s.fsm_state}});
  j["intervals"] = iv;
  j["energy"] = {{"total", r.energy.total()},
                 {"bank_read", r.energy.bank_read},
                 {"bank_write", r.energy.bank_write},
                 {"crossbar", r.energy.crossbar},
                 {"ccu_read", r.energy.ccu_read},
                 {"ccu_write", r.energy.ccu_write}};
  j["audit"] = {{"port", c.audit.port},
                {"single_owner", c.audit.single_owner},
                {"stale_read", c.audit.stale_read},
                {"write_through", c.audit.write_through},
                {"ct_state", c.audit.ct_state}};
  return j;
}

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

inline std::string config_comment(const SimConfig& c) {
  std::string s = "# config:";
  for (const auto& [k, v] : config_entries(c)) s += " " + k + "=" + v;
  return s;
}

inline const char* kSummaryHeader =
    "mode,trace,seed,cycles,instructions,ipc,hit_ratio,bank_reads,bank_writes,ccu_hits,writes_cached,"
    "writes_filtered,crossbar_transfers,energy,energy_norm";

inline std::string summary_row(const MetricsReport& r, std::optional<double> energy_norm = std::nullopt) {
  const auto& c = r.counters;
  std::ostringstream os;
  os << to_string(r.mode) << ',' << r.trace_id << ',' << r.config.seed << ',' << c.cycles << ',' << c.instructions
     << ',' << format_metric(r.ipc) << ',' << format_metric(r.hit_ratio) << ',' << c.bank_reads << ','
     << c.bank_writes << ',' << c.ccu_hits << ',' << c.writes.cached << ',' << c.writes.filtered() << ','
     << c.crossbar_transfers << ',' << format_metric(r.energy.total()) << ','
     << (energy_norm ? format_metric(*energy_norm) : std::string());
  return os.str();
}

inline void write_interval_csv(std::ostream& os, const MetricsReport& r) {
  os << config_comment(r.config) << '\n';
  os << "interval,ipc,state,sthld\n";
  for (const auto& s : r.counters.intervals)
    os << s.index << ',' << format_metric(s.ipc) << ',' << s.fsm_state << ',' << s.sthld << '\n';
}

// ---------------------------------------------------------------------------
// Normalized comparison

// a / b; 0/0 compares equal.
inline double ratio(double a, double b) {
  if (b == 0.0) return a == 0.0 ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  return a / b;
}

struct NormalizedRow {
  Mode mode = Mode::BaselineOcu;
  double ipc = 0, hit_ratio = 0, bank_reads = 0, energy = 0, cycles = 0;
  double ipc_norm = 0, hit_ratio_norm = 0, bank_reads_norm = 0, energy_norm = 0, cycles_norm = 0;
};

struct ComparisonTable {
  std::string trace_id;
  std::vector<NormalizedRow> rows;
};

inline ComparisonTable compare(const std::vector<MetricsReport>& reports, const MetricsReport& baseline) {
  ComparisonTable t;
  t.trace_id = baseline.trace_id;
  for (const auto& r : reports) {
    if (r.trace_id != baseline.trace_id)
      throw std::invalid_argument("compare: report for trace " + r.trace_id + " does not match baseline trace " +
                                  baseline.trace_id);
    NormalizedRow row;
    row.mode = r.mode;
    row.ipc = r.ipc;
    row.hit_ratio = r.hit_ratio;
    row.bank_reads = static_cast<double>(r.counters.bank_reads);
    row.energy = r.energy.total();
    row.cycles = static_cast<double>(r.counters.cycles);
    row.ipc_norm = ratio(r.ipc, baseline.ipc);
    row.hit_ratio_norm = ratio(r.hit_ratio, baseline.hit_ratio);
    row.bank_reads_norm = ratio(row.bank_reads, static_cast<double>(baseline.counters.bank_reads));
    row.energy_norm = ratio(row.energy, baseline.energy.total());
    row.cycles_norm = ratio(row.cycles, static_cast<double>(baseline.counters.cycles));
    t.rows.push_back(row);
  }
  return t;
}

inline void write_comparison_csv(std::ostream& os, const ComparisonTable& t) {
  os << "mode,trace,ipc,ipc_norm,hit_ratio,hit_ratio_norm,bank_reads,bank_reads_norm,energy,energy_norm,cycles,"
        "cycles_norm\n";
  for (const auto& r : t.rows)
    os << to_string(r.mode) << ',' << t.trace_id << ',' << format_metric(r.ipc) << ',' << format_metric(r.ipc_norm)
       << ',' << format_metric(r.hit_ratio) << ',' << format_metric(r.hit_ratio_norm) << ','
       << static_cast<std::uint64_t>(r.bank_reads) << ',' << format_metric(r.bank_reads_norm) << ','
       << format_metric(r.energy) << ',' << format_metric(r.energy_norm) << ','
       << static_cast<std::uint64_t>(r.cycles) << ',' << format_metric(r.cycles_norm) << '\n';
}

inline Json to_json(const ComparisonTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows)
    rows.push_back({{"mode", std::string(to_string(r.mode))},
                    {"ipc", r.ipc},
                    {"ipc_norm", r.ipc_norm},
                    {"hit_ratio", r.hit_ratio},
                    {"hit_ratio_norm", r.hit_ratio_norm},
                    {"bank_reads", r.bank_reads},
                    {"bank_reads_norm", r.bank_reads_norm},
                    {"energy", r.energy},
                    {"energy_norm", r.energy_norm},
                    {"cycles", r.cycles},
                    {"cycles_norm", r.cycles_norm}});
  return {{"trace_id", t.trace_id}, {"rows", rows}};
}

}  // namespace malekeh
