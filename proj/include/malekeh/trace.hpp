#pragma once

// Instruction-trace data model, text format and synthetic workloads.
//
// A trace is a set of per-warp dynamic instruction streams. Control flow is
// already resolved, so each stream is simply program order. One line of the
// text format describes one instruction:
//
//   W<warp> <OPCODE> <latency> D:<Rn[,Rn]> S:<Rn[,...]> [RD:S=<N|F>[,...];D=<N|F>[,...]] [PC:<n>]
//
// Empty register lists are written as `-`. `#` starts a comment. The PC token
// carries the static instruction id and is only written when it differs from
// the instruction's position in its warp stream.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace malekeh {

using WarpId = std::uint32_t;
using RegId = std::uint16_t;

inline constexpr std::size_t kNumArchRegisters = 256;
inline constexpr std::size_t kMaxSources = 6;
inline constexpr std::size_t kMaxDestinations = 2;
inline constexpr std::uint32_t kDefaultRthld = 12;

enum class OpClass : std::uint8_t { ALU, SFU, MEM, TENSOR, CTRL };
inline constexpr std::array<OpClass, 5> kOpClasses = {OpClass::ALU, OpClass::SFU, OpClass::MEM,
                                                      OpClass::TENSOR, OpClass::CTRL};

enum class Reuse : std::uint8_t { Near, Far };

inline std::string_view to_string(OpClass op) {
  switch (op) {
    case OpClass::ALU: return "ALU";
    case OpClass::SFU: return "SFU";
    case OpClass::MEM: return "MEM";
    case OpClass::TENSOR: return "TENSOR";
    case OpClass::CTRL: return "CTRL";
  }
  return "?";
}

inline std::optional<OpClass> parse_op_class(std::string_view s) {
  for (OpClass op : kOpClasses)
    if (to_string(op) == s) return op;
  return std::nullopt;
}

inline char reuse_char(Reuse r) { return r == Reuse::Near ? 'N' : 'F'; }

struct TraceInstruction {
  WarpId warp_id = 0;
  std::uint32_t static_id = 0;
  OpClass op = OpClass::ALU;
  std::uint32_t latency = 1;
  std::vector<RegId> src;
  std::vector<RegId> dst;
  std::optional<std::vector<Reuse>> src_reuse;
  std::optional<std::vector<Reuse>> dst_reuse;

  // Every operand carries a reuse bit.
  bool fully_annotated() const {
    return (src.empty() || src_reuse.has_value()) && (dst.empty() || dst_reuse.has_value());
  }

  Reuse src_hint(std::size_t slot) const {
    return src_reuse && slot < src_reuse->size() ? (*src_reuse)[slot] : Reuse::Far;
  }
  Reuse dst_hint(std::size_t slot) const {
    return dst_reuse && slot < dst_reuse->size() ? (*dst_reuse)[slot] : Reuse::Far;
  }

  bool operator==(const TraceInstruction&) const = default;
};

struct KernelTrace {
  // Indexed by warp id, so ids are dense by construction.
  std::vector<std::vector<TraceInstruction>> warps;

  std::size_t num_warps() const { return warps.size(); }

  std::size_t num_instructions() const {
    std::size_t n = 0;
    for (const auto& w : warps) n += w.size();
    return n;
  }

  bool annotated() const {
    for (const auto& w : warps)
      for (const auto& in : w)
        if (!in.fully_annotated()) return false;
    return true;
  }

  void push(TraceInstruction in) {
    if (in.warp_id >= warps.size()) warps.resize(in.warp_id + 1);
    warps[in.warp_id].push_back(std::move(in));
  }

  bool operator==(const KernelTrace&) const = default;
};

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& what)
      : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Validation

struct Violation {
  WarpId warp = 0;
  std::size_t index = 0;
  std::string rule;
};

inline std::vector<Violation> validate(const KernelTrace& trace) {
  std::vector<Violation> out;
  for (WarpId w = 0; w < trace.warps.size(); ++w) {
    const auto& stream = trace.warps[w];
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const auto& in = stream[i];
      auto add = [&](std::string rule) { out.push_back({w, i, std::move(rule)}); };
      if (in.warp_id != w) add("warp id does not match its stream");
      if (in.latency < 1) add("latency must be at least 1 cycle");
      if (in.src.size() > kMaxSources) add("more than 6 source operands");
      if (in.dst.size() > kMaxDestinations) add("more than 2 destination operands");
      for (RegId r : in.src)
        if (r >= kNumArchRegisters) add("register id out of range");
      for (RegId r : in.dst)
        if (r >= kNumArchRegisters) add("register id out of range");
      if (in.src_reuse && in.src_reuse->size() != in.src.size())
        add("source annotation length differs from source list");
      if (in.dst_reuse && in.dst_reuse->size() != in.dst.size())
        add("destination annotation length differs from destination list");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Text format

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::vector<RegId> parse_reg_list(std::string_view s, std::size_t line) {
  std::vector<RegId> regs;
  if (s == "-") return regs;
  for (auto tok : split(s, ',')) {
    if (tok.size() < 2 || tok[0] != 'R') throw TraceError(line, "malformed register '" + std::string(tok) + "'");
    auto v = parse_uint(tok.substr(1));
    if (!v) throw TraceError(line, "malformed register '" + std::string(tok) + "'");
    if (*v >= kNumArchRegisters) throw TraceError(line, "register id out of range: " + std::string(tok));
    regs.push_back(static_cast<RegId>(*v));
  }
  return regs;
}

inline std::vector<Reuse> parse_reuse_list(std::string_view s, std::size_t line) {
  std::vector<Reuse> bits;
  if (s == "-") return bits;
  for (auto tok : split(s, ',')) {
    if (tok == "N") bits.push_back(Reuse::Near);
    else if (tok == "F") bits.push_back(Reuse::Far);
    else throw TraceError(line, "malformed reuse bit '" + std::string(tok) + "'");
  }
  return bits;
}

template <typename T, typename Fmt>
void write_list(std::ostream& os, const std::vector<T>& items, Fmt fmt) {
  if (items.empty()) {
    os << '-';
    return;
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) os << ',';
    fmt(os, items[i]);
  }
}

}  // namespace detail

inline TraceInstruction parse_instruction(std::string_view text, std::size_t line = 0) {
  std::vector<std::string_view> toks;
  {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\r')) ++i;
      std::size_t j = i;
      while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\r') ++j;
      if (j > i) toks.push_back(text.substr(i, j - i));
      i = j;
    }
  }
  if (toks.size() < 5) throw TraceError(line, "expected at least 5 fields");

  TraceInstruction in;
  if (toks[0].size() < 2 || toks[0][0] != 'W') throw TraceError(line, "malformed warp field");
  auto warp = detail::parse_uint(toks[0].substr(1));
  if (!warp || *warp > std::numeric_limits<WarpId>::max()) throw TraceError(line, "malformed warp field");
  in.warp_id = static_cast<WarpId>(*warp);

  auto op = parse_op_class(toks[1]);
  if (!op) throw TraceError(line, "unknown opcode class '" + std::string(toks[1]) + "'");
  in.op = *op;

  auto lat = detail::parse_uint(toks[2]);
  if (!lat || *lat < 1 || *lat > std::numeric_limits<std::uint32_t>::max())
    throw TraceError(line, "latency must be a positive integer");
  in.latency = static_cast<std::uint32_t>(*lat);

  bool seen_d = false, seen_s = false, seen_rd = false, seen_pc = false;
  for (std::size_t t = 3; t < toks.size(); ++t) {
    auto tok = toks[t];
    if (tok.starts_with("D:") && !seen_d) {
      seen_d = true;
      in.dst = detail::parse_reg_list(tok.substr(2), line);
    } else if (tok.starts_with("S:") && !seen_s) {
      seen_s = true;
      in.src = detail::parse_reg_list(tok.substr(2), line);
    } else if (tok.starts_with("RD:") && !seen_rd) {
      seen_rd = true;
      for (auto part : detail::split(tok.substr(3), ';')) {
        if (part.starts_with("S=") && !in.src_reuse) in.src_reuse = detail::parse_reuse_list(part.substr(2), line);
        else if (part.starts_with("D=") && !in.dst_reuse) in.dst_reuse = detail::parse_reuse_list(part.substr(2), line);
        else throw TraceError(line, "malformed reuse annotation '" + std::string(part) + "'");
      }
    } else if (tok.starts_with("PC:") && !seen_pc) {
      seen_pc = true;
      auto pc = detail::parse_uint(tok.substr(3));
      if (!pc || *pc > std::numeric_limits<std::uint32_t>::max()) throw TraceError(line, "malformed PC field");
      in.static_id = static_cast<std::uint32_t>(*pc);
    } else {
      throw TraceError(line, "unexpected field '" + std::string(tok) + "'");
    }
  }
  if (!seen_d || !seen_s) throw TraceError(line, "missing D: or S: field");
  if (in.src.size() > kMaxSources) throw TraceError(line, "operand-count violation: more than 6 sources");
  if (in.dst.size() > kMaxDestinations) throw TraceError(line, "operand-count violation: more than 2 destinations");
  if (in.src_reuse && in.src_reuse->size() != in.src.size())
    throw TraceError(line, "operand-count violation: source annotation length mismatch");
  if (in.dst_reuse && in.dst_reuse->size() != in.dst.size())
    throw TraceError(line, "operand-count violation: destination annotation length mismatch");
  return in;
}

inline KernelTrace parse_trace(std::istream& is) {
  KernelTrace trace;
  std::vector<bool> explicit_pc;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    std::string_view text(raw);
    if (auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
    if (text.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    for (char c : text)
      if (static_cast<unsigned char>(c) > 127) throw TraceError(line, "non-ASCII character");
    auto in = parse_instruction(text, line);
    bool has_pc = text.find("PC:") != std::string_view::npos;
    if (!has_pc) {
      auto w = in.warp_id;
      in.static_id = static_cast<std::uint32_t>(w < trace.warps.size() ? trace.warps[w].size() : 0);
    }
    trace.push(std::move(in));
  }
  return trace;
}

inline KernelTrace parse_trace(std::string_view text) {
  std::istringstream is{std::string(text)};
  return parse_trace(is);
}

inline KernelTrace load_trace(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw TraceError(0, "cannot open trace file '" + path + "'");
  return parse_trace(is);
}

inline void write_instruction(std::ostream& os, const TraceInstruction& in, std::size_t position) {
  auto reg = [](std::ostream& o, RegId r) { o << 'R' << r; };
  auto bit = [](std::ostream& o, Reuse r) { o << reuse_char(r); };
  os << 'W' << in.warp_id << ' ' << to_string(in.op) << ' ' << in.latency << " D:";
  detail::write_list(os, in.dst, reg);
  os << " S:";
  detail::write_list(os, in.src, reg);
  if (in.src_reuse || in.dst_reuse) {
    os << " RD:";
    if (in.src_reuse) {
      os << "S=";
      detail::write_list(os, *in.src_reuse, bit);
    }
    if (in.dst_reuse) {
      if (in.src_reuse) os << ';';
      os << "D=";
      detail::write_list(os, *in.dst_reuse, bit);
    }
  }
  if (in.static_id != position) os << " PC:" << in.static_id;
}

// Warps are written one after another, each in program order.
inline void write_trace(std::ostream& os, const KernelTrace& trace) {
  for (const auto& stream : trace.warps)
    for (std::size_t i = 0; i < stream.size(); ++i) {
      write_instruction(os, stream[i], i);
      os << '\n';
    }
}

inline std::string to_text(const KernelTrace& trace) {
  std::ostringstream os;
  write_trace(os, trace);
  return os.str();
}

inline void save_trace(const std::string& path, const KernelTrace& trace) {
  std::ofstream os(path);
  if (!os) throw TraceError(0, "cannot write trace file '" + path + "'");
  write_trace(os, trace);
}

// FNV-1a over the canonical text form; identifies a trace in reports.
inline std::string trace_id(const KernelTrace& trace) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : to_text(trace)) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) s[i] = hex[h & 0xf];
  return s;
}

// ---------------------------------------------------------------------------
// Synthetic workloads

enum class SyntheticKind { NearReuse, FarReuse, GemmLike, Random };

inline std::string_view to_string(SyntheticKind k) {
  switch (k) {
    case SyntheticKind::NearReuse: return "NEAR_REUSE";
    case SyntheticKind::FarReuse: return "FAR_REUSE";
    case SyntheticKind::GemmLike: return "GEMM_LIKE";
    case SyntheticKind::Random: return "RANDOM";
  }
  return "?";
}

inline std::optional<SyntheticKind> parse_synthetic_kind(std::string_view s) {
  for (auto k : {SyntheticKind::NearReuse, SyntheticKind::FarReuse, SyntheticKind::GemmLike, SyntheticKind::Random})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

// Nominal execution latencies written into generated traces. MEM latency is
// normally overridden by the simulator's mem_latency setting.
inline std::uint32_t nominal_latency(OpClass op) {
  switch (op) {
    case OpClass::ALU: return 4;
    case OpClass::SFU: return 8;
    case OpClass::MEM: return 200;
    case OpClass::TENSOR: return 16;
    case OpClass::CTRL: return 2;
  }
  return 1;
}

namespace detail {

inline TraceInstruction make_instr(OpClass op, std::vector<RegId> dst, std::vector<RegId> src,
                                   std::uint32_t static_id) {
  TraceInstruction in;
  in.op = op;
  in.latency = nominal_latency(op);
  in.dst = std::move(dst);
  in.src = std::move(src);
  in.static_id = static_id;
  return in;
}

// Loop of `body` instructions; every destination is read again one to four
// instructions later and the 8-register rotation keeps every reuse well under
// the default threshold.
inline std::vector<TraceInstruction> near_reuse_program(std::size_t n, std::mt19937_64& rng) {
  constexpr std::size_t body = 16;
  constexpr RegId ring = 8;
  std::array<RegId, body> back{};
  std::array<OpClass, body> ops{};
  for (std::size_t p = 0; p < body; ++p) {
    back[p] = static_cast<RegId>(2 + rng() % 3);
    ops[p] = rng() % 8 == 0 ? OpClass::SFU : OpClass::ALU;
  }
  ops[rng() % body] = OpClass::MEM;
  std::vector<TraceInstruction> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t p = i % body;
    auto at = [&](std::size_t back_by) { return static_cast<RegId>((i + ring * 4 - back_by) % ring); };
    RegId d = static_cast<RegId>(i % ring);
    std::vector<RegId> src{at(1)};
    if (ops[p] != OpClass::MEM) src.push_back(at(back[p]));
    out.push_back(make_instr(ops[p], {d}, std::move(src), static_cast<std::uint32_t>(p)));
  }
  return out;
}

// Sixteen disjoint register groups visited round-robin: every register is
// touched once per 16 instructions.
inline std::vector<TraceInstruction> far_reuse_program(std::size_t n, std::mt19937_64& rng) {
  constexpr std::size_t groups = 16;
  std::array<std::size_t, groups> nsrc{};
  std::array<OpClass, groups> ops{};
  for (std::size_t g = 0; g < groups; ++g) {
    nsrc[g] = 1 + rng() % 2;
    ops[g] = rng() % 6 == 0 ? OpClass::SFU : OpClass::ALU;
  }
  std::vector<TraceInstruction> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t g = i % groups;
    auto base = static_cast<RegId>(3 * g);
    std::vector<RegId> src{static_cast<RegId>(base + 1)};
    if (nsrc[g] == 2) src.push_back(static_cast<RegId>(base + 2));
    out.push_back(make_instr(ops[g], {base}, std::move(src), static_cast<std::uint32_t>(g)));
  }
  return out;
}

// Tensor-core GEMM main loop: a 1x4 row of accumulator tiles per k-step,
// D = A*B + C with C == D. The A fragment is shared by the four tiles of a
// step, each accumulator comes back every four instructions (near, but past
// a three-instruction window), and A/B fragments rotate through eight
// register sets so they are not revisited for 32 instructions (far).
inline std::vector<TraceInstruction> gemm_program(std::size_t n, std::mt19937_64& rng) {
  constexpr std::size_t tiles = 4;
  constexpr std::size_t sets = 8;
  constexpr std::size_t body = tiles * sets;
  std::array<bool, sets> swap{};
  for (auto& s : swap) s = rng() % 2;
  std::vector<TraceInstruction> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t step = i / tiles;
    std::size_t set = step % sets;
    std::size_t tile = i % tiles;
    if (swap[set]) tile = tiles - 1 - tile;
    auto a = static_cast<RegId>(64 + 12 * set);
    auto b = static_cast<RegId>(a + 2 + 2 * tile);
    auto c = static_cast<RegId>(32 + 2 * tile);
    std::vector<RegId> src{a, static_cast<RegId>(a + 1), b, static_cast<RegId>(b + 1), c,
                           static_cast<RegId>(c + 1)};
    out.push_back(make_instr(OpClass::TENSOR, {c, static_cast<RegId>(c + 1)}, std::move(src),
                             static_cast<std::uint32_t>(i % body)));
  }
  return out;
}

// Operands drawn uniformly from a 32-register working set, the typical
// per-thread register budget of compute kernels.
inline std::vector<TraceInstruction> random_program(std::size_t n, std::mt19937_64& rng) {
  constexpr RegId pool = 32;
  auto reg = [&] { return static_cast<RegId>(rng() % pool); };
  auto regs = [&](std::size_t k) {
    std::vector<RegId> v;
    for (std::size_t j = 0; j < k; ++j) v.push_back(reg());
    return v;
  };
  std::vector<TraceInstruction> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto roll = rng() % 100;
    auto id = static_cast<std::uint32_t>(i);
    if (roll < 60) out.push_back(make_instr(OpClass::ALU, regs(1), regs(1 + rng() % 3), id));
    else if (roll < 70) out.push_back(make_instr(OpClass::SFU, regs(1), regs(1), id));
    else if (roll < 85) out.push_back(make_instr(OpClass::MEM, regs(rng() % 10 < 7 ? 1 : 0), regs(1 + rng() % 2), id));
    else if (roll < 90) out.push_back(make_instr(OpClass::TENSOR, regs(2), regs(6), id));
    else out.push_back(make_instr(OpClass::CTRL, {}, regs(rng() % 2), id));
  }
  return out;
}

}  // namespace detail

// Deterministic for fixed arguments. NEAR_REUSE, FAR_REUSE and GEMM_LIKE emit
// the same program for every warp; RANDOM draws a fresh stream per warp.
inline KernelTrace gen_synthetic(SyntheticKind kind, std::size_t num_warps, std::size_t instrs_per_warp,
                                 std::uint64_t seed) {
  if (num_warps < 1 || instrs_per_warp < 1)
    throw std::invalid_argument("gen_synthetic: num_warps and instrs_per_warp must be >= 1");
  std::mt19937_64 rng(seed);
  KernelTrace trace;
  trace.warps.resize(num_warps);
  std::vector<TraceInstruction> shared;
  switch (kind) {
    case SyntheticKind::NearReuse: shared = detail::near_reuse_program(instrs_per_warp, rng); break;
    case SyntheticKind::FarReuse: shared = detail::far_reuse_program(instrs_per_warp, rng); break;
    case SyntheticKind::GemmLike: shared = detail::gemm_program(instrs_per_warp, rng); break;
    case SyntheticKind::Random: break;
  }
  for (WarpId w = 0; w < num_warps; ++w) {
    auto stream = kind == SyntheticKind::Random ? detail::random_program(instrs_per_warp, rng) : shared;
    for (auto& in : stream) in.warp_id = w;
    trace.warps[w] = std::move(stream);
  }
  return trace;
}

}  // namespace malekeh
