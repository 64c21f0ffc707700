#pragma once

// Simulator configuration. Defaults describe a Turing-class GPU: 10 SMs with
// 32 warps and 4 sub-cores each, two single-ported banks and two collectors
// per sub-core, 8-entry cache tables and 6 source slots per collector.
//
// The text form is one `key = value` per line; `#` starts a comment.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "malekeh/profiler.hpp"

namespace malekeh {

enum class Mode : std::uint8_t { BaselineOcu, Malekeh, MalekehPrivate, NaiveGtoLru, Bow, TwoLevel };

inline constexpr Mode kAllModes[] = {Mode::BaselineOcu, Mode::Malekeh, Mode::MalekehPrivate,
                                     Mode::NaiveGtoLru, Mode::Bow,     Mode::TwoLevel};

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::BaselineOcu: return "baseline_ocu";
    case Mode::Malekeh: return "malekeh";
    case Mode::MalekehPrivate: return "malekeh_private";
    case Mode::NaiveGtoLru: return "naive_gto_lru";
    case Mode::Bow: return "bow";
    case Mode::TwoLevel: return "two_level";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (Mode m : kAllModes)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

// Modes whose policies read the per-operand reuse bits.
inline bool requires_annotations(Mode m) { return m == Mode::Malekeh || m == Mode::MalekehPrivate; }

inline bool caches_values(Mode m) {
  return m == Mode::Malekeh || m == Mode::MalekehPrivate || m == Mode::NaiveGtoLru;
}

enum class SthldMode : std::uint8_t { Static, Dynamic };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Abstract per-event energies. Only ratios between runs are meaningful.
struct EnergyModel {
  double e_bank_read = 4.0;
  double e_bank_write = 4.0;
  double e_crossbar_transfer = 1.0;
  double e_ccu_read = 1.0;
  double e_ccu_write = 1.0;
  // Crossbar scale for the sliding-window comparator's wider interconnect.
  double wide_crossbar_factor = 2.0;

  bool operator==(const EnergyModel&) const = default;
};

struct SimConfig {
  std::uint32_t num_sms = 10;
  std::uint32_t subcores_per_sm = 4;
  std::uint32_t warps_per_sm = 32;
  std::uint32_t banks_per_subcore = 2;
  std::uint32_t ccus_per_subcore = 2;
  std::uint32_t ct_entries = 8;
  std::uint32_t oct_slots = 6;
  Mode mode = Mode::Malekeh;
  std::uint32_t rthld = kDefaultRthld;
  double profile_fraction = kDefaultProfileFraction;
  SthldMode sthld_mode = SthldMode::Dynamic;
  // Static threshold, or the starting value in dynamic mode.
  std::uint32_t sthld = 0;
  std::uint32_t interval = 10000;
  std::uint32_t adaptive_delta = 1;
  double adaptive_small_threshold = 0.02;
  std::uint32_t adaptive_cap = 64;
  // MEM instructions use this latency instead of the trace's when non-zero.
  std::uint32_t mem_latency = 200;
  std::uint64_t seed = 1;
  std::uint32_t window_size = 3;
  std::uint32_t active_set_size = 2;
  EnergyModel energy;

  bool operator==(const SimConfig&) const = default;

  // Collectors per sub-core after applying the mode; the private variant
  // gives each warp slot its own collector.
  std::uint32_t effective_ccus() const {
    if (mode == Mode::MalekehPrivate) return std::max<std::uint32_t>(1, warps_per_sm / subcores_per_sm);
    return ccus_per_subcore;
  }

  void validate() const {
    auto need = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(what);
    };
    need(num_sms >= 1, "num_sms must be >= 1");
    need(subcores_per_sm >= 1, "subcores_per_sm must be >= 1");
    need(warps_per_sm >= 1, "warps_per_sm must be >= 1");
    need(banks_per_subcore >= 1, "banks_per_subcore must be >= 1");
    need(ccus_per_subcore >= 1, "ccus_per_subcore must be >= 1");
    need(oct_slots >= kMaxSources, "oct_slots must be >= 6");
    need(ct_entries > oct_slots, "ct_entries must exceed oct_slots so an unlocked entry always exists");
    need(ct_entries <= 256, "ct_entries must be <= 256");
    need(rthld >= 1, "rthld must be >= 1");
    need(profile_fraction > 0.0 && profile_fraction <= 1.0, "profile_fraction must be in (0, 1]");
    need(interval >= 1, "interval must be >= 1");
    need(adaptive_small_threshold >= 0.0, "adaptive_small_threshold must be >= 0");
    need(window_size >= 1, "window_size must be >= 1");
    need(active_set_size >= 1, "active_set_size must be >= 1");
    need(energy.e_bank_read >= 0 && energy.e_bank_write >= 0 && energy.e_crossbar_transfer >= 0 &&
             energy.e_ccu_read >= 0 && energy.e_ccu_write >= 0 && energy.wide_crossbar_factor >= 0,
         "energy coefficients must be >= 0");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T v{};
  if constexpr (std::is_unsigned_v<T>) {
    if (!value.empty() && value[0] == '-') throw ConfigError("invalid value for " + key + ": " + value);
  }
  if (!(is >> v) || !is.eof()) throw ConfigError("invalid value for " + key + ": " + value);
  return v;
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "num_sms",         "subcores_per_sm", "warps_per_sm",   "banks_per_subcore",
      "ccus_per_subcore", "ct_entries",     "oct_slots",      "mode",
      "rthld",           "profile_fraction", "sthld_mode",    "sthld",
      "interval",        "adaptive_delta",  "adaptive_small_threshold", "adaptive_cap",
      "mem_latency",     "seed",            "window_size",    "active_set_size",
      "e_bank_read",     "e_bank_write",    "e_crossbar_transfer", "e_ccu_read",
      "e_ccu_write",     "wide_crossbar_factor"};
  return keys;
}

inline void set_config_value(SimConfig& c, const std::string& key, const std::string& raw) {
  using detail::parse_number;
  std::string value = detail::trim(raw);
  auto u32 = [&] { return parse_number<std::uint32_t>(key, value); };
  auto dbl = [&] { return parse_number<double>(key, value); };
  if (key == "num_sms") c.num_sms = u32();
  else if (key == "subcores_per_sm") c.subcores_per_sm = u32();
  else if (key == "warps_per_sm") c.warps_per_sm = u32();
  else if (key == "banks_per_subcore") c.banks_per_subcore = u32();
  else if (key == "ccus_per_subcore") c.ccus_per_subcore = u32();
  else if (key == "ct_entries") c.ct_entries = u32();
  else if (key == "oct_slots") c.oct_slots = u32();
  else if (key == "mode") {
    auto m = parse_mode(value);
    if (!m) throw ConfigError("unknown mode: " + value);
    c.mode = *m;
  } else if (key == "rthld") c.rthld = u32();
  else if (key == "profile_fraction") c.profile_fraction = dbl();
  else if (key == "sthld_mode") {
    // Accepts "dynamic", "static", or "static <k>".
    std::istringstream is(value);
    std::string kind;
    is >> kind;
    if (kind == "dynamic") c.sthld_mode = SthldMode::Dynamic;
    else if (kind == "static") {
      c.sthld_mode = SthldMode::Static;
      std::string k;
      if (is >> k) c.sthld = parse_number<std::uint32_t>(key, k);
    } else throw ConfigError("sthld_mode must be 'static [k]' or 'dynamic': " + value);
  } else if (key == "sthld") c.sthld = u32();
  else if (key == "interval") c.interval = u32();
  else if (key == "adaptive_delta") c.adaptive_delta = u32();
  else if (key == "adaptive_small_threshold") c.adaptive_small_threshold = dbl();
  else if (key == "adaptive_cap") c.adaptive_cap = u32();
  else if (key == "mem_latency") c.mem_latency = u32();
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "window_size") c.window_size = u32();
  else if (key == "active_set_size") c.active_set_size = u32();
  else if (key == "e_bank_read") c.energy.e_bank_read = dbl();
  else if (key == "e_bank_write") c.energy.e_bank_write = dbl();
  else if (key == "e_crossbar_transfer") c.energy.e_crossbar_transfer = dbl();
  else if (key == "e_ccu_read") c.energy.e_ccu_read = dbl();
  else if (key == "e_ccu_write") c.energy.e_ccu_write = dbl();
  else if (key == "wide_crossbar_factor") c.energy.wide_crossbar_factor = dbl();
  else throw ConfigError("unknown configuration key: " + key);
}

// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

// Key/value view of every setting, in config_keys() order.
inline std::vector<std::pair<std::string, std::string>> config_entries(const SimConfig& c) {
  auto u = [](auto v) { return std::to_string(v); };
  return {
      {"num_sms", u(c.num_sms)},
      {"subcores_per_sm", u(c.subcores_per_sm)},
      {"warps_per_sm", u(c.warps_per_sm)},
      {"banks_per_subcore", u(c.banks_per_subcore)},
      {"ccus_per_subcore", u(c.ccus_per_subcore)},
      {"ct_entries", u(c.ct_entries)},
      {"oct_slots", u(c.oct_slots)},
      {"mode", std::string(to_string(c.mode))},
      {"rthld", u(c.rthld)},
      {"profile_fraction", format_double(c.profile_fraction)},
      {"sthld_mode", c.sthld_mode == SthldMode::Dynamic ? "dynamic" : "static"},
      {"sthld", u(c.sthld)},
      {"interval", u(c.interval)},
      {"adaptive_delta", u(c.adaptive_delta)},
      {"adaptive_small_threshold", format_double(c.adaptive_small_threshold)},
      {"adaptive_cap", u(c.adaptive_cap)},
      {"mem_latency", u(c.mem_latency)},
      {"seed", u(c.seed)},
      {"window_size", u(c.window_size)},
      {"active_set_size", u(c.active_set_size)},
      {"e_bank_read", format_double(c.energy.e_bank_read)},
      {"e_bank_write", format_double(c.energy.e_bank_write)},
      {"e_crossbar_transfer", format_double(c.energy.e_crossbar_transfer)},
      {"e_ccu_read", format_double(c.energy.e_ccu_read)},
      {"e_ccu_write", format_double(c.energy.e_ccu_write)},
      {"wide_crossbar_factor", format_double(c.energy.wide_crossbar_factor)},
  };
}

inline void apply_config_text(SimConfig& c, std::istream& is) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto t = detail::trim(line);
    if (t.empty()) continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key = value");
    set_config_value(c, detail::trim(t.substr(0, eq)), t.substr(eq + 1));
  }
}

inline SimConfig parse_config(std::string_view text, SimConfig base = {}) {
  std::istringstream is{std::string(text)};
  apply_config_text(base, is);
  return base;
}

inline SimConfig load_config(const std::string& path, SimConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_text(base, is);
  return base;
}

inline std::string to_text(const SimConfig& c) {
  std::string out;
  for (const auto& [k, v] : config_entries(c)) out += k + " = " + v + "\n";
  return out;
}

}  // namespace malekeh
