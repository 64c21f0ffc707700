// Command-line experiment runner.
//
//   malekeh_cli gen      --kind GEMM_LIKE --warps 8 --instrs 2000 --seed 1 -o gemm.trace
//   malekeh_cli profile  --trace gemm.trace --out prof/
//   malekeh_cli annotate --trace gemm.trace -o gemm.annotated.trace
//   malekeh_cli run      --trace gemm.annotated.trace --mode malekeh --out run/
//   malekeh_cli sweep    --gen NEAR_REUSE:32:1000:1 --param sthld --values 0,1,2,5,10 --out sweep/
//   malekeh_cli compare  --trace gemm.trace --modes malekeh,naive_gto_lru,bow --out cmp/
//
// Exit codes: 0 ok, 1 usage, 2 bad input or configuration, 3 simulation abort.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "malekeh/malekeh.hpp"

namespace fs = std::filesystem;
using namespace malekeh;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitAbort = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string trace_path;
  std::string gen_spec;
  std::string config_path;
  std::string out_dir = ".";
  std::map<std::string, std::string> overrides;
};

void add_input_options(CLI::App& app, Common& c) {
  app.add_option("--trace", c.trace_path, "Trace file");
  app.add_option("--gen", c.gen_spec, "Synthetic trace instead of a file, KIND:warps:instrs:seed");
}

void add_config_options(CLI::App& app, Common& c) {
  app.add_option("--config", c.config_path, "Config file (key = value lines)");
  for (const auto& key : config_keys()) {
    auto* opt = app.add_option_function<std::string>(
        "--" + key, [&c, key](const std::string& v) { c.overrides[key] = v; }, "Config override");
    opt->group("Config");
  }
}

SimConfig resolve_config(const Common& c) {
  SimConfig cfg;
  if (!c.config_path.empty()) cfg = load_config(c.config_path, cfg);
  for (const auto& key : config_keys())
    if (auto it = c.overrides.find(key); it != c.overrides.end()) set_config_value(cfg, key, it->second);
  cfg.validate();
  return cfg;
}

KernelTrace parse_gen_spec(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() != 4) throw UsageError("--gen expects KIND:warps:instrs:seed, got '" + text + "'");
  auto kind = parse_synthetic_kind(parts[0]);
  if (!kind) throw UsageError("unknown synthetic kind '" + parts[0] + "'");
  try {
    return gen_synthetic(*kind, std::stoull(parts[1]), std::stoull(parts[2]), std::stoull(parts[3]));
  } catch (const std::logic_error& e) {
    throw UsageError("bad --gen value '" + text + "': " + e.what());
  }
}

KernelTrace load_input(const Common& c) {
  if (!c.trace_path.empty() && !c.gen_spec.empty()) throw UsageError("use either --trace or --gen, not both");
  if (!c.gen_spec.empty()) return parse_gen_spec(c.gen_spec);
  if (c.trace_path.empty()) throw UsageError("--trace or --gen is required");
  return load_trace(c.trace_path);
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write '" + path.string() + "'");
  os << content;
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string p; std::getline(ss, p, ',');) {
    auto t = detail::trim(p);
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

KernelTrace prepare_trace(const KernelTrace& raw, const SimConfig& cfg, bool force_annotate) {
  if (force_annotate) return profile_and_annotate(raw, cfg.profile_fraction, cfg.rthld);
  return raw;
}

// ---------------------------------------------------------------------------

int cmd_gen(const std::string& kind_name, std::size_t warps, std::size_t instrs, std::uint64_t seed,
            const std::string& out) {
  auto kind = parse_synthetic_kind(kind_name);
  if (!kind) throw UsageError("unknown synthetic kind '" + kind_name + "'");
  auto trace = gen_synthetic(*kind, warps, instrs, seed);
  if (out.empty() || out == "-") write_trace(std::cout, trace);
  else save_trace(out, trace);
  return 0;
}

int cmd_profile(const Common& c) {
  auto cfg = resolve_config(c);
  auto trace = load_input(c);
  auto out = prepare_out(c.out_dir);
  auto records = exact_reuse_distances(trace);
  std::ostringstream hist, ann;
  write_histogram_csv(hist, distance_histogram(records));
  write_annotations_csv(ann, majority_annotate(trace, cfg.profile_fraction, cfg.rthld));
  write_file(out / "histogram.csv", hist.str());
  write_file(out / "annotations.csv", ann.str());
  std::cout << "profiled " << trace.num_instructions() << " instructions, trace " << trace_id(trace) << "\n";
  return 0;
}

int cmd_annotate(const Common& c, const std::string& out) {
  auto cfg = resolve_config(c);
  auto trace = profile_and_annotate(load_input(c), cfg.profile_fraction, cfg.rthld);
  if (out.empty() || out == "-") write_trace(std::cout, trace);
  else save_trace(out, trace);
  return 0;
}

int cmd_run(const Common& c, bool annotate) {
  auto cfg = resolve_config(c);
  auto raw = load_input(c);
  auto trace = prepare_trace(raw, cfg, annotate);
  auto report = Simulator(trace, cfg).run(trace_id(trace));
  auto out = prepare_out(c.out_dir);
  write_file(out / "report.json", to_json(report).dump(2) + "\n");
  write_file(out / "summary.csv",
             config_comment(cfg) + "\n" + kSummaryHeader + "\n" + summary_row(report) + "\n");
  std::ostringstream adaptive;
  write_interval_csv(adaptive, report);
  write_file(out / "adaptive.csv", adaptive.str());
  std::cout << kSummaryHeader << "\n" << summary_row(report) << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& param, const std::string& values_text, bool annotate) {
  auto keys = config_keys();
  if (std::find(keys.begin(), keys.end(), param) == keys.end())
    throw UsageError("unknown sweep parameter '" + param + "'");
  auto values = split_list(values_text);
  if (values.empty()) throw UsageError("sweep needs at least one value");
  auto base = resolve_config(c);
  if (param == "sthld") base.sthld_mode = SthldMode::Static;
  auto raw = load_input(c);
  bool reannotate = annotate || param == "rthld" || param == "profile_fraction" ||
                    (requires_annotations(base.mode) && !raw.annotated());

  std::ostringstream csv;
  csv << config_comment(base) << "\n" << "param,value," << kSummaryHeader << "\n";
  for (const auto& v : values) {
    auto cfg = base;
    set_config_value(cfg, param, v);
    cfg.validate();
    auto trace = prepare_trace(raw, cfg, reannotate);
    auto report = Simulator(trace, cfg).run(trace_id(trace));
    csv << param << ',' << v << ',' << summary_row(report) << "\n";
  }
  auto out = prepare_out(c.out_dir);
  write_file(out / "sweep.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_compare(const Common& c, const std::string& modes_text, bool annotate) {
  auto base = resolve_config(c);
  auto raw = load_input(c);
  std::vector<Mode> modes{Mode::BaselineOcu};
  for (const auto& name : split_list(modes_text)) {
    auto m = parse_mode(name);
    if (!m) throw UsageError("unknown mode '" + name + "'");
    if (std::find(modes.begin(), modes.end(), *m) == modes.end()) modes.push_back(*m);
  }
  bool need = std::any_of(modes.begin(), modes.end(), requires_annotations);
  auto trace = prepare_trace(raw, base, annotate || (need && !raw.annotated()));
  auto id = trace_id(trace);

  std::vector<MetricsReport> reports;
  for (Mode m : modes) {
    auto cfg = base;
    cfg.mode = m;
    try {
      reports.push_back(Simulator(trace, cfg).run(id));
    } catch (const SimulationAbort& e) {
      throw SimulationAbort("mode " + std::string(to_string(m)) + ": " + e.what());
    }
  }
  auto table = compare(reports, reports.front());
  std::ostringstream csv;
  csv << config_comment(base) << "\n";
  write_comparison_csv(csv, table);
  Json j = to_json(table);
  j["config"] = config_json(base);
  auto out = prepare_out(c.out_dir);
  write_file(out / "compare.csv", csv.str());
  write_file(out / "compare.json", j.dump(2) + "\n");
  std::cout << csv.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Caching operand collector simulator"};
  app.require_subcommand(1);

  Common common;
  bool annotate = false;
  std::string out_file, param, values, modes;
  std::string kind = "RANDOM";
  std::size_t warps = 8, instrs = 1000;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen", "Write a synthetic trace");
  gen->add_option("--kind", kind, "NEAR_REUSE, FAR_REUSE, GEMM_LIKE or RANDOM")->capture_default_str();
  gen->add_option("--warps", warps)->capture_default_str();
  gen->add_option("--instrs", instrs, "Instructions per warp")->capture_default_str();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("-o,--output", out_file, "Output trace file (default stdout)");

  auto* profile = app.add_subcommand("profile", "Reuse-distance histogram and per-operand annotations");
  add_input_options(*profile, common);
  add_config_options(*profile, common);
  profile->add_option("--out", common.out_dir, "Output directory");

  auto* ann = app.add_subcommand("annotate", "Write the trace with reuse bits attached");
  add_input_options(*ann, common);
  add_config_options(*ann, common);
  ann->add_option("-o,--output", out_file, "Output trace file (default stdout)");

  auto* run = app.add_subcommand("run", "Simulate one configuration");
  add_input_options(*run, common);
  add_config_options(*run, common);
  run->add_flag("--annotate", annotate, "Profile and annotate the trace before running");
  run->add_option("--out", common.out_dir, "Output directory");

  auto* sweep = app.add_subcommand("sweep", "Run one configuration parameter over a list of values");
  add_input_options(*sweep, common);
  add_config_options(*sweep, common);
  sweep->add_option("--param", param, "Config key to vary")->required();
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_flag("--annotate", annotate, "Profile and annotate the trace before running");
  sweep->add_option("--out", common.out_dir, "Output directory");

  auto* cmp = app.add_subcommand("compare", "Run several modes and normalize to baseline_ocu");
  add_input_options(*cmp, common);
  add_config_options(*cmp, common);
  cmp->add_option("--modes", modes, "Comma-separated modes")->required();
  cmp->add_flag("--annotate", annotate, "Profile and annotate the trace before running");
  cmp->add_option("--out", common.out_dir, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen(kind, warps, instrs, seed, out_file);
    if (profile->parsed()) return cmd_profile(common);
    if (ann->parsed()) return cmd_annotate(common, out_file);
    if (run->parsed()) return cmd_run(common, annotate);
    if (sweep->parsed()) return cmd_sweep(common, param, values, annotate);
    if (cmp->parsed()) return cmd_compare(common, modes, annotate);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const SimulationAbort& e) {
    std::cerr << "simulation aborted: " << e.what() << "\n";
    return kExitAbort;
  } catch (const EngineError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
