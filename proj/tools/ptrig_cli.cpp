#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ptrig/config.hpp"
#include "ptrig/exit_probability.hpp"
#include "ptrig/simulation.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Problems with the invocation itself; reported like config errors.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Source {
  std::string config;
  std::string preset;

  ptrig::RunConfig load() const {
    if (!config.empty() && !preset.empty()) {
      throw UsageError("give either --config or --preset, not both");
    }
    if (!preset.empty()) return ptrig::load_preset(preset);
    if (config.empty()) throw UsageError("--config or --preset is required");
    return ptrig::load_config(config);
  }
};

fs::path output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("PTRIG_OUT_DIR"); env && *env) return env;
  return ".";
}

fs::path default_table_path(const fs::path& dir, const ptrig::RunConfig& c) {
  return dir / ("table-" +
                ptrig::fingerprint_hex(ptrig::expected_table_fingerprint(c)) +
                ".json");
}

void guard_overwrite(const fs::path& path, bool overwrite) {
  if (fs::exists(path) && !overwrite) {
    throw UsageError("'" + path.string() +
                     "' exists; pass --overwrite to replace it");
  }
}

void write_file(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ptrig::Error("failed writing '" + path.string() + "'");
}

std::vector<std::string> expand_values(const std::string& spec) {
  std::vector<std::string> out;
  if (const auto dots = spec.find(".."); dots != std::string::npos) {
    int lo = 0;
    int hi = 0;
    try {
      lo = std::stoi(spec.substr(0, dots));
      hi = std::stoi(spec.substr(dots + 2));
    } catch (const std::exception&) {
      throw UsageError("bad range '" + spec + "' (expected a..b)");
    }
    if (hi < lo) throw UsageError("empty range '" + spec + "'");
    for (int v = lo; v <= hi; ++v) out.push_back(std::to_string(v));
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::shared_ptr<const ptrig::ExitProbTable> find_table(
    const std::string& flag, const fs::path& dir, const ptrig::RunConfig& c,
    const std::string& config_hint) {
  const fs::path path = flag.empty() ? default_table_path(dir, c) : fs::path(flag);
  if (!fs::exists(path)) {
    throw ptrig::Error("no exit-probability table at '" + path.string() +
                       "'; create it with `ptrig build-table " + config_hint +
                       " --out " + path.string() + "`");
  }
  return std::make_shared<const ptrig::ExitProbTable>(
      ptrig::load_table(path.string()));
}

std::string source_hint(const Source& s) {
  return s.preset.empty() ? "--config " + s.config : "--preset " + s.preset;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive-triggering simulator for multi-agent control"};
  app.require_subcommand(1);

  Source source;
  std::string out;
  std::string table_flag;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> policy;
  bool allow_mismatch = false;
  bool overwrite = false;
  unsigned jobs = 0;
  std::string axis;
  std::string values;
  std::string preset_name;

  auto add_source = [&](CLI::App* cmd) {
    cmd->add_option("--config", source.config, "Experiment config (JSON)");
    cmd->add_option("--preset", source.preset, "Use a built-in preset");
  };

  auto* presets = app.add_subcommand("presets", "List presets or print one");
  presets->add_option("name", preset_name, "Preset to print");

  auto* validate = app.add_subcommand("validate", "Check a config");
  add_source(validate);

  auto* build = app.add_subcommand("build-table",
                                   "Tabulate exit probabilities for a config");
  add_source(build);
  build->add_option("--out", out, "Table file (default: <out dir>/table-<fp>.json)");
  build->add_option("--jobs", jobs, "Worker threads (0 = all cores)");
  build->add_flag("--overwrite", overwrite, "Replace an existing file");

  auto* run = app.add_subcommand("run", "Run one experiment");
  add_source(run);
  run->add_option("--out", out, "Output directory");
  run->add_option("--table", table_flag, "Exit table file");
  run->add_option("--seed", seed, "Override the master seed");
  run->add_option("--policy", policy, "Override the policy");
  run->add_flag("--allow-mismatch", allow_mismatch,
                "Accept a table built for a different config");
  run->add_flag("--overwrite", overwrite, "Replace existing outputs");

  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  add_source(sweep);
  sweep->add_option("--axis", axis, "N, K or policy")->required();
  sweep->add_option("--values", values, "Comma list or a..b range")->required();
  sweep->add_option("--out", out, "Output directory");
  sweep->add_option("--table", table_flag, "Exit table file");
  sweep->add_option("--seed", seed, "Override the master seed");
  sweep->add_option("--jobs", jobs, "Parallel runs (0 = all cores)");
  sweep->add_flag("--allow-mismatch", allow_mismatch,
                  "Accept a table built for a different config");
  sweep->add_flag("--overwrite", overwrite, "Replace existing outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (presets->parsed()) {
      if (preset_name.empty()) {
        for (const auto& n : ptrig::preset_names()) std::cout << n << '\n';
      } else {
        std::cout << ptrig::preset_text(preset_name);
      }
      return 0;
    }

    ptrig::RunConfig config = source.load();
    if (seed) config.seed = *seed;
    if (policy) config.policy = ptrig::parse_policy(*policy);
    config.validate();

    if (validate->parsed()) {
      std::cout << "ok: " << ptrig::to_string(config.scenario)
                << " N=" << config.N << " K=" << config.K << " M=" << config.M
                << " policy=" << ptrig::to_string(config.policy)
                << " steps=" << config.steps() << '\n'
                << "config fingerprint: "
                << ptrig::fingerprint_hex(ptrig::config_fingerprint(config))
                << '\n'
                << "table fingerprint:  "
                << ptrig::fingerprint_hex(
                       ptrig::expected_table_fingerprint(config))
                << '\n';
      return 0;
    }

    if (build->parsed()) {
      const fs::path path =
          out.empty() ? default_table_path(output_dir(""), config) : fs::path(out);
      guard_overwrite(path, overwrite);
      const auto start = std::chrono::steady_clock::now();
      const auto table = ptrig::build_table_for(config, jobs);
      const double secs = std::chrono::duration<double>(
                              std::chrono::steady_clock::now() - start)
                              .count();
      fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
      ptrig::save_table(table, path.string());
      std::printf("wrote %s\n  grid: %d norms in [0, %g], %d steps, %d samples\n"
                  "  fingerprint: %s\n  build time: %.2f s\n",
                  path.string().c_str(), table.grid_size(), table.delta,
                  table.max_steps, table.samples,
                  ptrig::fingerprint_hex(table.spec_fingerprint).c_str(), secs);
      return 0;
    }

    const fs::path dir = output_dir(out);

    if (run->parsed()) {
      std::shared_ptr<const ptrig::ExitProbTable> table;
      if (ptrig::is_predictive(config.policy)) {
        table = find_table(table_flag, dir, config, source_hint(source));
      }
      const std::string stem = "run-" + std::string(ptrig::to_string(config.policy)) +
                               "-seed" + std::to_string(config.seed);
      const fs::path csv = dir / (stem + ".csv");
      const fs::path json = dir / (stem + ".json");
      guard_overwrite(csv, overwrite);
      guard_overwrite(json, overwrite);
      const auto record = ptrig::run(config, table, allow_mismatch);
      std::ostringstream body;
      ptrig::write_run_csv(record, body);
      write_file(csv, body.str());
      write_file(json, ptrig::run_summary_json(record));
      std::printf("%s: E_bar=%s U_bar=%s%s\n  wrote %s\n  wrote %s\n",
                  std::string(ptrig::to_string(config.policy)).c_str(),
                  ptrig::format_double(record.E_bar).c_str(),
                  ptrig::format_double(record.U_bar).c_str(),
                  record.diverged
                      ? (" DIVERGED at step " +
                         std::to_string(record.divergence_step))
                            .c_str()
                      : "",
                  csv.string().c_str(), json.string().c_str());
      return 0;
    }

    if (sweep->parsed()) {
      const auto ax = ptrig::parse_axis(axis);
      const auto vals = expand_values(values);
      if (vals.empty()) throw UsageError("--values is empty");
      bool predictive = false;
      if (ax == ptrig::SweepAxis::Policy) {
        for (const auto& v : vals) {
          predictive |= ptrig::is_predictive(ptrig::parse_policy(v));
        }
      } else {
        for (auto p : config.policies) predictive |= ptrig::is_predictive(p);
      }
      std::shared_ptr<const ptrig::ExitProbTable> table;
      if (predictive) {
        table = find_table(table_flag, dir, config, source_hint(source));
      }
      const fs::path csv = dir / ("sweep-" + std::string(ptrig::to_string(ax)) +
                                  "-seed" + std::to_string(config.seed) + ".csv");
      guard_overwrite(csv, overwrite);
      const auto entries =
          ptrig::sweep(config, ax, vals, table, {jobs, allow_mismatch});
      std::ostringstream body;
      ptrig::write_sweep_csv(config, ax, entries, body);
      write_file(csv, body.str());
      int failed = 0;
      int diverged = 0;
      for (const auto& e : entries) {
        if (!e.record) {
          ++failed;
          std::fprintf(stderr, "%s=%s %s: %s\n", axis.c_str(), e.value.c_str(),
                       std::string(ptrig::to_string(e.policy)).c_str(),
                       e.error.c_str());
        } else if (e.record->diverged) {
          ++diverged;
        }
      }
      std::printf("%zu runs (%d diverged, %d failed)\n  wrote %s\n",
                  entries.size(), diverged, failed, csv.string().c_str());
      return 0;
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const ptrig::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
