#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <unistd.h>

#include "nstep/rng.hpp"
#include "nstep/stats.hpp"
#include "nstep/trainer.hpp"

namespace nstep::sweep {

struct LabeledConfig {
  std::string label;
  trainer::ExperimentConfig config;
};

// One sweep: a list of labeled configs plus execution parameters. `entries`
// keeps the normalized key=value lines the spec was built from, so render()
// round-trips through parse_config().
struct SweepSpec {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<LabeledConfig> configs;
  int runs_per_config = 1;
  std::uint64_t base_seed = 1;
  std::string out_dir = "results";
  int jobs = 0;  // 0 = hardware concurrency
};

inline bool same_config(const trainer::ExperimentConfig& a, const trainer::ExperimentConfig& b) {
  const auto& x = a.algorithm;
  const auto& y = b.algorithm;
  return x.family == y.family && x.n == y.n && x.off_policy_correction == y.off_policy_correction &&
         x.sigma_mode == y.sigma_mode && x.sigma_value == y.sigma_value && x.cutoff_k == y.cutoff_k &&
         a.epsilon == b.epsilon && a.gamma == b.gamma && a.episodes == b.episodes &&
         a.timeout_steps == b.timeout_steps && a.hidden_units == b.hidden_units &&
         a.alpha == b.alpha && a.beta_g == b.beta_g && a.beta_s == b.beta_s &&
         a.min_sq == b.min_sq && a.buffer_capacity == b.buffer_capacity &&
         a.warmup_actions == b.warmup_actions && a.batch_size == b.batch_size &&
         a.target_sync_period == b.target_sync_period &&
         a.policy_source_for_targets == b.policy_source_for_targets;
}

inline bool same_spec(const SweepSpec& a, const SweepSpec& b) {
  if (a.configs.size() != b.configs.size() || a.runs_per_config != b.runs_per_config ||
      a.base_seed != b.base_seed || a.out_dir != b.out_dir || a.jobs != b.jobs) {
    return false;
  }
  for (std::size_t i = 0; i < a.configs.size(); ++i) {
    if (a.configs[i].label != b.configs[i].label ||
        !same_config(a.configs[i].config, b.configs[i].config)) {
      return false;
    }
  }
  return true;
}

// Seed for run i of a labeled config: pure integer mixing, stable across
// platforms.
inline std::uint64_t run_seed(std::uint64_t base_seed, const std::string& label, int run_index) {
  return base_seed ^ splitmix64(fnv1a64(label) ^ splitmix64(static_cast<std::uint64_t>(run_index)));
}

inline std::string fmt_real(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Presets for the three studies.
// ---------------------------------------------------------------------------

namespace detail {

inline trainer::ExperimentConfig base_config() { return trainer::ExperimentConfig{}; }

struct AlgoDef {
  const char* tag;
  targets::Family family;
  targets::SigmaMode sigma_mode;
  double sigma_value;
};

// The six algorithm variants compared in the n-step and sync-frequency
// studies; Sarsa and Q(sigma) run uncorrected there.
inline const std::vector<AlgoDef>& algo_defs() {
  static const std::vector<AlgoDef> defs = {
      {"sarsa", targets::Family::Sarsa, targets::SigmaMode::Fixed, 0.5},
      {"qsigma0.5", targets::Family::QSigma, targets::SigmaMode::Fixed, 0.5},
      {"tree_backup", targets::Family::TreeBackup, targets::SigmaMode::Fixed, 0.5},
      {"decsigma", targets::Family::QSigma, targets::SigmaMode::Decaying, 0.5},
      {"retrace", targets::Family::Retrace, targets::SigmaMode::Fixed, 0.5},
      {"qlearning", targets::Family::QLearning, targets::SigmaMode::Fixed, 0.5},
  };
  return defs;
}

}  // namespace detail

inline std::vector<LabeledConfig> preset_configs(const std::string& name) {
  std::vector<LabeledConfig> out;
  if (name == "nstep_sweep") {
    for (const auto& def : detail::algo_defs()) {
      for (int n : {1, 3, 5, 10, 20}) {
        trainer::ExperimentConfig c = detail::base_config();
        c.algorithm.family = def.family;
        c.algorithm.sigma_mode = def.sigma_mode;
        c.algorithm.sigma_value = def.sigma_value;
        c.algorithm.n = n;
        c.algorithm.off_policy_correction = false;
        out.push_back({std::string(def.tag) + "_n" + std::to_string(n), c});
      }
    }
  } else if (name == "target_freq") {
    for (const auto& def : detail::algo_defs()) {
      for (int sync : {500, 1000, 2000}) {
        trainer::ExperimentConfig c = detail::base_config();
        c.algorithm.family = def.family;
        c.algorithm.sigma_mode = def.sigma_mode;
        c.algorithm.sigma_value = def.sigma_value;
        c.algorithm.n = 20;
        c.algorithm.off_policy_correction = false;
        c.target_sync_period = sync;
        out.push_back({std::string(def.tag) + "_n20_sync" + std::to_string(sync), c});
      }
    }
  } else if (name == "on_vs_off") {
    for (const auto& def : detail::algo_defs()) {
      if (def.family != targets::Family::Sarsa && def.family != targets::Family::QSigma) continue;
      for (bool corrected : {false, true}) {
        trainer::ExperimentConfig c = detail::base_config();
        c.algorithm.family = def.family;
        c.algorithm.sigma_mode = def.sigma_mode;
        c.algorithm.sigma_value = def.sigma_value;
        c.algorithm.n = 1;
        c.algorithm.off_policy_correction = corrected;
        out.push_back({std::string(def.tag) + "_n1_" + (corrected ? "offpolicy" : "onpolicy"), c});
      }
    }
  } else {
    throw std::runtime_error("unknown preset: " + name);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat key=value config format.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] inline void parse_fail(int line, const std::string& msg) {
  throw std::runtime_error("config line " + std::to_string(line) + ": " + msg);
}

inline long long to_int(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) parse_fail(line, "expected integer, got '" + v + "'");
    return x;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    parse_fail(line, "expected integer, got '" + v + "'");
  }
}

inline std::uint64_t to_u64(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const std::uint64_t x = std::stoull(v, &pos);
    if (pos != v.size()) parse_fail(line, "expected unsigned integer, got '" + v + "'");
    return x;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    parse_fail(line, "expected unsigned integer, got '" + v + "'");
  }
}

inline double to_real(const std::string& v, int line) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) parse_fail(line, "expected real, got '" + v + "'");
    return x;
  } catch (const std::runtime_error&) {
    throw;
  } catch (...) {
    parse_fail(line, "expected real, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  parse_fail(line, "expected boolean, got '" + v + "'");
}

inline targets::Family to_family(const std::string& v, int line) {
  if (v == "sarsa") return targets::Family::Sarsa;
  if (v == "tree_backup") return targets::Family::TreeBackup;
  if (v == "qsigma") return targets::Family::QSigma;
  if (v == "retrace") return targets::Family::Retrace;
  if (v == "qlearning") return targets::Family::QLearning;
  parse_fail(line, "unknown algorithm '" + v + "'");
}

}  // namespace detail

// Parses the flat `key = value` sweep format (# starts a comment). A
// `preset` key expands to that study's config grid; the remaining keys
// override protocol parameters on every config. Without a preset the file
// defines a single labeled config.
inline SweepSpec parse_config(const std::string& text) {
  SweepSpec spec;
  std::vector<std::pair<std::string, std::string>> kv;
  std::vector<int> kv_lines;
  {
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::size_t hash = raw.find('#');
      if (hash != std::string::npos) raw.erase(hash);
      const std::string line = detail::trim(raw);
      if (line.empty()) continue;
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos) detail::parse_fail(line_no, "expected 'key = value'");
      const std::string key = detail::trim(line.substr(0, eq));
      const std::string value = detail::trim(line.substr(eq + 1));
      if (key.empty() || value.empty()) detail::parse_fail(line_no, "expected 'key = value'");
      for (const auto& [k, v] : kv) {
        if (k == key) detail::parse_fail(line_no, "duplicate key '" + key + "'");
      }
      kv.emplace_back(key, value);
      kv_lines.push_back(line_no);
    }
  }

  std::string preset;
  std::string label;
  trainer::ExperimentConfig single = detail::base_config();
  bool saw_algo_key = false;

  // Protocol overrides applied to every config (preset or single).
  std::vector<std::function<void(trainer::ExperimentConfig&)>> overrides;

  for (std::size_t i = 0; i < kv.size(); ++i) {
    const std::string& key = kv[i].first;
    const std::string& value = kv[i].second;
    const int line = kv_lines[i];
    auto algo_key = [&] { saw_algo_key = true; };
    if (key == "preset") {
      preset = value;
    } else if (key == "label") {
      label = value;
      algo_key();
    } else if (key == "algorithm") {
      single.algorithm.family = detail::to_family(value, line);
      algo_key();
    } else if (key == "n") {
      single.algorithm.n = static_cast<int>(detail::to_int(value, line));
      algo_key();
    } else if (key == "off_policy") {
      single.algorithm.off_policy_correction = detail::to_bool(value, line);
      algo_key();
    } else if (key == "sigma_mode") {
      if (value == "fixed") {
        single.algorithm.sigma_mode = targets::SigmaMode::Fixed;
      } else if (value == "decaying") {
        single.algorithm.sigma_mode = targets::SigmaMode::Decaying;
      } else {
        detail::parse_fail(line, "sigma_mode must be fixed or decaying");
      }
      algo_key();
    } else if (key == "sigma") {
      single.algorithm.sigma_value = detail::to_real(value, line);
      algo_key();
    } else if (key == "cutoff_k") {
      single.algorithm.cutoff_k = detail::to_real(value, line);
      algo_key();
    } else if (key == "epsilon") {
      const double x = detail::to_real(value, line);
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.epsilon = x; });
    } else if (key == "gamma") {
      const double x = detail::to_real(value, line);
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.gamma = x; });
    } else if (key == "episodes") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.episodes = x; });
    } else if (key == "timeout_steps") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.timeout_steps = x; });
    } else if (key == "hidden_units") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.hidden_units = x; });
    } else if (key == "alpha") {
      const double x = detail::to_real(value, line);
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.alpha = x; });
    } else if (key == "beta_g") {
      const double x = detail::to_real(value, line);
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.beta_g = x; });
    } else if (key == "beta_s") {
      const double x = detail::to_real(value, line);
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.beta_s = x; });
    } else if (key == "min_sq") {
      const double x = detail::to_real(value, line);
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.min_sq = x; });
    } else if (key == "buffer_capacity") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.buffer_capacity = x; });
    } else if (key == "warmup_actions") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.warmup_actions = x; });
    } else if (key == "batch_size") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.batch_size = x; });
    } else if (key == "target_sync_period") {
      const int x = static_cast<int>(detail::to_int(value, line));
      overrides.push_back([x](trainer::ExperimentConfig& c) { c.target_sync_period = x; });
    } else if (key == "policy_source") {
      trainer::PolicySource src;
      if (value == "target_net") {
        src = trainer::PolicySource::TargetNet;
      } else if (value == "online_net") {
        src = trainer::PolicySource::OnlineNet;
      } else {
        detail::parse_fail(line, "policy_source must be target_net or online_net");
      }
      overrides.push_back([src](trainer::ExperimentConfig& c) { c.policy_source_for_targets = src; });
    } else if (key == "runs") {
      spec.runs_per_config = static_cast<int>(detail::to_int(value, line));
      if (spec.runs_per_config < 1) detail::parse_fail(line, "runs must be >= 1");
    } else if (key == "base_seed") {
      spec.base_seed = detail::to_u64(value, line);
    } else if (key == "out_dir") {
      spec.out_dir = value;
    } else if (key == "jobs") {
      spec.jobs = static_cast<int>(detail::to_int(value, line));
      if (spec.jobs < 0) detail::parse_fail(line, "jobs must be >= 0");
    } else {
      detail::parse_fail(line, "unknown key '" + key + "'");
    }
  }

  if (!preset.empty() && saw_algo_key) {
    throw std::runtime_error("config: algorithm keys cannot be combined with a preset");
  }
  if (!preset.empty()) {
    spec.configs = preset_configs(preset);
  } else {
    spec.configs.push_back({label.empty() ? "run" : label, single});
  }
  for (auto& lc : spec.configs) {
    for (const auto& f : overrides) f(lc.config);
    lc.config.validate();
  }
  spec.entries = std::move(kv);
  return spec;
}

// Canonical text form; parse_config(render(spec)) reproduces spec.
inline std::string render(const SweepSpec& spec) {
  std::string out;
  for (const auto& [k, v] : spec.entries) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Execution and CSV persistence.
// ---------------------------------------------------------------------------

inline constexpr const char* kEpisodesHeader = "label,seed,episode,return,steps,timed_out";
inline constexpr const char* kSummaryHeader = "label,window,n_runs,mean,sd,ci_low,ci_high";
inline constexpr const char* kWelchHeader = "label_a,label_b,window,t,dof,p";
inline constexpr const char* kPlotHeader = "label,interval,mean,ci_low,ci_high,n_runs";

namespace detail {

inline std::string run_file_name(const std::string& label, std::uint64_t seed) {
  return label + "__seed" + std::to_string(seed) + ".csv";
}

inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  static std::atomic<unsigned> counter{0};
  // Unique tmp suffix so concurrent writers of the same target cannot
  // interleave; the rename is atomic either way.
  const std::filesystem::path tmp =
      path.string() + ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot open " + tmp.string());
    os << contents;
    if (!os.flush()) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

struct EpisodeRow {
  int episode = 0;
  double ret = 0.0;
  int steps = 0;
  bool timed_out = false;
};

struct RunRows {
  std::uint64_t seed = 0;
  std::vector<EpisodeRow> episodes;
};

struct LabelRows {
  std::string label;
  std::vector<RunRows> runs;
};

inline std::string episodes_csv_rows(const std::string& label, std::uint64_t seed,
                                     const std::vector<trainer::EpisodeRecord>& eps) {
  std::string out;
  for (const auto& e : eps) {
    out += label;
    out += ',';
    out += std::to_string(seed);
    out += ',';
    out += std::to_string(e.episode_index);
    out += ',';
    out += fmt_real(e.ret);
    out += ',';
    out += std::to_string(e.steps);
    out += ',';
    out += e.timed_out ? '1' : '0';
    out += '\n';
  }
  return out;
}

// Reads an episodes.csv-style file grouped by label in order of first
// appearance.
inline std::vector<LabelRows> read_episodes_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || detail::trim(line) != kEpisodesHeader) {
    throw std::runtime_error("bad header in " + path.string());
  }
  std::vector<LabelRows> out;
  int line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 6) {
      throw std::runtime_error(path.string() + " line " + std::to_string(line_no) + ": expected 6 fields");
    }
    const std::string& label = f[0];
    const std::uint64_t seed = std::stoull(f[1]);
    EpisodeRow row;
    row.episode = std::stoi(f[2]);
    row.ret = std::stod(f[3]);
    row.steps = std::stoi(f[4]);
    row.timed_out = f[5] == "1";
    LabelRows* lr = nullptr;
    for (auto& cand : out) {
      if (cand.label == label) {
        lr = &cand;
        break;
      }
    }
    if (lr == nullptr) {
      out.push_back({label, {}});
      lr = &out.back();
    }
    RunRows* rr = nullptr;
    for (auto& cand : lr->runs) {
      if (cand.seed == seed) {
        rr = &cand;
        break;
      }
    }
    if (rr == nullptr) {
      lr->runs.push_back({seed, {}});
      rr = &lr->runs.back();
    }
    rr->episodes.push_back(row);
  }
  return out;
}

// Executes all (label, seed) runs not yet present under out_dir/runs/, in a
// pool of worker threads, then rebuilds episodes.csv from the per-run files.
// Returns true when every requested run has completed.
inline bool run_sweep(const SweepSpec& spec, std::ostream& log = std::cerr) {
  namespace fs = std::filesystem;
  const fs::path out_dir(spec.out_dir);
  const fs::path runs_dir = out_dir / "runs";
  fs::create_directories(runs_dir);

  struct WorkItem {
    const LabeledConfig* lc;
    int run_index;
    std::uint64_t seed;
  };
  std::vector<WorkItem> items;
  for (const auto& lc : spec.configs) {
    for (int i = 0; i < spec.runs_per_config; ++i) {
      items.push_back({&lc, i, run_seed(spec.base_seed, lc.label, i)});
    }
  }

  std::atomic<std::size_t> next{0};
  std::atomic<int> failures{0};
  std::mutex log_mutex;
  const int jobs = spec.jobs > 0
                       ? spec.jobs
                       : std::max(1u, std::thread::hardware_concurrency());

  auto worker = [&]() {
    while (true) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= items.size()) return;
      const WorkItem& item = items[idx];
      const fs::path path = runs_dir / detail::run_file_name(item.lc->label, item.seed);
      if (fs::exists(path)) {
        std::lock_guard<std::mutex> lk(log_mutex);
        log << "skip " << item.lc->label << " seed=" << item.seed << " (already done)\n";
        continue;
      }
      try {
        trainer::ExperimentConfig cfg = item.lc->config;
        cfg.seed = item.seed;
        const trainer::RunResult res = trainer::run(cfg);
        detail::write_atomic(path, episodes_csv_rows(item.lc->label, item.seed, res.episodes));
        std::lock_guard<std::mutex> lk(log_mutex);
        log << "done " << item.lc->label << " seed=" << item.seed << " episodes=" << res.episodes.size()
            << " wall=" << fmt_real(res.wall_seconds) << "s\n";
      } catch (const std::exception& e) {
        failures.fetch_add(1);
        std::lock_guard<std::mutex> lk(log_mutex);
        log << "FAIL " << item.lc->label << " seed=" << item.seed << ": " << e.what() << "\n";
      }
    }
  };

  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  // Collect per-run files (stable order: config order, then run index).
  std::string all(kEpisodesHeader);
  all += '\n';
  bool complete = failures.load() == 0;
  for (const auto& item : items) {
    const fs::path path = runs_dir / detail::run_file_name(item.lc->label, item.seed);
    std::ifstream is(path);
    if (!is) {
      complete = false;
      continue;
    }
    std::string line;
    while (std::getline(is, line)) {
      if (!line.empty()) {
        all += line;
        all += '\n';
      }
    }
  }
  detail::write_atomic(out_dir / "episodes.csv", all);
  return complete;
}

// Per-run window means for one label; the run is the statistical unit.
inline std::vector<double> label_window_means(const LabelRows& lr, stats::Window w) {
  std::vector<double> out;
  out.reserve(lr.runs.size());
  for (const auto& run : lr.runs) {
    std::vector<double> returns;
    returns.reserve(run.episodes.size());
    for (const auto& e : run.episodes) returns.push_back(e.ret);
    out.push_back(stats::window_mean(returns, w));
  }
  return out;
}

// summary.csv: one row per (label, window).
inline void write_summary(const std::string& out_dir) {
  namespace fs = std::filesystem;
  const auto labels = read_episodes_csv(fs::path(out_dir) / "episodes.csv");
  std::string out(kSummaryHeader);
  out += '\n';
  for (const auto& lr : labels) {
    for (stats::Window w : {stats::Window::First50, stats::Window::Last50, stats::Window::All}) {
      const std::vector<double> means = label_window_means(lr, w);
      const stats::SummaryStats s = stats::summarize(means);
      out += lr.label;
      out += ',';
      out += stats::window_name(w);
      out += ',';
      out += std::to_string(s.n_samples);
      out += ',';
      out += fmt_real(s.mean);
      out += ',';
      out += fmt_real(s.sample_sd);
      out += ',';
      out += fmt_real(s.ci_low);
      out += ',';
      out += fmt_real(s.ci_high);
      out += '\n';
    }
  }
  detail::write_atomic(fs::path(out_dir) / "summary.csv", out);
}

// Appends one Welch-test row comparing two labels on a window.
inline stats::WelchResult write_welch(const std::string& out_dir, const std::string& label_a,
                                      const std::string& label_b, stats::Window w) {
  namespace fs = std::filesystem;
  const auto labels = read_episodes_csv(fs::path(out_dir) / "episodes.csv");
  const LabelRows* a = nullptr;
  const LabelRows* b = nullptr;
  for (const auto& lr : labels) {
    if (lr.label == label_a) a = &lr;
    if (lr.label == label_b) b = &lr;
  }
  if (a == nullptr) throw std::runtime_error("welch: no runs for label " + label_a);
  if (b == nullptr) throw std::runtime_error("welch: no runs for label " + label_b);
  const stats::WelchResult r = stats::welch_test(label_window_means(*a, w), label_window_means(*b, w));

  const fs::path path = fs::path(out_dir) / "welch.csv";
  const bool fresh = !fs::exists(path);
  std::ofstream os(path, std::ios::app);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  if (fresh) os << kWelchHeader << '\n';
  os << label_a << ',' << label_b << ',' << stats::window_name(w) << ',' << fmt_real(r.t_stat)
     << ',' << fmt_real(r.dof) << ',' << fmt_real(r.p_value) << '\n';
  return r;
}

// plot.csv: mean return per 50-episode interval with a 95% t-CI across runs.
inline void emit_plot_data(const std::string& out_dir, int window_size = 50) {
  namespace fs = std::filesystem;
  if (window_size < 1) throw std::invalid_argument("emit_plot_data: window_size >= 1");
  const auto labels = read_episodes_csv(fs::path(out_dir) / "episodes.csv");
  std::string out(kPlotHeader);
  out += '\n';
  for (const auto& lr : labels) {
    std::size_t max_eps = 0;
    for (const auto& run : lr.runs) max_eps = std::max(max_eps, run.episodes.size());
    const std::size_t intervals = (max_eps + window_size - 1) / window_size;
    for (std::size_t k = 0; k < intervals; ++k) {
      std::vector<double> interval_means;
      for (const auto& run : lr.runs) {
        const std::size_t lo = k * window_size;
        const std::size_t hi = std::min(run.episodes.size(), (k + 1) * static_cast<std::size_t>(window_size));
        if (lo >= hi) continue;  // run shorter than this interval
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) sum += run.episodes[i].ret;
        interval_means.push_back(sum / static_cast<double>(hi - lo));
      }
      if (interval_means.empty()) continue;
      double mean, lo95, hi95;
      if (interval_means.size() >= 2) {
        const stats::SummaryStats s = stats::summarize(interval_means);
        mean = s.mean;
        lo95 = s.ci_low;
        hi95 = s.ci_high;
      } else {
        mean = lo95 = hi95 = interval_means[0];
      }
      out += lr.label;
      out += ',';
      out += std::to_string(k);
      out += ',';
      out += fmt_real(mean);
      out += ',';
      out += fmt_real(lo95);
      out += ',';
      out += fmt_real(hi95);
      out += ',';
      out += std::to_string(interval_means.size());
      out += '\n';
    }
  }
  detail::write_atomic(fs::path(out_dir) / "plot.csv", out);
}

}  // namespace nstep::sweep
