// Command-line front end: sweep execution plus CSV post-processing.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "nstep/stats.hpp"
#include "nstep/sweep.hpp"

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nstep::stats::Window parse_window(const std::string& w) {
  if (w == "first50") return nstep::stats::Window::First50;
  if (w == "last50") return nstep::stats::Window::Last50;
  if (w == "all") return nstep::stats::Window::All;
  throw std::runtime_error("window must be first50, last50 or all");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-step action-value targets on a DQN-style learner (mountain car)"};
  app.require_subcommand(1);

  std::string preset;
  std::string config_file;
  std::string out_dir = "results";
  int runs = 0;
  std::uint64_t base_seed = 0;
  int jobs = -1;

  auto* run_cmd = app.add_subcommand("run", "Execute the seeded runs of a sweep");
  auto* preset_opt = run_cmd->add_option("--preset", preset, "Preset name: nstep_sweep, target_freq, on_vs_off");
  auto* config_opt = run_cmd->add_option("--config", config_file, "Sweep config file (flat key = value)");
  preset_opt->excludes(config_opt);
  auto* runs_opt = run_cmd->add_option("--runs", runs, "Runs per config");
  auto* seed_opt = run_cmd->add_option("--seed", base_seed, "Base seed for run-seed derivation");
  auto* out_opt = run_cmd->add_option("--out", out_dir, "Output directory");
  auto* jobs_opt = run_cmd->add_option("--jobs", jobs, "Parallel runs (0 = all cores)");

  std::string sum_out = "results";
  auto* sum_cmd = app.add_subcommand("summarize", "Write summary.csv from episodes.csv");
  sum_cmd->add_option("--out", sum_out, "Results directory");

  std::string welch_a, welch_b, welch_window = "all", welch_out = "results";
  auto* welch_cmd = app.add_subcommand("welch", "Welch's test between two labels");
  welch_cmd->add_option("--a", welch_a, "First label")->required();
  welch_cmd->add_option("--b", welch_b, "Second label")->required();
  welch_cmd->add_option("--window", welch_window, "first50, last50 or all");
  welch_cmd->add_option("--out", welch_out, "Results directory");

  std::string plot_out = "results";
  auto* plot_cmd = app.add_subcommand("plotdata", "Write plot.csv (50-episode interval means)");
  plot_cmd->add_option("--out", plot_out, "Results directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      std::string text;
      if (preset_opt->count() > 0) {
        text = "preset = " + preset + "\n";
      } else if (config_opt->count() > 0) {
        text = slurp(config_file);
      } else {
        std::cerr << "run: need --preset or --config\n";
        return 2;
      }
      nstep::sweep::SweepSpec spec = nstep::sweep::parse_config(text);
      if (runs_opt->count() > 0) spec.runs_per_config = runs;
      if (seed_opt->count() > 0) spec.base_seed = base_seed;
      if (out_opt->count() > 0) spec.out_dir = out_dir;
      if (jobs_opt->count() > 0) spec.jobs = jobs;
      const bool ok = nstep::sweep::run_sweep(spec);
      std::cout << (ok ? "all runs completed\n" : "some runs missing or failed\n");
      return ok ? 0 : 1;
    }
    if (sum_cmd->parsed()) {
      nstep::sweep::write_summary(sum_out);
      std::cout << sum_out << "/summary.csv written\n";
      return 0;
    }
    if (welch_cmd->parsed()) {
      const auto r = nstep::sweep::write_welch(welch_out, welch_a, welch_b, parse_window(welch_window));
      std::cout << "t=" << nstep::sweep::fmt_real(r.t_stat) << " dof=" << nstep::sweep::fmt_real(r.dof)
                << " p=" << nstep::sweep::fmt_real(r.p_value) << "\n";
      return 0;
    }
    if (plot_cmd->parsed()) {
      nstep::sweep::emit_plot_data(plot_out);
      std::cout << plot_out << "/plot.csv written\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
