// hetsched: command-line driver for simulations, sweeps, training and exports.
//
// Exit codes: 0 success, 1 configuration/input error, 2 contract violation.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hetsched/errors.hpp"
#include "hetsched/harness.hpp"
#include "hetsched/heuristics.hpp"
#include "hetsched/profile.hpp"

namespace {

using namespace hetsched;
using harness::ExperimentConfig;

struct CommonFlags {
  std::string config_path;
  std::string job, resources;
  std::vector<std::string> schedulers;
  std::vector<std::string> scales;
  double sim_length = 0, warmup = 0;
  std::size_t capacity = 0;
  std::vector<std::uint64_t> seeds;
  std::vector<double> sigmas;
  bool pss = false;
  std::string checkpoint;
  std::size_t threads = 0;
  std::string out;

  CLI::Option *o_sched = nullptr, *o_scale = nullptr, *o_len = nullptr, *o_warm = nullptr, *o_cap = nullptr,
              *o_seed = nullptr, *o_sigma = nullptr, *o_pss = nullptr, *o_ckpt = nullptr, *o_threads = nullptr;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON experiment config; flags override its values");
    app->add_option("--job", job, "job profile file");
    app->add_option("--resources", resources, "resource profile file");
    o_sched = app->add_option("--scheduler,--schedulers", schedulers, "heft|neural|random|fifo (list allowed)")->delimiter(',');
    o_scale = app->add_option("--scale,--scales", scales, "mean inter-arrival time, 'inf' disables injection")->delimiter(',');
    o_len = app->add_option("--sim-length", sim_length, "simulation length");
    o_warm = app->add_option("--warmup", warmup, "warm-up period excluded from metrics");
    o_cap = app->add_option("--capacity", capacity, "job queue capacity");
    o_seed = app->add_option("--seed,--seeds", seeds, "seed (list allowed)")->delimiter(',');
    o_sigma = app->add_option("--sigma,--sigmas", sigmas, "noise sigma as a fraction of mean exec time")->delimiter(',');
    o_pss = app->add_flag("--pss", pss, "start from a full job queue (pseudo-steady-state)");
    o_ckpt = app->add_option("--checkpoint", checkpoint, "neural parameters checkpoint");
    o_threads = app->add_option("--threads", threads, "worker threads, 0 = all cores");
    app->add_option("--out", out, "output path");
  }

  /// Training redirects --sim-length, --seed and --sigma to the training block.
  ExperimentConfig resolve(bool training = false) const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : harness::load_config(config_path);
    if (!job.empty()) c.job_path = job;
    if (!resources.empty()) c.resources_path = resources;
    if (o_sched->count()) c.schedulers = schedulers;
    if (o_scale->count()) {
      c.scales.clear();
      for (const auto& s : scales) {
        if (s == "inf") {
          c.scales.push_back(std::numeric_limits<double>::infinity());
          continue;
        }
        try {
          std::size_t used = 0;
          c.scales.push_back(std::stod(s, &used));
          if (used != s.size()) throw std::invalid_argument(s);
        } catch (const std::exception&) {
          throw ConfigError("bad --scale value '" + s + "'");
        }
      }
    }
    if (o_len->count()) (training ? c.train.sim_length : c.sim_length) = sim_length;
    if (o_warm->count()) c.warmup = warmup;
    if (o_cap->count()) c.capacity = capacity;
    if (o_seed->count()) {
      if (training && seeds.size() != 1) throw ConfigError("training takes a single --seed");
      if (training)
        c.train.seed = seeds.front();
      else
        c.seeds = seeds;
    }
    if (o_sigma->count()) {
      if (training && sigmas.size() != 1) throw ConfigError("training takes a single --sigma");
      if (training)
        c.train.noise.sigma_fraction = sigmas.front();
      else
        c.sigmas = sigmas;
    }
    if (o_pss->count()) c.pseudo_steady_state = pss;
    if (o_ckpt->count()) c.checkpoint = checkpoint;
    if (o_threads->count()) c.threads = threads;
    c.train.capacity = c.capacity;
    return c;
  }
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty())
    std::cout << text;
  else
    harness::write_text(path, text);
}

harness::Json run_json(const ExperimentConfig& c, const std::string& scheduler, double scale, double sigma,
                       std::uint64_t seed) {
  auto j = harness::config_to_json(c);
  j["run"] = {{"scheduler", scheduler},
              {"scale", std::isfinite(scale) ? harness::Json(scale) : harness::Json("inf")},
              {"sigma", sigma},
              {"seed", seed}};
  return j;
}

EpisodeResult simulate_one(const ExperimentConfig& c, bool log_events) {
  harness::validate(c);
  auto profiles = harness::load_profiles(c);
  std::unique_ptr<neural::PolicyNetwork> net;
  if (c.schedulers.front() == "neural") net = harness::make_network(c, profiles);
  auto sched = harness::make_scheduler(c.schedulers.front(), c.seeds.front(), net.get());
  auto sc = harness::sim_config(c, c.scales.front(), c.sigmas.front(), c.seeds.front());
  sc.log_events = log_events;
  return run_episode(profiles.job, profiles.resources, sc, *sched);
}

int run(int argc, char** argv) {
  CLI::App app{"hetsched: DAG task scheduling on heterogeneous processors"};
  app.require_subcommand(1);

  CommonFlags sim_flags, static_flags, sweep_flags, noise_flags, train_flags, gantt_flags;

  auto* simulate = app.add_subcommand("simulate", "run one episode and print its metrics JSON");
  sim_flags.attach(simulate);
  std::string gantt_path, events_path;
  simulate->add_option("--gantt", gantt_path, "also write the Gantt CSV (and companion JSON)");
  simulate->add_option("--events", events_path, "also write the event log");

  auto* sstatic = app.add_subcommand("schedule-static", "HEFT schedule of a single job: Gantt CSV and makespan");
  static_flags.attach(sstatic);

  auto* sweep = app.add_subcommand("sweep", "evaluate schedulers over scales and seeds");
  sweep_flags.attach(sweep);
  std::string sweep_summary;
  sweep->add_option("--summary", sweep_summary, "aggregate CSV path (default: stdout)");

  auto* noise = app.add_subcommand("noise-sweep", "evaluate schedulers over noise levels with paired seeds");
  noise_flags.attach(noise);
  std::string noise_summary;
  noise->add_option("--summary", noise_summary, "aggregate CSV path (default: stdout)");

  auto* train = app.add_subcommand("train", "train the neural scheduler over a curriculum");
  train_flags.attach(train);
  std::string resume, curriculum;
  std::optional<std::size_t> rollouts;
  train->add_option("--resume", resume, "continue from a checkpoint written by an earlier run");
  train->add_option("--curriculum", curriculum, "stages as scale:episodes,... (e.g. 500:50,250:50)");
  train->add_option("--rollouts", rollouts, "rollouts per training episode");

  auto* gantt = app.add_subcommand("export-gantt", "simulate one episode and write its Gantt CSV and JSON");
  gantt_flags.attach(gantt);
  bool gantt_static = false;
  gantt->add_flag("--static", gantt_static, "export the static HEFT schedule of one job instead");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (simulate->parsed()) {
    auto c = sim_flags.resolve();
    auto ep = simulate_one(c, !events_path.empty());
    auto cfg = run_json(c, c.schedulers.front(), c.scales.front(), c.sigmas.front(), c.seeds.front());
    auto m = harness::metrics_json(ep.metrics);
    m["config"] = cfg;
    emit(sim_flags.out, m.dump(2) + "\n");
    if (!gantt_path.empty()) harness::export_gantt(ep.record, gantt_path, cfg);
    if (!events_path.empty()) {
      std::ostringstream o;
      harness::write_event_log(o, ep.events);
      harness::write_text(events_path, o.str());
    }
    return 0;
  }

  if (sstatic->parsed()) {
    auto c = static_flags.resolve();
    if (c.job_path.empty() || c.resources_path.empty()) throw ConfigError("--job and --resources are required");
    auto profiles = harness::load_profiles(c);
    auto s = heft_static_schedule(profiles.job, profiles.resources);
    std::ostringstream o;
    harness::write_gantt_csv(o, s.record);
    if (static_flags.out.empty()) {
      std::cout << o.str();
    } else {
      harness::Json cfg = {{"job", c.job_path}, {"resources", c.resources_path}, {"scheduler", "heft-static"}};
      harness::export_gantt(s.record, static_flags.out, cfg);
    }
    std::cout << "makespan " << harness::format_number(s.makespan) << '\n';
    return 0;
  }

  if (sweep->parsed() || noise->parsed()) {
    auto& flags = sweep->parsed() ? sweep_flags : noise_flags;
    auto& summary = sweep->parsed() ? sweep_summary : noise_summary;
    auto c = flags.resolve();
    auto results = sweep->parsed() ? harness::run_eval(c) : harness::run_noise_sweep(c, c.sigmas);
    auto cfg = harness::config_to_json(c);
    std::ostringstream runs, agg;
    harness::write_runs_csv(runs, results, cfg);
    harness::write_aggregate_csv(agg, harness::aggregate(results), cfg);
    if (!flags.out.empty()) harness::write_text(flags.out, runs.str());
    emit(summary, agg.str());
    for (const auto& r : results)
      std::cerr << r.key.scheduler << " sigma=" << r.key.sigma << " scale=" << r.key.scale << " seed=" << r.key.seed
                << " wall=" << harness::format_fixed6(r.wall_seconds) << "s\n";
    return 0;
  }

  if (train->parsed()) {
    auto c = train_flags.resolve(true);
    if (!curriculum.empty()) {
      c.train.curriculum.clear();
      std::stringstream ss(curriculum);
      std::string item;
      while (std::getline(ss, item, ',')) {
        auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("curriculum stage '" + item + "' is not scale:episodes");
        try {
          c.train.curriculum.push_back({std::stod(item.substr(0, colon)), std::stoul(item.substr(colon + 1))});
        } catch (const std::exception&) {
          throw ConfigError("bad curriculum stage '" + item + "'");
        }
      }
    }
    if (rollouts) c.train.rollouts = *rollouts;
    if (train_flags.out.empty()) throw ConfigError("train needs --out <directory>");
    auto r = harness::run_training(c, train_flags.out, resume.empty() ? std::nullopt : std::optional(resume), &std::cout);
    std::cout << "final checkpoint " << r.final_checkpoint << '\n';
    return 0;
  }

  if (gantt->parsed()) {
    auto c = gantt_flags.resolve();
    if (gantt_flags.out.empty()) throw ConfigError("export-gantt needs --out <file.csv>");
    if (gantt_static) {
      auto profiles = harness::load_profiles(c);
      auto s = heft_static_schedule(profiles.job, profiles.resources);
      harness::Json cfg = {{"job", c.job_path}, {"resources", c.resources_path}, {"scheduler", "heft-static"}};
      harness::export_gantt(s.record, gantt_flags.out, cfg);
    } else {
      auto ep = simulate_one(c, false);
      harness::export_gantt(ep.record, gantt_flags.out,
                            run_json(c, c.schedulers.front(), c.scales.front(), c.sigmas.front(), c.seeds.front()));
    }
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const hetsched::ContractViolation& e) {
    std::cerr << "contract violation: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
