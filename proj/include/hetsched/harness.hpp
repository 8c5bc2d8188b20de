#pragma once

// Experiment driver: JSON configuration, scheduler factory, evaluation grids,
// noise sweeps, training runs and artifact export.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "hetsched/neural.hpp"
#include "hetsched/sim.hpp"

namespace hetsched::harness {

using Json = nlohmann::ordered_json;

struct ExperimentConfig {
  std::string job_path;
  std::string resources_path;
  std::vector<std::string> schedulers = {"heft"};
  double sim_length = 100000;
  double warmup = 20000;
  std::vector<double> scales = {50};
  std::size_t capacity = 12;
  std::vector<std::uint64_t> seeds = {1};
  std::vector<double> sigmas = {0};
  bool pseudo_steady_state = false;
  std::string checkpoint;  // neural parameters for evaluation
  std::size_t threads = 0; // 0 = hardware concurrency
  neural::NetConfig net;
  neural::TrainConfig train;
  std::size_t checkpoint_every = 50;
};

/// Reads a config object; unknown keys and wrongly typed values raise ConfigError.
/// Scalar keys (scheduler, scale, seed, sigma) are accepted in place of lists.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path);
Json config_to_json(const ExperimentConfig& config);
void validate(const ExperimentConfig& config);

bool is_scheduler_name(const std::string& name);

struct Profiles {
  JobProfile job;
  ResourceProfile resources;
};
Profiles load_profiles(const ExperimentConfig& config);

/// A network initialized from the config seed, or loaded from config.checkpoint.
std::unique_ptr<neural::PolicyNetwork> make_network(const ExperimentConfig& config, const Profiles& profiles);

/// Neural evaluation runs in greedy mode and needs `network`.
std::unique_ptr<Scheduler> make_scheduler(const std::string& name, std::uint64_t seed,
                                          const neural::PolicyNetwork* network);

SimConfig sim_config(const ExperimentConfig& config, double scale, double sigma, std::uint64_t seed);

struct RunKey {
  std::string scheduler;
  double sigma = 0;
  double scale = 0;
  std::uint64_t seed = 0;
};

struct RunResult {
  RunKey key;
  Metrics metrics;
  double wall_seconds = 0;
};

/// Runs `count` independent jobs over a worker pool; the first exception is rethrown.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

/// Every (scheduler, sigma, scale, seed) combination, returned in that key order.
std::vector<RunResult> run_grid(const ExperimentConfig& config, const Profiles& profiles,
                                const neural::PolicyNetwork* network);

std::vector<RunResult> run_eval(const ExperimentConfig& config);
std::vector<RunResult> run_noise_sweep(ExperimentConfig config, const std::vector<double>& sigmas);

struct Aggregate {
  RunKey key;  // seed unused
  std::size_t runs = 0;
  double completed_mean = 0;
  double completed_std = 0;
  double latency_mean = 0;  // over runs with finite latency
  double latency_std = 0;
  std::size_t latency_runs = 0;
};

/// Sample mean and standard deviation per (scheduler, sigma, scale).
std::vector<Aggregate> aggregate(const std::vector<RunResult>& results);

std::string format_fixed6(double v);
/// Shortest round-trip text, "inf" for infinities.
std::string format_number(double v);

void write_runs_csv(std::ostream& out, const std::vector<RunResult>& results, const Json& config);
void write_aggregate_csv(std::ostream& out, const std::vector<Aggregate>& rows, const Json& config);

Json metrics_json(const Metrics& metrics);
void write_gantt_csv(std::ostream& out, const ScheduleRecord& record);
/// Entries grouped by PE, each list in start order.
Json gantt_json(const ScheduleRecord& record, const Json& config);
/// Writes the CSV to `path` and the plot-ready JSON next to it.
void export_gantt(const ScheduleRecord& record, const std::string& path, const Json& config);
std::string companion_json_path(const std::string& csv_path);
void write_event_log(std::ostream& out, const std::vector<SimEvent>& events);

void write_text(const std::string& path, const std::string& text);

struct TrainResult {
  std::size_t first_episode = 0;
  std::vector<neural::EpisodeLog> logs;
  std::string final_checkpoint;
};

inline constexpr const char* kTrainLogHeader = "episode,scale,beta,return,entropy,completed_jobs,latency";
std::string train_log_row(const neural::EpisodeLog& log);

/// Trains into `out_dir`: train_log.csv, ckpt-<episode>.txt checkpoints with
/// JSON sidecars every checkpoint_every episodes, and final.txt. With `resume`
/// the run continues from that checkpoint's recorded episode.
TrainResult run_training(const ExperimentConfig& config, const std::string& out_dir,
                         const std::optional<std::string>& resume, std::ostream* progress = nullptr);

}  // namespace hetsched::harness
