#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsched/heuristics.hpp"
#include "hetsched/profile.hpp"
#include "hetsched/rng.hpp"
#include "hetsched/schedule.hpp"

namespace hetsched {

/// Gaussian perturbation of execution times. sigma is expressed as a fraction
/// of the task's mean execution time over the PE inventory.
struct NoiseModel {
  double sigma_fraction = 0.0;
  double floor = 1e-3;
};

/// Nominal time of `task` on `pe` plus N(0, (sigma_fraction * mean_exec)^2),
/// clamped to the floor. Consumes no randomness when sigma_fraction is 0.
double draw_exec_time(const TaskSpec& task, const ResourceProfile& resources, PeId pe, double mean_exec,
                      const NoiseModel& noise, Rng& rng);

/// Inter-arrival gap ~ Exp(1/scale); +inf when scale is +inf (injection disabled).
double sample_interarrival(double scale, Rng& rng);

struct SimConfig {
  double scale = 50.0;
  double sim_length = 100000.0;
  double warmup = 20000.0;
  std::size_t capacity = 12;
  std::uint64_t seed = 1;
  NoiseModel noise;
  bool pseudo_steady_state = false;
  /// Total arrivals to generate, 0 for unlimited.
  std::size_t max_jobs = 0;
  bool log_events = false;
};

enum class TaskStatus { waiting, ready, executable, running, completed };

struct JobInstance {
  JobSeq seq = 0;
  double arrived_at = 0;
  double injected_at = 0;
  std::optional<double> completed_at;
  std::vector<TaskStatus> status;
  std::vector<int> pending_preds;
  FinishMap finished;
  std::size_t remaining = 0;
};

struct JobSummary {
  JobSeq seq = 0;
  double injected_at = 0;
  double completed_at = 0;
};

struct PeState {
  std::optional<TaskRef> task;
  double start = 0;
  double finish = 0;           // actual (noisy) finish
  double expected_finish = 0;  // start + nominal time, what schedulers may see
};

/// A task mapped to a PE but not started yet.
struct Assignment {
  TaskRef task;
  PeId pe = 0;
  double planned_start = 0;
  std::size_t order = 0;
};

struct SimEvent {
  double clock = 0;
  std::string kind;
  JobSeq job = -1;
  TaskId task = -1;
  PeId pe = -1;
};

struct TickInfo {
  double clock = 0;
  bool completion = false;  // at least one task finished at this tick
  bool scheduled = false;   // a scheduling point ran
  bool noop = false;        // tasks finished but the ready queue was not refilled
};

struct Metrics {
  std::size_t completed = 0;  // jobs injected at or after warm-up and completed
  double latency = std::numeric_limits<double>::infinity();
  std::size_t injected = 0;  // arrivals generated, including deferred ones
  double sim_length = 0;
  double warmup = 0;
  double scale = 0;
  std::uint64_t seed = 0;
  bool operator==(const Metrics&) const = default;
};

class Simulator;

/// Task-ordering policy plugged into the simulator. PE mapping is always the
/// shared EFT manager; the scheduler only decides the order.
class Scheduler {
 public:
  virtual ~Scheduler() = default;
  /// Must return a permutation of `ready`.
  virtual std::vector<TaskRef> order(const Simulator& sim, std::span<const TaskRef> ready) = 0;
  virtual void on_tick(const Simulator& /*sim*/, const TickInfo& /*tick*/) {}
};

/// Sum of (completed - injected) over completed jobs injected at or after
/// `warmup`, divided by their count; +inf when there are none.
double compute_latency(std::span<const JobSummary> completed, double warmup);

class Simulator {
 public:
  Simulator(const JobProfile& job, const ResourceProfile& resources, SimConfig config);

  /// Fills the job queue to capacity at clock 0, all stamped injected at 0.
  void init_pseudo_steady_state();
  /// Processes every arrival due at or before the current clock.
  void inject_jobs();
  /// Advances to the next event time and handles it. Returns false once the
  /// next event would fall beyond sim_length.
  bool step(Scheduler& scheduler);
  void run(Scheduler& scheduler);

  double clock() const noexcept { return clock_; }
  bool terminated() const noexcept { return terminated_; }
  const SimConfig& config() const noexcept { return config_; }
  const JobProfile& job() const noexcept { return job_; }
  const ResourceProfile& resources() const noexcept { return resources_; }
  const RankTable& ranks() const noexcept { return ranks_; }
  double mean_exec(TaskId id) const { return mean_exec_.at(static_cast<std::size_t>(id)); }

  const std::map<JobSeq, JobInstance>& jobs() const noexcept { return jobs_; }
  const std::vector<JobSummary>& completed_jobs() const noexcept { return completed_; }
  std::span<const TaskRef> ready_queue() const noexcept { return ready_; }
  const std::vector<Assignment>& executable_queue() const noexcept { return executable_; }
  const std::vector<PeState>& pes() const noexcept { return pes_; }
  const ScheduleRecord& record() const noexcept { return record_; }
  const std::vector<SimEvent>& events() const noexcept { return events_; }

  std::size_t arrivals() const noexcept { return arrivals_; }
  std::size_t deferred() const noexcept { return deferred_.size(); }
  std::size_t in_flight() const noexcept { return jobs_.size(); }
  std::size_t scheduling_points() const noexcept { return scheduling_points_; }

  Metrics metrics() const;

 private:
  void admit(JobSeq seq, double arrived_at);
  void mark_ready(JobInstance& job, TaskId task);
  bool process_completions();
  bool schedule(Scheduler& scheduler, bool had_completion);
  void dispatch();
  void log(const char* kind, JobSeq job = -1, TaskId task = -1, PeId pe = -1);
  void draw_next_arrival();

  const JobProfile& job_;
  const ResourceProfile& resources_;
  SimConfig config_;
  RankTable ranks_;
  std::vector<double> mean_exec_;

  Rng injection_rng_;
  Rng noise_rng_;

  double clock_ = 0;
  double next_arrival_ = 0;
  bool primed_ = false;
  bool terminated_ = false;
  bool new_ready_ = false;
  JobSeq next_seq_ = 0;
  std::size_t arrivals_ = 0;
  std::size_t scheduling_points_ = 0;

  std::map<JobSeq, JobInstance> jobs_;
  std::deque<std::pair<JobSeq, double>> deferred_;
  std::vector<JobSummary> completed_;
  std::vector<TaskRef> ready_;
  std::vector<Assignment> executable_;
  std::vector<PeState> pes_;
  ScheduleRecord record_;
  std::vector<SimEvent> events_;
};

/// Built-in ordering policies.
class HeftScheduler final : public Scheduler {
 public:
  std::vector<TaskRef> order(const Simulator& sim, std::span<const TaskRef> ready) override;
};

/// Arrival order: ascending (job_seq, task id).
class FifoScheduler final : public Scheduler {
 public:
  std::vector<TaskRef> order(const Simulator& sim, std::span<const TaskRef> ready) override;
};

class RandomScheduler final : public Scheduler {
 public:
  explicit RandomScheduler(std::uint64_t seed) : rng_(make_stream(seed, Stream::scheduler)) {}
  std::vector<TaskRef> order(const Simulator& sim, std::span<const TaskRef> ready) override;

 private:
  Rng rng_;
};

struct EpisodeResult {
  ScheduleRecord record;
  Metrics metrics;
  std::vector<SimEvent> events;
};

EpisodeResult run_episode(const JobProfile& job, const ResourceProfile& resources, const SimConfig& config,
                          Scheduler& scheduler);

}  // namespace hetsched
