#pragma once

// Learned task ordering: DAG embeddings by message passing, a per-task policy
// head sampled without replacement, differential rewards with truncation, and
// a policy-gradient trainer with per-arrival-sequence baselines.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hetsched/nn.hpp"
#include "hetsched/sim.hpp"

namespace hetsched::neural {

struct NetConfig {
  std::size_t width = 8;  // embedding width of e, y and z
  std::vector<std::size_t> hidden = {32, 32};
  nn::Activation activation = nn::Activation::relu;
  bool critic = false;
};

/// Static per-profile facts used to build node features and message passing.
struct GraphInfo {
  std::size_t size = 0;
  std::vector<std::vector<TaskId>> children;
  std::vector<std::vector<TaskId>> descendants;
  std::vector<std::size_t> height;  // 0 for exit tasks
  std::vector<std::vector<TaskId>> levels;
  std::vector<double> mean_exec;
  double time_norm = 1;  // sum of mean execution times

  GraphInfo() = default;
  GraphInfo(const JobProfile& job, const ResourceProfile& resources);
};

inline constexpr std::size_t kNodeFeatures = 4;

/// Everything the policy sees at one scheduling event. Jobs are listed in queue
/// slot order (ascending job_seq).
struct Observation {
  double clock = 0;
  std::vector<JobSeq> jobs;
  nn::Tensor2 node_features;  // (jobs * tasks) x kNodeFeatures
  std::vector<TaskRef> ready;
  std::vector<std::size_t> ready_slot;  // queue slot of each ready task's job
  nn::Tensor2 task_features;            // ready x phi_dim
};

std::size_t phi_dim(std::size_t pe_count, std::size_t capacity);

/// Raw node features per task: remaining mean work, out-degree, count of
/// unfinished descendants, ready flag. Each lies in [0, 1].
void node_features(const GraphInfo& graph, const JobInstance& job, std::span<double> out_rows);

/// phi for one ready task: per-PE remaining busy time (nominal, clipped to
/// [0, 1] after dividing by time_norm), one-hot queue slot, elapsed job time
/// divided by capacity * time_norm (clipped), remaining task fraction.
std::vector<double> task_features(const Simulator& sim, const GraphInfo& graph, TaskRef task, std::size_t slot);

Observation observe(const Simulator& sim, const GraphInfo& graph, std::span<const TaskRef> ready);

struct GraphEmbedding {
  nn::Tensor2 nodes;  // (jobs * tasks) x width, row slot * tasks + task
  nn::Tensor2 jobs;   // jobs x width
  nn::Tensor2 global; // 1 x width, zero when the queue is empty
};

class PolicyNetwork {
 public:
  PolicyNetwork(const JobProfile& job, const ResourceProfile& resources, std::size_t capacity, NetConfig config,
                std::uint64_t seed);

  struct Forward {
    nn::Var nodes, jobs, global;
    std::optional<nn::Var> logits;  // ready x 1, present when tasks are ready
    std::optional<nn::Var> value;   // 1 x 1, present with a critic
  };
  Forward forward(nn::Tape& tape, const Observation& obs) const;
  std::vector<double> logits(const Observation& obs) const;
  double value(const Observation& obs) const;

  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }
  const NetConfig& config() const noexcept { return config_; }
  const GraphInfo& graph() const noexcept { return graph_; }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t pe_count() const noexcept { return pe_count_; }

 private:
  NetConfig config_;
  GraphInfo graph_;
  std::size_t capacity_;
  std::size_t pe_count_;
  nn::ParamSet params_;
  nn::Mlp prep_, f_node_, g_node_, f_job_, g_job_, f_glob_, g_glob_, policy_, critic_;
};

GraphEmbedding embed_jobs(const PolicyNetwork& net, const Observation& obs);

/// Fixed layout of the flat state vector.
struct StateLayout {
  std::size_t phi = 0;
  std::size_t max_ready = 0;
  std::size_t width = 0;
  std::size_t max_nodes = 0;
  std::size_t max_jobs = 0;
  std::size_t size() const noexcept { return phi * max_ready + width * (max_nodes + max_jobs + 1); }
};

StateLayout state_layout(const PolicyNetwork& net);

/// [phi per ready task | node embeddings per slot | job summaries | global],
/// zero-padded to the layout.
std::vector<double> build_state(const StateLayout& layout, std::size_t tasks_per_job, const Observation& obs,
                                const GraphEmbedding& embedding);

enum class Mode { sample, greedy };

/// Positions into `logits` in selection order. Sample mode draws without
/// replacement from the softmax over the remaining entries; greedy mode sorts
/// by descending logit, earlier index first on ties.
std::vector<std::size_t> select_ordering(std::span<const double> logits, Mode mode, Rng& rng);

/// -(sum over completed jobs of their duration + sum over in-flight jobs of
/// clock - injected) / completed count; 0 when nothing has completed.
double compute_reward(std::span<const JobSummary> completed, std::span<const double> inflight_injected, double clock);
double compute_reward(const Simulator& sim);

struct RewardTick {
  double clock = 0;
  double reward = 0;
};

/// One agent step: a scheduling decision or a forced no-op.
struct Transition {
  double time = 0;
  bool noop = false;
  std::shared_ptr<const Observation> observation;  // null for no-ops
  std::vector<std::size_t> permutation;            // into observation->ready
  double completion = std::numeric_limits<double>::infinity();  // earliest finish among ordered tasks
  double reward = 0;                                              // truncated
};

struct Trajectory {
  std::vector<Transition> steps;
  std::vector<double> returns;
  std::uint64_t arrival_seed = 0;
  Metrics metrics;
  double total_return() const noexcept { return returns.empty() ? 0.0 : returns.front(); }
};

/// Reward of the last tick at or before `t` (the first tick when none is).
double reward_at(std::span<const RewardTick> ticks, double t);

/// Fills each step's reward with R read at min(next later step time, its
/// completion time); the final tick is used when both are infinite.
void truncate_rewards(std::vector<Transition>& steps, std::span<const RewardTick> ticks);

/// Undiscounted suffix sums.
std::vector<double> returns_of(std::span<const Transition> steps);

/// Orders tasks with the policy; optionally records transitions and reward ticks.
class NeuralScheduler final : public Scheduler {
 public:
  NeuralScheduler(const PolicyNetwork& net, Mode mode, std::uint64_t seed, bool record = false);
  std::vector<TaskRef> order(const Simulator& sim, std::span<const TaskRef> ready) override;
  void on_tick(const Simulator& sim, const TickInfo& tick) override;

  /// Truncated-reward trajectory of the finished episode.
  Trajectory trajectory(const Simulator& sim) const;
  const std::vector<RewardTick>& ticks() const noexcept { return ticks_; }

 private:
  const PolicyNetwork& net_;
  Mode mode_;
  Rng rng_;
  bool record_;
  std::vector<Transition> steps_;
  std::vector<RewardTick> ticks_;
};

/// Mean-baseline advantages: per step index, G minus the mean G over the
/// rollouts still alive at that index; 0 where fewer than two are alive.
std::vector<std::vector<double>> mean_baseline_advantages(std::span<const Trajectory> group);

struct UpdateStats {
  double objective = 0;
  double entropy = 0;  // mean entropy per sub-selection
  std::size_t decisions = 0;
};

/// Negated policy-gradient surrogate over a rollout group (plus the critic's
/// squared error when enabled). Writes gradients into net.params().grad when
/// `accumulate` is set.
UpdateStats policy_objective(PolicyNetwork& net, std::span<const Trajectory> group, double beta, bool accumulate);

double beta_for_episode(double start, double decay, std::size_t episode);

struct CurriculumStage {
  double scale = 500;
  std::size_t episodes = 0;
};

struct TrainConfig {
  std::vector<CurriculumStage> curriculum = {{500, 50}, {250, 50}, {100, 50}, {50, 50}};
  std::size_t rollouts = 4;
  double sim_length = 500;
  std::size_t capacity = 12;
  NoiseModel noise;
  std::uint64_t seed = 1;
  double beta_start = 1.0;
  double beta_decay = 1e-3;
  double reward_scale = 1.0;
  nn::AdamConfig adam;
};

struct EpisodeLog {
  std::size_t episode = 0;
  double scale = 0;
  double beta = 0;
  double mean_return = 0;
  double entropy = 0;
  double completed_jobs = 0;
  double latency = 0;  // mean over rollouts with finite latency, +inf if none
};

std::size_t total_episodes(const TrainConfig& config);
double scale_for_episode(const TrainConfig& config, std::size_t episode);

/// Runs one training episode: `rollouts` sampled rollouts on a shared arrival
/// sequence followed by one optimizer step.
EpisodeLog train_episode(PolicyNetwork& net, nn::Adam& adam, const JobProfile& job, const ResourceProfile& resources,
                         const TrainConfig& config, std::size_t episode);

using EpisodeCallback = std::function<void(const EpisodeLog&)>;

/// Episodes [first, total) of the curriculum, each warm-starting from the last.
std::vector<EpisodeLog> train_curriculum(PolicyNetwork& net, nn::Adam& adam, const JobProfile& job,
                                         const ResourceProfile& resources, const TrainConfig& config,
                                         std::size_t first = 0, const EpisodeCallback& on_episode = {});

/// Parameters, Adam moments and the Adam step count as named tensors.
nn::NamedTensors checkpoint_tensors(const PolicyNetwork& net, const nn::Adam& adam);
void restore_checkpoint(PolicyNetwork& net, nn::Adam& adam, const nn::NamedTensors& tensors);

}  // namespace hetsched::neural
