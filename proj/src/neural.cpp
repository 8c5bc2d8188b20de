#include "hetsched/neural.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "hetsched/errors.hpp"

namespace hetsched::neural {

using nn::RowRef;
using nn::Tape;
using nn::Tensor2;
using nn::Var;

GraphInfo::GraphInfo(const JobProfile& job, const ResourceProfile& resources) : size(job.size()) {
  children.resize(size);
  descendants.resize(size);
  height.assign(size, 0);
  time_norm = 0;
  for (const auto& t : job.tasks) {
    for (const auto& e : t.successors) children[static_cast<std::size_t>(t.id)].push_back(e.task);
    std::sort(children[static_cast<std::size_t>(t.id)].begin(), children[static_cast<std::size_t>(t.id)].end());
    mean_exec.push_back(mean_exec_time(t, resources));
    time_norm += mean_exec.back();
  }
  if (!(time_norm > 0)) time_norm = 1;

  auto order = job.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto v = static_cast<std::size_t>(*it);
    std::vector<bool> mark(size, false);
    for (TaskId c : children[v]) {
      auto ci = static_cast<std::size_t>(c);
      height[v] = std::max(height[v], height[ci] + 1);
      mark[ci] = true;
      for (TaskId d : descendants[ci]) mark[static_cast<std::size_t>(d)] = true;
    }
    for (std::size_t d = 0; d < size; ++d)
      if (mark[d]) descendants[v].push_back(static_cast<TaskId>(d));
  }
  std::size_t levels_needed = size ? *std::max_element(height.begin(), height.end()) + 1 : 0;
  levels.resize(levels_needed);
  for (std::size_t v = 0; v < size; ++v) levels[height[v]].push_back(static_cast<TaskId>(v));
}

std::size_t phi_dim(std::size_t pe_count, std::size_t capacity) { return pe_count + capacity + 2; }

void node_features(const GraphInfo& graph, const JobInstance& job, std::span<double> out) {
  const std::size_t n = graph.size;
  const double deg_norm = static_cast<double>(std::max<std::size_t>(1, n - 1));
  for (std::size_t v = 0; v < n; ++v) {
    double* row = out.data() + v * kNodeFeatures;
    bool done = job.status[v] == TaskStatus::completed;
    std::size_t open = 0;
    for (TaskId d : graph.descendants[v])
      if (job.status[static_cast<std::size_t>(d)] != TaskStatus::completed) ++open;
    row[0] = done ? 0.0 : graph.mean_exec[v] / graph.time_norm;
    row[1] = static_cast<double>(graph.children[v].size()) / deg_norm;
    row[2] = static_cast<double>(open) / deg_norm;
    row[3] = job.status[v] == TaskStatus::ready ? 1.0 : 0.0;
  }
}

std::vector<double> task_features(const Simulator& sim, const GraphInfo& graph, TaskRef task, std::size_t slot) {
  const std::size_t capacity = sim.config().capacity;
  std::vector<double> phi(phi_dim(sim.pes().size(), capacity), 0.0);
  const double clock = sim.clock();
  for (std::size_t p = 0; p < sim.pes().size(); ++p) {
    const auto& pe = sim.pes()[p];
    if (pe.task) phi[p] = std::clamp((pe.expected_finish - clock) / graph.time_norm, 0.0, 1.0);
  }
  if (slot >= capacity) throw ContractViolation("job slot beyond queue capacity");
  phi[sim.pes().size() + slot] = 1.0;
  const auto& inst = sim.jobs().at(task.job);
  double horizon = static_cast<double>(capacity) * graph.time_norm;
  phi[sim.pes().size() + capacity] = std::clamp((clock - inst.injected_at) / horizon, 0.0, 1.0);
  phi[sim.pes().size() + capacity + 1] = static_cast<double>(inst.remaining) / static_cast<double>(graph.size);
  return phi;
}

Observation observe(const Simulator& sim, const GraphInfo& graph, std::span<const TaskRef> ready) {
  Observation obs;
  obs.clock = sim.clock();
  const std::size_t n = graph.size;
  obs.node_features = Tensor2(sim.jobs().size() * n, kNodeFeatures);
  std::map<JobSeq, std::size_t> slot_of;
  for (const auto& [seq, inst] : sim.jobs()) {
    std::size_t slot = obs.jobs.size();
    slot_of[seq] = slot;
    obs.jobs.push_back(seq);
    node_features(graph, inst, {obs.node_features.data() + slot * n * kNodeFeatures, n * kNodeFeatures});
  }
  const std::size_t dim = phi_dim(sim.pes().size(), sim.config().capacity);
  obs.task_features = Tensor2(ready.size(), dim);
  for (std::size_t i = 0; i < ready.size(); ++i) {
    obs.ready.push_back(ready[i]);
    std::size_t slot = slot_of.at(ready[i].job);
    obs.ready_slot.push_back(slot);
    auto phi = task_features(sim, graph, ready[i], slot);
    std::copy(phi.begin(), phi.end(), obs.task_features.row(i).begin());
  }
  return obs;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

PolicyNetwork::PolicyNetwork(const JobProfile& job, const ResourceProfile& resources, std::size_t capacity,
                             NetConfig config, std::uint64_t seed)
    : config_(std::move(config)), graph_(job, resources), capacity_(capacity), pe_count_(resources.size()) {
  if (config_.width == 0) throw ConfigError("embedding width must be positive");
  if (capacity_ == 0) throw ConfigError("job queue capacity must be at least 1");
  Rng rng = make_stream(seed, Stream::init);
  const auto w = config_.width;
  const auto act = config_.activation;
  const auto id = nn::Activation::identity;
  prep_ = nn::Mlp(params_, "prep", {kNodeFeatures, w}, act, id, rng);
  f_node_ = nn::Mlp(params_, "node.f", layer_sizes(w, config_.hidden, w), act, act, rng);
  g_node_ = nn::Mlp(params_, "node.g", layer_sizes(w, config_.hidden, w), act, id, rng);
  f_job_ = nn::Mlp(params_, "job.f", layer_sizes(w, config_.hidden, w), act, act, rng);
  g_job_ = nn::Mlp(params_, "job.g", layer_sizes(w, config_.hidden, w), act, id, rng);
  f_glob_ = nn::Mlp(params_, "global.f", layer_sizes(w, config_.hidden, w), act, act, rng);
  g_glob_ = nn::Mlp(params_, "global.g", layer_sizes(w, config_.hidden, w), act, id, rng);
  policy_ = nn::Mlp(params_, "policy", layer_sizes(phi_dim(pe_count_, capacity_) + 3 * w, config_.hidden, 1), act,
                    id, rng);
  if (config_.critic) critic_ = nn::Mlp(params_, "critic", layer_sizes(w, config_.hidden, 1), act, id, rng);
}

PolicyNetwork::Forward PolicyNetwork::forward(Tape& tape, const Observation& obs) const {
  const std::size_t n = graph_.size;
  const std::size_t jobs = obs.jobs.size();
  const std::size_t w = config_.width;
  Forward out;

  if (jobs == 0) {
    out.nodes = tape.constant(Tensor2(0, w));
    out.jobs = tape.constant(Tensor2(0, w));
    out.global = tape.constant(Tensor2(1, w));
  } else {
    Var x = prep_.forward(tape, tape.constant(obs.node_features));

    // Children-first message passing, one batch per height level across jobs.
    std::vector<std::size_t> pos(n);
    for (const auto& level : graph_.levels)
      for (std::size_t i = 0; i < level.size(); ++i) pos[static_cast<std::size_t>(level[i])] = i;
    std::vector<Var> emb, msg;
    for (std::size_t h = 0; h < graph_.levels.size(); ++h) {
      const auto& level = graph_.levels[h];
      std::vector<std::size_t> rows;
      std::vector<std::vector<RowRef>> groups;
      for (std::size_t slot = 0; slot < jobs; ++slot)
        for (TaskId v : level) {
          rows.push_back(slot * n + static_cast<std::size_t>(v));
          auto& g = groups.emplace_back();
          for (TaskId c : graph_.children[static_cast<std::size_t>(v)]) {
            auto ci = static_cast<std::size_t>(c);
            g.push_back({graph_.height[ci], slot * graph_.levels[graph_.height[ci]].size() + pos[ci]});
          }
        }
      Var agg = tape.aggregate(msg, std::move(groups), w);
      Var e = tape.add(g_node_.forward(tape, agg), tape.gather_rows(x, std::move(rows)));
      emb.push_back(e);
      msg.push_back(f_node_.forward(tape, e));
    }
    std::vector<std::vector<RowRef>> node_rows;
    for (std::size_t slot = 0; slot < jobs; ++slot)
      for (std::size_t v = 0; v < n; ++v)
        node_rows.push_back({{graph_.height[v], slot * graph_.levels[graph_.height[v]].size() + pos[v]}});
    out.nodes = tape.aggregate(emb, std::move(node_rows), w);

    Var fj = f_job_.forward(tape, out.nodes);
    std::vector<std::vector<RowRef>> per_job(jobs);
    for (std::size_t slot = 0; slot < jobs; ++slot)
      for (std::size_t v = 0; v < n; ++v) per_job[slot].push_back({0, slot * n + v});
    out.jobs = g_job_.forward(tape, tape.aggregate(std::span<const Var>(&fj, 1), std::move(per_job), w));

    Var fg = f_glob_.forward(tape, out.jobs);
    std::vector<std::vector<RowRef>> all(1);
    for (std::size_t slot = 0; slot < jobs; ++slot) all[0].push_back({0, slot});
    out.global = g_glob_.forward(tape, tape.aggregate(std::span<const Var>(&fg, 1), std::move(all), w));
  }

  if (!obs.ready.empty()) {
    std::vector<std::size_t> node_idx;
    for (std::size_t i = 0; i < obs.ready.size(); ++i)
      node_idx.push_back(obs.ready_slot[i] * n + static_cast<std::size_t>(obs.ready[i].task));
    Var parts[] = {tape.constant(obs.task_features), tape.gather_rows(out.nodes, std::move(node_idx)),
                   tape.gather_rows(out.jobs, obs.ready_slot), tape.broadcast_rows(out.global, obs.ready.size())};
    out.logits = policy_.forward(tape, tape.concat_cols(parts));
  }
  if (config_.critic) out.value = critic_.forward(tape, out.global);
  return out;
}

std::vector<double> PolicyNetwork::logits(const Observation& obs) const {
  Tape tape(&params_);
  auto fwd = forward(tape, obs);
  if (!fwd.logits) return {};
  return tape.value(*fwd.logits).values();
}

double PolicyNetwork::value(const Observation& obs) const {
  if (!config_.critic) throw std::logic_error("network has no critic head");
  Tape tape(&params_);
  auto fwd = forward(tape, obs);
  return tape.value(*fwd.value)(0, 0);
}

GraphEmbedding embed_jobs(const PolicyNetwork& net, const Observation& obs) {
  Tape tape(&net.params());
  auto fwd = net.forward(tape, obs);
  return {tape.value(fwd.nodes), tape.value(fwd.jobs), tape.value(fwd.global)};
}

StateLayout state_layout(const PolicyNetwork& net) {
  StateLayout l;
  l.phi = phi_dim(net.pe_count(), net.capacity());
  l.max_ready = net.capacity() * net.graph().size;
  l.width = net.config().width;
  l.max_nodes = net.capacity() * net.graph().size;
  l.max_jobs = net.capacity();
  return l;
}

std::vector<double> build_state(const StateLayout& layout, std::size_t tasks_per_job, const Observation& obs,
                                const GraphEmbedding& embedding) {
  if (obs.ready.size() > layout.max_ready || obs.jobs.size() > layout.max_jobs)
    throw ContractViolation("observation exceeds the state layout");
  std::vector<double> s(layout.size(), 0.0);
  auto it = s.begin();
  for (std::size_t r = 0; r < obs.ready.size(); ++r) {
    auto row = obs.task_features.row(r);
    std::copy(row.begin(), row.end(), it + static_cast<std::ptrdiff_t>(r * layout.phi));
  }
  it += static_cast<std::ptrdiff_t>(layout.phi * layout.max_ready);
  std::size_t node_rows = std::min(embedding.nodes.rows(), obs.jobs.size() * tasks_per_job);
  std::copy_n(embedding.nodes.data(), node_rows * layout.width, it);
  it += static_cast<std::ptrdiff_t>(layout.width * layout.max_nodes);
  std::copy_n(embedding.jobs.data(), embedding.jobs.rows() * layout.width, it);
  it += static_cast<std::ptrdiff_t>(layout.width * layout.max_jobs);
  std::copy_n(embedding.global.data(), layout.width, it);
  return s;
}

std::vector<std::size_t> select_ordering(std::span<const double> logits, Mode mode, Rng& rng) {
  std::vector<std::size_t> remaining(logits.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  if (mode == Mode::greedy) {
    std::stable_sort(remaining.begin(), remaining.end(), [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    return remaining;
  }
  std::vector<std::size_t> out;
  std::vector<double> weights;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (!remaining.empty()) {
    double m = -std::numeric_limits<double>::infinity();
    for (auto i : remaining) m = std::max(m, logits[i]);
    weights.clear();
    double z = 0;
    for (auto i : remaining) z += weights.emplace_back(std::exp(logits[i] - m));
    double u = unit(rng) * z;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      if (u < weights[j]) {
        pick = j;
        break;
      }
      u -= weights[j];
    }
    out.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

double compute_reward(std::span<const JobSummary> completed, std::span<const double> inflight_injected, double clock) {
  if (completed.empty()) return 0.0;
  double total = 0;
  for (const auto& j : completed) total += j.completed_at - j.injected_at;
  for (double st : inflight_injected) total += clock - st;
  return -total / static_cast<double>(completed.size());
}

double compute_reward(const Simulator& sim) {
  std::vector<double> injected;
  for (const auto& [seq, inst] : sim.jobs()) injected.push_back(inst.injected_at);
  return compute_reward(sim.completed_jobs(), injected, sim.clock());
}

double reward_at(std::span<const RewardTick> ticks, double t) {
  if (ticks.empty()) return 0.0;
  auto it = std::upper_bound(ticks.begin(), ticks.end(), t, [](double v, const RewardTick& k) { return v < k.clock; });
  if (it == ticks.begin()) return ticks.front().reward;
  return std::prev(it)->reward;
}

void truncate_rewards(std::vector<Transition>& steps, std::span<const RewardTick> ticks) {
  const double inf = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < steps.size(); ++i) {
    double next = inf;
    for (std::size_t j = i + 1; j < steps.size(); ++j)
      if (steps[j].time > steps[i].time) {
        next = steps[j].time;
        break;
      }
    double target = std::min(next, steps[i].completion);
    if (std::isinf(target))
      steps[i].reward = ticks.empty() ? 0.0 : ticks.back().reward;
    else
      steps[i].reward = reward_at(ticks, target);
  }
}

std::vector<double> returns_of(std::span<const Transition> steps) {
  std::vector<double> g(steps.size());
  double acc = 0;
  for (std::size_t i = steps.size(); i-- > 0;) g[i] = acc += steps[i].reward;
  return g;
}

// ---------------------------------------------------------------------------

NeuralScheduler::NeuralScheduler(const PolicyNetwork& net, Mode mode, std::uint64_t seed, bool record)
    : net_(net), mode_(mode), rng_(make_stream(seed, Stream::scheduler)), record_(record) {}

std::vector<TaskRef> NeuralScheduler::order(const Simulator& sim, std::span<const TaskRef> ready) {
  auto obs = std::make_shared<Observation>(observe(sim, net_.graph(), ready));
  auto logits = net_.logits(*obs);
  auto perm = select_ordering(logits, mode_, rng_);
  std::vector<TaskRef> out;
  out.reserve(perm.size());
  for (auto i : perm) out.push_back(ready[i]);
  if (record_) {
    Transition t;
    t.time = sim.clock();
    t.observation = std::move(obs);
    t.permutation = std::move(perm);
    steps_.push_back(std::move(t));
  }
  return out;
}

void NeuralScheduler::on_tick(const Simulator& sim, const TickInfo& tick) {
  if (!record_) return;
  ticks_.push_back({tick.clock, compute_reward(sim)});
  if (tick.noop) {
    Transition t;
    t.time = tick.clock;
    t.noop = true;
    steps_.push_back(std::move(t));
  }
}

Trajectory NeuralScheduler::trajectory(const Simulator& sim) const {
  Trajectory traj;
  traj.steps = steps_;
  std::map<TaskRef, double> finish;
  for (const auto& e : sim.record()) finish[{e.job, e.task}] = e.finish;
  for (auto& s : traj.steps) {
    if (s.noop) continue;
    for (auto i : s.permutation) {
      auto it = finish.find(s.observation->ready[i]);
      if (it != finish.end() && it->second > s.time) s.completion = std::min(s.completion, it->second);
    }
  }
  truncate_rewards(traj.steps, ticks_);
  traj.returns = returns_of(traj.steps);
  traj.arrival_seed = sim.config().seed;
  traj.metrics = sim.metrics();
  return traj;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> mean_baseline_advantages(std::span<const Trajectory> group) {
  if (group.size() < 2) throw std::invalid_argument("the mean baseline needs at least two rollouts per arrival sequence");
  for (const auto& t : group)
    if (t.arrival_seed != group.front().arrival_seed)
      throw std::invalid_argument("rollouts in one group must share the arrival sequence");
  std::size_t longest = 0;
  for (const auto& t : group) longest = std::max(longest, t.returns.size());
  std::vector<std::vector<double>> adv;
  for (const auto& t : group) adv.emplace_back(t.returns.size(), 0.0);
  for (std::size_t k = 0; k < longest; ++k) {
    double sum = 0;
    std::size_t alive = 0;
    for (const auto& t : group)
      if (k < t.returns.size()) {
        sum += t.returns[k];
        ++alive;
      }
    if (alive < 2) continue;
    double b = sum / static_cast<double>(alive);
    for (std::size_t r = 0; r < group.size(); ++r)
      if (k < group[r].returns.size()) adv[r][k] = group[r].returns[k] - b;
  }
  return adv;
}

namespace {

double subset_entropy(const std::vector<double>& logits, std::span<const std::size_t> subset) {
  double m = -std::numeric_limits<double>::infinity();
  for (auto i : subset) m = std::max(m, logits[i]);
  double z = 0;
  for (auto i : subset) z += std::exp(logits[i] - m);
  double lz = std::log(z), h = 0;
  for (auto i : subset) {
    double lp = logits[i] - m - lz;
    h -= std::exp(lp) * lp;
  }
  return h;
}

}  // namespace

UpdateStats policy_objective(PolicyNetwork& net, std::span<const Trajectory> group, double beta, bool accumulate) {
  if (group.empty()) throw std::invalid_argument("empty rollout group");
  const bool critic = net.config().critic;
  std::vector<std::vector<double>> adv;
  if (!critic) adv = mean_baseline_advantages(group);
  if (accumulate) net.params().zero_grad();

  UpdateStats stats;
  std::size_t selections = 0;
  const double weight = 1.0 / static_cast<double>(group.size());
  for (std::size_t r = 0; r < group.size(); ++r) {
    const auto& traj = group[r];
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
      const auto& step = traj.steps[k];
      if (step.noop) continue;
      Tape tape(&net.params());
      auto fwd = net.forward(tape, *step.observation);
      const double g = traj.returns[k];
      double a = critic ? g - tape.value(*fwd.value)(0, 0) : adv[r][k];
      std::vector<double> advantages(step.permutation.size(), a);
      Var loss = tape.scale(tape.plackett_luce(*fwd.logits, step.permutation, std::move(advantages), beta), -weight);
      if (critic) loss = tape.add(loss, tape.scale(tape.half_squared_error(*fwd.value, {g}), weight));
      stats.objective += tape.value(loss)(0, 0);

      const auto& lv = tape.value(*fwd.logits).values();
      for (std::size_t j = 0; j < step.permutation.size(); ++j) {
        std::span<const std::size_t> rest(step.permutation.data() + j, step.permutation.size() - j);
        stats.entropy += subset_entropy(lv, rest);
        ++selections;
      }
      ++stats.decisions;
      if (accumulate) {
        tape.backward(loss);
        tape.accumulate_into(net.params());
      }
    }
  }
  if (selections) stats.entropy /= static_cast<double>(selections);
  return stats;
}

double beta_for_episode(double start, double decay, std::size_t episode) {
  return std::max(0.0, start - decay * static_cast<double>(episode));
}

std::size_t total_episodes(const TrainConfig& config) {
  std::size_t n = 0;
  for (const auto& s : config.curriculum) n += s.episodes;
  return n;
}

double scale_for_episode(const TrainConfig& config, std::size_t episode) {
  if (config.curriculum.empty()) throw ConfigError("curriculum has no stages");
  for (const auto& s : config.curriculum) {
    if (episode < s.episodes) return s.scale;
    episode -= s.episodes;
  }
  return config.curriculum.back().scale;
}

EpisodeLog train_episode(PolicyNetwork& net, nn::Adam& adam, const JobProfile& job, const ResourceProfile& resources,
                         const TrainConfig& config, std::size_t episode) {
  EpisodeLog log;
  log.episode = episode;
  log.scale = scale_for_episode(config, episode);
  log.beta = beta_for_episode(config.beta_start, config.beta_decay, episode);

  const std::uint64_t arrival_seed = derive_seed(config.seed, episode);
  SimConfig sc;
  sc.scale = log.scale;
  sc.sim_length = config.sim_length;
  sc.warmup = 0;
  sc.capacity = config.capacity;
  sc.seed = arrival_seed;
  sc.noise = config.noise;
  sc.pseudo_steady_state = true;

  std::vector<Trajectory> group;
  for (std::size_t r = 0; r < config.rollouts; ++r) {
    NeuralScheduler sched(net, Mode::sample, derive_seed(arrival_seed, r + 1), true);
    Simulator sim(job, resources, sc);
    sim.init_pseudo_steady_state();
    sim.run(sched);
    group.push_back(sched.trajectory(sim));
  }

  double latency_sum = 0;
  std::size_t latency_n = 0;
  for (const auto& t : group) {
    log.mean_return += t.total_return();
    log.completed_jobs += static_cast<double>(t.metrics.completed);
    if (std::isfinite(t.metrics.latency)) {
      latency_sum += t.metrics.latency;
      ++latency_n;
    }
  }
  const auto rollouts = static_cast<double>(group.size());
  log.mean_return /= rollouts;
  log.completed_jobs /= rollouts;
  log.latency = latency_n ? latency_sum / static_cast<double>(latency_n) : std::numeric_limits<double>::infinity();

  if (config.reward_scale != 1.0)
    for (auto& t : group)
      for (auto& g : t.returns) g *= config.reward_scale;
  auto stats = policy_objective(net, group, log.beta, true);
  log.entropy = stats.entropy;
  adam.step(net.params());
  return log;
}

std::vector<EpisodeLog> train_curriculum(PolicyNetwork& net, nn::Adam& adam, const JobProfile& job,
                                         const ResourceProfile& resources, const TrainConfig& config,
                                         std::size_t first, const EpisodeCallback& on_episode) {
  if (config.rollouts < 1) throw ConfigError("rollouts must be at least 1");
  std::vector<EpisodeLog> logs;
  for (std::size_t e = first; e < total_episodes(config); ++e) {
    logs.push_back(train_episode(net, adam, job, resources, config, e));
    if (on_episode) on_episode(logs.back());
  }
  return logs;
}

nn::NamedTensors checkpoint_tensors(const PolicyNetwork& net, const nn::Adam& adam) {
  auto out = nn::export_params(net.params(), "param/");
  const auto& m = adam.first_moments();
  const auto& v = adam.second_moments();
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    out.emplace_back("adam.m/" + p.name, i < m.size() ? m[i] : Tensor2(p.value.rows(), p.value.cols()));
  }
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& p = net.params()[i];
    out.emplace_back("adam.v/" + p.name, i < v.size() ? v[i] : Tensor2(p.value.rows(), p.value.cols()));
  }
  out.emplace_back("adam.steps", Tensor2(1, 1, static_cast<double>(adam.steps())));
  return out;
}

void restore_checkpoint(PolicyNetwork& net, nn::Adam& adam, const nn::NamedTensors& tensors) {
  nn::import_params(net.params(), tensors, "param/");
  auto find = [&](const std::string& name) -> const Tensor2& {
    for (const auto& [n, t] : tensors)
      if (n == name) return t;
    throw nn::CheckpointError("checkpoint lacks tensor " + name);
  };
  auto& m = adam.first_moments();
  auto& v = adam.second_moments();
  m.clear();
  v.clear();
  for (const auto& p : net.params()) {
    const auto& mt = find("adam.m/" + p.name);
    const auto& vt = find("adam.v/" + p.name);
    if (mt.rows() != p.value.rows() || mt.cols() != p.value.cols() || vt.rows() != p.value.rows() ||
        vt.cols() != p.value.cols())
      throw nn::CheckpointError("optimizer state shape mismatch for " + p.name);
    m.push_back(mt);
    v.push_back(vt);
  }
  adam.set_steps(static_cast<std::uint64_t>(find("adam.steps")(0, 0)));
}

}  // namespace hetsched::neural
