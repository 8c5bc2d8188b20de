#include "hetsched/sim.hpp"

#include <algorithm>
#include <cmath>

#include "hetsched/errors.hpp"

namespace hetsched {

double draw_exec_time(const TaskSpec& task, const ResourceProfile& resources, PeId pe, double mean_exec,
                      const NoiseModel& noise, Rng& rng) {
  auto nominal = exec_time_on_pe(task, resources, pe);
  if (!nominal)
    throw ContractViolation("task " + std::to_string(task.id) + " is not supported by pe " + std::to_string(pe));
  if (noise.sigma_fraction == 0.0) return std::max(*nominal, noise.floor);
  std::normal_distribution<double> gauss(0.0, noise.sigma_fraction * mean_exec);
  return std::max(*nominal + gauss(rng), noise.floor);
}

double sample_interarrival(double scale, Rng& rng) {
  if (!std::isfinite(scale)) return std::numeric_limits<double>::infinity();
  std::exponential_distribution<double> exp(1.0 / scale);
  return exp(rng);
}

double compute_latency(std::span<const JobSummary> completed, double warmup) {
  double total = 0;
  std::size_t count = 0;
  for (const auto& j : completed)
    if (j.injected_at >= warmup) {
      total += j.completed_at - j.injected_at;
      ++count;
    }
  return count ? total / static_cast<double>(count) : std::numeric_limits<double>::infinity();
}

Simulator::Simulator(const JobProfile& job, const ResourceProfile& resources, SimConfig config)
    : job_(job),
      resources_(resources),
      config_(config),
      ranks_(compute_rank_u(job, resources)),
      injection_rng_(make_stream(config.seed, Stream::injection)),
      noise_rng_(make_stream(config.seed, Stream::noise)),
      pes_(resources.size()) {
  if (config_.capacity == 0) throw ConfigError("job queue capacity must be at least 1");
  for (const auto& t : job_.tasks) mean_exec_.push_back(mean_exec_time(t, resources_));
  draw_next_arrival();
}

void Simulator::draw_next_arrival() {
  if (config_.max_jobs != 0 && arrivals_ >= config_.max_jobs) {
    next_arrival_ = std::numeric_limits<double>::infinity();
    return;
  }
  // Gaps accumulate from the previous arrival, not from the current clock.
  double base = arrivals_ == 0 || !std::isfinite(next_arrival_) ? clock_ : next_arrival_;
  next_arrival_ = base + sample_interarrival(config_.scale, injection_rng_);
}

void Simulator::log(const char* kind, JobSeq job, TaskId task, PeId pe) {
  if (config_.log_events) events_.push_back({clock_, kind, job, task, pe});
}

void Simulator::mark_ready(JobInstance& job, TaskId task) {
  job.status[static_cast<std::size_t>(task)] = TaskStatus::ready;
  ready_.push_back({job.seq, task});
  new_ready_ = true;
  log("ready", job.seq, task);
}

void Simulator::admit(JobSeq seq, double arrived_at) {
  JobInstance inst;
  inst.seq = seq;
  inst.arrived_at = arrived_at;
  inst.injected_at = clock_;
  inst.status.assign(job_.size(), TaskStatus::waiting);
  inst.finished.assign(job_.size(), std::nullopt);
  inst.remaining = job_.size();
  for (const auto& t : job_.tasks) inst.pending_preds.push_back(static_cast<int>(t.predecessors.size()));
  auto& stored = jobs_.emplace(seq, std::move(inst)).first->second;
  log("inject", seq);
  for (TaskId e : job_.entry_tasks) mark_ready(stored, e);
}

void Simulator::init_pseudo_steady_state() {
  if (clock_ != 0.0 || primed_ || arrivals_ != 0)
    throw ContractViolation("pseudo-steady-state must be initialized on a fresh simulator");
  std::size_t n = config_.capacity;
  if (config_.max_jobs != 0) n = std::min(n, config_.max_jobs);
  for (std::size_t i = 0; i < n; ++i) {
    ++arrivals_;
    admit(next_seq_++, 0.0);
  }
  // The first stochastic arrival is measured from time 0 as before.
  if (config_.max_jobs != 0 && arrivals_ >= config_.max_jobs) next_arrival_ = std::numeric_limits<double>::infinity();
}

void Simulator::inject_jobs() {
  while (next_arrival_ <= clock_) {
    double arrived = next_arrival_;
    ++arrivals_;
    JobSeq seq = next_seq_++;
    if (jobs_.size() < config_.capacity) {
      admit(seq, arrived);
    } else {
      deferred_.emplace_back(seq, arrived);
      log("defer", seq);
    }
    draw_next_arrival();
  }
}

bool Simulator::process_completions() {
  std::vector<PeId> done;
  for (std::size_t p = 0; p < pes_.size(); ++p)
    if (pes_[p].task && pes_[p].finish == clock_) done.push_back(static_cast<PeId>(p));
  std::sort(done.begin(), done.end(), [&](PeId a, PeId b) { return *pes_[a].task < *pes_[b].task; });

  for (PeId p : done) {
    auto& pe = pes_[static_cast<std::size_t>(p)];
    TaskRef ref = *pe.task;
    auto& inst = jobs_.at(ref.job);
    auto idx = static_cast<std::size_t>(ref.task);
    inst.status[idx] = TaskStatus::completed;
    inst.finished[idx] = Placement{p, pe.start, pe.finish};
    record_.push_back({ref.job, ref.task, p, pe.start, pe.finish});
    log("finish", ref.job, ref.task, p);
    pe.task.reset();

    for (const auto& s : job_.task(ref.task).successors) {
      auto sidx = static_cast<std::size_t>(s.task);
      if (--inst.pending_preds[sidx] == 0) mark_ready(inst, s.task);
    }
    if (--inst.remaining == 0) {
      completed_.push_back({inst.seq, inst.injected_at, clock_});
      log("complete", inst.seq);
      jobs_.erase(ref.job);
      if (!deferred_.empty()) {
        auto [seq, arrived] = deferred_.front();
        deferred_.pop_front();
        admit(seq, arrived);
      }
    }
  }
  return !done.empty();
}

bool Simulator::schedule(Scheduler& scheduler, bool had_completion) {
  if (!new_ready_ && !(had_completion && !executable_.empty())) return false;

  // Reload every non-started assignment so it is ordered and mapped afresh.
  for (const auto& a : executable_) {
    jobs_.at(a.task.job).status[static_cast<std::size_t>(a.task.task)] = TaskStatus::ready;
    ready_.push_back(a.task);
    log("reload", a.task.job, a.task.task, a.pe);
  }
  executable_.clear();
  std::sort(ready_.begin(), ready_.end());
  new_ready_ = false;
  if (ready_.empty()) return false;
  ++scheduling_points_;

  auto ordering = scheduler.order(*this, ready_);
  {
    auto sorted = ordering;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != ready_) throw ContractViolation("scheduler returned a non-permutation of the ready queue");
  }

  Timelines timelines(pes_.size());
  for (std::size_t p = 0; p < pes_.size(); ++p) {
    const auto& pe = pes_[p];
    if (pe.task && pe.expected_finish > clock_) timelines[p].insert({clock_, pe.expected_finish, *pe.task});
  }
  for (std::size_t i = 0; i < ordering.size(); ++i) {
    const auto& ref = ordering[i];
    auto& inst = jobs_.at(ref.job);
    auto placed = eft_select(job_.task(ref.task), ref, timelines, inst.finished, resources_, clock_);
    inst.status[static_cast<std::size_t>(ref.task)] = TaskStatus::executable;
    executable_.push_back({ref, placed.pe, placed.start, i});
    log("assign", ref.job, ref.task, placed.pe);
  }
  ready_.clear();
  return true;
}

void Simulator::dispatch() {
  for (std::size_t p = 0; p < pes_.size(); ++p) {
    auto& pe = pes_[p];
    if (pe.task) continue;
    auto best = executable_.end();
    for (auto it = executable_.begin(); it != executable_.end(); ++it) {
      if (it->pe != static_cast<PeId>(p)) continue;
      if (best == executable_.end() || it->planned_start < best->planned_start ||
          (it->planned_start == best->planned_start && it->order < best->order))
        best = it;
    }
    if (best == executable_.end()) continue;

    TaskRef ref = best->task;
    executable_.erase(best);
    auto& inst = jobs_.at(ref.job);
    const auto& spec = job_.task(ref.task);
    double start = data_ready_time(spec, static_cast<PeId>(p), inst.finished, clock_);
    double duration = draw_exec_time(spec, resources_, static_cast<PeId>(p), mean_exec(ref.task), config_.noise, noise_rng_);
    pe.task = ref;
    pe.start = start;
    pe.finish = start + duration;
    pe.expected_finish = start + *exec_time_on_pe(spec, resources_, static_cast<PeId>(p));
    inst.status[static_cast<std::size_t>(ref.task)] = TaskStatus::running;
    log("start", ref.job, ref.task, static_cast<PeId>(p));
  }
}

bool Simulator::step(Scheduler& scheduler) {
  if (terminated_) return false;
  TickInfo tick;
  if (!primed_) {
    primed_ = true;
    if (clock_ > config_.sim_length) {
      terminated_ = true;
      return false;
    }
    inject_jobs();
    tick.scheduled = schedule(scheduler, false);
    dispatch();
  } else {
    double next = next_arrival_;
    for (const auto& pe : pes_)
      if (pe.task) next = std::min(next, pe.finish);
    if (!(next <= config_.sim_length)) {
      terminated_ = true;
      return false;
    }
    clock_ = next;
    tick.completion = process_completions();
    inject_jobs();
    tick.scheduled = schedule(scheduler, tick.completion);
    dispatch();
  }
  tick.clock = clock_;
  tick.noop = tick.completion && !tick.scheduled;
  scheduler.on_tick(*this, tick);
  return true;
}

void Simulator::run(Scheduler& scheduler) {
  while (step(scheduler)) {
  }
}

Metrics Simulator::metrics() const {
  Metrics m;
  for (const auto& j : completed_)
    if (j.injected_at >= config_.warmup) ++m.completed;
  m.latency = compute_latency(completed_, config_.warmup);
  m.injected = arrivals_;
  m.sim_length = config_.sim_length;
  m.warmup = config_.warmup;
  m.scale = config_.scale;
  m.seed = config_.seed;
  return m;
}

std::vector<TaskRef> HeftScheduler::order(const Simulator& sim, std::span<const TaskRef> ready) {
  return heft_order(ready, sim.ranks());
}

std::vector<TaskRef> FifoScheduler::order(const Simulator&, std::span<const TaskRef> ready) {
  std::vector<TaskRef> out(ready.begin(), ready.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<TaskRef> RandomScheduler::order(const Simulator&, std::span<const TaskRef> ready) {
  std::vector<TaskRef> out(ready.begin(), ready.end());
  for (std::size_t i = out.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(out[i - 1], out[pick(rng_)]);
  }
  return out;
}

EpisodeResult run_episode(const JobProfile& job, const ResourceProfile& resources, const SimConfig& config,
                          Scheduler& scheduler) {
  Simulator sim(job, resources, config);
  if (config.pseudo_steady_state) sim.init_pseudo_steady_state();
  sim.run(scheduler);
  return {sim.record(), sim.metrics(), sim.events()};
}

}  // namespace hetsched
