#include "hetsched/heuristics.hpp"

#include <algorithm>
#include <limits>

#include "hetsched/errors.hpp"

namespace hetsched {

RankTable compute_rank_u(const JobProfile& job, const ResourceProfile& resources) {
  RankTable table;
  table.rank.assign(job.size(), 0.0);
  auto order = job.topological_order();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& t = job.task(*it);
    double tail = 0.0;
    for (const auto& s : t.successors) tail = std::max(tail, s.comm_cost + table[s.task]);
    table.rank[static_cast<std::size_t>(*it)] = mean_exec_time(t, resources) + tail;
  }
  return table;
}

std::vector<TaskRef> heft_order(std::span<const TaskRef> ready, const RankTable& ranks) {
  std::vector<TaskRef> out(ready.begin(), ready.end());
  std::sort(out.begin(), out.end(), [&](const TaskRef& a, const TaskRef& b) {
    double ra = ranks[a.task], rb = ranks[b.task];
    if (ra != rb) return ra > rb;
    return a < b;
  });
  return out;
}

double PeTimeline::earliest_fit(double ready, double duration) const noexcept {
  double start = ready;
  for (const auto& iv : intervals_) {
    if (iv.finish <= start) continue;
    if (start + duration <= iv.start) return start;
    start = std::max(start, iv.finish);
  }
  return start;
}

void PeTimeline::insert(const Interval& iv) {
  auto pos = std::upper_bound(intervals_.begin(), intervals_.end(), iv.start,
                              [](double s, const Interval& other) { return s < other.start; });
  intervals_.insert(pos, iv);
}

double data_ready_time(const TaskSpec& task, PeId pe, const FinishMap& finished, double reference_time) {
  double ready = reference_time;
  for (const auto& p : task.predecessors) {
    const auto& aft = finished.at(static_cast<std::size_t>(p.task));
    if (!aft)
      throw ContractViolation("task " + std::to_string(task.id) + ": predecessor " + std::to_string(p.task) +
                              " has no recorded finish time");
    ready = std::max(ready, aft->finish + (aft->pe != pe ? p.comm_cost : 0.0));
  }
  return ready;
}

double est(const TaskSpec& task, PeId pe, const Timelines& timelines, const FinishMap& finished,
           double reference_time) {
  return std::max(timelines.at(static_cast<std::size_t>(pe)).avail(),
                  data_ready_time(task, pe, finished, reference_time));
}

Placement eft_select(const TaskSpec& task, TaskRef owner, Timelines& timelines, const FinishMap& finished,
                     const ResourceProfile& resources, double reference_time, PlacementPolicy policy) {
  std::optional<Placement> best;
  for (const auto& pe : resources.pes) {
    auto w = task.exec_time_on(pe.type);
    if (!w) continue;
    const auto& tl = timelines.at(static_cast<std::size_t>(pe.id));
    double ready = data_ready_time(task, pe.id, finished, reference_time);
    double start = policy == PlacementPolicy::insertion ? tl.earliest_fit(ready, *w) : std::max(tl.avail(), ready);
    double finish = start + *w;
    if (!best || finish < best->finish) best = Placement{pe.id, start, finish};
  }
  if (!best) throw ContractViolation("task " + std::to_string(task.id) + " is not supported by any PE");
  timelines[static_cast<std::size_t>(best->pe)].insert({best->start, best->finish, owner});
  return *best;
}

StaticSchedule list_schedule(const JobProfile& job, const ResourceProfile& resources, std::span<const TaskId> order,
                             PlacementPolicy policy) {
  StaticSchedule out;
  Timelines timelines(resources.size());
  FinishMap finished(job.size());
  for (TaskId id : order) {
    auto p = eft_select(job.task(id), {0, id}, timelines, finished, resources, 0.0, policy);
    finished[static_cast<std::size_t>(id)] = p;
    out.record.push_back({0, id, p.pe, p.start, p.finish});
    out.makespan = std::max(out.makespan, p.finish);
  }
  return out;
}

StaticSchedule heft_static_schedule(const JobProfile& job, const ResourceProfile& resources) {
  auto ranks = compute_rank_u(job, resources);
  std::vector<TaskRef> all;
  for (const auto& t : job.tasks) all.push_back({0, t.id});
  std::vector<TaskId> order;
  for (const auto& r : heft_order(all, ranks)) order.push_back(r.task);
  return list_schedule(job, resources, order);
}

namespace {

class BranchAndBound {
 public:
  BranchAndBound(const JobProfile& job, const ResourceProfile& resources)
      : job_(job), resources_(resources), timelines_(resources.size()), finished_(job.size()),
        pending_(job.size()) {
    for (const auto& t : job.tasks) pending_[static_cast<std::size_t>(t.id)] = static_cast<int>(t.predecessors.size());
  }

  double solve() {
    search(0, 0.0);
    return best_;
  }

 private:
  void search(std::size_t placed, double current) {
    if (current >= best_) return;
    if (placed == job_.size()) {
      best_ = current;
      return;
    }
    for (const auto& t : job_.tasks) {
      auto idx = static_cast<std::size_t>(t.id);
      if (pending_[idx] != 0 || finished_[idx]) continue;
      for (const auto& pe : resources_.pes) {
        auto w = t.exec_time_on(pe.type);
        if (!w) continue;
        auto& tl = timelines_[static_cast<std::size_t>(pe.id)];
        double start = tl.earliest_fit(data_ready_time(t, pe.id, finished_, 0.0), *w);
        PeTimeline saved = tl;
        tl.insert({start, start + *w, {0, t.id}});
        finished_[idx] = Placement{pe.id, start, start + *w};
        for (const auto& s : t.successors) --pending_[static_cast<std::size_t>(s.task)];
        search(placed + 1, std::max(current, start + *w));
        for (const auto& s : t.successors) ++pending_[static_cast<std::size_t>(s.task)];
        finished_[idx].reset();
        tl = std::move(saved);
      }
    }
  }

  const JobProfile& job_;
  const ResourceProfile& resources_;
  Timelines timelines_;
  FinishMap finished_;
  std::vector<int> pending_;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace

double brute_force_optimal(const JobProfile& job, const ResourceProfile& resources, std::size_t limit) {
  if (job.size() > limit)
    throw std::invalid_argument("brute_force_optimal: " + std::to_string(job.size()) + " tasks exceeds limit " +
                                std::to_string(limit));
  BranchAndBound bb(job, resources);
  return bb.solve();
}

}  // namespace hetsched
