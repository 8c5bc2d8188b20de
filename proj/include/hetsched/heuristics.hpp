#pragma once

#include <optional>
#include <span>
#include <vector>

#include "hetsched/profile.hpp"
#include "hetsched/schedule.hpp"

namespace hetsched {

/// Upward rank per task id: critical-path length from the task to an exit.
struct RankTable {
  std::vector<double> rank;
  double operator[](TaskId id) const { return rank.at(static_cast<std::size_t>(id)); }
};

RankTable compute_rank_u(const JobProfile& job, const ResourceProfile& resources);

/// Descending rank; ties by ascending (job_seq, task id).
std::vector<TaskRef> heft_order(std::span<const TaskRef> ready, const RankTable& ranks);

struct Interval {
  double start = 0;
  double finish = 0;
  TaskRef owner;
};

/// Occupied intervals of one PE, kept sorted and non-overlapping.
class PeTimeline {
 public:
  std::span<const Interval> intervals() const noexcept { return intervals_; }
  bool empty() const noexcept { return intervals_.empty(); }
  /// End of the last interval (0 when empty).
  double avail() const noexcept { return intervals_.empty() ? 0.0 : intervals_.back().finish; }
  /// First start >= ready such that [start, start + duration) hits no interval.
  double earliest_fit(double ready, double duration) const noexcept;
  void insert(const Interval& iv);

 private:
  std::vector<Interval> intervals_;
};

using Timelines = std::vector<PeTimeline>;

struct Placement {
  PeId pe = 0;
  double start = 0;
  double finish = 0;
};

/// Actual finish placements of the tasks of one job, indexed by task id.
using FinishMap = std::vector<std::optional<Placement>>;

enum class PlacementPolicy { insertion, append };

/// max(reference_time, max over predecessors of AFT + comm cost when on another PE).
double data_ready_time(const TaskSpec& task, PeId pe, const FinishMap& finished, double reference_time = 0.0);

/// Earliest start time of `task` on `pe`: max(avail[pe], data_ready_time).
double est(const TaskSpec& task, PeId pe, const Timelines& timelines, const FinishMap& finished,
           double reference_time = 0.0);

/// Maps `task` to the PE with the earliest finish, lowest PE id on ties, and
/// records the chosen interval in `timelines`.
Placement eft_select(const TaskSpec& task, TaskRef owner, Timelines& timelines, const FinishMap& finished,
                     const ResourceProfile& resources, double reference_time = 0.0,
                     PlacementPolicy policy = PlacementPolicy::insertion);

struct StaticSchedule {
  ScheduleRecord record;
  double makespan = 0;
};

/// Schedules one job in the given task order with EFT mapping.
StaticSchedule list_schedule(const JobProfile& job, const ResourceProfile& resources, std::span<const TaskId> order,
                             PlacementPolicy policy = PlacementPolicy::insertion);

StaticSchedule heft_static_schedule(const JobProfile& job, const ResourceProfile& resources);

/// Exact minimum makespan over every (topological order, PE assignment) pair
/// under insertion placement. Branch and bound; meant for tests on small jobs.
double brute_force_optimal(const JobProfile& job, const ResourceProfile& resources, std::size_t limit = 8);

}  // namespace hetsched
