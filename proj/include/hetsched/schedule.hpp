#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "hetsched/profile.hpp"

namespace hetsched {

using JobSeq = std::int64_t;

/// A task of a concrete job instance. Ordering is (job_seq, task id), the
/// tie-break order used throughout.
struct TaskRef {
  JobSeq job = 0;
  TaskId task = 0;
  auto operator<=>(const TaskRef&) const = default;
};

struct ScheduleEntry {
  JobSeq job = 0;
  TaskId task = 0;
  PeId pe = 0;
  double start = 0;
  double finish = 0;
  bool operator==(const ScheduleEntry&) const = default;
};

using ScheduleRecord = std::vector<ScheduleEntry>;

struct VerifyOptions {
  /// Require finish to equal start + nominal execution time exactly.
  bool nominal_durations = false;
  /// Require every task of every job present in the record.
  bool complete_jobs = false;
};

struct VerifyReport {
  std::vector<std::string> violations;
  bool ok() const noexcept { return violations.empty(); }
};

/// Independent validity check of a finished record: per-PE non-overlap,
/// precedence with communication delay across PEs, single execution per task,
/// and PE support.
VerifyReport verify_schedule(const ScheduleRecord& record, const JobProfile& job, const ResourceProfile& resources,
                             VerifyOptions options = {});

double makespan(const ScheduleRecord& record);

}  // namespace hetsched
