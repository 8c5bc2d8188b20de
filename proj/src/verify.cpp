#include <algorithm>
#include <map>
#include <sstream>

#include "hetsched/schedule.hpp"

namespace hetsched {

namespace {

std::string describe(const ScheduleEntry& e) {
  std::ostringstream s;
  s << "job " << e.job << " task " << e.task << " on pe " << e.pe << " [" << e.start << ", " << e.finish << ")";
  return s.str();
}

}  // namespace

VerifyReport verify_schedule(const ScheduleRecord& record, const JobProfile& job, const ResourceProfile& resources,
                             VerifyOptions options) {
  VerifyReport report;
  auto fail = [&](std::string msg) { report.violations.push_back(std::move(msg)); };

  std::map<TaskRef, const ScheduleEntry*> by_task;
  for (const auto& e : record) {
    if (e.task < 0 || static_cast<std::size_t>(e.task) >= job.size()) {
      fail("unknown task: " + describe(e));
      continue;
    }
    if (e.pe < 0 || static_cast<std::size_t>(e.pe) >= resources.size()) {
      fail("unknown pe: " + describe(e));
      continue;
    }
    if (!(e.finish > e.start)) fail("non-positive duration: " + describe(e));
    auto nominal = job.task(e.task).exec_time_on(resources.type_of(e.pe));
    if (!nominal) fail("pe does not support task: " + describe(e));
    else if (options.nominal_durations && e.finish != e.start + *nominal)
      fail("duration differs from nominal: " + describe(e));
    if (!by_task.emplace(TaskRef{e.job, e.task}, &e).second) fail("task executed more than once: " + describe(e));
  }

  for (const auto& [ref, e] : by_task) {
    for (const auto& pred : job.task(ref.task).predecessors) {
      auto it = by_task.find({ref.job, pred.task});
      if (it == by_task.end()) {
        fail("predecessor " + std::to_string(pred.task) + " never ran before " + describe(*e));
        continue;
      }
      const auto& p = *it->second;
      double ready = p.finish + (p.pe != e->pe ? pred.comm_cost : 0.0);
      if (e->start < ready) fail("precedence violated (" + describe(p) + ") before " + describe(*e));
    }
  }

  std::map<PeId, std::vector<const ScheduleEntry*>> per_pe;
  for (const auto& [ref, e] : by_task) per_pe[e->pe].push_back(e);
  for (auto& [pe, entries] : per_pe) {
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->start < b->start; });
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (entries[i]->start < entries[i - 1]->finish)
        fail("overlap on pe " + std::to_string(pe) + ": " + describe(*entries[i - 1]) + " and " + describe(*entries[i]));
  }

  if (options.complete_jobs) {
    std::map<JobSeq, std::size_t> counts;
    for (const auto& [ref, e] : by_task) ++counts[ref.job];
    for (auto [j, n] : counts)
      if (n != job.size()) fail("job " + std::to_string(j) + " has " + std::to_string(n) + " of " + std::to_string(job.size()) + " tasks");
  }
  return report;
}

double makespan(const ScheduleRecord& record) {
  double m = 0;
  for (const auto& e : record) m = std::max(m, e.finish);
  return m;
}

}  // namespace hetsched
