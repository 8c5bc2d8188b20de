#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hetsched {

using TaskId = int;
using TypeId = int;
using PeId = int;

/// Thrown for malformed profile text. Carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Thrown when a parsed profile violates a structural invariant.
class ValidationError : public std::runtime_error {
 public:
  enum class Kind { empty, bad_id, unknown_task, duplicate_edge, cycle, unreachable, unsupported_task, orphan_type, bad_value, no_pes };

  ValidationError(Kind kind, const std::string& what, std::vector<TaskId> cycle = {})
      : std::runtime_error(what), kind_(kind), cycle_(std::move(cycle)) {}
  Kind kind() const noexcept { return kind_; }
  /// Task ids along the first detected cycle, closing id repeated at the end.
  const std::vector<TaskId>& cycle() const noexcept { return cycle_; }

 private:
  Kind kind_;
  std::vector<TaskId> cycle_;
};

struct Edge {
  TaskId task;
  double comm_cost;
};

struct TaskSpec {
  TaskId id = 0;
  std::vector<Edge> predecessors;
  std::vector<Edge> successors;  // derived
  /// Resource type -> execution time. An absent type means the task cannot run there.
  std::map<TypeId, double> exec_times;

  std::optional<double> exec_time_on(TypeId type) const {
    auto it = exec_times.find(type);
    if (it == exec_times.end()) return std::nullopt;
    return it->second;
  }
  bool supported_by(TypeId type) const { return exec_times.contains(type); }
};

struct JobProfile {
  std::string name;
  std::vector<TaskSpec> tasks;  // indexed by task id
  std::vector<TaskId> entry_tasks;
  std::vector<TaskId> exit_tasks;

  std::size_t size() const noexcept { return tasks.size(); }
  const TaskSpec& task(TaskId id) const { return tasks.at(static_cast<std::size_t>(id)); }

  /// Deterministic topological order (Kahn, smallest ready id first).
  std::vector<TaskId> topological_order() const;
};

struct PeSpec {
  PeId id;
  TypeId type;
};

struct ResourceProfile {
  std::vector<PeSpec> pes;  // indexed by pe id

  std::size_t size() const noexcept { return pes.size(); }
  std::size_t type_count() const;
  TypeId type_of(PeId pe) const { return pes.at(static_cast<std::size_t>(pe)).type; }
};

/// Parses a job profile. Edges are attached and derived sets are filled, but
/// nothing is validated beyond syntax; see validate_dag.
JobProfile parse_job(std::string_view text);
ResourceProfile parse_resources(std::string_view text);

/// Parses and fully validates a (job, resource) pair.
std::pair<JobProfile, ResourceProfile> parse_profiles(std::string_view job_text, std::string_view resource_text);

/// Structural checks on the DAG alone: ids, acyclicity, reachability, support.
void validate_dag(const JobProfile& job);
/// Cross checks: non-empty PE inventory, every referenced type is present.
void validate_resources(const JobProfile& job, const ResourceProfile& resources);

std::string serialize_job(const JobProfile& job);
std::string serialize_resources(const ResourceProfile& resources);

std::pair<JobProfile, ResourceProfile> load_profiles(const std::string& job_path, const std::string& resource_path);

/// Mean execution time of `task` over every PE that supports it.
double mean_exec_time(const TaskSpec& task, const ResourceProfile& resources);

/// Execution time of `task` on a concrete PE, nullopt when unsupported.
std::optional<double> exec_time_on_pe(const TaskSpec& task, const ResourceProfile& resources, PeId pe);

/// Rebuilds successor lists and entry/exit sets from predecessor lists.
void finalize_job(JobProfile& job);

std::string read_file(const std::string& path);

}  // namespace hetsched
