#include "hetsched/profile.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <queue>
#include <set>
#include <sstream>

namespace hetsched {

namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    auto tokens = split_ws(line);
    if (!tokens.empty()) fn(line_no, tokens);
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
}

int parse_int(std::string_view tok, std::size_t line, const char* field) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("expected integer for ") + field + ", got '" + std::string(tok) + "'");
  return value;
}

double parse_real(std::string_view tok, std::size_t line, const char* field) {
  double value = 0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), value);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError(line, std::string("expected number for ") + field + ", got '" + std::string(tok) + "'");
  if (!std::isfinite(value)) throw ParseError(line, std::string(field) + " must be finite");
  return value;
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

std::vector<TaskId> JobProfile::topological_order() const {
  std::vector<int> indegree(tasks.size(), 0);
  for (const auto& t : tasks) indegree[static_cast<std::size_t>(t.id)] = static_cast<int>(t.predecessors.size());
  std::priority_queue<TaskId, std::vector<TaskId>, std::greater<>> frontier;
  for (const auto& t : tasks)
    if (indegree[static_cast<std::size_t>(t.id)] == 0) frontier.push(t.id);
  std::vector<TaskId> order;
  order.reserve(tasks.size());
  while (!frontier.empty()) {
    TaskId id = frontier.top();
    frontier.pop();
    order.push_back(id);
    for (const auto& s : task(id).successors)
      if (--indegree[static_cast<std::size_t>(s.task)] == 0) frontier.push(s.task);
  }
  return order;
}

std::size_t ResourceProfile::type_count() const {
  std::set<TypeId> types;
  for (const auto& pe : pes) types.insert(pe.type);
  return types.size();
}

void finalize_job(JobProfile& job) {
  for (auto& t : job.tasks) t.successors.clear();
  for (auto& t : job.tasks) {
    std::sort(t.predecessors.begin(), t.predecessors.end(),
              [](const Edge& a, const Edge& b) { return a.task < b.task; });
    for (const auto& p : t.predecessors) {
      if (p.task < 0 || static_cast<std::size_t>(p.task) >= job.tasks.size()) continue;
      job.tasks[static_cast<std::size_t>(p.task)].successors.push_back({t.id, p.comm_cost});
    }
  }
  job.entry_tasks.clear();
  job.exit_tasks.clear();
  for (const auto& t : job.tasks) {
    if (t.predecessors.empty()) job.entry_tasks.push_back(t.id);
    if (t.successors.empty()) job.exit_tasks.push_back(t.id);
  }
}

JobProfile parse_job(std::string_view text) {
  JobProfile job;
  bool have_header = false;
  std::map<TaskId, TaskSpec> tasks;
  struct PendingEdge {
    std::size_t line;
    TaskId src, dst;
    double cost;
  };
  std::vector<PendingEdge> edges;

  for_each_line(text, [&](std::size_t line, const std::vector<std::string_view>& tok) {
    if (tok[0] == "job") {
      if (have_header) throw ParseError(line, "duplicate 'job' header");
      if (tok.size() != 2) throw ParseError(line, "expected 'job <name>'");
      job.name = std::string(tok[1]);
      have_header = true;
    } else if (tok[0] == "task") {
      if (tok.size() < 3 || tok[2] != "exec") throw ParseError(line, "expected 'task <id> exec <type>:<time> ...'");
      TaskSpec spec;
      spec.id = parse_int(tok[1], line, "task id");
      for (std::size_t i = 3; i < tok.size(); ++i) {
        auto colon = tok[i].find(':');
        if (colon == std::string_view::npos) throw ParseError(line, "expected <type>:<time>, got '" + std::string(tok[i]) + "'");
        TypeId type = parse_int(tok[i].substr(0, colon), line, "resource type");
        double time = parse_real(tok[i].substr(colon + 1), line, "execution time");
        if (time <= 0) throw ParseError(line, "execution time must be positive");
        if (!spec.exec_times.emplace(type, time).second)
          throw ParseError(line, "duplicate resource type " + std::to_string(type));
      }
      if (!tasks.emplace(spec.id, std::move(spec)).second)
        throw ParseError(line, "duplicate task id " + std::string(tok[1]));
    } else if (tok[0] == "edge") {
      if (tok.size() != 4) throw ParseError(line, "expected 'edge <src> <dst> <comm_cost>'");
      PendingEdge e{line, parse_int(tok[1], line, "edge source"), parse_int(tok[2], line, "edge destination"),
                    parse_real(tok[3], line, "communication cost")};
      if (e.cost < 0) throw ParseError(line, "communication cost must be non-negative");
      edges.push_back(e);
    } else {
      throw ParseError(line, "unknown directive '" + std::string(tok[0]) + "'");
    }
  });

  if (!have_header) throw ParseError(1, "missing 'job <name>' header");
  for (const auto& e : edges) {
    if (!tasks.contains(e.src)) throw ParseError(e.line, "edge references unknown task " + std::to_string(e.src));
    if (!tasks.contains(e.dst)) throw ParseError(e.line, "edge references unknown task " + std::to_string(e.dst));
    auto& preds = tasks[e.dst].predecessors;
    if (std::any_of(preds.begin(), preds.end(), [&](const Edge& p) { return p.task == e.src; }))
      throw ParseError(e.line, "duplicate edge " + std::to_string(e.src) + " -> " + std::to_string(e.dst));
    preds.push_back({e.src, e.cost});
  }

  TaskId expected = 0;
  for (auto& [id, spec] : tasks) {
    if (id != expected)
      throw ValidationError(ValidationError::Kind::bad_id,
                            "task ids must be contiguous from 0; missing id " + std::to_string(expected));
    job.tasks.push_back(std::move(spec));
    ++expected;
  }
  finalize_job(job);
  return job;
}

ResourceProfile parse_resources(std::string_view text) {
  std::map<PeId, TypeId> pes;
  for_each_line(text, [&](std::size_t line, const std::vector<std::string_view>& tok) {
    if (tok[0] != "pe") throw ParseError(line, "unknown directive '" + std::string(tok[0]) + "'");
    if (tok.size() != 4 || tok[2] != "type") throw ParseError(line, "expected 'pe <id> type <type-id>'");
    PeId id = parse_int(tok[1], line, "pe id");
    TypeId type = parse_int(tok[3], line, "type id");
    if (!pes.emplace(id, type).second) throw ParseError(line, "duplicate pe id " + std::to_string(id));
  });
  ResourceProfile res;
  PeId expected = 0;
  for (auto [id, type] : pes) {
    if (id != expected)
      throw ValidationError(ValidationError::Kind::bad_id,
                            "pe ids must be contiguous from 0; missing id " + std::to_string(expected));
    res.pes.push_back({id, type});
    ++expected;
  }
  return res;
}

void validate_dag(const JobProfile& job) {
  using Kind = ValidationError::Kind;
  if (job.tasks.empty()) throw ValidationError(Kind::empty, "job has no tasks (no entry task)");
  const auto n = job.tasks.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& t = job.tasks[i];
    if (t.id != static_cast<TaskId>(i)) throw ValidationError(Kind::bad_id, "task at index " + std::to_string(i) + " has id " + std::to_string(t.id));
    for (const auto& p : t.predecessors) {
      if (p.task < 0 || static_cast<std::size_t>(p.task) >= n)
        throw ValidationError(Kind::unknown_task, "task " + std::to_string(t.id) + " references unknown predecessor " + std::to_string(p.task));
      if (!std::isfinite(p.comm_cost) || p.comm_cost < 0)
        throw ValidationError(Kind::bad_value, "edge into task " + std::to_string(t.id) + " has invalid communication cost");
    }
    for (const auto& [type, time] : t.exec_times)
      if (!std::isfinite(time) || time <= 0)
        throw ValidationError(Kind::bad_value, "task " + std::to_string(t.id) + " has invalid execution time on type " + std::to_string(type));
  }

  // Cycle detection by colored DFS over successor lists, reporting the first cycle.
  enum Color : char { white, grey, black };
  std::vector<Color> color(n, white);
  std::vector<TaskId> stack;
  std::vector<std::vector<TaskId>> succ(n);
  for (const auto& t : job.tasks)
    for (const auto& p : t.predecessors) succ[static_cast<std::size_t>(p.task)].push_back(t.id);
  for (auto& s : succ) std::sort(s.begin(), s.end());

  for (std::size_t root = 0; root < n; ++root) {
    if (color[root] != white) continue;
    std::vector<std::pair<TaskId, std::size_t>> frames{{static_cast<TaskId>(root), 0}};
    color[root] = grey;
    stack = {static_cast<TaskId>(root)};
    while (!frames.empty()) {
      auto& [v, next] = frames.back();
      const auto& out = succ[static_cast<std::size_t>(v)];
      if (next < out.size()) {
        TaskId w = out[next++];
        if (color[static_cast<std::size_t>(w)] == grey) {
          auto start = std::find(stack.begin(), stack.end(), w);
          std::vector<TaskId> cycle(start, stack.end());
          cycle.push_back(w);
          std::string desc;
          for (std::size_t i = 0; i < cycle.size(); ++i) desc += (i ? " -> " : "") + std::to_string(cycle[i]);
          throw ValidationError(Kind::cycle, "precedence cycle: " + desc, cycle);
        }
        if (color[static_cast<std::size_t>(w)] == white) {
          color[static_cast<std::size_t>(w)] = grey;
          stack.push_back(w);
          frames.emplace_back(w, 0);
        }
      } else {
        color[static_cast<std::size_t>(v)] = black;
        stack.pop_back();
        frames.pop_back();
      }
    }
  }

  std::vector<bool> reached(n, false);
  std::vector<TaskId> work;
  for (const auto& t : job.tasks)
    if (t.predecessors.empty()) {
      reached[static_cast<std::size_t>(t.id)] = true;
      work.push_back(t.id);
    }
  if (work.empty()) throw ValidationError(Kind::empty, "job has no entry task");
  while (!work.empty()) {
    TaskId v = work.back();
    work.pop_back();
    for (TaskId w : succ[static_cast<std::size_t>(v)])
      if (!reached[static_cast<std::size_t>(w)]) {
        reached[static_cast<std::size_t>(w)] = true;
        work.push_back(w);
      }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!reached[i]) throw ValidationError(Kind::unreachable, "task " + std::to_string(i) + " is unreachable from every entry task");

  for (const auto& t : job.tasks)
    if (t.exec_times.empty())
      throw ValidationError(Kind::unsupported_task, "task " + std::to_string(t.id) + " is supported by no resource type");
}

void validate_resources(const JobProfile& job, const ResourceProfile& resources) {
  using Kind = ValidationError::Kind;
  if (resources.pes.empty()) throw ValidationError(Kind::no_pes, "resource profile has no PEs");
  std::set<TypeId> present;
  for (const auto& pe : resources.pes) present.insert(pe.type);
  for (const auto& t : job.tasks)
    for (const auto& [type, time] : t.exec_times)
      if (!present.contains(type))
        throw ValidationError(Kind::orphan_type, "task " + std::to_string(t.id) + " references resource type " +
                                                     std::to_string(type) + " which no PE provides");
}

std::pair<JobProfile, ResourceProfile> parse_profiles(std::string_view job_text, std::string_view resource_text) {
  auto job = parse_job(job_text);
  auto res = parse_resources(resource_text);
  validate_dag(job);
  validate_resources(job, res);
  return {std::move(job), std::move(res)};
}

std::string serialize_job(const JobProfile& job) {
  std::ostringstream out;
  out << "job " << job.name << '\n';
  for (const auto& t : job.tasks) {
    out << "task " << t.id << " exec";
    for (const auto& [type, time] : t.exec_times) out << ' ' << type << ':' << format_real(time);
    out << '\n';
  }
  std::vector<std::tuple<TaskId, TaskId, double>> edges;
  for (const auto& t : job.tasks)
    for (const auto& p : t.predecessors) edges.emplace_back(p.task, t.id, p.comm_cost);
  std::sort(edges.begin(), edges.end());
  for (const auto& [src, dst, cost] : edges) out << "edge " << src << ' ' << dst << ' ' << format_real(cost) << '\n';
  return out.str();
}

std::string serialize_resources(const ResourceProfile& resources) {
  std::ostringstream out;
  for (const auto& pe : resources.pes) out << "pe " << pe.id << " type " << pe.type << '\n';
  return out.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<JobProfile, ResourceProfile> load_profiles(const std::string& job_path, const std::string& resource_path) {
  return parse_profiles(read_file(job_path), read_file(resource_path));
}

double mean_exec_time(const TaskSpec& task, const ResourceProfile& resources) {
  // Running mean: a multiset of identical times yields that time exactly.
  double mean = 0;
  std::size_t count = 0;
  for (const auto& pe : resources.pes)
    if (auto t = task.exec_time_on(pe.type)) {
      ++count;
      mean += (*t - mean) / static_cast<double>(count);
    }
  return mean;
}

std::optional<double> exec_time_on_pe(const TaskSpec& task, const ResourceProfile& resources, PeId pe) {
  return task.exec_time_on(resources.type_of(pe));
}

}  // namespace hetsched
