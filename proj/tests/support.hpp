#pragma once

// Shared test helpers: profile loading, a random DAG generator and small
// reference implementations written independently of the library code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hetsched/profile.hpp"

namespace testsupport {

inline std::string data_path(const std::string& name) { return std::string(HETSCHED_TEST_DATA) + "/" + name; }

inline std::pair<hetsched::JobProfile, hetsched::ResourceProfile> load(const std::string& stem) {
  return hetsched::load_profiles(data_path(stem + ".job"), data_path(stem + ".res"));
}

struct RandomDagOptions {
  int min_tasks = 1;
  int max_tasks = 6;
  int types = 3;
  double edge_probability = 0.4;
  int max_exec = 30;
  int max_comm = 20;
  bool random_support = true;  // tasks support a random non-empty subset of types
};

/// Profile texts for a random DAG with one PE per type; edges only go from
/// lower to higher ids, so the graph is acyclic by construction.
inline std::pair<std::string, std::string> random_dag_text(std::mt19937_64& rng, const RandomDagOptions& o = {}) {
  std::uniform_int_distribution<int> ntasks(o.min_tasks, o.max_tasks);
  std::uniform_int_distribution<int> exec(1, o.max_exec);
  std::uniform_int_distribution<int> comm(0, o.max_comm);
  std::bernoulli_distribution edge(o.edge_probability);
  std::bernoulli_distribution support(0.6);
  std::uniform_int_distribution<int> pick_type(1, o.types);
  int n = ntasks(rng);
  std::ostringstream job, res;
  job << "job random\n";
  for (int t = 0; t < n; ++t) {
    std::vector<int> types;
    for (int k = 1; k <= o.types; ++k)
      if (!o.random_support || support(rng)) types.push_back(k);
    if (types.empty()) types.push_back(pick_type(rng));
    job << "task " << t;
    job << " exec";
    for (int k : types) job << ' ' << k << ':' << exec(rng);
    job << '\n';
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (edge(rng)) job << "edge " << a << ' ' << b << ' ' << comm(rng) << '\n';
  for (int p = 0; p < o.types; ++p) res << "pe " << p << " type " << p + 1 << '\n';
  return {job.str(), res.str()};
}

inline std::pair<hetsched::JobProfile, hetsched::ResourceProfile> random_dag(std::mt19937_64& rng,
                                                                           const RandomDagOptions& o = {}) {
  auto [j, r] = random_dag_text(rng, o);
  return hetsched::parse_profiles(j, r);
}

/// Job text of an isomorphic copy where task i becomes task perm[i].
inline std::string relabeled_job_text(const hetsched::JobProfile& job, const std::vector<int>& perm) {
  const std::size_t n = job.size();
  std::vector<int> inverse(n);
  for (std::size_t i = 0; i < n; ++i) inverse[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  std::ostringstream text;
  text.precision(17);
  text << "job relabeled\n";
  for (std::size_t k = 0; k < n; ++k) {
    text << "task " << k << " exec";
    for (const auto& [type, w] : job.tasks[static_cast<std::size_t>(inverse[k])].exec_times) text << ' ' << type << ':' << w;
    text << '\n';
  }
  for (const auto& t : job.tasks)
    for (const auto& p : t.predecessors)
      text << "edge " << perm[static_cast<std::size_t>(p.task)] << ' ' << perm[static_cast<std::size_t>(t.id)] << ' '
           << p.comm_cost << '\n';
  return text.str();
}

// ---------------------------------------------------------------------------
// Reference computations, deliberately written without the library's helpers.

/// Mean over PEs (not types) of the task's time on each supporting PE.
inline double ref_mean_exec(const hetsched::TaskSpec& t, const hetsched::ResourceProfile& res) {
  double sum = 0;
  int count = 0;
  for (const auto& pe : res.pes) {
    auto it = t.exec_times.find(pe.type);
    if (it != t.exec_times.end()) {
      sum += it->second;
      ++count;
    }
  }
  return sum / count;
}

/// Upward ranks by memoized recursion from each task.
inline std::vector<double> ref_rank_u(const hetsched::JobProfile& job, const hetsched::ResourceProfile& res) {
  std::vector<double> memo(job.tasks.size(), -1.0);
  std::function<double(int)> rank = [&](int i) -> double {
    if (memo[i] >= 0) return memo[i];
    double best = 0;
    for (const auto& e : job.tasks[i].successors) best = std::max(best, e.comm_cost + rank(e.task));
    return memo[i] = ref_mean_exec(job.tasks[i], res) + best;
  };
  for (std::size_t i = 0; i < job.tasks.size(); ++i) rank(static_cast<int>(i));
  return memo;
}

struct RefSlot {
  int task, pe;
  double start, finish;
};

/// Insertion-based list scheduling of one job in the given order: for each PE
/// scan the gaps between sorted busy intervals for the first that fits.
inline std::vector<RefSlot> ref_list_schedule(const hetsched::JobProfile& job, const hetsched::ResourceProfile& res,
                                              const std::vector<int>& order) {
  std::vector<std::vector<std::pair<double, double>>> busy(res.pes.size());
  std::vector<RefSlot> placed(job.tasks.size(), {-1, -1, 0, 0});
  for (int t : order) {
    const auto& spec = job.tasks[t];
    double best_finish = std::numeric_limits<double>::infinity(), best_start = 0;
    int best_pe = -1;
    for (std::size_t p = 0; p < res.pes.size(); ++p) {
      auto it = spec.exec_times.find(res.pes[p].type);
      if (it == spec.exec_times.end()) continue;
      double w = it->second;
      double ready = 0;
      for (const auto& pr : spec.predecessors) {
        const auto& q = placed[pr.task];
        ready = std::max(ready, q.finish + (q.pe == static_cast<int>(p) ? 0.0 : pr.comm_cost));
      }
      auto iv = busy[p];
      std::sort(iv.begin(), iv.end());
      double start = ready;
      for (const auto& [s, f] : iv) {
        if (start + w <= s) break;
        start = std::max(start, f);
      }
      if (start + w < best_finish) {
        best_finish = start + w;
        best_start = start;
        best_pe = static_cast<int>(p);
      }
    }
    busy[best_pe].push_back({best_start, best_finish});
    placed[t] = {t, best_pe, best_start, best_finish};
  }
  return placed;
}

inline std::vector<int> ref_heft_order(const hetsched::JobProfile& job, const hetsched::ResourceProfile& res) {
  auto rank = ref_rank_u(job, res);
  std::vector<int> order(job.tasks.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rank[a] > rank[b]; });
  return order;
}

inline double ref_makespan(const std::vector<RefSlot>& slots) {
  double m = 0;
  for (const auto& s : slots) m = std::max(m, s.finish);
  return m;
}

}  // namespace testsupport
