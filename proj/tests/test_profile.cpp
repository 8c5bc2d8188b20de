#include <random>
#include <set>

#include "doctest.h"
#include "support.hpp"
#include "wifi_table.hpp"

using namespace hetsched;
using testsupport::load;

namespace {

ValidationError::Kind validation_kind(const std::string& job_text, const std::string& res_text = "pe 0 type 1\n") {
  try {
    parse_profiles(job_text, res_text);
  } catch (const ValidationError& e) {
    return e.kind();
  }
  FAIL("expected a validation error");
  return ValidationError::Kind::empty;
}

std::size_t parse_error_line(const std::string& job_text) {
  try {
    parse_job(job_text);
  } catch (const ParseError& e) {
    return e.line();
  }
  FAIL("expected a parse error");
  return 0;
}

}  // namespace

TEST_CASE("wifi task 4 keeps its four supported types") {
  auto [job, res] = load("wifi");
  const auto& t = job.task(4);
  CHECK(t.exec_times == std::map<TypeId, double>{{1, 118}, {2, 296}, {5, 3}, {6, 2}});
  for (TypeId absent : {3, 4, 7}) CHECK_FALSE(t.supported_by(absent));
}

TEST_CASE("wifi table is reproduced exactly for every task and type") {
  auto [job, res] = load("wifi");
  REQUIRE(job.size() == testsupport::kWifiTable.size());
  for (std::size_t i = 0; i < job.size(); ++i)
    for (int type = 1; type <= 7; ++type) {
      int expected = testsupport::kWifiTable[i][static_cast<std::size_t>(type - 1)];
      auto got = job.task(static_cast<TaskId>(i)).exec_time_on(type);
      if (expected < 0)
        CHECK_FALSE(got.has_value());
      else
        CHECK(got == static_cast<double>(expected));
    }
}

TEST_CASE("single task job has the same entry and exit set") {
  auto [job, res] = parse_profiles("job one\ntask 0 exec 1:5\n", "pe 0 type 1\n");
  CHECK(job.entry_tasks == std::vector<TaskId>{0});
  CHECK(job.exit_tasks == std::vector<TaskId>{0});
}

TEST_CASE("two-node cycle is reported with its task ids") {
  const std::string text = "job loop\ntask 0 exec 1:1\ntask 1 exec 1:1\nedge 0 1 0\nedge 1 0 0\n";
  try {
    parse_profiles(text, "pe 0 type 1\n");
    FAIL("cycle accepted");
  } catch (const ValidationError& e) {
    CHECK(e.kind() == ValidationError::Kind::cycle);
    CHECK(e.cycle() == std::vector<TaskId>{0, 1, 0});
  }
}

TEST_CASE("validation errors name the violated invariant") {
  using K = ValidationError::Kind;
  CHECK(validation_kind("job empty\n") == K::empty);
  CHECK(validation_kind("job c\ntask 0 exec 1:1\ntask 1 exec 1:1\ntask 2 exec\nedge 0 1 1\nedge 1 2 1\n") ==
        K::unsupported_task);
  CHECK(validation_kind("job o\ntask 0 exec 2:1\n") == K::orphan_type);
  CHECK(validation_kind("job g\ntask 0 exec 1:1\ntask 2 exec 1:1\n") == K::bad_id);
  CHECK(validation_kind("job p\ntask 0 exec 1:1\n", "") == K::no_pes);
  // 1 and 2 form a cycle fed by nothing, so the cycle is found before reachability.
  CHECK(validation_kind("job r\ntask 0 exec 1:1\ntask 1 exec 1:1\ntask 2 exec 1:1\nedge 1 2 0\nedge 2 1 0\n") == K::cycle);
}

TEST_CASE("canonical profile validates") {
  auto [job, res] = load("canonical");
  CHECK(job.size() == 10);
  CHECK(res.size() == 3);
  CHECK(job.entry_tasks == std::vector<TaskId>{0});
  CHECK(job.exit_tasks == std::vector<TaskId>{9});
}

TEST_CASE("parse errors carry the offending line") {
  CHECK(parse_error_line("job a\ntask 0 exec 1:5\nfrobnicate 3\n") == 3);
  CHECK(parse_error_line("job a\n# comment\ntask x exec 1:5\n") == 3);
  CHECK(parse_error_line("job a\ntask 0 exec 1:-2\n") == 2);
  CHECK(parse_error_line("job a\ntask 0 exec 1:2\nedge 0 5 1\n") == 3);
  CHECK(parse_error_line("job a\ntask 0 exec 1:2\ntask 1 exec 1:2\nedge 0 1 -1\n") == 4);
  CHECK(parse_error_line("task 0 exec 1:2\n") == 1);
  CHECK_THROWS_AS(parse_resources("pe 0 kind 1\n"), ParseError);
  CHECK_THROWS_AS(parse_resources("node 0 type 1\n"), ParseError);
}

TEST_CASE("mean execution time averages over supporting PEs") {
  auto [job, res] = load("wifi");
  ResourceProfile two{{{0, 1}, {1, 2}}};
  CHECK(mean_exec_time(job.task(1), two) == 13.0);
  ResourceProfile four{{{0, 1}, {1, 2}, {2, 5}, {3, 6}}};
  CHECK(mean_exec_time(job.task(4), four) == 104.75);
  ResourceProfile one{{{0, 6}}};
  CHECK(mean_exec_time(job.task(4), one) == 2.0);
  // Over the bundled inventory PEs count individually: 4 x 118, 4 x 296, 2 x 3, 2 x 2.
  CHECK(mean_exec_time(job.task(4), res) == doctest::Approx((4 * 118 + 4 * 296 + 2 * 3 + 2 * 2) / 12.0).epsilon(1e-15));
}

TEST_CASE("mean over a uniform multiset of one type is the type's time exactly") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> time(0.1, 1000);
  for (int trial = 0; trial < 200; ++trial) {
    TaskSpec t;
    double w = time(rng);
    t.exec_times[3] = w;
    ResourceProfile res;
    for (int p = 0; p < 1 + trial % 17; ++p) res.pes.push_back({p, 3});
    CHECK(mean_exec_time(t, res) == w);
  }
}

TEST_CASE("serialize then parse is the identity on profiles") {
  for (const char* stem : {"canonical", "wifi", "toy"}) {
    auto [job, res] = load(stem);
    auto text = serialize_job(job);
    auto rtext = serialize_resources(res);
    auto [job2, res2] = parse_profiles(text, rtext);
    CHECK(serialize_job(job2) == text);
    CHECK(serialize_resources(res2) == rtext);
    REQUIRE(job2.size() == job.size());
    for (std::size_t i = 0; i < job.size(); ++i) {
      CHECK(job2.tasks[i].exec_times == job.tasks[i].exec_times);
      CHECK(job2.tasks[i].predecessors.size() == job.tasks[i].predecessors.size());
    }
  }
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto [jt, rt] = testsupport::random_dag_text(rng);
    auto [job, res] = parse_profiles(jt, rt);
    auto once = serialize_job(job);
    CHECK(serialize_job(parse_job(once)) == once);
  }
}

TEST_CASE("topological order respects every edge") {
  std::mt19937_64 rng(3);
  testsupport::RandomDagOptions opt;
  opt.max_tasks = 20;
  for (int trial = 0; trial < 200; ++trial) {
    auto [job, res] = testsupport::random_dag(rng, opt);
    auto order = job.topological_order();
    REQUIRE(order.size() == job.size());
    std::vector<std::size_t> pos(job.size());
    for (std::size_t i = 0; i < order.size(); ++i) pos[static_cast<std::size_t>(order[i])] = i;
    for (const auto& t : job.tasks)
      for (const auto& p : t.predecessors) CHECK(pos[static_cast<std::size_t>(p.task)] < pos[static_cast<std::size_t>(t.id)]);
  }
}
