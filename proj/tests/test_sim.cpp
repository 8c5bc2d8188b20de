#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "hetsched/errors.hpp"
#include "hetsched/sim.hpp"
#include "support.hpp"

using namespace hetsched;
using testsupport::load;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

/// Wraps another scheduler and checks engine invariants at every tick.
class Watchdog final : public Scheduler {
 public:
  explicit Watchdog(Scheduler& inner) : inner_(inner) {}
  std::vector<TaskRef> order(const Simulator& sim, std::span<const TaskRef> ready) override {
    return inner_.order(sim, ready);
  }
  void on_tick(const Simulator& sim, const TickInfo& tick) override {
    CHECK(tick.clock >= last_clock_);
    last_clock_ = tick.clock;
    CHECK(sim.in_flight() <= sim.config().capacity);
    CHECK(sim.arrivals() == sim.completed_jobs().size() + sim.in_flight() + sim.deferred());
    max_deferred_ = std::max(max_deferred_, sim.deferred());
    max_in_flight_ = std::max(max_in_flight_, sim.in_flight());
    for (const auto& pe : sim.pes())
      if (pe.task) CHECK(pe.finish >= pe.start);
    for (const auto& [seq, job] : sim.jobs()) {
      std::size_t done = 0;
      for (auto s : job.status) done += s == TaskStatus::completed;
      CHECK(job.remaining == job.status.size() - done);
    }
    inner_.on_tick(sim, tick);
    ++ticks_;
  }
  std::size_t ticks_ = 0;
  std::size_t max_deferred_ = 0;
  std::size_t max_in_flight_ = 0;

 private:
  Scheduler& inner_;
  double last_clock_ = 0;
};

class DropFirst final : public Scheduler {
 public:
  std::vector<TaskRef> order(const Simulator&, std::span<const TaskRef> ready) override {
    return {ready.begin() + 1, ready.end()};
  }
};

class Duplicate final : public Scheduler {
 public:
  std::vector<TaskRef> order(const Simulator&, std::span<const TaskRef> ready) override {
    std::vector<TaskRef> out(ready.begin(), ready.end());
    out.back() = out.front();
    return out;
  }
};

SimConfig single_job(std::size_t capacity = 1) {
  SimConfig c;
  c.scale = kInf;
  c.sim_length = 1e6;
  c.warmup = 0;
  c.capacity = capacity;
  c.pseudo_steady_state = true;
  return c;
}

}  // namespace

TEST_CASE("inter-arrival gaps average to the scale") {
  Rng rng = make_stream(1, Stream::injection);
  double sum = 0;
  for (int i = 0; i < 10000; ++i) sum += sample_interarrival(50, rng);
  CHECK(std::abs(sum / 10000 - 50) < 0.05 * 50);
  CHECK(std::isinf(sample_interarrival(kInf, rng)));
}

TEST_CASE("infinite scale leaves the queue empty") {
  auto [job, res] = load("canonical");
  SimConfig c;
  c.scale = kInf;
  c.sim_length = 1000;
  c.warmup = 0;
  HeftScheduler heft;
  auto ep = run_episode(job, res, c, heft);
  CHECK(ep.record.empty());
  CHECK(ep.metrics.injected == 0);
  CHECK(std::isinf(ep.metrics.latency));
}

TEST_CASE("arrivals at a full queue are deferred and admitted later") {
  auto [job, res] = parse_profiles("job slow\ntask 0 exec 1:100\n", "pe 0 type 1\n");
  SimConfig c;
  c.scale = 1;
  c.sim_length = 2000;
  c.warmup = 0;
  c.capacity = 12;
  c.log_events = true;
  FifoScheduler fifo;
  Watchdog dog(fifo);
  Simulator sim(job, res, c);
  sim.run(dog);
  CHECK(dog.max_in_flight_ == 12);
  CHECK(dog.max_deferred_ > 0);
  CHECK(sim.completed_jobs().size() == 19);  // one PE, 100 per job, back to back from the first arrival
  // Deferred jobs keep their arrival order and are stamped at admission.
  for (std::size_t i = 1; i < sim.completed_jobs().size(); ++i)
    CHECK(sim.completed_jobs()[i].seq == sim.completed_jobs()[i - 1].seq + 1);
  bool deferred_logged = false;
  for (const auto& e : sim.events()) deferred_logged |= e.kind == "defer";
  CHECK(deferred_logged);
}

TEST_CASE("single task on a single PE") {
  auto [job, res] = parse_profiles("job one\ntask 0 exec 1:10\n", "pe 0 type 1\n");
  HeftScheduler heft;
  auto ep = run_episode(job, res, single_job(), heft);
  REQUIRE(ep.record.size() == 1);
  CHECK(ep.record[0] == ScheduleEntry{0, 0, 0, 0.0, 10.0});
}

TEST_CASE("second task waits in the executable queue while its PE is busy") {
  auto [job, res] = parse_profiles("job two\ntask 0 exec 1:10\ntask 1 exec 1:4\n", "pe 0 type 1\n");
  FifoScheduler fifo;
  Simulator sim(job, res, single_job());
  sim.init_pseudo_steady_state();
  REQUIRE(sim.step(fifo));
  REQUIRE(sim.pes()[0].task.has_value());
  CHECK(*sim.pes()[0].task == TaskRef{0, 0});
  REQUIRE(sim.executable_queue().size() == 1);
  CHECK(sim.executable_queue()[0].task == TaskRef{0, 1});
  CHECK(sim.jobs().at(0).status[1] == TaskStatus::executable);
  sim.run(fifo);
  REQUIRE(sim.record().size() == 2);
  CHECK(sim.record()[1] == ScheduleEntry{0, 1, 0, 10.0, 14.0});
}

TEST_CASE("canonical single job under HEFT yields a valid complete record") {
  auto [job, res] = load("canonical");
  HeftScheduler heft;
  auto ep = run_episode(job, res, single_job(), heft);
  CHECK(ep.record.size() == 10);
  auto report = verify_schedule(ep.record, job, res, {true, true});
  for (const auto& v : report.violations) MESSAGE(v);
  CHECK(report.ok());
  auto again = run_episode(job, res, single_job(), heft);
  CHECK(makespan(again.record) == makespan(ep.record));
}

TEST_CASE("latency averages durations of post-warmup completions") {
  std::vector<JobSummary> done{{0, 0, 100}, {1, 50, 350}};
  CHECK(compute_latency(done, 0) == 200.0);
  CHECK(compute_latency(done, 10) == 300.0);
  CHECK(std::isinf(compute_latency({}, 0)));
}

TEST_CASE("noise-free draws are the nominal times") {
  auto [job, res] = load("wifi");
  Rng rng(1);
  NoiseModel none;
  // PE 12 is the first PE of type 6.
  REQUIRE(res.type_of(12) == 6);
  CHECK(draw_exec_time(job.task(4), res, 12, 104.75, none, rng) == 2.0);
  CHECK_THROWS_AS(draw_exec_time(job.task(4), res, 8, 104.75, none, rng), ContractViolation);
}

TEST_CASE("noisy draws have the configured spread and respect the floor") {
  auto [job, res] = load("wifi");
  Rng rng = make_stream(9, Stream::noise);
  NoiseModel noise{0.25, 1e-3};
  const double mean = 104.75;
  std::vector<double> draws;
  for (int i = 0; i < 10000; ++i) draws.push_back(draw_exec_time(job.task(4), res, 0, mean, noise, rng));
  double m = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  double var = 0;
  for (double d : draws) var += (d - m) * (d - m);
  double sd = std::sqrt(var / (draws.size() - 1));
  // Nominal 118 is far above the floor, so clamping never binds here.
  CHECK(std::abs(sd - 0.25 * mean) < 0.1 * 0.25 * mean);

  // On type 6 (nominal 2) the clamp binds often; every draw stays >= floor.
  for (int i = 0; i < 10000; ++i) CHECK(draw_exec_time(job.task(4), res, 12, mean, noise, rng) >= noise.floor);
}

TEST_CASE("pseudo-steady-state fills the queue") {
  auto [job, res] = load("canonical");
  for (std::size_t cap : {12u, 1u}) {
    SimConfig c = single_job(cap);
    Simulator sim(job, res, c);
    sim.init_pseudo_steady_state();
    CHECK(sim.in_flight() == cap);
    for (const auto& [seq, inst] : sim.jobs()) CHECK(inst.injected_at == 0.0);
    CHECK(sim.ready_queue().size() == cap * job.entry_tasks.size());
  }
  auto [two, res2] = parse_profiles("job fork\ntask 0 exec 1:3\ntask 1 exec 1:4\ntask 2 exec 1:1\nedge 0 2 1\nedge 1 2 1\n",
                                    "pe 0 type 1\n");
  Simulator sim(two, res2, single_job(12));
  sim.init_pseudo_steady_state();
  CHECK(sim.ready_queue().size() == 24);
}

TEST_CASE("zero-length simulation completes nothing") {
  auto [job, res] = load("canonical");
  SimConfig c;
  c.sim_length = 0;
  c.warmup = 0;
  HeftScheduler heft;
  auto ep = run_episode(job, res, c, heft);
  CHECK(ep.metrics.completed == 0);
  CHECK(std::isinf(ep.metrics.latency));
}

TEST_CASE("equal seeds replay identically") {
  auto [job, res] = load("canonical");
  SimConfig c;
  c.scale = 60;
  c.sim_length = 20000;
  c.warmup = 2000;
  c.seed = 42;
  c.noise.sigma_fraction = 0.25;
  c.log_events = true;
  RandomScheduler r1(42), r2(42);
  auto a = run_episode(job, res, c, r1);
  auto b = run_episode(job, res, c, r2);
  CHECK(a.record == b.record);
  CHECK(a.metrics == b.metrics);
  REQUIRE(a.events.size() == b.events.size());
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    CHECK(a.events[i].clock == b.events[i].clock);
    CHECK(a.events[i].kind == b.events[i].kind);
  }
}

TEST_CASE("invariants hold across schedulers, scales and noise") {
  auto [job, res] = load("canonical");
  HeftScheduler heft;
  FifoScheduler fifo;
  RandomScheduler rnd(3);
  Scheduler* scheds[] = {&heft, &fifo, &rnd};
  for (Scheduler* s : scheds)
    for (double scale : {500.0, 50.0, 10.0})
      for (double sigma : {0.0, 0.25}) {
        SimConfig c;
        c.scale = scale;
        c.sim_length = 5000;
        c.warmup = 500;
        c.noise.sigma_fraction = sigma;
        c.log_events = true;
        Watchdog dog(*s);
        Simulator sim(job, res, c);
        sim.run(dog);
        auto report = verify_schedule(sim.record(), job, res, {sigma == 0.0, false});
        CHECK_MESSAGE(report.ok(), (report.ok() ? "" : report.violations.front()));
        for (std::size_t i = 1; i < sim.events().size(); ++i) CHECK(sim.events()[i - 1].clock <= sim.events()[i].clock);
        for (const auto& j : sim.completed_jobs()) CHECK(j.completed_at >= j.injected_at);
        std::size_t counted = 0;
        for (const auto& j : sim.completed_jobs()) counted += j.injected_at >= c.warmup;
        CHECK(sim.metrics().completed == counted);
      }
}

TEST_CASE("task lifecycle follows the allowed transitions") {
  auto [job, res] = load("canonical");
  SimConfig c;
  c.scale = 30;
  c.sim_length = 3000;
  c.warmup = 0;
  c.log_events = true;
  HeftScheduler heft;
  auto ep = run_episode(job, res, c, heft);
  // Allowed kind sequence per task: ready (assign reload)* assign start finish.
  std::map<TaskRef, std::string> state;
  bool saw_reload = false;
  for (const auto& e : ep.events) {
    if (e.task < 0) continue;
    TaskRef ref{e.job, e.task};
    auto& s = state[ref];
    if (e.kind == "ready") {
      CHECK(s.empty());
    } else if (e.kind == "assign") {
      CHECK((s == "ready" || s == "reload"));
    } else if (e.kind == "reload") {
      CHECK(s == "assign");
      saw_reload = true;
    } else if (e.kind == "start") {
      CHECK(s == "assign");
    } else if (e.kind == "finish") {
      CHECK(s == "start");
    }
    s = e.kind;
  }
  CHECK(saw_reload);
}

TEST_CASE("a non-permutation ordering is a contract violation") {
  auto [job, res] = parse_profiles("job two\ntask 0 exec 1:10\ntask 1 exec 1:4\n", "pe 0 type 1\n");
  DropFirst drop;
  Simulator sim(job, res, single_job());
  sim.init_pseudo_steady_state();
  CHECK_THROWS_AS(sim.step(drop), ContractViolation);
  Duplicate dup;
  Simulator sim2(job, res, single_job());
  sim2.init_pseudo_steady_state();
  CHECK_THROWS_AS(sim2.step(dup), ContractViolation);
}

TEST_CASE("the verifier rejects broken records") {
  auto [job, res] = parse_profiles("job c\ntask 0 exec 1:5 2:5\ntask 1 exec 1:5\nedge 0 1 3\n", "pe 0 type 1\npe 1 type 2\n");
  ScheduleRecord good{{0, 0, 1, 0, 5}, {0, 1, 0, 8, 13}};
  CHECK(verify_schedule(good, job, res, {true, true}).ok());
  ScheduleRecord early{{0, 0, 1, 0, 5}, {0, 1, 0, 7, 12}};
  CHECK_FALSE(verify_schedule(early, job, res).ok());
  ScheduleRecord same_pe{{0, 0, 0, 0, 5}, {0, 1, 0, 5, 10}};
  CHECK(verify_schedule(same_pe, job, res).ok());
  ScheduleRecord overlap{{0, 0, 0, 0, 5}, {1, 0, 0, 4, 9}};
  CHECK_FALSE(verify_schedule(overlap, job, res).ok());
  ScheduleRecord twice{{0, 0, 0, 0, 5}, {0, 0, 1, 6, 11}};
  CHECK_FALSE(verify_schedule(twice, job, res).ok());
  ScheduleRecord unsupported{{0, 0, 0, 0, 5}, {0, 1, 1, 8, 13}};
  CHECK_FALSE(verify_schedule(unsupported, job, res).ok());
  ScheduleRecord wrong_duration{{0, 0, 1, 0, 6}};
  CHECK_FALSE(verify_schedule(wrong_duration, job, res, {true, false}).ok());
  ScheduleRecord missing{{0, 0, 1, 0, 5}};
  CHECK_FALSE(verify_schedule(missing, job, res, {false, true}).ok());
}
