#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "hrc/engine.hpp"
#include "hrc/rng.hpp"
#include "test_support.hpp"

using namespace hrc;
using namespace hrc::test;

namespace {

std::vector<Seconds> times_of(const EventLog& log, EventKind kind) {
  std::vector<Seconds> out;
  for (const auto& e : events_of(log, kind)) out.push_back(e.t);
  return out;
}

Seconds pick_time(const EventLog& log, int cycle, int index) {
  for (const auto& e : log)
    if (e.kind == EventKind::pick_b && e.cycle == cycle && e.detail == index) return e.t;
  FAIL("pick not found");
  return -1.0;
}

// Placement durations reconstructed from the log: each place_b_done minus the
// previous placement completion of the same cycle.
std::vector<Seconds> logged_durations(const EventLog& log) {
  std::vector<Seconds> out;
  Seconds last = 0.0;
  for (const auto& e : log) {
    if (e.kind == EventKind::place_a_done) last = e.t;
    if (e.kind == EventKind::place_b_done) {
      out.push_back(quantize(e.t - last));
      last = e.t;
    }
  }
  return out;
}

// Drives a live engine the way a scripted client would: the human acts on a
// fixed trace, waiting for each cube A to be presented.
RunRecord drive_live(Engine& engine, const HumanTrace& trace) {
  engine.start();
  Seconds human_ready = 0.0;
  for (std::size_t c = 0; c < trace.cycles.size(); ++c) {
    const auto& tc = trace.cycles[c];
    auto presented = [&] {
      for (const auto& e : engine.log())
        if (e.kind == EventKind::handover_ready && e.cycle == static_cast<int>(c)) return std::optional<Seconds>(e.t);
      return std::optional<Seconds>();
    };
    engine.advance_to(human_ready);
    while (!presented()) engine.step();
    Seconds t = std::max(human_ready, *presented()) + tc.fetch;
    engine.submit(HumanActionKind::take_a, t);
    t += tc.place_a;
    engine.submit(HumanActionKind::place_a, t);
    for (std::size_t i = 0; i < tc.place_b.size(); ++i) {
      engine.submit(HumanActionKind::pick_b, t + tc.pick_offset[i]);
      t += tc.place_b[i];
      engine.submit(HumanActionKind::place_b, t);
    }
    human_ready = t;
  }
  REQUIRE(engine.finished());
  return engine.record();
}

}  // namespace

TEST_CASE("sensor policy on a constant 3.0 s human matches the hand trace") {
  const TaskConfig task;
  const Seconds c = 3.0, fetch = 1.0, a = task.place_a_duration, th = task.handover_prep_duration;
  const auto r = run_policy(PolicyKind::sensor, constant_trace(task, c));

  // Oracle: take_a(k) = fetch + k * (fetch + a + 20c); the trigger fires at the
  // 13th pick, 12 placements after place_a, and the robot is free by then.
  const Seconds cycle = fetch + a + 20 * c;
  CHECK(cycle == 65.0);
  const auto ready = times_of(r.event_log, EventKind::handover_ready);
  const auto takes = times_of(r.event_log, EventKind::take_a);
  REQUIRE(ready.size() == 5);
  REQUIRE(takes.size() == 5);
  CHECK(ready[0] == 0.0);
  for (int k = 0; k < 5; ++k) CHECK(takes[static_cast<std::size_t>(k)] == doctest::Approx(fetch + k * cycle));
  for (int k = 1; k < 5; ++k) {
    const Seconds trigger = takes[static_cast<std::size_t>(k - 1)] + a + 12 * c;
    CHECK(ready[static_cast<std::size_t>(k)] == doctest::Approx(trigger + th));
    CHECK(pick_time(r.event_log, k - 1, 13) == doctest::Approx(trigger));
  }
  CHECK(ready[1] == 47.0);
  CHECK(takes[1] == 66.0);

  CHECK(r.metrics.total_time == 5 * cycle);
  CHECK(r.metrics.human_idle == 0.0);
  // presenting: 1 s for the first cube, then ready -> take_a in each later cycle
  CHECK(r.metrics.robot_idle == doctest::Approx(fetch + 4 * (takes[1] - ready[1])));
  CHECK(r.metrics.robot_idle == 77.0);
  for (const auto& cm : r.metrics.per_cycle) CHECK(cm.assembly_time == 64.0);
}

TEST_CASE("timing policy on a constant 3.0 s human matches the hand trace") {
  const TaskConfig task;
  const auto r = run_policy(PolicyKind::timing, constant_trace(task, 3.0));
  const auto ready = times_of(r.event_log, EventKind::handover_ready);
  const auto preps = times_of(r.event_log, EventKind::handover_prep_start);
  REQUIRE(ready.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(ready[static_cast<std::size_t>(k)] == 70.0 * k);
  for (int k = 1; k < 5; ++k) CHECK(preps[static_cast<std::size_t>(k)] == 70.0 * k - 6.0);

  // human is ready 65 s after each take_a and waits 5 s for the next cube
  CHECK(r.metrics.total_time == 4 * 70.0 + 65.0);
  CHECK(r.metrics.human_idle == 4 * 5.0);
  for (int k = 1; k < 5; ++k) CHECK(r.metrics.per_cycle[static_cast<std::size_t>(k)].human_idle == 5.0);
  CHECK(r.metrics.robot_idle == 5 * 1.0);
}

TEST_CASE("timing schedule is open-loop for humans who keep up") {
  const TaskConfig task;
  for (Seconds c : {2.0, 2.8, 3.2}) {
    const auto r = run_policy(PolicyKind::timing, constant_trace(task, c));
    CHECK(times_of(r.event_log, EventKind::handover_prep_start) == std::vector<Seconds>{0, 64, 134, 204, 274});
  }
  HumanProfile p;
  p.mean_place_b = 2.6;
  const auto noisy = run_policy(PolicyKind::timing, generate_trace(p, task, 4));
  CHECK(times_of(noisy.event_log, EventKind::handover_prep_start) == std::vector<Seconds>{0, 64, 134, 204, 274});
}

TEST_CASE("sensor prep waits for the in-flight secondary unit") {
  TaskConfig task;
  task.secondary_unit_duration = 45.0;  // the unit started at take_a spans the trigger
  const auto r = run_policy(PolicyKind::sensor, constant_trace(task, 2.9), task);
  const Seconds trigger = pick_time(r.event_log, 0, 13);
  CHECK(trigger == doctest::Approx(39.8));

  // find the unit that spans the trigger
  std::optional<Seconds> unit_start, unit_end;
  for (const auto& e : r.event_log) {
    if (e.kind == EventKind::secondary_start && e.t < trigger) unit_start = e.t;
    if (e.kind == EventKind::secondary_done && e.t >= trigger && !unit_end) unit_end = e.t;
  }
  REQUIRE(unit_start);
  REQUIRE(unit_end);
  CHECK(*unit_end - *unit_start == 45.0);
  CHECK(*unit_start == 1.0);
  CHECK(*unit_end > trigger);

  const auto preps = events_of(r.event_log, EventKind::handover_prep_start);
  REQUIRE(preps.size() == 5);
  CHECK(preps[1].t == *unit_end);
  CHECK(times_of(r.event_log, EventKind::handover_ready)[1] == *unit_end + 6.0);
}

TEST_CASE("sensor triggers once per cycle") {
  HumanProfile p;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = run_policy(PolicyKind::sensor, generate_trace(p, TaskConfig{}, seed));
    std::map<int, int> preps;
    for (const auto& e : events_of(r.event_log, EventKind::handover_prep_start)) {
      ++preps[e.cycle];
      if (e.cycle > 0) CHECK(e.t >= pick_time(r.event_log, e.cycle - 1, 13));
    }
    for (int c = 0; c < 5; ++c) CHECK(preps[c] == 1);
  }
}

TEST_CASE("equal-time events: robot before human") {
  // 4.0 s cubes: place_b_done and secondary_done both land on t = 9.
  const auto r = run_policy(PolicyKind::sensor, constant_trace(TaskConfig{}, 4.0));
  std::optional<std::size_t> robot_idx, human_idx;
  for (std::size_t i = 0; i < r.event_log.size(); ++i) {
    const auto& e = r.event_log[i];
    if (e.t != 9.0) continue;
    if (e.kind == EventKind::secondary_done && !robot_idx) robot_idx = i;
    if (e.kind == EventKind::place_b_done && !human_idx) human_idx = i;
  }
  REQUIRE(robot_idx);
  REQUIRE(human_idx);
  CHECK(*robot_idx < *human_idx);
}

TEST_CASE("handover during a placement: human finishes, then fetches") {
  const auto r = run_policy(PolicyKind::sensor, constant_trace(TaskConfig{}, 3.0));
  const auto ends = times_of(r.event_log, EventKind::cycle_end);
  const auto takes = times_of(r.event_log, EventKind::take_a);
  for (std::size_t k = 1; k < takes.size(); ++k) CHECK(takes[k] == ends[k - 1] + 1.0);
}

TEST_CASE("minimal run shape") {
  TaskConfig task;
  task.cycles_total = 1;
  task.cubes_b_per_cycle = 1;
  PolicyConfigs pol;
  pol.sensor.trigger_pick_index = 1;
  for (PolicyKind p : all_policies) {
    const auto r = run_policy(p, constant_trace(task, 3.0), task, pol);
    CHECK(events_of(r.event_log, EventKind::handover_ready).size() == 1);
    CHECK(events_of(r.event_log, EventKind::pick_b).size() == 1);
    CHECK(events_of(r.event_log, EventKind::place_b_done).size() == 1);
    CHECK(r.event_log.front().kind == EventKind::run_start);
    CHECK(r.event_log.back().kind == EventKind::run_end);
    CHECK(r.metrics.total_time == 1.0 + 4.0 + 3.0);
  }
}

TEST_CASE("empty queue before run_end is a deadlock") {
  EngineConfig cfg;
  Engine live(cfg);
  live.start();
  CHECK_THROWS_WITH_AS(live.step(), doctest::Contains("deadlock"), Error);
}

TEST_CASE("engine rejects invalid configs") {
  EngineConfig cfg;
  cfg.task.cycles_total = 0;
  CHECK_THROWS_AS(Engine{cfg}, Error);
  EngineConfig bad_trace;
  bad_trace.trace = HumanTrace{};
  CHECK_THROWS_AS(Engine{bad_trace}, Error);
}

TEST_CASE("buffer accounting and log invariants hold on random humans") {
  PopulationModel pop;
  pop.cv_sd = 0.1;
  pop.drift_sd = 0.004;
  const TaskConfig task;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto profile = sample_subject(pop, seed);
    const auto trace = generate_trace(profile, task, seed + 1000);
    const auto dur = trace.placement_durations();
    const Seconds fastest = *std::min_element(dur.begin(), dur.end());
    for (PolicyKind p : all_policies) {
      const auto r = run_policy(p, trace, task, {}, pop.pop_mean_place_b);
      int level = task.buffer_capacity;
      for (const auto& e : r.event_log) {
        if (e.kind == EventKind::secondary_done) {
          CHECK(*e.detail == level + 1);
          level = static_cast<int>(*e.detail);
        }
        if (e.kind == EventKind::handover_prep_start) {
          CHECK(*e.detail == level - 1);
          level = static_cast<int>(*e.detail);
        }
        CHECK(level >= 0);
        CHECK(level <= task.buffer_capacity);
      }
      // placements are policy-independent
      CHECK(logged_durations(r.event_log) == dur);
      // conservation
      CHECK(r.metrics.total_time >= task.cycles_total * (task.place_a_duration + task.cubes_b_per_cycle * fastest));
      Seconds assembly = 0.0;
      for (const auto& cm : r.metrics.per_cycle) assembly += cm.assembly_time;
      CHECK(r.metrics.total_time >= assembly);
      CHECK(r.metrics.total_idle == r.metrics.human_idle + r.metrics.robot_idle);
      CHECK(r.metrics.human_idle >= 0.0);
      CHECK(r.metrics.robot_idle >= 0.0);
      // cube A precedes every B placement of its cycle
      for (int c = 0; c < task.cycles_total; ++c) CHECK(pick_time(r.event_log, c, 1) > times_of(r.event_log, EventKind::handover_ready)[static_cast<std::size_t>(c)] - 1e-9);
      // metrics are a pure function of the serialized log
      CHECK(derive_metrics(parse_jsonl(to_jsonl(r.event_log)), task) == derive_metrics(r.event_log, task));
    }
  }
}

TEST_CASE("human idle on constant humans: adaptive <= sensor <= timing") {
  const TaskConfig task;
  // D_T is 2.8; slower or equal humans are never underestimated
  for (Seconds c : {2.8, 3.0, 3.2, 3.4}) {
    const auto trace = constant_trace(task, c);
    const auto t = run_policy(PolicyKind::timing, trace);
    const auto s = run_policy(PolicyKind::sensor, trace);
    const auto a = run_policy(PolicyKind::adaptive, trace);
    for (std::size_t k = 1; k < 5; ++k) {
      CAPTURE(c);
      CAPTURE(k);
      CHECK(a.metrics.per_cycle[k].human_idle <= s.metrics.per_cycle[k].human_idle + 1e-9);
      CHECK(s.metrics.per_cycle[k].human_idle <= t.metrics.per_cycle[k].human_idle + 1e-9);
    }
  }
}

TEST_CASE("humans faster than D_T wait at most the forecast bias") {
  const TaskConfig task;
  const Seconds c = 2.5, d_t = 2.8;
  const auto a = run_policy(PolicyKind::adaptive, constant_trace(task, c), task, {}, d_t);
  // the last decision is taken with at most ceil(T_H / c) cubes left, each
  // overestimated by at most alpha_max * (D_T - c)
  const double bound = std::ceil(task.handover_prep_duration / c) * weight_cap * (d_t - c);
  for (std::size_t k = 1; k < 5; ++k) CHECK(a.metrics.per_cycle[k].human_idle <= bound + 1e-9);
}

TEST_CASE("adaptive prediction converges on a constant human") {
  const TaskConfig task;
  const Seconds c = 3.0, d_t = 2.8;
  const auto r = run_policy(PolicyKind::adaptive, constant_trace(task, c), task, {}, d_t);
  REQUIRE(r.metrics.per_cycle[1].predicted_time);
  const double alpha = PolicyConfigs{}.adaptive.initial_weights.alpha;
  const double step = PolicyConfigs{}.adaptive.controller.step;
  // Only the D_T term can still be off after a full cycle of observations.
  CHECK(std::abs(*r.metrics.per_cycle[1].predicted_time - 20 * c) <= 20 * (alpha + step) * std::abs(c - d_t) + 1e-9);
  // the prediction trace counts down to zero at every cycle end
  int zeros = 0;
  for (const auto& p : r.prediction_trace)
    if (p.n == 20) {
      CHECK(p.f == 0.0);
      ++zeros;
    }
  CHECK(zeros == 5);
}

TEST_CASE("runs are deterministic") {
  const auto trace = generate_trace(HumanProfile{}, TaskConfig{}, 9);
  for (PolicyKind p : all_policies) {
    const auto a = run_policy(p, trace);
    const auto b = run_policy(p, trace);
    CHECK(to_jsonl(a.event_log) == to_jsonl(b.event_log));
    CHECK(a.metrics == b.metrics);
    CHECK(a.prediction_trace == b.prediction_trace);
  }
}

TEST_CASE("live run and replay of its recorded trace agree") {
  HumanProfile p;
  p.cv = 0.3;
  const TaskConfig task;
  const auto script = generate_trace(p, task, 21);
  for (PolicyKind policy : all_policies) {
    EngineConfig cfg;
    cfg.policy = policy;
    Engine live(cfg);
    const auto rec = drive_live(live, script);
    CHECK_FALSE(rec.aborted);
    const auto recorded = live.recorded_trace("sess");
    CHECK(recorded.placement_durations() == script.placement_durations());
    CHECK(std::get<RecordedProvenance>(recorded.provenance).session_id == "sess");

    const auto replay = run_policy(policy, recorded);
    CHECK(std::abs(replay.metrics.total_time - rec.metrics.total_time) <= 0.001);
    CHECK(std::abs(replay.metrics.human_idle - rec.metrics.human_idle) <= 0.001);
    CHECK(std::abs(replay.metrics.robot_idle - rec.metrics.robot_idle) <= 0.001);
    CHECK(to_jsonl(replay.event_log) == to_jsonl(rec.event_log));
  }
}

TEST_CASE("recorded trace replayed under another policy keeps human durations") {
  EngineConfig cfg;
  cfg.policy = PolicyKind::sensor;
  Engine live(cfg);
  drive_live(live, generate_trace(HumanProfile{}, TaskConfig{}, 5));
  const auto recorded = live.recorded_trace("s");
  const auto timing = run_policy(PolicyKind::timing, recorded);
  CHECK(logged_durations(timing.event_log) == recorded.placement_durations());
  CHECK(times_of(timing.event_log, EventKind::handover_ready) != times_of(live.log(), EventKind::handover_ready));
}

TEST_CASE("live protocol errors leave the state unchanged") {
  EngineConfig cfg;
  Engine live(cfg);
  CHECK_THROWS_AS(live.submit(HumanActionKind::take_a, 0.0), ProtocolError);
  live.start();
  CHECK_THROWS_AS(live.submit(HumanActionKind::pick_b, 0.5), ProtocolError);
  live.submit(HumanActionKind::take_a, 1.0);
  live.submit(HumanActionKind::place_a, 5.0);
  live.submit(HumanActionKind::pick_b, 5.0);
  const auto size = live.log().size();
  CHECK_THROWS_AS(live.submit(HumanActionKind::pick_b, 5.5), ProtocolError);
  CHECK(live.log().size() == size);
  CHECK(live.human_phase() == HumanPhase::holding_b);
  CHECK_THROWS_AS(live.submit(HumanActionKind::take_a, 6.0), ProtocolError);
}

TEST_CASE("aborting a live run yields a partial record") {
  EngineConfig cfg;
  Engine live(cfg);
  live.start();
  live.submit(HumanActionKind::take_a, 1.0);
  live.submit(HumanActionKind::place_a, 5.0);
  live.abort(125.0);
  const auto r = live.record();
  CHECK(r.aborted);
  CHECK(r.metrics.total_time >= 5.0);
  CHECK(live.recorded_trace("x").cycles.empty());
}

TEST_CASE("refills restricted to between cycles") {
  PopulationModel pop;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto trace = generate_trace(sample_subject(pop, seed), TaskConfig{}, seed);
    for (PolicyKind p : all_policies) {
      EngineConfig cfg;
      cfg.policy = p;
      cfg.trace = trace;
      cfg.secondary_during_placement = false;
      const auto r = Engine(cfg).run();
      bool placing = false;
      for (const auto& e : r.event_log) {
        if (e.kind == EventKind::place_a_done) placing = true;
        if (e.kind == EventKind::cycle_end) placing = false;
        if (e.kind == EventKind::secondary_start && *e.detail == 0) CHECK_FALSE(placing);
      }
    }
  }
}
