#include <doctest.h>

#include <cmath>
#include <numeric>

#include "hrc/human_model.hpp"
#include "test_support.hpp"

using namespace hrc;

TEST_CASE("population and profile validation") {
  CHECK(validate_population(PopulationModel{}).ok());
  PopulationModel pop;
  pop.pop_mean_place_b = 0.0;
  CHECK_FALSE(validate_population(pop).ok());
  pop = PopulationModel{};
  pop.pop_sd = -0.1;
  CHECK_FALSE(validate_population(pop).ok());

  HumanProfile p;
  CHECK(validate_profile(p).ok());
  p.drift_per_cube = 0.05;
  CHECK_FALSE(validate_profile(p).ok());
  p.drift_per_cube = 0.0;
  p.cv = -0.01;
  CHECK_FALSE(validate_profile(p).ok());
}

TEST_CASE("sample_subject with zero spread returns the population mean") {
  PopulationModel pop;
  pop.pop_sd = 0.0;
  const auto p = sample_subject(pop, 99, "s");
  CHECK(p.mean_place_b == pop.pop_mean_place_b);
  CHECK(p.subject_id == "s");
}

TEST_CASE("sample_subject is deterministic per seed") {
  PopulationModel pop;
  pop.cv_sd = 0.05;
  pop.drift_sd = 0.002;
  const auto a = sample_subject(pop, 1234);
  const auto b = sample_subject(pop, 1234);
  CHECK(a.mean_place_b == b.mean_place_b);
  CHECK(a.cv == b.cv);
  CHECK(a.drift_per_cube == b.drift_per_cube);
  CHECK(sample_subject(pop, 1235).mean_place_b != a.mean_place_b);
}

TEST_CASE("sampled subject means concentrate on the population mean") {
  PopulationModel pop;
  double sum = 0.0;
  double min_seen = 1e9;
  constexpr int n = 10000;
  for (int s = 0; s < n; ++s) {
    const auto p = sample_subject(pop, static_cast<std::uint64_t>(s));
    sum += p.mean_place_b;
    min_seen = std::min(min_seen, p.mean_place_b);
  }
  CHECK(std::abs(sum / n - 2.8) < 0.02);
  CHECK(min_seen >= min_subject_mean_place_b);
}

TEST_CASE("truncation keeps extreme populations above the floor") {
  PopulationModel pop;
  pop.pop_mean_place_b = 0.6;
  pop.pop_sd = 2.0;
  for (int s = 0; s < 500; ++s) CHECK(sample_subject(pop, static_cast<std::uint64_t>(s)).mean_place_b >= 0.5);
}

TEST_CASE("zero-variance trace is constant") {
  HumanProfile p;
  p.mean_place_b = 3.0;
  p.cv = 0.0;
  const TaskConfig cfg;
  const auto t = generate_trace(p, cfg, 5);
  REQUIRE(t.cycles.size() == 5);
  for (const auto& c : t.cycles) {
    REQUIRE(c.place_b.size() == 20);
    for (double d : c.place_b) CHECK(d == 3.0);
    CHECK(c.place_a == 4.0);
    CHECK(c.fetch == 1.0);
  }
  CHECK(validate_trace(t, cfg).ok());
}

TEST_CASE("drift compounds per cube across the whole run") {
  HumanProfile p;
  p.mean_place_b = 3.0;
  p.cv = 0.0;
  p.drift_per_cube = 0.01;
  const auto t = generate_trace(p, TaskConfig{}, 1);
  const auto d = t.placement_durations();
  REQUIRE(d.size() == 100);
  const double expected = 3.0 * std::pow(1.01, 99);
  CHECK(expected == doctest::Approx(8.03).epsilon(0.001));
  CHECK(std::abs(d[99] - expected) <= 0.0005);
  CHECK(std::abs(d[20] - 3.0 * std::pow(1.01, 20)) <= 0.0005);
}

TEST_CASE("traces are reproducible and seed-dependent") {
  HumanProfile p;
  const TaskConfig cfg;
  CHECK(generate_trace(p, cfg, 77) == generate_trace(p, cfg, 77));
  const auto a = generate_trace(p, cfg, 1);
  const auto b = generate_trace(p, cfg, 2);
  CHECK(a.placement_durations() != b.placement_durations());
  for (const auto* t : {&a, &b}) {
    const auto d = t->placement_durations();
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    const double se = p.cv * p.mean_place_b / std::sqrt(static_cast<double>(d.size()));
    CHECK(std::abs(mean - p.mean_place_b) < 3.0 * se);
  }
}

TEST_CASE("placement times follow the requested mean and spread") {
  HumanProfile p;
  p.mean_place_b = 2.5;
  p.cv = 0.25;
  double sum = 0.0, sq = 0.0;
  int n = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed)
    for (double d : generate_trace(p, TaskConfig{}, seed).placement_durations()) {
      CHECK(d > 0.0);
      sum += d;
      sq += d * d;
      ++n;
    }
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(mean == doctest::Approx(2.5).epsilon(0.02));
  CHECK(sd / mean == doctest::Approx(0.25).epsilon(0.06));
}

TEST_CASE("generated durations are whole milliseconds") {
  const auto t = generate_trace(HumanProfile{}, TaskConfig{}, 3);
  for (double d : t.placement_durations()) CHECK(from_ms(to_ms(d)) == d);
}

TEST_CASE("trace JSON round-trips") {
  auto t = generate_trace(HumanProfile{"S001"}, TaskConfig{}, 11);
  const auto text = trace_to_json(t);
  CHECK(text.find("\"place_b_ms\"") != std::string::npos);
  CHECK(text.find("\"sampled\"") != std::string::npos);
  CHECK(trace_from_json(text) == t);

  t.provenance = RecordedProvenance{"session-1"};
  t.cycles[0].pick_offset[3] = 0.25;
  CHECK(trace_from_json(trace_to_json(t)) == t);
}

TEST_CASE("minimal trace JSON uses default fetch and zero pick offsets") {
  const auto t = trace_from_json(R"({"subject_id":"x","provenance":{"type":"recorded","session_id":"s"},
    "cycles":[{"place_a_ms":4000,"place_b_ms":[3000,2000]}]})");
  REQUIRE(t.cycles.size() == 1);
  CHECK(t.cycles[0].fetch == 1.0);
  CHECK(t.cycles[0].place_b == std::vector<Seconds>{3.0, 2.0});
  CHECK(t.cycles[0].pick_offset == std::vector<Seconds>{0.0, 0.0});
  CHECK(std::get<RecordedProvenance>(t.provenance).session_id == "s");
}

TEST_CASE("trace shape is checked against the task") {
  TaskConfig cfg;
  auto t = generate_trace(HumanProfile{}, cfg, 1);
  t.cycles[2].place_b.pop_back();
  CHECK_FALSE(validate_trace(t, cfg).ok());
  t = generate_trace(HumanProfile{}, cfg, 1);
  t.cycles[0].place_b[0] = 0.0;
  CHECK_FALSE(validate_trace(t, cfg).ok());
}

TEST_CASE("replay reproduces the trace durations") {
  const TaskConfig cfg;
  const auto t = generate_trace(HumanProfile{}, cfg, 8);
  std::vector<Seconds> handovers;
  for (int c = 0; c < cfg.cycles_total; ++c) handovers.push_back(100.0 * c);
  const auto actions = replay_trace(t, cfg, handovers);
  REQUIRE(actions.size() == static_cast<std::size_t>(cfg.cycles_total * (2 + 2 * cfg.cubes_b_per_cycle)));

  std::vector<Seconds> durations;
  Seconds span_start = 0.0;
  for (const auto& a : actions) {
    if (a.kind == HumanActionKind::place_a || a.kind == HumanActionKind::place_b) {
      if (a.kind == HumanActionKind::place_b) durations.push_back(quantize(a.t - span_start));
      span_start = a.t;
    }
  }
  CHECK(durations == t.placement_durations());

  // Task order: take_a, place_a, then alternating pick_b/place_b.
  CHECK(actions[0].kind == HumanActionKind::take_a);
  CHECK(actions[1].kind == HumanActionKind::place_a);
  CHECK(actions[2].kind == HumanActionKind::pick_b);
  CHECK(actions[2].b_index == 1);
  CHECK(actions[3].kind == HumanActionKind::place_b);
}

TEST_CASE("empty trace is a shape mismatch") {
  HumanTrace empty;
  CHECK_THROWS_WITH_AS(replay_trace(empty, TaskConfig{}, {0.0}), doctest::Contains("shape mismatch"), Error);
}
