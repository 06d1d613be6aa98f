#include "hrc/human_model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "hrc/rng.hpp"

namespace hrc {

namespace {

// Lognormal draw with the given mean and coefficient of variation, rounded to
// whole milliseconds (never below 1 ms).
Seconds lognormal_ms(Rng& rng, Seconds mean, double cv) {
  const double z = rng.normal();
  if (cv == 0.0) return std::max(quantize(mean), 0.001);
  const double sigma2 = std::log1p(cv * cv);
  const double mu = std::log(mean) - 0.5 * sigma2;
  return std::max(quantize(std::exp(mu + std::sqrt(sigma2) * z)), 0.001);
}

}  // namespace

Validation validate_profile(const HumanProfile& p) {
  Validation v;
  if (!(p.mean_place_b > 0.0)) v.violations.emplace_back("mean_place_b: must be > 0");
  if (!(p.cv >= 0.0)) v.violations.emplace_back("cv: must be >= 0");
  if (!(std::abs(p.drift_per_cube) < 0.05)) v.violations.emplace_back("drift_per_cube: |drift| must be < 0.05");
  if (!(p.mean_place_a > 0.0)) v.violations.emplace_back("mean_place_a: must be > 0");
  if (!(p.fetch_reaction >= 0.0)) v.violations.emplace_back("fetch_reaction: must be >= 0");
  return v;
}

Validation validate_population(const PopulationModel& pop) {
  Validation v;
  if (!(pop.pop_mean_place_b > 0.0)) v.violations.emplace_back("pop_mean_place_b: must be > 0");
  if (!(pop.pop_sd >= 0.0)) v.violations.emplace_back("pop_sd: must be >= 0");
  if (!(pop.cv_mean >= 0.0) || !(pop.cv_sd >= 0.0)) v.violations.emplace_back("cv: mean and sd must be >= 0");
  if (!(std::abs(pop.drift_mean) < 0.05) || !(pop.drift_sd >= 0.0))
    v.violations.emplace_back("drift: |mean| must be < 0.05 and sd >= 0");
  if (!(pop.mean_place_a > 0.0)) v.violations.emplace_back("mean_place_a: must be > 0");
  if (!(pop.fetch_reaction >= 0.0)) v.violations.emplace_back("fetch_reaction: must be >= 0");
  return v;
}

HumanProfile sample_subject(const PopulationModel& pop, std::uint64_t seed, std::string subject_id) {
  validate_population(pop).require();
  Rng rng(seed);
  HumanProfile p;
  p.subject_id = std::move(subject_id);

  if (pop.pop_sd == 0.0) {
    p.mean_place_b = pop.pop_mean_place_b;
    rng.normal();
  } else {
    double draw = pop.pop_mean_place_b + pop.pop_sd * rng.normal();
    for (int attempt = 0; draw < min_subject_mean_place_b && attempt < 64; ++attempt)
      draw = pop.pop_mean_place_b + pop.pop_sd * rng.normal();
    p.mean_place_b = std::max(draw, min_subject_mean_place_b);
  }

  p.cv = std::max(0.0, rng.normal(pop.cv_mean, pop.cv_sd));
  p.drift_per_cube = std::clamp(rng.normal(pop.drift_mean, pop.drift_sd), -0.049, 0.049);
  p.mean_place_a = pop.mean_place_a;
  p.fetch_reaction = pop.fetch_reaction;
  return p;
}

std::vector<Seconds> HumanTrace::placement_durations() const {
  std::vector<Seconds> out;
  for (const auto& c : cycles) out.insert(out.end(), c.place_b.begin(), c.place_b.end());
  return out;
}

Validation validate_trace(const HumanTrace& trace, const TaskConfig& cfg) {
  Validation v;
  if (trace.cycles.size() != static_cast<std::size_t>(cfg.cycles_total)) {
    v.violations.push_back("cycles: trace has " + std::to_string(trace.cycles.size()) + " cycles, config expects " +
                           std::to_string(cfg.cycles_total));
    return v;
  }
  for (std::size_t c = 0; c < trace.cycles.size(); ++c) {
    const auto& cy = trace.cycles[c];
    const auto where = "cycles[" + std::to_string(c) + "]";
    if (cy.place_b.size() != static_cast<std::size_t>(cfg.cubes_b_per_cycle))
      v.violations.push_back(where + ".place_b: expected " + std::to_string(cfg.cubes_b_per_cycle) + " entries");
    if (!cy.pick_offset.empty() && cy.pick_offset.size() != cy.place_b.size())
      v.violations.push_back(where + ".pick_b_offset: length must match place_b");
    if (!(cy.place_a > 0.0)) v.violations.push_back(where + ".place_a: must be > 0");
    if (!(cy.fetch >= 0.0)) v.violations.push_back(where + ".fetch: must be >= 0");
    for (std::size_t i = 0; i < cy.place_b.size(); ++i) {
      if (!(cy.place_b[i] > 0.0)) v.violations.push_back(where + ".place_b: all times must be > 0");
      if (i < cy.pick_offset.size() && !(cy.pick_offset[i] >= 0.0 && cy.pick_offset[i] < cy.place_b[i]))
        v.violations.push_back(where + ".pick_b_offset: must lie inside the placement span");
    }
  }
  return v;
}

HumanTrace generate_trace(const HumanProfile& profile, const TaskConfig& cfg, std::uint64_t seed) {
  validate_config(cfg).require();
  validate_profile(profile).require();
  Rng rng(seed);
  HumanTrace trace;
  trace.subject_id = profile.subject_id;
  trace.provenance = SampledProvenance{seed};

  std::int64_t k = 0;
  for (int c = 0; c < cfg.cycles_total; ++c) {
    TraceCycle cy;
    cy.fetch = quantize(profile.fetch_reaction);
    cy.place_a = lognormal_ms(rng, profile.mean_place_a, profile.cv);
    cy.place_b.reserve(static_cast<std::size_t>(cfg.cubes_b_per_cycle));
    for (int i = 0; i < cfg.cubes_b_per_cycle; ++i, ++k) {
      const Seconds mean = profile.mean_place_b * std::pow(1.0 + profile.drift_per_cube, static_cast<double>(k));
      cy.place_b.push_back(lognormal_ms(rng, mean, profile.cv));
    }
    cy.pick_offset.assign(cy.place_b.size(), 0.0);
    trace.cycles.push_back(std::move(cy));
  }
  return trace;
}

std::string trace_to_json(const HumanTrace& trace) {
  nlohmann::ordered_json j;
  j["subject_id"] = trace.subject_id;
  if (const auto* s = std::get_if<SampledProvenance>(&trace.provenance))
    j["provenance"] = {{"type", "sampled"}, {"seed", s->seed}};
  else
    j["provenance"] = {{"type", "recorded"}, {"session_id", std::get<RecordedProvenance>(trace.provenance).session_id}};
  auto& cycles = j["cycles"] = nlohmann::ordered_json::array();
  for (const auto& c : trace.cycles) {
    nlohmann::ordered_json cj;
    cj["place_a_ms"] = to_ms(c.place_a);
    auto& pb = cj["place_b_ms"] = nlohmann::ordered_json::array();
    for (auto d : c.place_b) pb.push_back(to_ms(d));
    cj["fetch_ms"] = to_ms(c.fetch);
    const bool any_offset = std::any_of(c.pick_offset.begin(), c.pick_offset.end(), [](Seconds s) { return s != 0.0; });
    if (any_offset) {
      auto& po = cj["pick_b_offset_ms"] = nlohmann::ordered_json::array();
      for (auto d : c.pick_offset) po.push_back(to_ms(d));
    }
    cycles.push_back(std::move(cj));
  }
  return j.dump(2);
}

HumanTrace trace_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    HumanTrace t;
    t.subject_id = j.at("subject_id").get<std::string>();
    const auto& prov = j.at("provenance");
    const auto type = prov.at("type").get<std::string>();
    if (type == "sampled")
      t.provenance = SampledProvenance{prov.at("seed").get<std::uint64_t>()};
    else if (type == "recorded")
      t.provenance = RecordedProvenance{prov.at("session_id").get<std::string>()};
    else
      throw Error("trace provenance type must be 'sampled' or 'recorded'");
    for (const auto& cj : j.at("cycles")) {
      TraceCycle c;
      c.place_a = from_ms(cj.at("place_a_ms").get<std::int64_t>());
      for (const auto& d : cj.at("place_b_ms")) c.place_b.push_back(from_ms(d.get<std::int64_t>()));
      c.fetch = cj.contains("fetch_ms") ? from_ms(cj["fetch_ms"].get<std::int64_t>()) : 1.0;
      if (cj.contains("pick_b_offset_ms"))
        for (const auto& d : cj["pick_b_offset_ms"]) c.pick_offset.push_back(from_ms(d.get<std::int64_t>()));
      else
        c.pick_offset.assign(c.place_b.size(), 0.0);
      t.cycles.push_back(std::move(c));
    }
    return t;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(std::string("trace file: ") + ex.what());
  }
}

std::string_view to_string(HumanActionKind kind) {
  switch (kind) {
    case HumanActionKind::take_a: return "take_a";
    case HumanActionKind::place_a: return "place_a";
    case HumanActionKind::pick_b: return "pick_b";
    case HumanActionKind::place_b: return "place_b";
  }
  return "?";
}

std::vector<HumanAction> replay_cycle(const HumanTrace& trace, int cycle, Seconds both_ready_at) {
  if (cycle < 0 || static_cast<std::size_t>(cycle) >= trace.cycles.size())
    throw Error("trace has no cycle " + std::to_string(cycle));
  const auto& c = trace.cycles[static_cast<std::size_t>(cycle)];
  std::vector<HumanAction> out;
  Seconds t = both_ready_at + c.fetch;
  out.push_back({HumanActionKind::take_a, t});
  t += c.place_a;
  out.push_back({HumanActionKind::place_a, t});
  for (std::size_t i = 0; i < c.place_b.size(); ++i) {
    const Seconds offset = i < c.pick_offset.size() ? c.pick_offset[i] : 0.0;
    const int idx = static_cast<int>(i) + 1;
    out.push_back({HumanActionKind::pick_b, t + offset, idx});
    t += c.place_b[i];
    out.push_back({HumanActionKind::place_b, t, idx});
  }
  return out;
}

std::vector<HumanAction> replay_trace(const HumanTrace& trace, const TaskConfig& cfg,
                                      const std::vector<Seconds>& handover_ready_times) {
  if (trace.cycles.empty()) throw Error("trace/config shape mismatch: empty trace");
  validate_trace(trace, cfg).require();
  if (handover_ready_times.size() != trace.cycles.size())
    throw Error("trace/config shape mismatch: one handover time per cycle required");
  std::vector<HumanAction> out;
  Seconds human_ready = 0.0;
  for (int c = 0; c < cfg.cycles_total; ++c) {
    auto cycle = replay_cycle(trace, c, std::max(human_ready, handover_ready_times[static_cast<std::size_t>(c)]));
    human_ready = cycle.back().t;
    out.insert(out.end(), cycle.begin(), cycle.end());
  }
  return out;
}

}  // namespace hrc
