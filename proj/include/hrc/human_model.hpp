#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "hrc/core_model.hpp"

namespace hrc {

struct HumanProfile {
  std::string subject_id;
  Seconds mean_place_b = 2.8;
  double cv = 0.25;
  double drift_per_cube = 0.0;  // negative: learning, positive: fatigue
  Seconds mean_place_a = 4.0;
  Seconds fetch_reaction = 1.0;
};

Validation validate_profile(const HumanProfile& profile);

struct PopulationModel {
  Seconds pop_mean_place_b = 2.8;
  Seconds pop_sd = 0.45;
  double cv_mean = 0.25;
  double cv_sd = 0.0;
  double drift_mean = 0.0;
  double drift_sd = 0.0;
  Seconds mean_place_a = 4.0;
  Seconds fetch_reaction = 1.0;
};

Validation validate_population(const PopulationModel& pop);

inline constexpr Seconds min_subject_mean_place_b = 0.5;

HumanProfile sample_subject(const PopulationModel& pop, std::uint64_t seed, std::string subject_id = {});

struct SampledProvenance {
  std::uint64_t seed = 0;
  friend bool operator==(const SampledProvenance&, const SampledProvenance&) = default;
};

struct RecordedProvenance {
  std::string session_id;
  friend bool operator==(const RecordedProvenance&, const RecordedProvenance&) = default;
};

using Provenance = std::variant<SampledProvenance, RecordedProvenance>;

// One cycle of realized human behaviour. Every duration is a whole number of
// milliseconds. place_b[i] spans from the end of the previous placement (or of
// cube A) to the end of placement i; the pick of cube i happens pick_offset[i]
// into that span. fetch is the delay from the later of (human ready, cube A
// presented) to take_a.
struct TraceCycle {
  Seconds fetch = 1.0;
  Seconds place_a = 4.0;
  std::vector<Seconds> place_b;
  std::vector<Seconds> pick_offset;

  friend bool operator==(const TraceCycle&, const TraceCycle&) = default;
};

struct HumanTrace {
  std::string subject_id;
  Provenance provenance;
  std::vector<TraceCycle> cycles;

  std::vector<Seconds> placement_durations() const;

  friend bool operator==(const HumanTrace&, const HumanTrace&) = default;
};

Validation validate_trace(const HumanTrace& trace, const TaskConfig& cfg);

HumanTrace generate_trace(const HumanProfile& profile, const TaskConfig& cfg, std::uint64_t seed);

std::string trace_to_json(const HumanTrace& trace);
HumanTrace trace_from_json(std::string_view text);

// The human's scripted actions for one cycle, timed from the moment both the
// human and cube A are ready. Used by the engine to drive a trace-backed human.
enum class HumanActionKind { take_a, place_a, pick_b, place_b };

std::string_view to_string(HumanActionKind kind);

struct HumanAction {
  HumanActionKind kind;
  Seconds t;
  int b_index = 0;  // 1-based for pick_b / place_b
};

std::vector<HumanAction> replay_cycle(const HumanTrace& trace, int cycle, Seconds both_ready_at);

// Full replay against a fixed sequence of handover times; returns the human's
// action stream for the whole run in task order.
std::vector<HumanAction> replay_trace(const HumanTrace& trace, const TaskConfig& cfg,
                                      const std::vector<Seconds>& handover_ready_times);

}  // namespace hrc
