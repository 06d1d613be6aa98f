#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hrc {

using Seconds = double;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Times are carried as seconds internally and serialized as integer
// milliseconds. Logged times are always exact millisecond multiples so that a
// serialized log reproduces the in-memory doubles bit-for-bit.
std::int64_t to_ms(Seconds t);
Seconds from_ms(std::int64_t ms);
Seconds quantize(Seconds t);

struct TaskConfig {
  int cycles_total = 5;
  int cubes_b_per_cycle = 20;
  Seconds place_a_duration = 4.0;
  Seconds handover_prep_duration = 6.0;
  Seconds secondary_unit_duration = 8.0;
  int buffer_capacity = 5;
};

struct Validation {
  std::vector<std::string> violations;

  bool ok() const { return violations.empty(); }
  std::string message() const;
  void require() const;
};

Validation validate_config(const TaskConfig& cfg);

enum class EventKind {
  run_start,
  handover_prep_start,
  handover_ready,
  take_a,
  place_a_done,
  pick_b,
  place_b_done,
  secondary_start,
  secondary_done,
  robot_wait_start,
  human_wait_start,
  cycle_end,
  run_end,
};

std::string_view to_string(EventKind kind);
EventKind event_kind_from_string(std::string_view name);

// detail conventions:
//   pick_b / place_b_done  1-based B index within the cycle
//   secondary_start        1 for an in-line refill forced by an empty buffer
//   secondary_done         buffer level after the unit
//   robot_wait_start       1 when the robot holds for a pending handover while
//                          secondary work exists, 0 when it has nothing to do
//   handover_prep_start    buffer level after the cube was taken
struct SimEvent {
  Seconds t = 0.0;
  std::int64_t seq = 0;
  EventKind kind = EventKind::run_start;
  int cycle = 0;
  std::optional<std::int64_t> detail;

  friend bool operator==(const SimEvent&, const SimEvent&) = default;
};

using EventLog = std::vector<SimEvent>;

std::string to_jsonl(const EventLog& log);
EventLog parse_jsonl(std::string_view text);

enum class PolicyKind { timing, sensor, adaptive };

inline constexpr std::array<PolicyKind, 3> all_policies{
    PolicyKind::timing, PolicyKind::sensor, PolicyKind::adaptive};

std::string_view to_string(PolicyKind kind);
PolicyKind policy_from_string(std::string_view name);

struct CycleMetrics {
  int cycle_index = 0;
  Seconds assembly_time = 0.0;
  Seconds human_idle = 0.0;
  Seconds robot_idle = 0.0;
  std::optional<Seconds> predicted_time;

  friend bool operator==(const CycleMetrics&, const CycleMetrics&) = default;
};

struct Metrics {
  Seconds total_time = 0.0;
  Seconds human_idle = 0.0;
  Seconds robot_idle = 0.0;
  Seconds total_idle = 0.0;
  std::vector<CycleMetrics> per_cycle;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct PredictionSample {
  Seconds t = 0.0;
  int n = 0;
  Seconds f = 0.0;
  std::array<double, 6> weights{};

  friend bool operator==(const PredictionSample&, const PredictionSample&) = default;
};

struct RunRecord {
  PolicyKind policy = PolicyKind::timing;
  std::string subject_id;
  std::uint64_t seed = 0;
  bool aborted = false;
  Metrics metrics;
  EventLog event_log;
  std::vector<PredictionSample> prediction_trace;
};

std::string metrics_to_json(const Metrics& m);
// Summary plus prediction trace; the event log is written separately as JSONL.
std::string run_record_to_json(const RunRecord& r);

enum class LogCompleteness { complete, partial };

// Recomputes every metric from the event log alone. A partial log (aborted
// live run) is accepted only with LogCompleteness::partial, in which case
// unfinished cycles contribute what has been observed so far.
Metrics derive_metrics(const EventLog& log, const TaskConfig& cfg,
                       LogCompleteness completeness = LogCompleteness::complete);

}  // namespace hrc
