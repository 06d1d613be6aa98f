#pragma once

#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "hrc/core_model.hpp"
#include "hrc/human_model.hpp"
#include "hrc/policies.hpp"

namespace hrc {

// Raised when a live human action is not legal in the current task state.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

enum class RobotMode { doing_secondary, preparing_handover, presenting, idle_holding, idle_empty };
enum class HumanPhase { awaiting_a, holding_a, between_b, holding_b, done };

std::string_view to_string(RobotMode mode);
std::string_view to_string(HumanPhase phase);

struct EngineConfig {
  TaskConfig task;
  PolicyKind policy = PolicyKind::sensor;
  PolicyConfigs policies;
  Seconds population_mean = 2.8;  // D_T seen by the adaptive predictor
  std::optional<HumanTrace> trace;  // empty: live human
  std::string subject_id;
  std::uint64_t seed = 0;
  // When false the robot only refills while the human is not placing B cubes.
  bool secondary_during_placement = true;
};

class Engine {
 public:
  explicit Engine(EngineConfig cfg);

  // Runs a trace-backed human to completion.
  RunRecord run();

  void start();
  bool started() const { return started_; }
  bool finished() const { return finished_; }
  Seconds now() const { return now_; }

  // Pops the next queued event (ordered by time, then robot before human,
  // then insertion order) and applies it. Returns the event's time.
  Seconds step();
  std::optional<Seconds> next_event_time() const;
  // Processes every queued event with time <= t.
  void advance_to(Seconds t);

  // Live mode only. Applies a human action at server time t after all robot
  // events up to t. Throws ProtocolError when the action is out of order.
  void submit(HumanActionKind kind, Seconds t);

  RunRecord record() const;
  void abort(Seconds t);
  bool aborted() const { return aborted_; }

  const EngineConfig& config() const { return cfg_; }
  const EventLog& log() const { return log_; }
  const std::vector<PredictionSample>& predictions() const { return predictions_; }
  const PredictorState& predictor() const { return predictor_; }
  std::optional<Seconds> cycle_prediction(int cycle) const {
    return cycle_predictions_.at(static_cast<std::size_t>(cycle));
  }

  RobotMode robot_mode() const { return robot_.mode; }
  int buffer_level() const { return robot_.buffer; }
  int human_cycle() const { return human_.cycle; }
  int b_placed() const { return human_.b_placed; }
  HumanPhase human_phase() const { return human_.phase; }

  // Durations the human actually produced, in trace form.
  HumanTrace recorded_trace(std::string session_id) const;

 private:
  enum class Agent { robot = 0, human = 1 };
  enum class Work { unit_done, prep_done, wake, human_action };

  struct Pending {
    Seconds t;
    Agent agent;
    std::uint64_t seq;
    Work work;
    HumanAction action{HumanActionKind::take_a, 0.0, 0};
    std::uint64_t generation = 0;
  };
  struct Later {
    bool operator()(const Pending& a, const Pending& b) const {
      if (a.t != b.t) return a.t > b.t;
      if (a.agent != b.agent) return a.agent > b.agent;
      return a.seq > b.seq;
    }
  };

  struct RobotState {
    RobotMode mode = RobotMode::idle_empty;
    int buffer = 0;
    int obligation = 0;  // cycle whose cube A the robot serves next
    bool prep_requested = false;
    bool unit_inline = false;
    std::optional<Seconds> current_unit_end;
    std::uint64_t wake_generation = 0;
  };

  struct HumanState {
    HumanPhase phase = HumanPhase::awaiting_a;
    int cycle = 0;
    int b_placed = 0;
    Seconds ready_at = 0.0;
    Seconds take_a_at = 0.0;
    Seconds place_a_at = 0.0;
    Seconds span_start = 0.0;
  };

  void push(Seconds t, Agent agent, Work work, HumanAction action = {HumanActionKind::take_a, 0.0, 0},
            std::uint64_t generation = 0);
  void emit(Seconds t, EventKind kind, int cycle, std::optional<std::int64_t> detail = std::nullopt);
  void process(const Pending& p);

  void apply_human(HumanActionKind kind, Seconds t);
  void human_take_a(Seconds t);
  void human_place_a(Seconds t);
  void human_pick_b(Seconds t);
  void human_place_b(Seconds t);
  void schedule_trace_cycle(Seconds both_ready_at);

  bool robot_is_free() const;
  bool cube_ready_for_human() const;
  bool human_waiting_for_cube() const;
  void robot_decide(Seconds t);
  void robot_begin_unit(Seconds t, bool inline_refill);
  void robot_begin_prep(Seconds t);
  void robot_wait(Seconds t, bool counted, std::optional<Seconds> wake);
  void robot_unit_done(Seconds t);
  void robot_prep_done(Seconds t);
  int robot_cycle_tag() const;

  EngineConfig cfg_;
  bool live_;
  bool started_ = false;
  bool finished_ = false;
  bool aborted_ = false;
  Seconds now_ = 0.0;
  std::uint64_t queue_seq_ = 0;
  std::int64_t log_seq_ = 0;
  std::priority_queue<Pending, std::vector<Pending>, Later> queue_;
  EventLog log_;
  std::vector<PredictionSample> predictions_;
  std::vector<std::optional<Seconds>> cycle_predictions_;

  RobotState robot_;
  std::optional<RobotMode> logged_wait_;  // wait spell already announced in the log
  HumanState human_;
  SensorTrigger sensor_;
  PredictorState predictor_;
  std::vector<Seconds> handover_ready_at_;
  std::vector<TraceCycle> recorded_;
};

}  // namespace hrc
