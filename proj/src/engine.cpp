#include "hrc/engine.hpp"

#include <algorithm>
#include <cmath>

namespace hrc {

std::string_view to_string(RobotMode mode) {
  switch (mode) {
    case RobotMode::doing_secondary: return "doing_secondary";
    case RobotMode::preparing_handover: return "preparing_handover";
    case RobotMode::presenting: return "presenting";
    case RobotMode::idle_holding: return "idle_holding";
    case RobotMode::idle_empty: return "idle_empty";
  }
  return "?";
}

std::string_view to_string(HumanPhase phase) {
  switch (phase) {
    case HumanPhase::awaiting_a: return "awaiting_a";
    case HumanPhase::holding_a: return "holding_a";
    case HumanPhase::between_b: return "between_b";
    case HumanPhase::holding_b: return "holding_b";
    case HumanPhase::done: return "done";
  }
  return "?";
}

Engine::Engine(EngineConfig cfg)
    : cfg_(std::move(cfg)),
      live_(!cfg_.trace.has_value()),
      sensor_(cfg_.policies.sensor),
      predictor_(make_predictor(cfg_.policies.adaptive, cfg_.population_mean, cfg_.task.cubes_b_per_cycle)) {
  validate_config(cfg_.task).require();
  validate_policies(cfg_.policies, cfg_.task).require();
  if (cfg_.trace) {
    if (cfg_.trace->cycles.empty()) throw Error("trace/config shape mismatch: empty trace");
    validate_trace(*cfg_.trace, cfg_.task).require();
  }
  if (cfg_.subject_id.empty() && cfg_.trace) cfg_.subject_id = cfg_.trace->subject_id;
  cycle_predictions_.assign(static_cast<std::size_t>(cfg_.task.cycles_total), std::nullopt);
  recorded_.resize(static_cast<std::size_t>(cfg_.task.cycles_total));
}

RunRecord Engine::run() {
  if (live_) throw Error("run() needs a human trace; live sessions use submit()");
  if (!started_) start();
  while (!finished_) step();
  return record();
}

void Engine::push(Seconds t, Agent agent, Work work, HumanAction action, std::uint64_t generation) {
  queue_.push(Pending{t, agent, queue_seq_++, work, action, generation});
}

void Engine::emit(Seconds t, EventKind kind, int cycle, std::optional<std::int64_t> detail) {
  log_.push_back(SimEvent{quantize(t), log_seq_++, kind, cycle, detail});
}

int Engine::robot_cycle_tag() const { return std::min(robot_.obligation, cfg_.task.cycles_total - 1); }

void Engine::start() {
  if (started_) throw Error("engine already started");
  started_ = true;
  now_ = 0.0;
  emit(0.0, EventKind::run_start, 0);
  // The first cube is staged before the run begins: the task cannot start
  // without it, so every policy presents it at t = 0.
  robot_.buffer = cfg_.task.buffer_capacity - 1;
  robot_.obligation = 0;
  emit(0.0, EventKind::handover_prep_start, 0, robot_.buffer);
  emit(0.0, EventKind::handover_ready, 0);
  handover_ready_at_.push_back(0.0);
  robot_.mode = RobotMode::presenting;
  human_.phase = HumanPhase::awaiting_a;
  human_.ready_at = 0.0;
  if (!live_) schedule_trace_cycle(0.0);
}

std::optional<Seconds> Engine::next_event_time() const {
  if (queue_.empty()) return std::nullopt;
  return queue_.top().t;
}

Seconds Engine::step() {
  if (!started_) start();
  if (finished_) throw Error("run already finished");
  if (queue_.empty()) throw Error("deadlock: event queue exhausted before run_end");
  const Pending p = queue_.top();
  queue_.pop();
  process(p);
  return p.t;
}

void Engine::advance_to(Seconds t) {
  if (!started_) start();
  while (!finished_ && !queue_.empty() && queue_.top().t <= t) step();
  if (!finished_) now_ = std::max(now_, t);
}

void Engine::process(const Pending& p) {
  now_ = std::max(now_, p.t);
  switch (p.work) {
    case Work::unit_done: robot_unit_done(p.t); break;
    case Work::prep_done: robot_prep_done(p.t); break;
    case Work::wake:
      if (p.generation == robot_.wake_generation && robot_is_free()) robot_decide(p.t);
      break;
    case Work::human_action: apply_human(p.action.kind, p.t); break;
  }
}

void Engine::submit(HumanActionKind kind, Seconds t) {
  if (!live_) throw Error("submit() is only available for live humans");
  if (!started_) throw ProtocolError("run not started");
  if (finished_) throw ProtocolError("run already complete");
  t = std::max(t, now_);
  advance_to(t);
  apply_human(kind, t);
}

// ---- human -----------------------------------------------------------------

void Engine::schedule_trace_cycle(Seconds both_ready_at) {
  for (const auto& a : replay_cycle(*cfg_.trace, human_.cycle, both_ready_at))
    push(a.t, Agent::human, Work::human_action, a);
}

void Engine::apply_human(HumanActionKind kind, Seconds t) {
  switch (kind) {
    case HumanActionKind::take_a: human_take_a(t); break;
    case HumanActionKind::place_a: human_place_a(t); break;
    case HumanActionKind::pick_b: human_pick_b(t); break;
    case HumanActionKind::place_b: human_place_b(t); break;
  }
}

bool Engine::cube_ready_for_human() const {
  return robot_.mode == RobotMode::presenting && robot_.obligation == human_.cycle;
}

bool Engine::human_waiting_for_cube() const {
  return human_.phase == HumanPhase::awaiting_a && human_.cycle == robot_.obligation;
}

void Engine::human_take_a(Seconds t) {
  if (human_.phase != HumanPhase::awaiting_a) throw ProtocolError("take_a: human is not waiting for cube A");
  if (!cube_ready_for_human()) throw ProtocolError("take_a: cube A has not been presented yet");
  const int c = human_.cycle;
  auto& rec = recorded_[static_cast<std::size_t>(c)];
  rec.fetch = quantize(t - std::max(human_.ready_at, handover_ready_at_[static_cast<std::size_t>(c)]));
  emit(t, EventKind::take_a, c);
  human_.phase = HumanPhase::holding_a;
  human_.take_a_at = t;

  if (cfg_.policy == PolicyKind::adaptive) {
    predictor_ = begin_cycle(predictor_);
    predictor_.forecast_origin = t + cfg_.task.place_a_duration;
    cycle_predictions_[static_cast<std::size_t>(c)] = predictor_.last_cycle_prediction;
    predictions_.push_back({quantize(t), 0, predictor_.last_cycle_prediction, predictor_.weights.all()});
  }

  // Cube handed over: the robot moves on to the next cycle's cube.
  ++robot_.obligation;
  robot_.mode = RobotMode::idle_empty;
  logged_wait_.reset();
  robot_decide(t);
}

void Engine::human_place_a(Seconds t) {
  if (human_.phase != HumanPhase::holding_a) throw ProtocolError("place_a: no cube A in hand");
  const int c = human_.cycle;
  recorded_[static_cast<std::size_t>(c)].place_a = quantize(t - human_.take_a_at);
  emit(t, EventKind::place_a_done, c);
  human_.phase = HumanPhase::between_b;
  human_.place_a_at = t;
  human_.span_start = t;
  if (cfg_.policy == PolicyKind::adaptive) predictor_.forecast_origin = t;
  if (robot_is_free()) robot_decide(t);
}

void Engine::human_pick_b(Seconds t) {
  if (human_.phase != HumanPhase::between_b) throw ProtocolError("pick_b: hands are not free for a B cube");
  const int c = human_.cycle;
  const int idx = human_.b_placed + 1;
  recorded_[static_cast<std::size_t>(c)].pick_offset.push_back(quantize(t - human_.span_start));
  emit(t, EventKind::pick_b, c, idx);
  human_.phase = HumanPhase::holding_b;

  if (cfg_.policy == PolicyKind::sensor && sensor_.on_pick(idx) == SensorSignal::trigger_handover) {
    robot_.prep_requested = true;
    if (robot_is_free()) robot_decide(t);
  }
}

void Engine::human_place_b(Seconds t) {
  if (human_.phase != HumanPhase::holding_b) throw ProtocolError("place_b: no B cube picked");
  const int c = human_.cycle;
  const Seconds duration = quantize(t - human_.span_start);
  recorded_[static_cast<std::size_t>(c)].place_b.push_back(duration);
  ++human_.b_placed;
  emit(t, EventKind::place_b_done, c, human_.b_placed);
  human_.span_start = t;
  human_.phase = HumanPhase::between_b;

  if (cfg_.policy == PolicyKind::adaptive) {
    predictor_ = observe_placement(predictor_, std::max(duration, 0.001));
    predictor_.forecast_origin = t;
    predictions_.push_back({quantize(t), predictor_.n_placed_in_cycle,
                            predict_remaining(predictor_, predictor_.n_placed_in_cycle), predictor_.weights.all()});
  }

  if (human_.b_placed < cfg_.task.cubes_b_per_cycle) {
    if (robot_is_free()) robot_decide(t);
    return;
  }

  emit(t, EventKind::cycle_end, c);
  if (cfg_.policy == PolicyKind::adaptive)
    predictor_ = end_of_cycle_repair(predictor_, std::max(t - human_.place_a_at, 0.001));
  sensor_.rearm();

  if (c + 1 == cfg_.task.cycles_total) {
    human_.phase = HumanPhase::done;
    emit(t, EventKind::run_end, c);
    finished_ = true;
    return;
  }

  human_.cycle = c + 1;
  human_.b_placed = 0;
  human_.phase = HumanPhase::awaiting_a;
  human_.ready_at = t;
  if (cube_ready_for_human()) {
    if (!live_) schedule_trace_cycle(t);
  } else {
    emit(t, EventKind::human_wait_start, human_.cycle);
  }
  if (robot_is_free()) robot_decide(t);
}

// ---- robot -----------------------------------------------------------------

bool Engine::robot_is_free() const {
  return robot_.mode == RobotMode::idle_empty || robot_.mode == RobotMode::idle_holding;
}

void Engine::robot_decide(Seconds t) {
  if (!robot_is_free() || finished_) return;
  const auto& task = cfg_.task;
  if (robot_.obligation >= task.cycles_total) {
    robot_wait(t, false, std::nullopt);
    return;
  }
  const bool buffer_full = robot_.buffer >= task.buffer_capacity;
  const bool may_refill =
      !buffer_full && (cfg_.secondary_during_placement || human_.phase == HumanPhase::awaiting_a ||
                       human_.phase == HumanPhase::holding_a);

  switch (cfg_.policy) {
    case PolicyKind::timing: {
      const Seconds prep_at = timing_schedule(cfg_.policies.timing, robot_.obligation, task.handover_prep_duration);
      if (t >= prep_at)
        robot_begin_prep(t);
      else if (may_refill && t + task.secondary_unit_duration <= prep_at)
        robot_begin_unit(t, false);
      else
        robot_wait(t, may_refill, prep_at);
      break;
    }
    case PolicyKind::sensor: {
      if (robot_.prep_requested)
        robot_begin_prep(t);
      else if (may_refill)
        robot_begin_unit(t, false);
      else
        robot_wait(t, false, std::nullopt);
      break;
    }
    case PolicyKind::adaptive: {
      const bool waiting = human_waiting_for_cube();
      const RobotView view{may_refill ? robot_.buffer : task.buffer_capacity, waiting};
      switch (adaptive_schedule(predictor_, t, task, view)) {
        case RobotAction::do_secondary_unit: robot_begin_unit(t, false); break;
        case RobotAction::start_prep: robot_begin_prep(t); break;
        case RobotAction::hold:
          robot_wait(t, false, adaptive_prep_deadline(predictor_, t, task, waiting));
          break;
      }
      break;
    }
  }
}

void Engine::robot_wait(Seconds t, bool counted, std::optional<Seconds> wake) {
  const RobotMode mode = counted ? RobotMode::idle_holding : RobotMode::idle_empty;
  if (logged_wait_ != mode) {
    emit(t, EventKind::robot_wait_start, robot_cycle_tag(), counted ? 1 : 0);
    logged_wait_ = mode;
  }
  robot_.mode = mode;
  if (!wake) return;
  // Round up to the log's millisecond grid so the robot never wakes early.
  const Seconds at = std::max(t, from_ms(static_cast<std::int64_t>(std::ceil(*wake * 1000.0 - 1e-6))));
  push(at, Agent::robot, Work::wake, {HumanActionKind::take_a, 0.0, 0}, ++robot_.wake_generation);
}

void Engine::robot_begin_unit(Seconds t, bool inline_refill) {
  logged_wait_.reset();
  robot_.mode = RobotMode::doing_secondary;
  robot_.unit_inline = inline_refill;
  robot_.current_unit_end = t + cfg_.task.secondary_unit_duration;
  ++robot_.wake_generation;
  emit(t, EventKind::secondary_start, robot_cycle_tag(), inline_refill ? 1 : 0);
  push(*robot_.current_unit_end, Agent::robot, Work::unit_done);
}

void Engine::robot_unit_done(Seconds t) {
  robot_.buffer = std::min(robot_.buffer + 1, cfg_.task.buffer_capacity);
  robot_.current_unit_end.reset();
  emit(t, EventKind::secondary_done, robot_cycle_tag(), robot_.buffer);
  if (robot_.unit_inline) {
    robot_.unit_inline = false;
    robot_begin_prep(t);
    return;
  }
  robot_.mode = RobotMode::idle_empty;
  logged_wait_.reset();
  robot_decide(t);
}

void Engine::robot_begin_prep(Seconds t) {
  logged_wait_.reset();
  robot_.prep_requested = false;
  ++robot_.wake_generation;
  if (robot_.buffer == 0) {
    robot_begin_unit(t, true);
    return;
  }
  --robot_.buffer;
  robot_.mode = RobotMode::preparing_handover;
  emit(t, EventKind::handover_prep_start, robot_.obligation, robot_.buffer);
  push(t + cfg_.task.handover_prep_duration, Agent::robot, Work::prep_done);
}

void Engine::robot_prep_done(Seconds t) {
  const int c = robot_.obligation;
  emit(t, EventKind::handover_ready, c);
  handover_ready_at_.push_back(t);
  robot_.mode = RobotMode::presenting;
  if (human_waiting_for_cube() && !live_) schedule_trace_cycle(t);
}

// ---- results -----------------------------------------------------------------

RunRecord Engine::record() const {
  RunRecord r;
  r.policy = cfg_.policy;
  r.subject_id = cfg_.subject_id;
  r.seed = cfg_.seed;
  r.aborted = aborted_;
  r.event_log = log_;
  r.prediction_trace = predictions_;
  r.metrics = derive_metrics(log_, cfg_.task, finished_ && !aborted_ ? LogCompleteness::complete
                                                                      : LogCompleteness::partial);
  for (auto& cm : r.metrics.per_cycle)
    cm.predicted_time = cycle_predictions_[static_cast<std::size_t>(cm.cycle_index)];
  return r;
}

void Engine::abort(Seconds t) {
  if (finished_) return;
  advance_to(t);
  emit(std::max(t, now_), EventKind::run_end, std::min(human_.cycle, cfg_.task.cycles_total - 1));
  aborted_ = true;
  finished_ = true;
}

HumanTrace Engine::recorded_trace(std::string session_id) const {
  HumanTrace trace;
  trace.subject_id = cfg_.subject_id;
  trace.provenance = RecordedProvenance{std::move(session_id)};
  const int complete = finished_ && !aborted_ ? cfg_.task.cycles_total : human_.cycle;
  for (int c = 0; c < complete; ++c) trace.cycles.push_back(recorded_[static_cast<std::size_t>(c)]);
  return trace;
}

}  // namespace hrc
