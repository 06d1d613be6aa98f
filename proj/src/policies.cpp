#include "hrc/policies.hpp"

#include <algorithm>
#include <cmath>

namespace hrc {

namespace {

bool triple_ok(const std::array<double, 3>& w) {
  const double sum = w[0] + w[1] + w[2];
  if (std::abs(sum - 1.0) > simplex_tolerance) return false;
  return std::all_of(w.begin(), w.end(), [](double x) {
    return x >= weight_floor - simplex_tolerance && x <= weight_cap + simplex_tolerance;
  });
}

void set_outer(Weights& w, const std::array<double, 3>& o) {
  w.alpha = o[0];
  w.beta = o[1];
  w.gamma = o[2];
}

void set_inner(Weights& w, const std::array<double, 3>& i) {
  w.delta = i[0];
  w.epsilon = i[1];
  w.theta = i[2];
}

std::size_t argmax(const std::array<double, 3>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::size_t argmin(const std::array<double, 3>& v) {
  return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
}

// Medium error: move one step from the term that missed the actual time by
// the most to the one that missed by the least.
std::array<double, 3> shift_worst_to_best(std::array<double, 3> w, const std::array<Seconds, 3>& terms,
                                          Seconds actual, double step) {
  std::array<double, 3> err{};
  for (std::size_t i = 0; i < 3; ++i) err[i] = std::abs(terms[i] - actual);
  const auto worst = argmax(err);
  const auto best = argmin(err);
  if (worst == best || err[worst] == err[best]) return w;
  w[worst] -= step;
  w[best] += step;
  return project_to_simplex(w);
}

// Large error: pull 2 x step toward `target` from the other two entries.
std::array<double, 3> shift_toward(std::array<double, 3> w, std::size_t target, double step) {
  for (std::size_t i = 0; i < 3; ++i) w[i] += (i == target) ? 2.0 * step : -step;
  return project_to_simplex(w);
}

}  // namespace

bool satisfies_simplex(const Weights& w) { return triple_ok(w.outer()) && triple_ok(w.inner()); }

std::array<double, 3> project_to_simplex(std::array<double, 3> w) {
  for (auto& x : w) x = std::clamp(x, weight_floor, weight_cap);
  const double residual = 1.0 - (w[0] + w[1] + w[2]);
  if (residual != 0.0) {
    // Spread the residual in proportion to each entry's slack toward the
    // bound it moves to, so no entry crosses a bound.
    std::array<double, 3> slack{};
    for (std::size_t i = 0; i < 3; ++i) slack[i] = residual > 0.0 ? weight_cap - w[i] : w[i] - weight_floor;
    const double total = slack[0] + slack[1] + slack[2];
    if (total > 0.0)
      for (std::size_t i = 0; i < 3; ++i) w[i] += residual * slack[i] / total;
  }
  // Absorb rounding in the entry farthest from both bounds.
  const double tail = 1.0 - (w[0] + w[1] + w[2]);
  std::array<double, 3> room{};
  for (std::size_t i = 0; i < 3; ++i) room[i] = std::min(w[i] - weight_floor, weight_cap - w[i]);
  w[argmax(room)] += tail;
  return w;
}

Validation validate_policies(const PolicyConfigs& p, const TaskConfig& task) {
  Validation v;
  if (!(p.timing.interval > 0.0)) v.violations.emplace_back("timing.interval: must be > 0");
  if (p.sensor.trigger_pick_index < 1 || p.sensor.trigger_pick_index > task.cubes_b_per_cycle)
    v.violations.emplace_back("sensor.trigger_pick_index: must lie in [1, cubes_b_per_cycle]");
  if (!satisfies_simplex(p.adaptive.initial_weights))
    v.violations.emplace_back("adaptive.weights: each triple must sum to 1 with entries in [0.05, 0.90]");
  const auto& c = p.adaptive.controller;
  if (!(c.small_band > 0.0 && c.small_band < c.large_band))
    v.violations.emplace_back("adaptive.bands: need 0 < small < large");
  if (!(c.step > 0.0 && c.step < 0.5)) v.violations.emplace_back("adaptive.step: must lie in (0, 0.5)");
  return v;
}

Seconds timing_target(const TimingPolicyConfig& cfg, int cycle_index) {
  if (cycle_index < 0) throw Error("timing_schedule: cycle_index must be >= 0");
  return cfg.interval * cycle_index;
}

Seconds timing_schedule(const TimingPolicyConfig& cfg, int cycle_index, Seconds handover_prep_duration) {
  return std::max(0.0, timing_target(cfg, cycle_index) - handover_prep_duration);
}

SensorSignal SensorTrigger::on_pick(int pick_index) {
  if (pick_index < 1) throw Error("sensor_on_pick: pick_index must be >= 1");
  if (!fired_ && pick_index == cfg_.trigger_pick_index) {
    fired_ = true;
    return SensorSignal::trigger_handover;
  }
  return SensorSignal::continue_work;
}

PredictorState make_predictor(const AdaptivePolicyConfig& cfg, Seconds population_mean, int cubes_per_cycle) {
  if (!(population_mean > 0.0)) throw Error("predictor: population mean (D_T) must be > 0");
  if (!satisfies_simplex(cfg.initial_weights)) throw Error("predictor: initial weights violate the simplex");
  PredictorState s;
  s.weights = cfg.initial_weights;
  s.controller = cfg.controller;
  s.cubes_per_cycle = cubes_per_cycle;
  s.d_t = population_mean;
  s.d_s = population_mean;
  return s;
}

std::array<Seconds, 3> effective_window(const PredictorState& s) {
  std::array<Seconds, 3> w{s.d_t, s.d_t, s.d_t};
  for (int i = 0; i < s.window_size; ++i) w[static_cast<std::size_t>(i)] = s.window[static_cast<std::size_t>(i)];
  return w;
}

Seconds predict_remaining(const PredictorState& s, int n) {
  if (n < 0 || n > s.cubes_per_cycle)
    throw Error("predict_remaining: n=" + std::to_string(n) + " outside [0, " + std::to_string(s.cubes_per_cycle) + "]");
  const auto p = effective_window(s);
  const auto& w = s.weights;
  const double inner = w.delta * p[0] + w.epsilon * p[1] + w.theta * p[2];
  const double blend = w.alpha * s.d_t + w.beta * s.d_s + w.gamma * inner;
  return static_cast<double>(s.cubes_per_cycle - n) * blend;
}

PredictorState observe_placement(PredictorState s, Seconds duration) {
  if (!(duration > 0.0)) throw Error("observe_placement: duration must be > 0");
  s.window[2] = s.window[1];
  s.window[1] = s.window[0];
  s.window[0] = duration;
  s.window_size = std::min(s.window_size + 1, 3);
  ++s.samples_seen;
  s.sample_sum += duration;
  s.d_s = s.sample_sum / static_cast<double>(s.samples_seen);
  ++s.n_placed_in_cycle;
  return s;
}

PredictorState begin_cycle(PredictorState s) {
  s.n_placed_in_cycle = 0;
  s.last_cycle_prediction = predict_remaining(s, 0);
  const auto cubes = static_cast<double>(s.cubes_per_cycle);
  const auto p = effective_window(s);
  const auto& w = s.weights;
  const double inner = w.delta * p[0] + w.epsilon * p[1] + w.theta * p[2];
  s.last_outer_terms = {cubes * s.d_t, cubes * s.d_s, cubes * inner};
  s.last_inner_terms = {cubes * p[0], cubes * p[1], cubes * p[2]};
  return s;
}

ErrorClass classify_error(const RepairController& c, double e) {
  if (e < c.small_band) return ErrorClass::small;
  if (e < c.large_band) return ErrorClass::medium;
  return ErrorClass::large;
}

PredictorState end_of_cycle_repair(PredictorState s, Seconds actual) {
  if (!(actual > 0.0)) throw Error("end_of_cycle_repair: actual cycle time must be > 0");
  const double e = std::abs(s.last_cycle_prediction - actual) / actual;
  const auto& c = s.controller;
  switch (classify_error(c, e)) {
    case ErrorClass::small:
      break;
    case ErrorClass::medium:
      set_outer(s.weights, shift_worst_to_best(s.weights.outer(), s.last_outer_terms, actual, c.step));
      if (c.adjust_inner)
        set_inner(s.weights, shift_worst_to_best(s.weights.inner(), s.last_inner_terms, actual, c.step));
      break;
    case ErrorClass::large:
      set_outer(s.weights, shift_toward(s.weights.outer(), 2, c.step));
      if (c.adjust_inner) set_inner(s.weights, shift_toward(s.weights.inner(), 0, c.step));
      break;
  }
  return s;
}

Seconds adaptive_prep_deadline(const PredictorState& s, Seconds now, const TaskConfig& cfg, bool human_waiting) {
  if (human_waiting) return now - cfg.handover_prep_duration;
  return s.forecast_origin.value_or(now) + predict_remaining(s, s.n_placed_in_cycle) - cfg.handover_prep_duration;
}

RobotAction adaptive_schedule(const PredictorState& s, Seconds now, const TaskConfig& cfg, const RobotView& view) {
  const Seconds deadline = adaptive_prep_deadline(s, now, cfg, view.human_waiting);
  if (view.human_waiting || now + 1e-6 >= deadline) return RobotAction::start_prep;
  const bool buffer_full = view.buffer_level >= cfg.buffer_capacity;
  if (!buffer_full && now + cfg.secondary_unit_duration <= deadline) return RobotAction::do_secondary_unit;
  if (!buffer_full) return RobotAction::start_prep;
  return RobotAction::hold;
}

}  // namespace hrc
