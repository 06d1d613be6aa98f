#pragma once

#include <array>
#include <optional>
#include <cstdint>

#include "hrc/core_model.hpp"

namespace hrc {

struct TimingPolicyConfig {
  Seconds interval = 70.0;
};

struct SensorPolicyConfig {
  int trigger_pick_index = 13;
};

// Outer weights blend (D_T, D_S, moving-average term); inner weights blend the
// three most recent placements, most recent first.
struct Weights {
  double alpha = 0.2;
  double beta = 0.3;
  double gamma = 0.5;
  double delta = 0.5;
  double epsilon = 0.3;
  double theta = 0.2;

  std::array<double, 3> outer() const { return {alpha, beta, gamma}; }
  std::array<double, 3> inner() const { return {delta, epsilon, theta}; }
  std::array<double, 6> all() const { return {alpha, beta, gamma, delta, epsilon, theta}; }

  friend bool operator==(const Weights&, const Weights&) = default;
};

inline constexpr double weight_floor = 0.05;
inline constexpr double weight_cap = 0.90;
inline constexpr double simplex_tolerance = 1e-9;

bool satisfies_simplex(const Weights& w);

// Clamps each weight of a triple to [weight_floor, weight_cap] and redistributes
// the residual over the unclamped entries until the triple sums to 1.
std::array<double, 3> project_to_simplex(std::array<double, 3> w);

struct RepairController {
  double small_band = 0.05;   // e < small_band: leave weights alone
  double large_band = 0.15;   // e >= large_band: shift toward the recency term
  double step = 0.05;
  bool adjust_inner = false;
};

struct AdaptivePolicyConfig {
  Weights initial_weights;
  RepairController controller;
};

struct PolicyConfigs {
  TimingPolicyConfig timing;
  SensorPolicyConfig sensor;
  AdaptivePolicyConfig adaptive;
};

Validation validate_policies(const PolicyConfigs& policies, const TaskConfig& task);

// ---- timing ----------------------------------------------------------------

// Presentation target for the cube that opens cycle `cycle_index` (0-based).
// The first cube is presented at run start.
Seconds timing_target(const TimingPolicyConfig& cfg, int cycle_index);
Seconds timing_schedule(const TimingPolicyConfig& cfg, int cycle_index, Seconds handover_prep_duration);

// ---- sensor ----------------------------------------------------------------

enum class SensorSignal { continue_work, trigger_handover };

// One-shot detector: fires on the configured pick and stays latched until
// rearm() at the end of the human's cycle.
class SensorTrigger {
 public:
  explicit SensorTrigger(SensorPolicyConfig cfg) : cfg_(cfg) {}

  SensorSignal on_pick(int pick_index);
  void rearm() { fired_ = false; }
  bool fired() const { return fired_; }

 private:
  SensorPolicyConfig cfg_;
  bool fired_ = false;
};

// ---- adaptive --------------------------------------------------------------

struct PredictorState {
  Weights weights;
  RepairController controller;
  int cubes_per_cycle = 20;
  Seconds d_t = 2.8;
  Seconds d_s = 2.8;
  std::array<Seconds, 3> window{};  // most recent first; only window_size entries are real
  int window_size = 0;
  int n_placed_in_cycle = 0;
  std::int64_t samples_seen = 0;
  Seconds sample_sum = 0.0;
  Seconds last_cycle_prediction = 0.0;
  // Standalone full-cycle predictions of each outer and inner term, captured
  // with last_cycle_prediction; used to rank terms after the cycle.
  std::array<Seconds, 3> last_outer_terms{};
  std::array<Seconds, 3> last_inner_terms{};
  // Time from which predict_remaining counts; unset means "now".
  std::optional<Seconds> forecast_origin;
};

PredictorState make_predictor(const AdaptivePolicyConfig& cfg, Seconds population_mean, int cubes_per_cycle);

// Window with cold-start slots filled from the population mean.
std::array<Seconds, 3> effective_window(const PredictorState& state);

Seconds predict_remaining(const PredictorState& state, int n);
PredictorState observe_placement(PredictorState state, Seconds duration);

// Records the n = 0 forecast for the cycle about to be assembled.
PredictorState begin_cycle(PredictorState state);

enum class ErrorClass { small, medium, large };
ErrorClass classify_error(const RepairController& c, double relative_error);

PredictorState end_of_cycle_repair(PredictorState state, Seconds actual_cycle_time);

enum class RobotAction { do_secondary_unit, start_prep, hold };

struct RobotView {
  int buffer_level = 0;
  bool human_waiting = false;  // human finished the cycle and needs cube A now
};

// Wake-up time at which a held robot must re-evaluate (t_ready - T_H).
Seconds adaptive_prep_deadline(const PredictorState& state, Seconds now, const TaskConfig& cfg, bool human_waiting);

RobotAction adaptive_schedule(const PredictorState& state, Seconds now, const TaskConfig& cfg, const RobotView& view);

}  // namespace hrc
