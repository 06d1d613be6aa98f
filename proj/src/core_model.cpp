#include "hrc/core_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace hrc {

std::int64_t to_ms(Seconds t) { return std::llround(t * 1000.0); }

Seconds from_ms(std::int64_t ms) { return static_cast<double>(ms) / 1000.0; }

Seconds quantize(Seconds t) { return from_ms(to_ms(t)); }

std::string Validation::message() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v;
  }
  return out;
}

void Validation::require() const {
  if (!ok()) throw Error("invalid configuration: " + message());
}

Validation validate_config(const TaskConfig& cfg) {
  Validation v;
  auto count = [&](const char* field, int value) {
    if (value < 1) v.violations.push_back(std::string(field) + ": counts must be >= 1");
  };
  auto duration = [&](const char* field, Seconds value) {
    if (!(value > 0.0) || !std::isfinite(value))
      v.violations.push_back(std::string(field) + ": durations must be > 0");
  };
  count("cycles_total", cfg.cycles_total);
  count("cubes_b_per_cycle", cfg.cubes_b_per_cycle);
  count("buffer_capacity", cfg.buffer_capacity);
  duration("place_a_duration", cfg.place_a_duration);
  duration("handover_prep_duration", cfg.handover_prep_duration);
  duration("secondary_unit_duration", cfg.secondary_unit_duration);
  return v;
}

namespace {

constexpr std::array<std::string_view, 13> kind_names{
    "run_start",       "handover_prep_start", "handover_ready",  "take_a",
    "place_a_done",    "pick_b",              "place_b_done",    "secondary_start",
    "secondary_done",  "robot_wait_start",    "human_wait_start", "cycle_end",
    "run_end",
};

constexpr std::array<std::string_view, 3> policy_names{"timing", "sensor", "adaptive"};

}  // namespace

std::string_view to_string(EventKind kind) { return kind_names[static_cast<std::size_t>(kind)]; }

EventKind event_kind_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kind_names.size(); ++i)
    if (kind_names[i] == name) return static_cast<EventKind>(i);
  throw Error("unknown event kind '" + std::string(name) + "'");
}

std::string_view to_string(PolicyKind kind) { return policy_names[static_cast<std::size_t>(kind)]; }

PolicyKind policy_from_string(std::string_view name) {
  for (std::size_t i = 0; i < policy_names.size(); ++i)
    if (policy_names[i] == name) return static_cast<PolicyKind>(i);
  throw Error("unknown policy '" + std::string(name) + "' (expected timing|sensor|adaptive)");
}

std::string to_jsonl(const EventLog& log) {
  std::string out;
  for (const auto& e : log) {
    nlohmann::ordered_json line;
    line["t_ms"] = to_ms(e.t);
    line["seq"] = e.seq;
    line["kind"] = to_string(e.kind);
    line["cycle"] = e.cycle;
    line["detail"] = e.detail ? nlohmann::ordered_json(*e.detail) : nlohmann::ordered_json(nullptr);
    out += line.dump();
    out += '\n';
  }
  return out;
}

EventLog parse_jsonl(std::string_view text) {
  EventLog log;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SimEvent e;
      e.t = from_ms(j.at("t_ms").get<std::int64_t>());
      e.seq = j.at("seq").get<std::int64_t>();
      e.kind = event_kind_from_string(j.at("kind").get<std::string>());
      e.cycle = j.at("cycle").get<int>();
      if (j.contains("detail") && !j["detail"].is_null()) e.detail = j["detail"].get<std::int64_t>();
      log.push_back(e);
    } catch (const nlohmann::json::exception& ex) {
      throw Error("event log line " + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return log;
}

namespace {

nlohmann::ordered_json metrics_json(const Metrics& m) {
  nlohmann::ordered_json j;
  j["total_time_ms"] = to_ms(m.total_time);
  j["human_idle_ms"] = to_ms(m.human_idle);
  j["robot_idle_ms"] = to_ms(m.robot_idle);
  j["total_idle_ms"] = to_ms(m.total_idle);
  auto cycles = nlohmann::ordered_json::array();
  for (const auto& c : m.per_cycle) {
    nlohmann::ordered_json cj;
    cj["cycle_index"] = c.cycle_index;
    cj["assembly_time_ms"] = to_ms(c.assembly_time);
    cj["human_idle_ms"] = to_ms(c.human_idle);
    cj["robot_idle_ms"] = to_ms(c.robot_idle);
    cj["predicted_time_ms"] = c.predicted_time ? nlohmann::ordered_json(to_ms(*c.predicted_time)) : nullptr;
    cycles.push_back(cj);
  }
  j["per_cycle"] = cycles;
  return j;
}

}  // namespace

std::string metrics_to_json(const Metrics& m) { return metrics_json(m).dump(2); }

std::string run_record_to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["policy"] = to_string(r.policy);
  j["subject_id"] = r.subject_id;
  j["seed"] = r.seed;
  j["aborted"] = r.aborted;
  j["metrics"] = metrics_json(r.metrics);
  auto preds = nlohmann::ordered_json::array();
  for (const auto& p : r.prediction_trace) {
    nlohmann::ordered_json pj;
    pj["t_ms"] = to_ms(p.t);
    pj["n"] = p.n;
    pj["f"] = p.f;
    pj["weights"] = p.weights;
    preds.push_back(pj);
  }
  j["prediction_trace"] = preds;
  j["event_count"] = r.event_log.size();
  return j.dump(2);
}

namespace {

struct CycleTrace {
  std::optional<Seconds> handover_ready;
  std::optional<Seconds> take_a;
  std::optional<Seconds> cycle_end;
  int picks = 0;
  int places = 0;
  bool holding_b = false;
};

[[noreturn]] void malformed(const std::string& why) { throw Error("malformed event log: " + why); }

bool is_robot_action(EventKind k) {
  return k == EventKind::secondary_start || k == EventKind::handover_prep_start ||
         k == EventKind::robot_wait_start || k == EventKind::run_end;
}

}  // namespace

Metrics derive_metrics(const EventLog& log, const TaskConfig& cfg, LogCompleteness completeness) {
  const bool strict = completeness == LogCompleteness::complete;
  if (log.empty()) malformed("empty log");
  if (log.front().kind != EventKind::run_start) malformed("log must begin with run_start");
  if (strict && log.back().kind != EventKind::run_end) malformed("log must end with run_end");

  const auto n_cycles = static_cast<std::size_t>(cfg.cycles_total);
  std::vector<CycleTrace> cycles(n_cycles);
  std::vector<Seconds> robot_idle(n_cycles, 0.0);

  std::optional<std::pair<Seconds, int>> open_hold;
  int handovers = 0;

  auto cycle_of = [&](const SimEvent& e) -> CycleTrace& {
    if (e.cycle < 0 || static_cast<std::size_t>(e.cycle) >= n_cycles)
      malformed("cycle index " + std::to_string(e.cycle) + " out of range");
    return cycles[static_cast<std::size_t>(e.cycle)];
  };
  auto close_hold = [&](Seconds t) {
    if (!open_hold) return;
    const auto idx = std::min<std::size_t>(static_cast<std::size_t>(std::max(open_hold->second, 0)), n_cycles - 1);
    robot_idle[idx] += t - open_hold->first;
    open_hold.reset();
  };

  for (std::size_t i = 0; i < log.size(); ++i) {
    const SimEvent& e = log[i];
    if (i > 0) {
      if (e.t < log[i - 1].t) malformed("time decreases at seq " + std::to_string(e.seq));
      if (e.seq <= log[i - 1].seq) malformed("sequence numbers not increasing at seq " + std::to_string(e.seq));
    }
    if (is_robot_action(e.kind)) close_hold(e.t);

    switch (e.kind) {
      case EventKind::run_start:
        if (i != 0) malformed("duplicate run_start");
        break;
      case EventKind::handover_ready: {
        auto& c = cycle_of(e);
        if (c.handover_ready) malformed("second handover_ready for cycle " + std::to_string(e.cycle));
        if (e.cycle != handovers) malformed("handover_ready out of cycle order");
        c.handover_ready = e.t;
        ++handovers;
        break;
      }
      case EventKind::take_a: {
        auto& c = cycle_of(e);
        if (!c.handover_ready) malformed("take_a before handover_ready in cycle " + std::to_string(e.cycle));
        if (c.take_a) malformed("second take_a in cycle " + std::to_string(e.cycle));
        c.take_a = e.t;
        break;
      }
      case EventKind::pick_b: {
        auto& c = cycle_of(e);
        if (!c.take_a) malformed("pick_b before cube A in cycle " + std::to_string(e.cycle));
        if (c.holding_b) malformed("pick_b twice without place_b_done");
        c.holding_b = true;
        ++c.picks;
        break;
      }
      case EventKind::place_b_done: {
        auto& c = cycle_of(e);
        if (!c.holding_b) malformed("place_b_done without pick_b");
        c.holding_b = false;
        ++c.places;
        break;
      }
      case EventKind::cycle_end: {
        auto& c = cycle_of(e);
        if (c.places != cfg.cubes_b_per_cycle || c.picks != cfg.cubes_b_per_cycle)
          malformed("cycle " + std::to_string(e.cycle) + " ended with " + std::to_string(c.places) +
                    " placements");
        c.cycle_end = e.t;
        break;
      }
      case EventKind::robot_wait_start:
        if (e.detail.value_or(0) == 1) open_hold = std::make_pair(e.t, e.cycle);
        break;
      case EventKind::run_end:
        if (i + 1 != log.size()) malformed("events after run_end");
        break;
      default:
        break;
    }
  }

  const Seconds end_t = log.back().t;
  close_hold(end_t);

  if (strict) {
    if (handovers != cfg.cycles_total)
      malformed("expected " + std::to_string(cfg.cycles_total) + " handover_ready events, found " +
                std::to_string(handovers));
    for (std::size_t c = 0; c < n_cycles; ++c)
      if (!cycles[c].cycle_end || !cycles[c].take_a) malformed("cycle " + std::to_string(c) + " incomplete");
  }

  Metrics m;
  m.total_time = end_t;
  std::optional<Seconds> human_ready = log.front().t;
  for (std::size_t c = 0; c < n_cycles; ++c) {
    const auto& tr = cycles[c];
    CycleMetrics cm;
    cm.cycle_index = static_cast<int>(c);
    if (tr.handover_ready) {
      if (human_ready) cm.human_idle = std::max(0.0, *tr.handover_ready - *human_ready);
      cm.robot_idle = tr.take_a.value_or(end_t) - *tr.handover_ready;
    } else if (human_ready) {
      // Human is waiting for a cube that never arrived before the log ended.
      cm.human_idle = std::max(0.0, end_t - *human_ready);
    }
    cm.robot_idle += robot_idle[c];
    if (tr.take_a) cm.assembly_time = tr.cycle_end.value_or(end_t) - *tr.take_a;
    m.per_cycle.push_back(cm);
    human_ready = tr.cycle_end;
  }
  for (const auto& cm : m.per_cycle) {
    m.human_idle += cm.human_idle;
    m.robot_idle += cm.robot_idle;
  }
  m.total_idle = m.human_idle + m.robot_idle;
  return m;
}

}  // namespace hrc
