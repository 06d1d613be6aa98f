#include "hrc/live_session.hpp"

#include <json.hpp>

#include "hrc/app_config.hpp"

namespace hrc {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

constexpr std::array<std::string_view, 4> status_names{"waiting", "running", "complete", "aborted"};

std::optional<HumanActionKind> action_from_type(std::string_view type) {
  if (type == "take_a") return HumanActionKind::take_a;
  if (type == "place_a") return HumanActionKind::place_a;
  if (type == "pick_b") return HumanActionKind::pick_b;
  if (type == "place_b") return HumanActionKind::place_b;
  return std::nullopt;
}

ojson cycle_json(const CycleMetrics& c) {
  ojson j;
  j["cycle_index"] = c.cycle_index;
  j["assembly_time_ms"] = to_ms(c.assembly_time);
  j["human_idle_ms"] = to_ms(c.human_idle);
  j["robot_idle_ms"] = to_ms(c.robot_idle);
  j["predicted_time_ms"] = c.predicted_time ? ojson(to_ms(*c.predicted_time)) : ojson(nullptr);
  return j;
}

}  // namespace

std::string_view to_string(SessionStatus s) { return status_names[static_cast<std::size_t>(s)]; }

LiveSession::LiveSession(std::string session_id, SessionOptions opts) : id_(std::move(session_id)), opts_(std::move(opts)) {
  validate_config(opts_.setup.task).require();
  validate_policies(opts_.setup.policies, opts_.setup.task).require();
}

std::string LiveSession::state_frame(Seconds now) const {
  ojson j;
  j["type"] = "state";
  j["t_ms"] = to_ms(now);
  j["session_id"] = id_;
  j["status"] = to_string(status_);
  if (engine_) {
    j["policy"] = to_string(engine_->config().policy);
    j["robot_mode"] = to_string(engine_->robot_mode());
    j["cycle"] = engine_->human_cycle();
    j["n_placed"] = engine_->b_placed();
    j["buffer_level"] = engine_->buffer_level();
    j["human_phase"] = to_string(engine_->human_phase());
  } else {
    j["policy"] = nullptr;
    j["robot_mode"] = nullptr;
    j["cycle"] = 0;
    j["n_placed"] = 0;
    j["buffer_level"] = opts_.setup.task.buffer_capacity;
    j["human_phase"] = nullptr;
  }
  return j.dump();
}

std::string LiveSession::error_frame(std::string_view code, std::string_view msg, Seconds now) const {
  ojson j;
  j["type"] = "error";
  j["t_ms"] = to_ms(now);
  j["code"] = code;
  j["msg"] = msg;
  return j.dump();
}

// Translates engine output produced since the last drain into frames.
void LiveSession::drain(std::vector<std::string>& out) {
  const auto& log = engine_->log();
  const auto& preds = engine_->predictions();
  std::size_t p = predictions_sent_;
  auto flush_predictions = [&](Seconds up_to) {
    for (; p < preds.size() && preds[p].t <= up_to; ++p) {
      ojson j;
      j["type"] = "prediction";
      j["t_ms"] = to_ms(start_offset_ + preds[p].t);
      j["n"] = preds[p].n;
      j["f_ms"] = to_ms(preds[p].f);
      j["weights"] = preds[p].weights;
      out.push_back(j.dump());
    }
  };
  for (; events_sent_ < log.size(); ++events_sent_) {
    const auto& e = log[events_sent_];
    flush_predictions(e.t);
    const auto t_ms = to_ms(start_offset_ + e.t);
    if (e.kind == EventKind::handover_ready) {
      out.push_back(ojson{{"type", "handover_ready"}, {"t_ms", t_ms}, {"cycle", e.cycle}}.dump());
    } else if (e.kind == EventKind::cycle_end) {
      const auto m = derive_metrics(std::vector(log.begin(), log.begin() + static_cast<std::ptrdiff_t>(events_sent_) + 1),
                                    opts_.setup.task, LogCompleteness::partial);
      ojson j{{"type", "cycle_complete"}, {"t_ms", t_ms}, {"cycle", e.cycle}};
      for (auto c : m.per_cycle)
        if (c.cycle_index == e.cycle) {
          c.predicted_time = engine_->cycle_prediction(e.cycle);
          j["metrics"] = cycle_json(c);
        }
      out.push_back(j.dump());
    }
  }
  flush_predictions(engine_->now());
  predictions_sent_ = p;
}

void LiveSession::finish(std::vector<std::string>& out, Seconds now) {
  result_ = engine_->record();
  const auto& m = result_->metrics;
  ojson summary;
  summary["policy"] = to_string(result_->policy);
  summary["subject_id"] = result_->subject_id;
  summary["aborted"] = result_->aborted;
  summary["total_time_ms"] = to_ms(m.total_time);
  summary["human_idle_ms"] = to_ms(m.human_idle);
  summary["robot_idle_ms"] = to_ms(m.robot_idle);
  summary["total_idle_ms"] = to_ms(m.total_idle);
  auto cycles = ojson::array();
  for (const auto& c : m.per_cycle) cycles.push_back(cycle_json(c));
  summary["per_cycle"] = cycles;

  if (opts_.out_dir) {
    PersistedArtifacts a;
    a.record = *opts_.out_dir / (id_ + ".record.json");
    a.trace = *opts_.out_dir / (id_ + ".trace.json");
    a.events = *opts_.out_dir / (id_ + ".events.jsonl");
    write_file(a.record, run_record_to_json(*result_));
    write_file(a.trace, trace_to_json(engine_->recorded_trace(id_)));
    write_file(a.events, to_jsonl(result_->event_log));
    artifacts_ = a;
  }
  if (status_ == SessionStatus::complete) {
    out.push_back(ojson{{"type", "run_complete"},
                        {"t_ms", to_ms(start_offset_ + m.total_time)},
                        {"session_id", id_},
                        {"record", summary}}
                      .dump());
  } else {
    out.push_back(error_frame("timeout", "no client activity for " + std::to_string(to_ms(opts_.inactivity_timeout)) +
                                             " ms; session aborted",
                              now));
  }
  out.push_back(state_frame(now));
}

std::vector<std::string> LiveSession::handle(std::string_view frame, Seconds now) {
  now = quantize(now);
  std::vector<std::string> out;
  auto timed_out = tick(now);
  out.insert(out.end(), timed_out.begin(), timed_out.end());
  if (status_ == SessionStatus::aborted) {
    out.push_back(error_frame("order", "session aborted", now));
    return out;
  }
  last_activity_ = now;

  json msg;
  try {
    msg = json::parse(frame);
  } catch (const json::exception&) {
    out.push_back(error_frame("malformed", "frame is not valid JSON", now));
    return out;
  }
  if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
    out.push_back(error_frame("malformed", "message needs a string \"type\" field", now));
    return out;
  }
  const std::string type = msg["type"].get<std::string>();

  if (type == "hello") {
    out.push_back(state_frame(now));
    return out;
  }
  if (type == "start") {
    if (status_ != SessionStatus::waiting) {
      out.push_back(error_frame("order", "run already started", now));
      return out;
    }
    PolicyKind policy;
    try {
      if (!msg.contains("policy") || !msg["policy"].is_string()) throw Error("start needs a \"policy\" string");
      policy = policy_from_string(msg["policy"].get<std::string>());
    } catch (const Error& ex) {
      out.push_back(error_frame("malformed", ex.what(), now));
      return out;
    }
    EngineConfig cfg;
    cfg.task = opts_.setup.task;
    cfg.policy = policy;
    cfg.policies = opts_.setup.policies;
    cfg.population_mean = opts_.setup.population.pop_mean_place_b;
    cfg.subject_id = id_;
    cfg.secondary_during_placement = opts_.setup.secondary_during_placement;
    engine_ = std::make_unique<Engine>(std::move(cfg));
    start_offset_ = now;
    engine_->start();
    status_ = SessionStatus::running;
    drain(out);
    out.push_back(state_frame(now));
    return out;
  }

  const auto action = action_from_type(type);
  if (!action) {
    out.push_back(error_frame("unknown_type", "unknown message type '" + type + "'", now));
    return out;
  }
  if (status_ == SessionStatus::waiting) {
    out.push_back(error_frame("not_started", "send start before task actions", now));
    return out;
  }
  if (status_ != SessionStatus::running) {
    out.push_back(error_frame("order", "run already complete", now));
    return out;
  }
  try {
    engine_->submit(*action, engine_time(now));
  } catch (const ProtocolError& ex) {
    drain(out);
    out.push_back(error_frame("order", ex.what(), now));
    return out;
  }
  drain(out);
  if (engine_->finished()) {
    status_ = SessionStatus::complete;
    finish(out, now);
    return out;
  }
  out.push_back(state_frame(now));
  return out;
}

std::vector<std::string> LiveSession::tick(Seconds now) {
  now = quantize(now);
  std::vector<std::string> out;
  if (status_ == SessionStatus::complete || status_ == SessionStatus::aborted) return out;
  const bool expired = now - last_activity_ >= opts_.inactivity_timeout;
  if (status_ == SessionStatus::running) {
    const Seconds until = expired ? last_activity_ + opts_.inactivity_timeout : now;
    const std::size_t before = engine_->log().size();
    engine_->advance_to(engine_time(until));
    drain(out);
    if (expired) {
      engine_->abort(engine_time(until));
      status_ = SessionStatus::aborted;
      finish(out, now);
      return out;
    }
    if (engine_->log().size() != before) out.push_back(state_frame(now));
  } else if (expired) {
    status_ = SessionStatus::aborted;
    out.push_back(error_frame("timeout", "no client activity; session aborted", now));
    out.push_back(state_frame(now));
  }
  return out;
}

std::optional<Seconds> LiveSession::next_wakeup() const {
  if (status_ == SessionStatus::complete || status_ == SessionStatus::aborted) return std::nullopt;
  Seconds wake = last_activity_ + opts_.inactivity_timeout;
  if (status_ == SessionStatus::running)
    if (auto t = engine_->next_event_time()) wake = std::min(wake, quantize(start_offset_ + *t));
  return wake;
}

}  // namespace hrc
