#include <algorithm>

#include "uvf/simkit.hpp"

namespace uvf::sim {

namespace {

constexpr std::uint64_t kChurnStream = 0x9e3779b97f4a7c15ULL;

double unit_draw(std::mt19937_64& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

json value_to_json(const rules::Value& v) {
  return std::visit(
      [](const auto& x) -> json {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, rules::Id>) {
          return x.name;
        } else {
          return x;
        }
      },
      v);
}

json message_json(const acl::LoggedMessage& m) {
  return json{{"performative", std::string(acl::to_string(m.performative))},
              {"sender", m.sender},
              {"receiver", m.receiver},
              {"content", m.content},
              {"conversation", m.conversation_id}};
}

json clocks_json(const fleet::StateClocks& c) {
  return json{{"available", to_minutes(c.available)},       {"unavailable", to_minutes(c.unavailable)},
              {"unregistered", to_minutes(c.unregistered)}, {"registered", to_minutes(c.registered)},
              {"uncontrolled", to_minutes(c.uncontrolled)}, {"controlled", to_minutes(c.controlled)}};
}

std::string where(SimDuration t, const fleet::UvId& uv) {
  return "t=" + json(to_minutes(t)).dump() + " min, " + uv.name() + ": ";
}

}  // namespace

Simulator::Simulator(Scenario scenario, std::uint64_t seed)
    : scenario_(std::move(scenario)),
      seed_(seed),
      mode_(scenario_.initial_mode),
      bus_(scenario_.limits),
      churn_rng_(seed ^ kChurnStream) {
  validate(scenario_);
  std::vector<fleet::UvId> ids;
  for (const auto& f : scenario_.fleet) {
    records_.push_back(fleet::UvRecord::make(f.id, f.in_mcc_range));
    ids.push_back(f.id);
  }
  acl::register_fleet(bus_, ids);
}

std::vector<SimDuration> Simulator::time_points() const {
  std::set<SimDuration> points;
  for (const auto& e : scenario_.events) points.insert(e.at);
  for (auto t : scenario_.sample_points()) points.insert(t);
  if (scenario_.churn) {
    for (auto t = from_minutes(1); t <= scenario_.horizon; t += from_minutes(1)) points.insert(t);
  }
  return {points.begin(), points.end()};
}

std::optional<SimDuration> Simulator::next_time() const {
  for (auto t : time_points()) {
    if (t > scenario_.horizon) break;
    if (!started_ || t > now_) return t;
  }
  return std::nullopt;
}

void Simulator::step() {
  const auto t = next_time();
  if (!t) return;
  process(*t);
  started_ = true;
  now_ = *t;
}

void Simulator::advance_to(SimDuration t) {
  for (auto next = next_time(); next && *next <= t; next = next_time()) step();
  cursor_ = std::max(cursor_, std::min(t, scenario_.horizon));
}

void Simulator::run_to_end() {
  while (!finished()) step();
}

std::optional<SimDuration> Simulator::command_time() const {
  const auto next = next_time();
  if (!next) return std::nullopt;
  if (cursor_ > now_ && cursor_ < *next) return cursor_;
  return next;
}

void Simulator::inject(ScenarioEvent event) {
  if (started_ && event.at <= now_) throw ArgumentError("cannot inject an event at or before the current time");
  auto events = scenario_.events;
  auto pos = std::upper_bound(events.begin(), events.end(), event.at,
                              [](SimDuration t, const ScenarioEvent& e) { return t < e.at; });
  events.insert(pos, std::move(event));
  Scenario candidate = scenario_;
  candidate.events = std::move(events);
  validate(candidate);
  scenario_ = std::move(candidate);
}

fleet::UvRecord& Simulator::record(const fleet::UvId& uv) {
  for (auto& r : records_) {
    if (r.id == uv) return r;
  }
  throw mcc::UnknownUv(uv);
}

double Simulator::utilization_of(const fleet::UvId& uv) const {
  if (auto it = overrides_.find(uv); it != overrides_.end()) return it->second;
  for (const auto& r : records_) {
    if (r.id == uv) return fleet::utilization(r.clocks);
  }
  throw mcc::UnknownUv(uv);
}

mcc::FleetSnapshot Simulator::snapshot() const {
  mcc::FleetSnapshot s;
  s.uvs = records_;
  s.utilizations = overrides_;
  s.limits = scenario_.limits;
  s.mode = mode_;
  s.seed = seed_;
  return s;
}

void Simulator::emit(SimDuration t, TraceKind kind, json payload) {
  trace_.push_back(TraceEvent{trace_.size(), t, kind, std::move(payload)});
}

void Simulator::log_decisions(SimDuration t, const std::vector<rules::Decision>& decisions,
                              const std::string& trigger) {
  for (const auto& d : decisions) {
    json args = json::array();
    for (const auto& a : d.args) args.push_back(value_to_json(a));
    emit(t, TraceKind::Decision,
         json{{"rule", d.rule}, {"kind", d.kind}, {"args", args}, {"text", d.describe()}, {"trigger", trigger}});
  }
}

void Simulator::apply_state_event(const fleet::UvId& uv, fleet::UvEvent event, SimDuration t) {
  auto& r = record(uv);
  const auto from = r.state;
  try {
    r = fleet::apply_event(r, event, t);
  } catch (const fleet::IllegalTransition& e) {
    throw SimulationError(where(t, uv) + e.what());
  }
  emit(t, TraceKind::Transition,
       json{{"uv", uv.name()},
            {"event", std::string(fleet::to_string(event))},
            {"from", std::string(fleet::to_string(from))},
            {"to", std::string(fleet::to_string(r.state))}});
}

void Simulator::apply_operator(const OperatorCommand& c, SimDuration t) {
  mode_ = c.mode;
  const auto conv = bus_.open_conversation();
  acl::Content content{{"mode", c.mode.is_manual() ? "manual" : "automatic"}};
  if (c.mode.is_manual()) content["pattern"] = std::string(topo::to_string(c.mode.requested()));

  acl::AclMessage request;
  request.performative = acl::Performative::Request;
  request.sender = bus_.agent(acl::kOperatorAgent);
  request.receiver = bus_.agent(acl::kMccAgent);
  request.content = content;
  request.conversation_id = conv;
  request.cycle = t;
  bus_.send(request, result_.topology);
  emit(t, TraceKind::Message, message_json(bus_.log().back()));

  acl::AclMessage agree = request;
  agree.performative = acl::Performative::Agree;
  agree.sender = bus_.agent(acl::kMccAgent);
  agree.receiver = bus_.agent(acl::kOperatorAgent);
  bus_.send(agree, result_.topology);
  emit(t, TraceKind::Message, message_json(bus_.log().back()));
}

void Simulator::apply_failure(const fleet::UvId& uv, SimDuration t) {
  if (!fleet::is_available(record(uv).state)) return;
  const bool was_connected = result_.topology.is_connected(uv);
  apply_state_event(uv, fleet::UvEvent::Fail, t);
  if (!was_connected) return;
  result_ = mcc::handle_failure(result_, uv, snapshot());
  log_decisions(t, result_.decision_log, "failure");
  registered_at_last_plan_.erase(uv);
}

void Simulator::replan(SimDuration t, bool full) {
  std::set<fleet::UvId> registered;
  for (const auto& r : records_) {
    if (fleet::is_registered(r.state)) registered.insert(r.id);
  }
  const bool changed = registered != registered_at_last_plan_;
  if (!full && !changed) return;
  const auto snap = snapshot();
  if (full || mode_.is_manual()) {
    result_ = mcc::synthesize_topology(snap);
  } else {
    result_ = mcc::extend_topology(result_, snap);
  }
  registered_at_last_plan_ = std::move(registered);
  log_decisions(t, result_.decision_log, full ? "operator" : "fleet_change");
}

void Simulator::control_missions(SimDuration t) {
  for (auto& r : records_) {
    const bool connected = result_.topology.is_connected(r.id);
    if (connected && r.state == fleet::UvState::Uncontrolled) {
      apply_state_event(r.id, fleet::UvEvent::AssignMission, t);
    } else if (!connected && r.state == fleet::UvState::Controlled) {
      apply_state_event(r.id, fleet::UvEvent::MissionComplete, t);
    }
  }
}

void Simulator::run_churn(SimDuration t) {
  if (!scenario_.churn || t.count() % kMsPerMinute != 0 || t.count() == 0) return;
  for (const auto& f : scenario_.fleet) {
    for (const auto& [event, p] : scenario_.churn->per_minute) {
      const auto state = record(f.id).state;
      if (!fleet::transition_target(state, event)) continue;
      if (unit_draw(churn_rng_) >= p) continue;
      if (event == fleet::UvEvent::Fail) {
        apply_failure(f.id, t);
      } else {
        apply_state_event(f.id, event, t);
      }
      break;
    }
  }
}

void Simulator::sample(SimDuration t, int index) {
  const auto& topology = result_.topology;
  const auto expected = topo::compute_traffic(topology, scenario_.limits);
  const auto ledger = acl::run_telemetry_cycle(bus_, topology, t);
  if (!(ledger == expected)) {
    throw SimulationError("t=" + json(to_minutes(t)).dump() + " min: message ledger disagrees with traffic model");
  }

  json per_uv = json::object();
  json utilization = json::object();
  json states = json::object();
  json clocks = json::object();
  for (const auto& r : records_) {
    per_uv[r.id.name()] = ledger.at(r.id);
    utilization[r.id.name()] = utilization_of(r.id);
    states[r.id.name()] = std::string(fleet::to_string(r.state));
    clocks[r.id.name()] = clocks_json(r.clocks);
  }
  json uncontrolled = json::array();
  for (const auto& uv : result_.uncontrolled) uncontrolled.push_back(uv.name());

  emit(t, TraceKind::Snapshot,
       json{{"sample", index + 1},
            {"time", to_minutes(t)},
            {"mode", mode_to_json(mode_)},
            {"pattern", std::string(topo::to_string(result_.pattern))},
            {"topology", topology_to_json(topology)},
            {"traffic", {{"per_uv", per_uv}, {"mcc", ledger.mcc}}},
            {"utilization", utilization},
            {"states", states},
            {"uncontrolled", uncontrolled},
            {"clocks", clocks}});
}

void Simulator::process(SimDuration t) {
  for (auto& r : records_) r = fleet::advance_clocks(r, t - r.accounted_until);

  std::vector<const ScenarioEvent*> due;
  for (const auto& e : scenario_.events) {
    if (e.at == t) due.push_back(&e);
  }

  bool full = false;
  for (const auto* e : due) {
    if (const auto* c = std::get_if<OperatorCommand>(&e->action)) {
      apply_operator(*c, t);
      full = true;
    }
  }
  for (const auto* e : due) {
    if (const auto* o = std::get_if<UtilizationOverride>(&e->action)) {
      for (const auto& [uv, v] : o->values) overrides_[uv] = v;
    }
  }
  for (const auto* e : due) {
    if (const auto* s = std::get_if<StateEvent>(&e->action)) {
      if (s->event == fleet::UvEvent::Fail) {
        if (!fleet::is_available(record(s->uv).state)) {
          throw SimulationError(where(t, s->uv) + "illegal transition: Fail from " +
                                std::string(fleet::to_string(record(s->uv).state)));
        }
        apply_failure(s->uv, t);
      } else {
        apply_state_event(s->uv, s->event, t);
      }
    } else if (const auto* f = std::get_if<FailureInjection>(&e->action)) {
      apply_failure(f->uv, t);
    }
  }
  run_churn(t);

  replan(t, full);
  control_missions(t);

  const auto samples = scenario_.sample_points();
  if (auto it = std::find(samples.begin(), samples.end(), t); it != samples.end()) {
    sample(t, static_cast<int>(it - samples.begin()));
  }
}

json Simulator::state_json() const {
  json states = json::object();
  json utilization = json::object();
  for (const auto& r : records_) {
    states[r.id.name()] = std::string(fleet::to_string(r.state));
    utilization[r.id.name()] = utilization_of(r.id);
  }
  json uncontrolled = json::array();
  for (const auto& uv : result_.uncontrolled) uncontrolled.push_back(uv.name());
  const auto traffic = topo::compute_traffic(result_.topology, scenario_.limits);
  json per_uv = json::object();
  for (const auto& r : records_) per_uv[r.id.name()] = traffic.at(r.id);
  const auto next = next_time();
  return json{{"scenario", scenario_.name},
              {"seed", seed_},
              {"time", to_minutes(now_)},
              {"started", started_},
              {"finished", !next.has_value()},
              {"next_time", next ? json(to_minutes(*next)) : json(nullptr)},
              {"horizon", to_minutes(scenario_.horizon)},
              {"mode", mode_to_json(mode_)},
              {"pattern", std::string(topo::to_string(result_.pattern))},
              {"topology", topology_to_json(result_.topology)},
              {"traffic", {{"per_uv", per_uv}, {"mcc", traffic.mcc}}},
              {"utilization", utilization},
              {"states", states},
              {"uncontrolled", uncontrolled},
              {"trace_length", trace_.size()}};
}

Trace run(const Scenario& scenario, std::uint64_t seed) {
  Simulator sim(scenario, seed);
  sim.run_to_end();
  return sim.trace();
}

}  // namespace uvf::sim
