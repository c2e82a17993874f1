#include "uvf/fleet.hpp"

#include <cctype>

namespace uvf::fleet {

std::string_view to_string(UvKind kind) {
  switch (kind) {
    case UvKind::UAV:
      return "UAV";
    case UvKind::UGV:
      return "UGV";
  }
  return "?";
}

std::optional<UvKind> parse_kind(std::string_view text) {
  if (text == "UAV") return UvKind::UAV;
  if (text == "UGV") return UvKind::UGV;
  return std::nullopt;
}

UvId::UvId(std::string name, UvKind kind) : name_(std::move(name)), kind_(kind) {
  if (name_.empty()) throw ArgumentError("empty UV name");
  for (auto candidate : {UvKind::UAV, UvKind::UGV}) {
    if (name_.starts_with(to_string(candidate)) && candidate != kind) {
      throw ArgumentError("UV name '" + name_ + "' does not match kind " + std::string(to_string(kind)));
    }
  }
}

UvId UvId::parse(std::string_view name) {
  for (auto kind : {UvKind::UAV, UvKind::UGV}) {
    if (name.starts_with(to_string(kind))) return UvId(std::string(name), kind);
  }
  throw ArgumentError("cannot infer UV kind from name '" + std::string(name) + "'");
}

std::string UvId::short_label() const {
  for (auto [prefix, letter] : {std::pair{UvKind::UAV, 'A'}, std::pair{UvKind::UGV, 'G'}}) {
    auto p = to_string(prefix);
    if (name_.starts_with(p) && name_.size() > p.size()) return letter + name_.substr(p.size());
  }
  return name_;
}

// "UAV2" < "UAV10": digit runs compare by value.
std::strong_ordering UvId::natural_compare(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ei = i, ej = j;
      while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
      while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
      auto na = std::stoull(a.substr(i, ei - i));
      auto nb = std::stoull(b.substr(j, ej - j));
      if (na != nb) return na <=> nb;
      if (ei - i != ej - j) return (ei - i) <=> (ej - j);
      i = ei;
      j = ej;
      continue;
    }
    if (a[i] != b[j]) return a[i] <=> b[j];
    ++i;
    ++j;
  }
  return (a.size() - i) <=> (b.size() - j);
}

std::string_view to_string(UvState state) {
  switch (state) {
    case UvState::Initial:
      return "Initial";
    case UvState::Unavailable:
      return "Unavailable";
    case UvState::Unregistered:
      return "Available.Unregistered";
    case UvState::Uncontrolled:
      return "Available.Registered.Uncontrolled";
    case UvState::Controlled:
      return "Available.Registered.Controlled";
  }
  return "?";
}

std::optional<UvState> parse_state(std::string_view text) {
  for (auto s : kAllStates) {
    if (to_string(s) == text) return s;
  }
  return std::nullopt;
}

std::string_view to_string(UvEvent event) {
  switch (event) {
    case UvEvent::Init:
      return "Init";
    case UvEvent::RegisterAccepted:
      return "RegisterAccepted";
    case UvEvent::AssignMission:
      return "AssignMission";
    case UvEvent::MissionComplete:
      return "MissionComplete";
    case UvEvent::Reconfigure:
      return "Reconfigure";
    case UvEvent::Fail:
      return "Fail";
    case UvEvent::RechargeNeeded:
      return "RechargeNeeded";
    case UvEvent::BecomeAvailable:
      return "BecomeAvailable";
  }
  return "?";
}

std::optional<UvEvent> parse_event(std::string_view text) {
  for (auto e : kAllEvents) {
    if (to_string(e) == text) return e;
  }
  return std::nullopt;
}

std::optional<UvState> transition_target(UvState from, UvEvent event) {
  switch (event) {
    case UvEvent::Init:
      if (from == UvState::Initial) return UvState::Unregistered;
      break;
    case UvEvent::RegisterAccepted:
      if (from == UvState::Unregistered) return UvState::Uncontrolled;
      break;
    case UvEvent::AssignMission:
      if (from == UvState::Uncontrolled) return UvState::Controlled;
      break;
    case UvEvent::MissionComplete:
      if (from == UvState::Controlled) return UvState::Uncontrolled;
      break;
    case UvEvent::Reconfigure:
      if (is_registered(from)) return UvState::Unregistered;
      break;
    case UvEvent::Fail:
    case UvEvent::RechargeNeeded:
      if (is_available(from)) return UvState::Unavailable;
      break;
    case UvEvent::BecomeAvailable:
      if (from == UvState::Unavailable) return UvState::Unregistered;
      break;
  }
  return std::nullopt;
}

IllegalTransition::IllegalTransition(UvState state, UvEvent event)
    : Error("illegal transition: " + std::string(to_string(event)) + " from " + std::string(to_string(state))),
      state_(state),
      event_(event) {}

UvRecord UvRecord::make(UvId id, bool in_mcc_range) {
  UvRecord r;
  r.capability_tag = std::string(to_string(id.kind())) + "-standard";
  r.id = std::move(id);
  r.in_mcc_range = in_mcc_range;
  return r;
}

UvRecord apply_event(UvRecord record, UvEvent event, SimDuration now) {
  auto target = transition_target(record.state, event);
  if (!target) throw IllegalTransition(record.state, event);
  if (now < record.accounted_until) {
    throw ArgumentError("event time precedes the record's accounted time");
  }
  record = advance_clocks(std::move(record), now - record.accounted_until);
  record.state = *target;
  return record;
}

UvRecord advance_clocks(UvRecord record, SimDuration dt) {
  if (dt.count() < 0) throw ArgumentError("negative clock advance");
  auto& c = record.clocks;
  switch (record.state) {
    case UvState::Initial:
      break;
    case UvState::Unavailable:
      c.unavailable += dt;
      break;
    case UvState::Unregistered:
      c.unregistered += dt;
      c.available += dt;
      break;
    case UvState::Uncontrolled:
      c.uncontrolled += dt;
      c.registered += dt;
      c.available += dt;
      break;
    case UvState::Controlled:
      c.controlled += dt;
      c.registered += dt;
      c.available += dt;
      break;
  }
  record.accounted_until += dt;
  return record;
}

double utilization(const StateClocks& clocks) {
  const auto denom = clocks.controlled.count() + clocks.uncontrolled.count();
  if (denom == 0) return 0.0;
  return 100.0 * static_cast<double>(clocks.controlled.count()) / static_cast<double>(denom);
}

}  // namespace uvf::fleet
