#pragma once

// UV domain types: identity, the behavioral state machine with its nested
// time-in-state clocks, and the utilization metric derived from them.

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

#include "uvf/common.hpp"

namespace uvf::fleet {

enum class UvKind { UAV, UGV };

std::string_view to_string(UvKind kind);
std::optional<UvKind> parse_kind(std::string_view text);

/// Short vehicle identifier such as "UAV1" or "UGV3". The kind is carried
/// alongside the name and must agree with the name's prefix when one exists.
class UvId {
 public:
  UvId() = default;
  UvId(std::string name, UvKind kind);

  /// Infers the kind from a "UAV"/"UGV" prefix. Throws ArgumentError for
  /// names without a recognised prefix.
  static UvId parse(std::string_view name);

  const std::string& name() const { return name_; }
  UvKind kind() const { return kind_; }

  /// Compact column label: UAV1 -> A1, UGV3 -> G3, anything else unchanged.
  std::string short_label() const;

  friend bool operator==(const UvId& a, const UvId& b) { return a.name_ == b.name_; }
  friend std::strong_ordering operator<=>(const UvId& a, const UvId& b) {
    return natural_compare(a.name_, b.name_);
  }

 private:
  static std::strong_ordering natural_compare(const std::string& a, const std::string& b);

  std::string name_;
  UvKind kind_ = UvKind::UAV;
};

/// Leaf states of the composite machine. Available{Unregistered, Registered{
/// Uncontrolled, Controlled}} nests, so Controlled implies Registered implies
/// Available.
enum class UvState {
  Initial,
  Unavailable,
  Unregistered,
  Uncontrolled,
  Controlled,
};

inline constexpr std::array kAllStates = {UvState::Initial, UvState::Unavailable, UvState::Unregistered,
                                          UvState::Uncontrolled, UvState::Controlled};

std::string_view to_string(UvState state);
std::optional<UvState> parse_state(std::string_view text);

constexpr bool is_available(UvState s) {
  return s == UvState::Unregistered || s == UvState::Uncontrolled || s == UvState::Controlled;
}
constexpr bool is_registered(UvState s) { return s == UvState::Uncontrolled || s == UvState::Controlled; }

enum class UvEvent {
  Init,
  RegisterAccepted,
  AssignMission,
  MissionComplete,
  Reconfigure,
  Fail,
  RechargeNeeded,
  BecomeAvailable,
};

inline constexpr std::array kAllEvents = {UvEvent::Init,        UvEvent::RegisterAccepted, UvEvent::AssignMission,
                                          UvEvent::MissionComplete, UvEvent::Reconfigure, UvEvent::Fail,
                                          UvEvent::RechargeNeeded, UvEvent::BecomeAvailable};

std::string_view to_string(UvEvent event);
std::optional<UvEvent> parse_event(std::string_view text);

/// Target state of `event` from `from`, or nullopt when the pair is not in
/// the transition table.
std::optional<UvState> transition_target(UvState from, UvEvent event);

/// Time-in-state accumulators. Composite clocks (available, registered) are
/// stored explicitly and kept equal to the sum of their children.
struct StateClocks {
  SimDuration available{0};
  SimDuration unavailable{0};
  SimDuration unregistered{0};
  SimDuration registered{0};
  SimDuration uncontrolled{0};
  SimDuration controlled{0};

  bool partitions_hold() const {
    return available == unregistered + registered && registered == uncontrolled + controlled;
  }

  friend bool operator==(const StateClocks&, const StateClocks&) = default;
};

struct UvRecord {
  UvId id;
  bool in_mcc_range = false;
  UvState state = UvState::Initial;
  StateClocks clocks;
  /// Sim time up to which `clocks` have been accounted.
  SimDuration accounted_until{0};
  /// Uniform per kind; present so capability-aware rules have a hook.
  std::string capability_tag;

  UvKind kind() const { return id.kind(); }

  static UvRecord make(UvId id, bool in_mcc_range);

  friend bool operator==(const UvRecord&, const UvRecord&) = default;
};

class IllegalTransition : public Error {
 public:
  IllegalTransition(UvState state, UvEvent event);

  UvState state() const { return state_; }
  UvEvent event() const { return event_; }

 private:
  UvState state_;
  UvEvent event_;
};

/// Accounts the time since the record's last update to its current state,
/// then switches state. The input is returned unchanged on error (it is taken
/// by value and the exception is raised before any mutation).
UvRecord apply_event(UvRecord record, UvEvent event, SimDuration now);

/// Adds `dt` to the current leaf clock and every enclosing composite clock.
/// Throws ArgumentError on negative dt.
UvRecord advance_clocks(UvRecord record, SimDuration dt);

/// Controlled share of registered time, in percent. 0 when nothing has been
/// registered yet.
double utilization(const StateClocks& clocks);

}  // namespace uvf::fleet
