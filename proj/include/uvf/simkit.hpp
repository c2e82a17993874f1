#pragma once

// Scenario files, the deterministic time-stepped simulator, JSON-lines traces
// and metric exports.

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "uvf/aclbus.hpp"
#include "uvf/mcc.hpp"

namespace uvf::sim {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;

struct FleetEntry {
  fleet::UvId id;
  bool in_mcc_range = false;
};

struct StateEvent {
  fleet::UvId uv;
  fleet::UvEvent event;
};

struct OperatorCommand {
  mcc::OperationMode mode;
};

/// Replaces the effective utilization of the listed UVs until overridden again.
struct UtilizationOverride {
  std::map<fleet::UvId, double> values;
};

struct FailureInjection {
  fleet::UvId uv;
};

using EventAction = std::variant<StateEvent, OperatorCommand, UtilizationOverride, FailureInjection>;

struct ScenarioEvent {
  SimDuration at{0};
  EventAction action;
};

/// Per-UV, per-minute probability of each event; only legal events are drawn.
struct ChurnProfile {
  std::vector<std::pair<fleet::UvEvent, double>> per_minute;

  /// Exploratory profile: 5%/min failure, 10%/min mission completion, plus
  /// recovery and registration so vehicles cycle back into the fleet.
  static ChurnProfile exploratory();
};

struct ReferenceRow {
  int test_case = 0;
  double time = 0;
  std::map<std::string, std::int64_t> cells;  // column label -> Kbit
};

struct ReferenceNote {
  int test_case = 0;
  std::string column;
  std::string note;
};

/// Expected traffic table bundled with a scenario; exports report any cell
/// where the run differs from it.
struct TrafficReference {
  std::vector<ReferenceRow> rows;
  std::vector<ReferenceNote> notes;
};

struct Scenario {
  int schema_version = kSchemaVersion;
  std::string name;
  std::uint64_t seed = 42;
  std::vector<FleetEntry> fleet;
  topo::CapacityLimits limits;
  std::map<fleet::UvKind, int> max_per_kind;
  SimDuration horizon{from_minutes(20)};
  SimDuration sample_every{from_minutes(2)};
  std::vector<SimDuration> sample_at;
  mcc::OperationMode initial_mode;
  std::vector<ScenarioEvent> events;
  std::optional<ChurnProfile> churn;
  std::optional<TrafficReference> reference;

  /// Explicit sample points when given, otherwise every sample_every.
  std::vector<SimDuration> sample_points() const;
};

class ParseError : public Error {
 public:
  ParseError(std::string field, int line, const std::string& what);
  const std::string& field() const { return field_; }
  int line() const { return line_; }

 private:
  std::string field_;
  int line_;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
void validate(const Scenario& scenario);
json scenario_to_json(const Scenario& scenario);

// ---------------------------------------------------------------------------
// Trace

enum class TraceKind { Snapshot, Message, Decision, Transition };

std::string_view to_string(TraceKind kind);
std::optional<TraceKind> parse_trace_kind(std::string_view text);

struct TraceEvent {
  std::size_t index = 0;
  SimDuration at{0};
  TraceKind kind = TraceKind::Snapshot;
  json payload;

  json to_json() const;
  static TraceEvent from_json(const json& j);
};

using Trace = std::vector<TraceEvent>;

std::string trace_jsonl(const Trace& trace);
Trace parse_trace_jsonl(const std::string& text);
/// FNV-1a 64 over the JSON-lines text, as 16 hex digits.
std::string trace_hash(const Trace& trace);

json topology_to_json(const topo::Topology& topology);
topo::Topology topology_from_json(const json& j);
json mode_to_json(const mcc::OperationMode& mode);
mcc::OperationMode mode_from_json(const json& j);

// ---------------------------------------------------------------------------
// Simulator

/// Steppable simulation. Time advances over a set of time points: event
/// times, sample points and, with churn, every whole minute. At each point
/// clocks advance, then operator commands, utilization overrides, state
/// events and failures apply in that order, then the MCC re-plans if the
/// fleet changed, then missions follow control, then a sample is recorded.
class Simulator {
 public:
  Simulator(Scenario scenario, std::uint64_t seed);

  /// Time of the next unprocessed time point, if any.
  std::optional<SimDuration> next_time() const;
  bool finished() const { return !next_time().has_value(); }
  /// Whether any time point has been processed.
  bool started() const { return started_; }
  /// Last processed time point (0 before the first step).
  SimDuration now() const { return now_; }

  /// Processes the next time point. No-op when finished.
  void step();
  /// Processes every time point at or before `t`.
  void advance_to(SimDuration t);
  void run_to_end();

  /// Sim-time at which an injected command takes effect: the advance_to
  /// cursor when it lies ahead of the last processed point, otherwise the
  /// next time point. Empty once the run is finished.
  std::optional<SimDuration> command_time() const;
  /// Inserts an event into the scenario; it must not lie in the past.
  void inject(ScenarioEvent event);

  const Trace& trace() const { return trace_; }
  const Scenario& scenario() const { return scenario_; }
  std::uint64_t seed() const { return seed_; }
  const mcc::OperationMode& mode() const { return mode_; }
  const mcc::SynthesisResult& result() const { return result_; }
  const std::vector<fleet::UvRecord>& records() const { return records_; }
  const acl::Bus& bus() const { return bus_; }
  double utilization_of(const fleet::UvId& uv) const;

  /// Current state for GET /state.
  json state_json() const;

 private:
  void process(SimDuration t);
  void apply_state_event(const fleet::UvId& uv, fleet::UvEvent event, SimDuration t);
  void apply_operator(const OperatorCommand& c, SimDuration t);
  void apply_failure(const fleet::UvId& uv, SimDuration t);
  void replan(SimDuration t, bool full);
  void control_missions(SimDuration t);
  void sample(SimDuration t, int index);
  void run_churn(SimDuration t);
  mcc::FleetSnapshot snapshot() const;
  fleet::UvRecord& record(const fleet::UvId& uv);
  void emit(SimDuration t, TraceKind kind, json payload);
  void log_decisions(SimDuration t, const std::vector<rules::Decision>& decisions, const std::string& trigger);
  std::vector<SimDuration> time_points() const;

  Scenario scenario_;
  std::uint64_t seed_;
  std::vector<fleet::UvRecord> records_;
  mcc::OperationMode mode_;
  std::map<fleet::UvId, double> overrides_;
  mcc::SynthesisResult result_;
  acl::Bus bus_;
  std::mt19937_64 churn_rng_;
  SimDuration now_{0};
  bool started_ = false;
  SimDuration cursor_{0};
  std::set<fleet::UvId> registered_at_last_plan_;
  Trace trace_;
};

Trace run(const Scenario& scenario, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

struct TrafficRow {
  int test_case = 0;
  double time = 0;
  std::map<std::string, std::int64_t> cells;  // short label -> Kbit
  std::int64_t mcc = 0;
  friend bool operator==(const TrafficRow&, const TrafficRow&) = default;
};

struct UtilizationRow {
  double time = 0;
  std::map<std::string, double> values;  // short label -> percent
  friend bool operator==(const UtilizationRow&, const UtilizationRow&) = default;
};

struct MetricsTables {
  std::vector<std::string> columns;  // short labels, UAVs then UGVs
  std::vector<TrafficRow> traffic;
  std::vector<UtilizationRow> utilization;
  friend bool operator==(const MetricsTables&, const MetricsTables&) = default;
};

struct ReferenceDiff {
  int test_case = 0;
  std::string column;
  std::int64_t expected = 0;
  std::int64_t emitted = 0;
  std::string note;
};

/// Builds the tables from the trace's snapshot events. Throws ArgumentError
/// when the trace has no snapshot.
MetricsTables extract_metrics(const Trace& trace);

std::string traffic_csv(const MetricsTables& m);
std::string utilization_csv(const MetricsTables& m);
json metrics_to_json(const MetricsTables& m);
MetricsTables metrics_from_json(const json& j);

std::vector<ReferenceDiff> compare_reference(const MetricsTables& m, const TrafficReference& ref);
json reference_diff_to_json(const std::vector<ReferenceDiff>& diffs);

enum class ExportFormat { Csv, Json, Both };

/// Writes traffic.csv/utilization.csv and/or metrics.json into `dir`, plus
/// traffic_reference_diff.json when a reference table is given.
std::vector<std::filesystem::path> export_metrics(const Trace& trace, ExportFormat format,
                                                  const std::filesystem::path& dir,
                                                  const std::optional<TrafficReference>& reference = std::nullopt);

}  // namespace uvf::sim
