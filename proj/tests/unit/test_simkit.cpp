#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "../common/generators.hpp"
#include "../common/traffic_oracle.hpp"
#include "uvf/simkit.hpp"

namespace {

using namespace uvf;
using namespace uvf::sim;
using fleet::UvId;

UvId uv(const std::string& name) { return UvId::parse(name); }

std::filesystem::path golden_path() { return std::filesystem::path(UVF_SOURCE_DIR) / "scenarios" / "golden_fleet.json"; }

const Scenario& golden() {
  static const Scenario s = load_scenario(golden_path());
  return s;
}

const Trace& golden_trace() {
  static const Trace t = run(golden(), golden().seed);
  return t;
}

std::vector<json> snapshots(const Trace& trace) {
  std::vector<json> out;
  for (const auto& e : trace) {
    if (e.kind == TraceKind::Snapshot) out.push_back(e.payload);
  }
  return out;
}

json snapshot_at(const Trace& trace, double minutes) {
  for (const auto& s : snapshots(trace)) {
    if (s.at("time").get<double>() == minutes) return s;
  }
  ADD_FAILURE() << "no snapshot at " << minutes;
  return {};
}

std::set<std::string> layer(const json& snap, int index) {
  std::set<std::string> out;
  for (auto it = snap["topology"]["layers"].begin(); it != snap["topology"]["layers"].end(); ++it) {
    if (it->get<int>() == index) out.insert(it.key());
  }
  return out;
}

std::string master_of(const json& snap, const std::string& slave) {
  for (const auto& l : snap["topology"]["links"]) {
    if (l["slave"] == slave) return l["master"];
  }
  return "";
}

std::vector<std::string> children(const json& snap, const std::string& master) {
  std::vector<std::string> out;
  for (const auto& l : snap["topology"]["links"]) {
    if (l["master"] == master) out.push_back(l["slave"]);
  }
  return out;
}

std::optional<fleet::UvState> state_of(const json& snap, const std::string& uv) {
  return fleet::parse_state(snap["states"][uv].get<std::string>());
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

std::string minimal_scenario(const std::string& events) {
  return R"({
  "schema_version": 1,
  "name": "mini",
  "fleet": [
    {"id": "UAV1", "kind": "UAV", "in_mcc_range": true},
    {"id": "UGV1", "kind": "UGV", "in_mcc_range": false}
  ],
  "max_per_kind": {"UAV": 1, "UGV": 1},
  "horizon": 6,
  "events": )" +
         events + "\n}\n";
}

// ---------------------------------------------------------------------------
// Golden run

TEST(GoldenRun, PatternPerSample) {
  std::vector<std::string> patterns;
  for (const auto& s : snapshots(golden_trace())) patterns.push_back(s["pattern"]);
  const std::vector<std::string> expected = {"None",         "Hierarchical", "Hierarchical", "Hierarchical", "Central",
                                             "Hierarchical", "Hierarchical", "Hierarchical", "Holonic"};
  EXPECT_EQ(patterns, expected);
}

TEST(GoldenRun, TrafficMatchesGoldenTable) {
  // Golden traffic table, with sample 8's A1 cell at the value the MCC total
  // of that row implies (A1 relays UGV2).
  const std::vector<std::vector<std::int64_t>> expected = {
      {0, 0, 0, 0, 0, 0, 0, 0, 0},
      {0, 0, 0, 800, 0, 0, 0, 0, 1600},
      {0, 0, 0, 800, 0, 0, 0, 0, 2400},
      {0, 0, 0, 800, 800, 0, 0, 0, 4000},
      {0, 0, 0, 0, 0, 0, 0, 0, 2400},
      {800, 800, 0, 0, 800, 0, 0, 0, 4800},
      {800, 0, 1600, 0, 800, 0, 0, 0, 5600},
      {1600, 0, 1600, 0, 800, 0, 0, 0, 6400},
      {4000, 0, 5600, 0, 4000, 1600, 1600, 1600, 16000},
  };
  const auto m = extract_metrics(golden_trace());
  ASSERT_EQ(m.columns, (std::vector<std::string>{"A1", "A2", "A3", "A4", "A5", "G1", "G2", "G3"}));
  ASSERT_EQ(m.traffic.size(), expected.size());
  for (std::size_t k = 0; k < expected.size(); ++k) {
    SCOPED_TRACE("sample " + std::to_string(k + 1));
    EXPECT_EQ(m.traffic[k].test_case, static_cast<int>(k + 1));
    for (std::size_t c = 0; c < m.columns.size(); ++c) EXPECT_EQ(m.traffic[k].cells.at(m.columns[c]), expected[k][c]);
    EXPECT_EQ(m.traffic[k].mcc, expected[k][8]);
  }
}

TEST(GoldenRun, SampleTimes) {
  std::vector<double> times;
  for (const auto& s : snapshots(golden_trace())) times.push_back(s["time"]);
  EXPECT_EQ(times, (std::vector<double>{2, 4, 6, 8, 12, 14, 16, 18, 20}));
}

TEST(GoldenRun, ReferenceDiffIsTheSingleAnnotatedCell) {
  const auto diffs = compare_reference(extract_metrics(golden_trace()), *golden().reference);
  ASSERT_EQ(diffs.size(), 1u);
  EXPECT_EQ(diffs[0].test_case, 8);
  EXPECT_EQ(diffs[0].column, "A1");
  EXPECT_EQ(diffs[0].expected, 800);
  EXPECT_EQ(diffs[0].emitted, 1600);
  EXPECT_FALSE(diffs[0].note.empty());
}

TEST(GoldenRun, EarlySamplesGrowTheHierarchy) {
  const auto& t = golden_trace();
  EXPECT_TRUE(snapshot_at(t, 2)["topology"]["layers"].empty());
  EXPECT_EQ(snapshot_at(t, 2)["uncontrolled"], json::array({"UGV3"}));
  EXPECT_EQ(master_of(snapshot_at(t, 4), "UGV3"), "UAV4");
  EXPECT_EQ(layer(snapshot_at(t, 6), 1), (std::set<std::string>{"UAV2", "UAV4"}));
  const auto s8 = snapshot_at(t, 8);
  EXPECT_EQ(layer(s8, 1), (std::set<std::string>{"UAV2", "UAV4", "UAV5"}));
  EXPECT_EQ(master_of(s8, "UGV1"), "UAV5");
  EXPECT_EQ(master_of(s8, "UGV3"), "UAV4");
}

TEST(GoldenRun, ManualCentralLeavesOutOfRangeUvsUncontrolled) {
  const auto s = snapshot_at(golden_trace(), 12);
  EXPECT_EQ(layer(s, 1), (std::set<std::string>{"UAV2", "UAV4", "UAV5"}));
  EXPECT_EQ(s["uncontrolled"], json::array({"UGV1", "UGV3"}));
  EXPECT_EQ(state_of(s, "UGV1"), fleet::UvState::Uncontrolled);
}

TEST(GoldenRun, ManualHierarchicalGivesEachLeaderOneFollower) {
  const auto s = snapshot_at(golden_trace(), 14);
  EXPECT_EQ(layer(s, 1), (std::set<std::string>{"UAV1", "UAV2", "UAV5"}));
  std::set<std::string> followers;
  for (const auto* leader : {"UAV1", "UAV2", "UAV5"}) {
    const auto c = children(s, leader);
    ASSERT_EQ(c.size(), 1u) << leader;
    followers.insert(c[0]);
  }
  EXPECT_EQ(followers, (std::set<std::string>{"UAV4", "UGV1", "UGV3"}));
}

TEST(GoldenRun, AutomaticGivesTheDoubleLoadToTheIdlestLeader) {
  const auto s = snapshot_at(golden_trace(), 16);
  EXPECT_EQ(layer(s, 1), (std::set<std::string>{"UAV1", "UAV3", "UAV5"}));
  EXPECT_EQ(children(s, "UAV3").size(), 2u);
  EXPECT_EQ(children(s, "UAV1").size(), 1u);
  EXPECT_EQ(children(s, "UAV5").size(), 1u);
  EXPECT_TRUE(s["uncontrolled"].empty());
}

TEST(GoldenRun, NewArrivalJoinsTheLessUtilizedOpenLeader) {
  const auto before = snapshot_at(golden_trace(), 16);
  const auto s = snapshot_at(golden_trace(), 18);
  EXPECT_EQ(master_of(s, "UGV2"), "UAV1");
  for (const auto& l : before["topology"]["links"]) EXPECT_EQ(master_of(s, l["slave"]), l["master"]);
}

TEST(GoldenRun, ManualHolonicClustersTheGroundVehicles) {
  const auto s = snapshot_at(golden_trace(), 20);
  EXPECT_EQ(layer(s, 1), (std::set<std::string>{"UAV1", "UAV3", "UAV5"}));
  ASSERT_EQ(s["topology"]["clusters"].size(), 1u);
  EXPECT_EQ(s["topology"]["clusters"][0]["head"], "UGV2");
  EXPECT_EQ(s["topology"]["clusters"][0]["members"], json::array({"UGV1", "UGV3"}));
  EXPECT_EQ(master_of(s, "UGV2"), "UAV3");
  EXPECT_EQ(master_of(s, "UAV2"), "UAV1");
  EXPECT_EQ(master_of(s, "UAV4"), "UAV5");
  EXPECT_EQ(layer(s, 3), (std::set<std::string>{"UGV1", "UGV3"}));
}

TEST(GoldenRun, OperatorCommandsAppearAsMessages) {
  std::vector<json> at12;
  for (const auto& e : golden_trace()) {
    if (e.kind == TraceKind::Message && e.at == from_minutes(12)) at12.push_back(e.payload);
  }
  ASSERT_EQ(at12.size(), 2u);
  EXPECT_EQ(at12[0]["performative"], "REQUEST");
  EXPECT_EQ(at12[0]["sender"], "operator");
  EXPECT_EQ(at12[0]["receiver"], "MCC");
  EXPECT_EQ(at12[0]["content"]["pattern"], "Central");
  EXPECT_EQ(at12[1]["performative"], "AGREE");
  EXPECT_EQ(at12[1]["conversation"], at12[0]["conversation"]);
}

TEST(GoldenRun, DecisionsCarryRuleTags) {
  std::set<std::string> rules;
  for (const auto& e : golden_trace()) {
    if (e.kind == TraceKind::Decision) rules.insert(e.payload["rule"].get<std::string>());
  }
  for (const auto* r : {"R1", "R2", "R3", "R4", "R5", "R6", "R7", "R8", "R9", "C8", "C9"}) {
    EXPECT_TRUE(rules.contains(r)) << r;
  }
}

TEST(GoldenRun, ConnectedUvsAreControlled) {
  for (const auto& s : snapshots(golden_trace())) {
    for (auto it = s["states"].begin(); it != s["states"].end(); ++it) {
      const bool connected = s["topology"]["layers"].contains(it.key());
      const bool controlled = state_of(s, it.key()) == fleet::UvState::Controlled;
      EXPECT_EQ(connected, controlled) << it.key() << " at " << s["time"];
    }
  }
}

TEST(GoldenRun, NaturalClockUtilizations) {
  // G3 registered at 2, controlled 4..12 and again from 14.
  const auto s16 = snapshot_at(golden_trace(), 16);
  EXPECT_NEAR(s16["utilization"]["UGV3"].get<double>(), 100.0 * 10 / 14, 1e-9);
  EXPECT_NEAR(s16["utilization"]["UGV1"].get<double>(), 75.0, 1e-9);
  EXPECT_EQ(s16["clocks"]["UGV3"]["registered"], 14.0);
}

// ---------------------------------------------------------------------------
// Determinism and stepping

TEST(Simulator, SameSeedSameTrace) {
  const auto a = run(golden(), 42);
  const auto b = run(golden(), 42);
  EXPECT_EQ(trace_jsonl(a), trace_jsonl(b));
  EXPECT_EQ(trace_hash(a), trace_hash(b));
  EXPECT_EQ(trace_hash(a).size(), 16u);
}

TEST(Simulator, TraceIndicesAreDenseAndTimesMonotone) {
  const auto& t = golden_trace();
  for (std::size_t i = 0; i < t.size(); ++i) {
    EXPECT_EQ(t[i].index, i);
    if (i) EXPECT_LE(t[i - 1].at, t[i].at);
  }
}

TEST(Simulator, SteppingMatchesBatchRun) {
  Simulator sim(golden(), golden().seed);
  sim.advance_to(from_minutes(4.5));
  EXPECT_EQ(sim.now(), from_minutes(4));
  sim.step();
  sim.advance_to(from_minutes(13.5));
  sim.run_to_end();
  EXPECT_TRUE(sim.finished());
  EXPECT_EQ(trace_hash(sim.trace()), trace_hash(golden_trace()));
}

TEST(Simulator, InjectedCommandMatchesScheduledCommand) {
  Scenario base = golden();
  std::erase_if(base.events, [](const ScenarioEvent& e) {
    return std::holds_alternative<OperatorCommand>(e.action) && e.at == from_minutes(20);
  });
  Simulator sim(base, base.seed);
  sim.advance_to(from_minutes(18));
  ASSERT_EQ(sim.command_time(), from_minutes(20));
  sim.inject({*sim.command_time(), OperatorCommand{mcc::OperationMode::manual(topo::PatternLabel::Holonic)}});
  sim.run_to_end();
  EXPECT_EQ(trace_hash(sim.trace()), trace_hash(golden_trace()));
  EXPECT_THROW(sim.inject({from_minutes(10), FailureInjection{uv("UAV1")}}), ArgumentError);
}

TEST(Simulator, CommandTimeFollowsTheAdvanceCursor) {
  Simulator sim(golden(), golden().seed);
  sim.advance_to(from_minutes(9));
  EXPECT_EQ(sim.now(), from_minutes(8));
  EXPECT_EQ(sim.command_time(), from_minutes(9));
  sim.run_to_end();
  EXPECT_FALSE(sim.command_time().has_value());
}

TEST(Simulator, IllegalScriptedTransitionReportsContext) {
  const auto s = parse_scenario(minimal_scenario(R"([{"at": 1, "type": "uv_event", "uv": "UAV1", "event": "RegisterAccepted"}])"));
  try {
    run(s, 1);
    FAIL() << "expected SimulationError";
  } catch (const SimulationError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("t=1"), std::string::npos) << what;
    EXPECT_NE(what.find("UAV1"), std::string::npos) << what;
    EXPECT_NE(what.find("RegisterAccepted"), std::string::npos) << what;
  }
}

TEST(Simulator, FailedClusterHeadIsReplacedByItsIdlestMember) {
  Scenario s = golden();
  s.horizon = from_minutes(22);
  s.sample_at.push_back(from_minutes(22));
  s.events.push_back({from_minutes(21), FailureInjection{uv("UGV2")}});
  const auto trace = run(s, s.seed);
  const auto snap = snapshot_at(trace, 22);
  ASSERT_EQ(snap["topology"]["clusters"].size(), 1u);
  EXPECT_EQ(snap["topology"]["clusters"][0]["head"], "UGV1");
  EXPECT_EQ(snap["topology"]["clusters"][0]["members"], json::array({"UGV3"}));
  EXPECT_EQ(master_of(snap, "UGV1"), "UAV3");
  EXPECT_EQ(state_of(snap, "UGV2"), fleet::UvState::Unavailable);
  bool promoted = false;
  for (const auto& e : trace) {
    if (e.kind == TraceKind::Decision && e.payload["kind"] == "promote") {
      promoted = true;
      EXPECT_EQ(e.payload["trigger"], "failure");
      EXPECT_EQ(e.payload["args"], json::array({"UGV1", "UGV2"}));
    }
  }
  EXPECT_TRUE(promoted);
}

TEST(Simulator, FailureOfUnavailableUvIsIgnored) {
  Scenario s = golden();
  s.events.insert(s.events.begin(), {from_minutes(0), FailureInjection{uv("UAV1")}});
  EXPECT_EQ(trace_hash(run(s, s.seed)), trace_hash(golden_trace()));
}

// Churned random scenarios keep every snapshot internally consistent.
TEST(SimulatorProperties, RandomChurnKeepsInvariants) {
  std::mt19937_64 g(2024);
  for (int i = 0; i < 150; ++i) {
    const auto s = gen::random_scenario(g);
    Trace trace;
    ASSERT_NO_THROW(trace = run(s, s.seed)) << scenario_to_json(s).dump();
    ASSERT_EQ(trace_hash(trace), trace_hash(run(s, s.seed)));
    for (const auto& snap : snapshots(trace)) {
      const auto topology = topology_from_json(snap["topology"]);
      EXPECT_TRUE(topo::structural_violations(topology).empty());
      EXPECT_EQ(topo::classify_pattern(topology), *topo::parse_pattern(snap["pattern"].get<std::string>()));
      const auto oracle = uvf::testing::traffic_oracle(topology, s.limits.uplink_rate);
      EXPECT_EQ(snap["traffic"]["mcc"].get<std::int64_t>(), oracle.mcc);
      for (auto it = snap["traffic"]["per_uv"].begin(); it != snap["traffic"]["per_uv"].end(); ++it) {
        EXPECT_EQ(it->get<std::int64_t>(), oracle.at(uv(it.key())));
      }
      for (auto it = snap["utilization"].begin(); it != snap["utilization"].end(); ++it) {
        EXPECT_GE(it->get<double>(), 0.0);
        EXPECT_LE(it->get<double>(), 100.0);
      }
      for (auto it = snap["clocks"].begin(); it != snap["clocks"].end(); ++it) {
        const auto& c = *it;
        EXPECT_NEAR(c["available"].get<double>(), c["unregistered"].get<double>() + c["registered"].get<double>(), 1e-9);
        EXPECT_NEAR(c["registered"].get<double>(), c["uncontrolled"].get<double>() + c["controlled"].get<double>(),
                    1e-9);
        EXPECT_LE(c["available"].get<double>() + c["unavailable"].get<double>(), snap["time"].get<double>() + 1e-9);
      }
      std::set<std::string> uncontrolled;
      for (const auto& u : snap["uncontrolled"]) uncontrolled.insert(u);
      for (auto it = snap["states"].begin(); it != snap["states"].end(); ++it) {
        const auto state = *fleet::parse_state(it->get<std::string>());
        const bool expected = fleet::is_registered(state) && !topology.is_connected(uv(it.key()));
        EXPECT_EQ(uncontrolled.contains(it.key()), expected) << it.key();
      }
    }
  }
}

TEST(SimulatorProperties, SeedChangesChurn) {
  std::mt19937_64 g(5);
  auto s = gen::random_scenario(g);
  s.horizon = from_minutes(30);
  std::set<std::string> hashes;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) hashes.insert(trace_hash(run(s, seed)));
  EXPECT_GT(hashes.size(), 1u);
}

// ---------------------------------------------------------------------------
// Scenario parsing

TEST(ScenarioParse, GoldenFileLoads) {
  const auto& s = golden();
  EXPECT_EQ(s.fleet.size(), 8u);
  EXPECT_EQ(s.sample_points().size(), 9u);
  EXPECT_EQ(s.horizon, from_minutes(20));
  EXPECT_EQ(s.limits, topo::CapacityLimits{});
  ASSERT_TRUE(s.reference.has_value());
  EXPECT_EQ(s.reference->rows.size(), 9u);
}

TEST(ScenarioParse, SyntaxErrorReportsLine) {
  try {
    parse_scenario("{\n  \"schema_version\": 1,\n  \"fleet\": [,]\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3);
  }
}

TEST(ScenarioParse, FieldErrorReportsPathAndLine) {
  const auto text = minimal_scenario(R"([
    {"at": 1, "type": "uv_event", "uv": "UAV1", "event": "Init"},
    {"at": "soon", "type": "uv_event", "uv": "UAV1", "event": "RegisterAccepted"}
  ])");
  try {
    parse_scenario(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "events[1].at");
    EXPECT_EQ(e.line(), 12);
    EXPECT_NE(std::string(e.what()).find("events[1].at"), std::string::npos);
  }
}

TEST(ScenarioParse, MissingFieldReportsPath) {
  const auto text = minimal_scenario(R"([{"at": 1, "type": "uv_event", "event": "Init"}])");
  try {
    parse_scenario(text);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "events[0].uv");
  }
}

TEST(ScenarioParse, RejectsBadEnumerations) {
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 1, "type": "teleport", "uv": "UAV1"}])")), ParseError);
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 1, "type": "uv_event", "uv": "UAV1", "event": "Explode"}])")),
               ParseError);
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 1, "type": "operator", "mode": "manual", "pattern": "None"}])")),
               ParseError);
  EXPECT_THROW(parse_scenario(replace_all(minimal_scenario("[]"), "\"schema_version\": 1", "\"schema_version\": 2")),
               ParseError);
}

TEST(ScenarioValidate, RejectsInconsistentScenarios) {
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 1, "type": "failure", "uv": "UAV7"}])")), ValidationError);
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 2, "type": "failure", "uv": "UAV1"},
                                                    {"at": 1, "type": "failure", "uv": "UAV1"}])")),
               ValidationError);
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 9, "type": "failure", "uv": "UAV1"}])")), ValidationError);
  EXPECT_THROW(parse_scenario(minimal_scenario(R"([{"at": 1, "type": "utilization_override", "values": {"UAV1": 101}}])")),
               ValidationError);
  EXPECT_THROW(parse_scenario(replace_all(minimal_scenario("[]"), "\"UAV\": 1", "\"UAV\": 0")), ValidationError);
  EXPECT_THROW(parse_scenario(replace_all(minimal_scenario("[]"), "\"id\": \"UGV1\", \"kind\": \"UGV\"",
                                          "\"id\": \"UGV1\", \"kind\": \"UAV\"")),
               ValidationError);
  EXPECT_THROW(parse_scenario(replace_all(minimal_scenario("[]"), "\"horizon\": 6", "\"horizon\": 0")), ValidationError);
  EXPECT_THROW(parse_scenario(replace_all(minimal_scenario("[]"), "\"horizon\": 6",
                                          "\"horizon\": 6, \"sample_at\": [2, 2]")),
               ValidationError);
  EXPECT_THROW(parse_scenario(replace_all(minimal_scenario("[]"), "\"horizon\": 6",
                                          "\"horizon\": 6, \"churn\": {\"per_minute\": {\"Fail\": 1.5}}")),
               ValidationError);
}

TEST(ScenarioParse, MissingFileIsAParseError) { EXPECT_THROW(load_scenario("/nonexistent/x.json"), ParseError); }

TEST(Simulator, EmptyEventListGivesOnlyEmptySnapshots) {
  const auto trace = run(parse_scenario(minimal_scenario("[]")), 1);
  ASSERT_EQ(trace.size(), 3u);
  for (const auto& e : trace) {
    ASSERT_EQ(e.kind, TraceKind::Snapshot);
    EXPECT_EQ(e.payload["pattern"], "None");
    EXPECT_TRUE(e.payload["topology"]["layers"].empty());
    EXPECT_TRUE(e.payload["uncontrolled"].empty());
  }
  const auto m = extract_metrics(trace);
  ASSERT_EQ(m.traffic.size(), 3u);
  for (const auto& row : m.traffic) {
    EXPECT_EQ(row.mcc, 0);
    for (const auto& [_, cell] : row.cells) EXPECT_EQ(cell, 0);
  }
}

// ---------------------------------------------------------------------------
// Round trips

TEST(RoundTrip, ScenarioJson) {
  const auto j = scenario_to_json(golden());
  const auto again = parse_scenario(j.dump(2));
  EXPECT_EQ(scenario_to_json(again), j);
  EXPECT_EQ(trace_hash(run(again, again.seed)), trace_hash(golden_trace()));

  std::mt19937_64 g(8);
  for (int i = 0; i < 50; ++i) {
    const auto s = gen::random_scenario(g);
    const auto sj = scenario_to_json(s);
    EXPECT_EQ(scenario_to_json(parse_scenario(sj.dump())), sj);
  }
}

TEST(RoundTrip, TraceJsonl) {
  const auto text = trace_jsonl(golden_trace());
  const auto back = parse_trace_jsonl(text);
  EXPECT_EQ(trace_jsonl(back), text);
  EXPECT_EQ(trace_hash(back), trace_hash(golden_trace()));
  EXPECT_THROW(parse_trace_jsonl("{\"index\": 0}\n"), ParseError);
}

TEST(RoundTrip, TopologyJson) {
  std::mt19937_64 g(19);
  for (int i = 0; i < 300; ++i) {
    auto f = gen::random_valid_topology(g);
    f.topology.pattern = topo::classify_pattern(f.topology);
    EXPECT_EQ(topology_from_json(topology_to_json(f.topology)), f.topology);
  }
}

TEST(RoundTrip, MetricsJson) {
  const auto m = extract_metrics(golden_trace());
  EXPECT_EQ(metrics_from_json(json::parse(metrics_to_json(m).dump())), m);
  EXPECT_THROW(extract_metrics({}), ArgumentError);
}

TEST(Export, CsvAndJsonAgree) {
  const auto dir = std::filesystem::temp_directory_path() / "uvf_export_test";
  std::filesystem::remove_all(dir);
  const auto files = export_metrics(golden_trace(), ExportFormat::Both, dir, golden().reference);
  ASSERT_EQ(files.size(), 4u);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream b;
    b << in.rdbuf();
    return b.str();
  };
  const auto m = metrics_from_json(json::parse(slurp(dir / "metrics.json")));
  EXPECT_EQ(m, extract_metrics(golden_trace()));

  std::istringstream csv(slurp(dir / "traffic.csv"));
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "test_case,time,Tr_A1,Tr_A2,Tr_A3,Tr_A4,Tr_A5,Tr_G1,Tr_G2,Tr_G3,Tr_MCC");
  for (const auto& row : m.traffic) {
    ASSERT_TRUE(std::getline(csv, line));
    std::vector<std::string> cells;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), m.columns.size() + 3);
    EXPECT_EQ(std::stoi(cells[0]), row.test_case);
    EXPECT_EQ(std::stod(cells[1]), row.time);
    for (std::size_t c = 0; c < m.columns.size(); ++c) EXPECT_EQ(std::stoll(cells[c + 2]), row.cells.at(m.columns[c]));
    EXPECT_EQ(std::stoll(cells.back()), row.mcc);
  }

  std::istringstream ucsv(slurp(dir / "utilization.csv"));
  std::getline(ucsv, line);
  EXPECT_EQ(line, "time,U_A1,U_A2,U_A3,U_A4,U_A5,U_G1,U_G2,U_G3");
  for (const auto& row : m.utilization) {
    ASSERT_TRUE(std::getline(ucsv, line));
    std::stringstream ls(line);
    std::string c;
    std::getline(ls, c, ',');
    EXPECT_EQ(std::stod(c), row.time);
    for (const auto& col : m.columns) {
      std::getline(ls, c, ',');
      EXPECT_NEAR(std::stod(c), row.values.at(col), 0.005);
    }
  }

  const auto diff = json::parse(slurp(dir / "traffic_reference_diff.json"));
  ASSERT_EQ(diff.size(), 1u);
  EXPECT_EQ(diff[0]["emitted"], 1600);
}

}  // namespace
