// Acceptance suite: one line per primary criterion, exit status 0 only when
// every criterion passes.

#include <algorithm>
#include <chrono>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "../common/follower_oracle.hpp"
#include "../common/generators.hpp"
#include "../common/http_client.hpp"
#include "../common/traffic_oracle.hpp"
#include "../common/transition_table.hpp"
#include "uvf/aclbus.hpp"
#include "uvf/gateway.hpp"

namespace {

using namespace uvf;
using sim::json;
using fleet::UvId;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (failures.size() < 5) failures.push_back(what);
  }
};

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::filesystem::path golden_path() {
  return std::filesystem::path(UVF_SOURCE_DIR) / "scenarios" / "golden_fleet.json";
}

const sim::Scenario& golden() {
  static const sim::Scenario s = sim::load_scenario(golden_path());
  return s;
}

const sim::Trace& golden_trace() {
  static const sim::Trace t = sim::run(golden(), golden().seed);
  return t;
}

std::vector<json> snapshots(const sim::Trace& trace) {
  std::vector<json> out;
  for (const auto& e : trace) {
    if (e.kind == sim::TraceKind::Snapshot) out.push_back(e.payload);
  }
  return out;
}

json snapshot_at(double minutes) {
  for (const auto& s : snapshots(golden_trace())) {
    if (s["time"].get<double>() == minutes) return s;
  }
  return json::object();
}

std::set<std::string> layer(const json& snap, int index) {
  std::set<std::string> out;
  if (!snap.contains("topology")) return out;
  for (auto it = snap["topology"]["layers"].begin(); it != snap["topology"]["layers"].end(); ++it) {
    if (it->get<int>() == index) out.insert(it.key());
  }
  return out;
}

std::string master_of(const json& snap, const std::string& slave) {
  if (!snap.contains("topology")) return "";
  for (const auto& l : snap["topology"]["links"]) {
    if (l["slave"] == slave) return l["master"];
  }
  return "";
}

std::size_t child_count(const json& snap, const std::string& master) {
  if (!snap.contains("topology")) return 0;
  std::size_t n = 0;
  for (const auto& l : snap["topology"]["links"]) n += l["master"] == master;
  return n;
}

// Golden traffic table as printed, columns A1..A5, G1..G3, MCC.
const std::vector<std::vector<std::int64_t>> kPrintedTable = {
    {0, 0, 0, 0, 0, 0, 0, 0, 0},
    {0, 0, 0, 800, 0, 0, 0, 0, 1600},
    {0, 0, 0, 800, 0, 0, 0, 0, 2400},
    {0, 0, 0, 800, 800, 0, 0, 0, 4000},
    {0, 0, 0, 0, 0, 0, 0, 0, 2400},
    {800, 800, 0, 0, 800, 0, 0, 0, 4800},
    {800, 0, 1600, 0, 800, 0, 0, 0, 5600},
    {800, 0, 1600, 0, 800, 0, 0, 0, 6400},
    {4000, 0, 5600, 0, 4000, 1600, 1600, 1600, 16000},
};

Outcome criterion_1() {
  Outcome o;
  const auto start = Clock::now();
  const auto trace = sim::run(golden(), golden().seed);
  const auto metrics = sim::extract_metrics(trace);
  const double elapsed = seconds_since(start);

  o.require(metrics.columns == std::vector<std::string>{"A1", "A2", "A3", "A4", "A5", "G1", "G2", "G3"},
            "unexpected column set");
  o.require(metrics.traffic.size() == kPrintedTable.size(), "expected 9 traffic rows");
  int matching = 0;
  int cells = 0;
  std::vector<std::string> mismatched;
  for (std::size_t k = 0; k < std::min(metrics.traffic.size(), kPrintedTable.size()); ++k) {
    const auto& row = metrics.traffic[k];
    for (std::size_t c = 0; c <= metrics.columns.size() && c < 9; ++c) {
      const std::int64_t emitted = c < metrics.columns.size() ? row.cells.at(metrics.columns[c]) : row.mcc;
      const std::string column = c < metrics.columns.size() ? metrics.columns[c] : "MCC";
      ++cells;
      if (emitted == kPrintedTable[k][c]) {
        ++matching;
      } else {
        mismatched.push_back("sample " + std::to_string(k + 1) + " " + column + "=" + std::to_string(emitted));
      }
    }
  }
  o.require(cells == 81, "expected 81 cells");
  o.require(matching == 80, std::to_string(matching) + " matching cells");
  o.require(mismatched == std::vector<std::string>{"sample 8 A1=1600"}, "the differing cell must be sample 8 A1=1600");

  const auto diffs = sim::compare_reference(metrics, *golden().reference);
  o.require(diffs.size() == 1 && diffs[0].test_case == 8 && diffs[0].column == "A1" && diffs[0].expected == 800 &&
                diffs[0].emitted == 1600 && !diffs[0].note.empty(),
            "reference diff must hold the single annotated cell");
  const auto diff_json = sim::reference_diff_to_json(diffs);
  o.require(diff_json.is_array() && diff_json.size() == 1 && diff_json[0].contains("note"),
            "machine-readable diff must carry the note");
  o.require(elapsed < 5.0, "runtime " + std::to_string(elapsed) + " s");

  std::ostringstream d;
  d << matching << "/" << cells << " cells match, annotated cell sample 8 A1 = 1600, runtime " << elapsed << " s";
  o.detail = d.str();
  return o;
}

Outcome criterion_2() {
  Outcome o;
  std::vector<std::string> patterns;
  for (const auto& s : snapshots(golden_trace())) patterns.push_back(s["pattern"]);
  const std::vector<std::string> expected = {"None",    "Hierarchical", "Hierarchical", "Hierarchical", "Central",
                                             "Hierarchical", "Hierarchical", "Hierarchical", "Holonic"};
  std::string joined;
  for (const auto& p : patterns) joined += (joined.empty() ? "" : " ") + p;
  o.require(patterns == expected, "patterns: " + joined);
  o.detail = joined;
  return o;
}

Outcome criterion_3() {
  Outcome o;
  const auto s6 = snapshot_at(14);
  o.require(layer(s6, 1) == std::set<std::string>{"UAV1", "UAV2", "UAV5"}, "sample 6 layer 1");
  for (const auto* leader : {"UAV1", "UAV2", "UAV5"}) {
    o.require(child_count(s6, leader) == 1, std::string("sample 6 leader ") + leader + " needs one follower");
  }

  const auto s7 = snapshot_at(16);
  o.require(layer(s7, 1) == std::set<std::string>{"UAV1", "UAV3", "UAV5"}, "sample 7 layer 1");
  o.require(s7.contains("traffic") && s7["traffic"]["per_uv"].value("UAV3", 0) == 1600, "sample 7 UAV3 traffic");

  const auto s8 = snapshot_at(18);
  o.require(master_of(s8, "UGV2") == "UAV1", "sample 8 UGV2 master");

  const auto s9 = snapshot_at(20);
  const bool one_cluster = s9.contains("topology") && s9["topology"]["clusters"].size() == 1;
  o.require(one_cluster && s9["topology"]["clusters"][0]["head"] == "UGV2", "sample 9 cluster head");
  o.require(master_of(s9, "UGV2") == "UAV3", "sample 9 head under UAV3");
  o.require(master_of(s9, "UAV2") == "UAV1", "sample 9 UAV1 leads UAV2");
  o.require(master_of(s9, "UAV4") == "UAV5", "sample 9 UAV5 leads UAV4");
  o.detail =
      "sample 6 layer 1 {UAV1,UAV2,UAV5}; sample 7 layer 1 {UAV1,UAV3,UAV5}, UAV3 1600; sample 8 UAV1 leads UGV2; "
      "sample 9 head UGV2 under UAV3, UAV1<-UAV2, UAV5<-UAV4";
  return o;
}

Outcome criterion_4() {
  Outcome o;
  const auto start = Clock::now();
  std::mt19937_64 g(4001);
  int ledger_mismatches = 0;
  int pattern_mismatches = 0;
  constexpr int kCases = 1000;
  for (int i = 0; i < kCases; ++i) {
    auto f = gen::random_valid_topology(g);
    acl::Bus bus;
    std::vector<UvId> ids;
    for (const auto& r : f.records) ids.push_back(r.id);
    acl::register_fleet(bus, ids);
    const auto ledger = acl::run_telemetry_cycle(bus, f.topology, SimDuration{0});
    const auto formula = topo::compute_traffic(f.topology, {});
    const auto oracle = uvf::testing::traffic_oracle(f.topology, topo::CapacityLimits{}.uplink_rate);
    if (!(ledger == formula) || !(formula == oracle)) ++ledger_mismatches;
    if (mcc::infer_pattern(f.topology) != topo::classify_pattern(f.topology)) ++pattern_mismatches;
  }
  const double elapsed = seconds_since(start);
  o.require(ledger_mismatches == 0, std::to_string(ledger_mismatches) + " traffic mismatches");
  o.require(pattern_mismatches == 0, std::to_string(pattern_mismatches) + " pattern mismatches");
  o.require(elapsed < 60.0, "runtime " + std::to_string(elapsed) + " s");
  std::ostringstream d;
  d << kCases << " topologies, ledger = formula = oracle, backward pattern = classifier, " << elapsed << " s";
  o.detail = d.str();
  return o;
}

Outcome criterion_5() {
  Outcome o;
  std::mt19937_64 g(5001);
  constexpr int kCases = 1000;
  for (int i = 0; i < kCases; ++i) {
    const auto s = gen::random_snapshot(g);
    const auto r = mcc::synthesize_topology(s);
    const auto tag = "snapshot " + std::to_string(i) + ": ";
    const auto v = topo::validate_topology(r.topology, s.limits, s.uvs);
    o.require(v.empty(), tag + (v.empty() ? "" : v.front().detail));
    o.require(r.topology.children_of(topo::Mcc{}).size() <= static_cast<std::size_t>(s.limits.mcc_max_links),
              tag + "C8");
    for (const auto& uv : r.topology.connected_uvs()) {
      if (r.topology.layer_of(uv) >= 1) {
        o.require(r.topology.children_of(uv).size() <= static_cast<std::size_t>(s.limits.leader_max_followers),
                  tag + "C9 followers of " + uv.name());
      }
    }
    for (const auto& c : r.topology.clusters()) {
      o.require(c.members.size() <= static_cast<std::size_t>(s.limits.leader_max_followers),
                tag + "C9 members of " + c.head.name());
    }
    std::set<UvId> uncontrolled(r.uncontrolled.begin(), r.uncontrolled.end());
    for (const auto* rec : s.registered()) {
      o.require(r.topology.is_connected(rec->id) != uncontrolled.contains(rec->id),
                tag + "uncontrolled listing of " + rec->id.name());
    }
    o.require(uncontrolled.size() == r.uncontrolled.size(), tag + "duplicate uncontrolled entries");
  }
  o.detail = std::to_string(kCases) + " snapshots valid, C8/C9 respected, unplaced UVs listed as uncontrolled";
  return o;
}

Outcome criterion_6() {
  Outcome o;
  using fleet::UvState;
  int pairs = 0;
  for (auto s : fleet::kAllStates) {
    for (auto e : fleet::kAllEvents) {
      ++pairs;
      const auto expected = uvf::testing::expected_transition(s, e);
      o.require(fleet::transition_target(s, e) == expected,
                std::string(fleet::to_string(s)) + " + " + std::string(fleet::to_string(e)));
      auto r = fleet::UvRecord::make(UvId::parse("UAV1"), true);
      r.state = s;
      if (expected) {
        o.require(fleet::apply_event(r, e, SimDuration{0}).state == *expected, "apply_event target");
      } else {
        bool threw = false;
        try {
          fleet::apply_event(r, e, SimDuration{0});
        } catch (const fleet::IllegalTransition&) {
          threw = true;
        }
        o.require(threw, "illegal transition accepted");
      }
    }
  }

  std::mt19937_64 g(6001);
  double worst = 0;
  constexpr int kTraces = 1000;
  for (int trace = 0; trace < kTraces; ++trace) {
    auto r = fleet::UvRecord::make(UvId::parse("UGV2"), false);
    SimDuration now{0};
    SimDuration counted_time{0};
    for (int step = 0; step < 40; ++step) {
      const SimDuration dt{static_cast<std::int64_t>(g() % 120000)};
      now += dt;
      if (r.state != UvState::Initial) counted_time += dt;
      const auto e = fleet::kAllEvents[g() % fleet::kAllEvents.size()];
      r = fleet::transition_target(r.state, e) ? fleet::apply_event(r, e, now) : fleet::advance_clocks(r, dt);
      const auto& c = r.clocks;
      worst = std::max(worst, std::abs(to_minutes(c.available) - to_minutes(c.unregistered + c.registered)));
      worst = std::max(worst, std::abs(to_minutes(c.registered) - to_minutes(c.uncontrolled + c.controlled)));
      worst = std::max(worst, std::abs(to_minutes(c.available + c.unavailable) - to_minutes(counted_time)));
      const double u = fleet::utilization(c);
      o.require(u >= 0 && u <= 100, "utilization out of bounds");
    }
  }
  o.require(worst <= 1e-9, "partition error " + std::to_string(worst) + " min");
  std::ostringstream d;
  d << pairs << " state x event pairs match the table; " << kTraces << " random traces, worst partition error "
    << worst << " min";
  o.detail = d.str();
  return o;
}

// Collapses the documented random choices so that runs with different seeds
// can be compared: the order of equal-utilization link decisions at one time
// point, and which of UGV1/UGV3 each sample 6 leader receives.
std::vector<json> normalized(const sim::Trace& trace) {
  const double tie_time = 14;
  auto pair_name = [](const json& name) -> json {
    return name == "UGV1" || name == "UGV3" ? json("UGV1|UGV3") : name;
  };
  std::vector<json> out;
  std::vector<json> group;
  auto flush = [&] {
    std::sort(group.begin(), group.end(), [](const json& a, const json& b) { return a.dump() < b.dump(); });
    for (auto& d : group) out.push_back(std::move(d));
    group.clear();
  };
  for (const auto& e : trace) {
    json j = e.to_json();
    j.erase("index");
    auto& p = j["payload"];
    if (e.kind == sim::TraceKind::Decision) {
      if (to_minutes(e.at) == tie_time && p["kind"] == "link" && p["args"].size() == 2) {
        p["args"][1] = pair_name(p["args"][1]);
        p.erase("text");
      }
      if (!group.empty() && group.front()["at"] != j["at"]) flush();
      group.push_back(std::move(j));
      continue;
    }
    flush();
    if (e.kind == sim::TraceKind::Snapshot && to_minutes(e.at) == tie_time) {
      for (auto& l : p["topology"]["links"]) l["slave"] = pair_name(l["slave"]);
      std::sort(p["topology"]["links"].begin(), p["topology"]["links"].end(),
                [](const json& a, const json& b) { return a.dump() < b.dump(); });
    }
    out.push_back(std::move(j));
  }
  flush();
  return out;
}

Outcome criterion_7() {
  Outcome o;
  o.require(sim::trace_jsonl(sim::run(golden(), golden().seed)) == sim::trace_jsonl(golden_trace()),
            "golden rerun differs");
  std::mt19937_64 g(7001);
  constexpr int kScenarios = 50;
  for (int i = 0; i < kScenarios; ++i) {
    const auto s = gen::random_scenario(g);
    o.require(sim::trace_jsonl(sim::run(s, s.seed)) == sim::trace_jsonl(sim::run(s, s.seed)),
              "random scenario " + std::to_string(i) + " not reproducible");
  }

  const auto reference = normalized(golden_trace());
  int differing = 0;
  std::set<std::string> pairings;
  constexpr std::uint64_t kSeeds = 64;
  for (std::uint64_t seed = 1; seed <= kSeeds; ++seed) {
    const auto trace = sim::run(golden(), seed);
    differing += sim::trace_hash(trace) != sim::trace_hash(golden_trace());
    o.require(normalized(trace) == reference, "seed " + std::to_string(seed) + " differs beyond the tie-breaks");
    for (const auto& e : trace) {
      if (e.kind == sim::TraceKind::Snapshot && to_minutes(e.at) == 14) {
        for (const auto& l : e.payload["topology"]["links"]) {
          if (l["master"] == "UAV1") pairings.insert(l["slave"].get<std::string>());
        }
      }
    }
  }
  std::ostringstream d;
  d << "byte-identical reruns (golden + " << kScenarios << " churned scenarios); " << differing << "/" << kSeeds
    << " seeds differ only in tie order and the sample 6 follower pairing (" << pairings.size()
    << " distinct UAV1 followers seen)";
  o.detail = d.str();
  return o;
}

Outcome criterion_8() {
  Outcome o;
  std::mt19937_64 g(8001);
  constexpr int kCases = 2000;
  for (int i = 0; i < kCases; ++i) {
    const auto c = gen::random_follower_case(g);
    const auto out = mcc::assign_followers(c.leaders, c.followers, c.snapshot, c.topology);
    const auto best = uvf::testing::brute_force_followers(c.topology, c.leaders, c.followers, c.snapshot.limits);
    std::int64_t max_load = 0;
    for (const auto& l : c.leaders) {
      max_load = std::max(max_load, topo::subtree_load(out.topology, l, c.snapshot.limits));
    }
    const auto tag = "case " + std::to_string(i) + ": ";
    o.require(c.followers.size() - out.capacity_exhausted.size() == best.attached, tag + "attached count");
    o.require(max_load == best.max_load,
              tag + "max load " + std::to_string(max_load) + " vs " + std::to_string(best.max_load));
  }
  o.detail = std::to_string(kCases) + " cases (<= 3 leaders, <= 6 followers) equal the brute-force optimum";
  return o;
}

Outcome criterion_9() {
  Outcome o;
  auto scenario = golden();
  std::erase_if(scenario.events, [](const sim::ScenarioEvent& e) {
    if (!std::holds_alternative<sim::OperatorCommand>(e.action)) return false;
    return e.at == from_minutes(12) || e.at == from_minutes(14) || e.at == from_minutes(20);
  });
  const auto seed = scenario.seed;
  auto session = std::make_shared<gateway::Session>(std::move(scenario), seed, 0.0);
  gateway::Server server(session, "127.0.0.1", 0, 2);
  uvf::testing::Client client(server.port());

  auto command = [&](const json& payload, std::optional<double> lands_at = std::nullopt) {
    const auto r = client.command(payload);
    o.require(r.status == 200, payload.dump() + " -> " + std::to_string(r.status));
    if (lands_at) o.require(r.body.value("at", -1.0) == *lands_at, payload.dump() + " landed at the wrong time");
  };
  command({{"advance_to", 8}});
  command({{"set_mode", "manual"}, {"pattern", "Central"}}, 12.0);
  command({{"advance_to", 13}});
  command({{"set_mode", "manual"}, {"pattern", "Hierarchical"}}, 14.0);
  command({{"advance_to", 18}});
  command({{"set_mode", "manual"}, {"pattern", "Holonic"}}, 20.0);
  command({{"set_pace", "max"}});
  o.require(session->wait_finished(std::chrono::seconds(30)), "session did not finish");

  const auto exported = sim::parse_scenario(client.get("/session/scenario").body.dump());
  const auto replay_hash = sim::trace_hash(sim::run(exported, exported.seed));
  const auto golden_hash = sim::trace_hash(golden_trace());
  o.require(replay_hash == golden_hash, "replay hash " + replay_hash + " != golden " + golden_hash);

  const auto page = client.get("/trace?from=0").body;
  sim::Trace live;
  for (const auto& e : page["events"]) live.push_back(sim::TraceEvent::from_json(e));
  o.require(sim::trace_hash(live) == golden_hash, "live trace hash differs");

  server.stop();
  session->stop();
  o.detail = "commands at 12, 14 and 20 via HTTP; exported scenario replays to hash " + replay_hash;
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"golden traffic table", criterion_1},   {"pattern sequence", criterion_2},
      {"structural decisions", criterion_3},   {"oracle equivalence", criterion_4},
      {"constraint fuzzing", criterion_5},     {"state machine exactness", criterion_6},
      {"determinism", criterion_7},            {"follower balancing optimality", criterion_8},
      {"gateway/headless equivalence", criterion_9},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.pass = false;
      o.failures.push_back(std::string("exception: ") + e.what());
    }
    failed += !o.pass;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << "criterion " << (i + 1) << " (" << criteria[i].first << "): ";
    if (o.pass) {
      std::cout << o.detail;
    } else {
      for (std::size_t k = 0; k < o.failures.size(); ++k) std::cout << (k ? "; " : "") << o.failures[k];
    }
    std::cout << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
