#include "uvf/mcc.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace uvf::mcc {

using namespace uvf::rules;

namespace {

constexpr std::size_t kMaxFirings = 10000;

const Term kMcc = lit("mcc");
const Term kConfig = lit("config");
const Term kPhase = lit("phase");
const Term kTopology = lit("topology");

Term v(const char* name) { return var(name); }

std::vector<Condition> unplaced_in_range(const char* u, const char* util, const char* rank) {
  return {fact(v(u), "status", lit("unplaced")), fact(v(u), "in_range", lit(true)), fact(v(u), "util", v(util)),
          fact(v(u), "rank", v(rank))};
}

std::vector<Condition> open_leader(const char* l, const char* slots) {
  return {fact(v(l), "layer", lit(1)), fact(v(l), "slots", v(slots)), test(CmpOp::Gt, v(slots), lit(0))};
}

std::vector<Condition> concat(std::vector<Condition> a, const std::vector<Condition>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

Rule operational_rule(std::string name, Condition mode_guard) {
  Rule r;
  r.name = std::move(name);
  r.salience = 80;
  r.conditions = {std::move(mode_guard),
                  fact(kMcc, "links", v("n")),
                  fact(kConfig, "mcc_max_links", v("m")),
                  test(CmpOp::Lt, v("n"), v("m")),
                  fact(kConfig, "max_followers", v("f")),
                  min_by({"ut", "rk"}, unplaced_in_range("u", "ut", "rk"))};
  r.actions = {assert_(v("u"), "status", lit("placed")),
               assert_(v("u"), "layer", lit(1)),
               assert_(v("u"), "master", id("MCC")),
               assert_(v("u"), "load", lit(0)),
               assert_(v("u"), "slots", v("f")),
               assert_(kMcc, "links", Expr(v("n")) + lit(1)),
               emit("link", {id("MCC"), v("u")})};
  return r;
}

std::vector<Condition> open_layer_guard() {
  return {fact(kConfig, "second_phase", v("L")), not_exists({fact(kPhase, "open_layer", v("_o"))}),
          exists({fact(v("_w"), "status", lit("unplaced"))}), exists({fact(v("_l"), "layer", lit(1))})};
}

std::vector<Condition> kind_choice(int min_count) {
  return {max_by({"cnt"}, {fact(v("kx"), "is_kind", v("k")),
                           count("cnt", {fact(v("w"), "status", lit("unplaced")), fact(v("w"), "kind", v("k"))}),
                           test(CmpOp::Gt, v("cnt"), lit(min_count))})};
}

std::vector<Rule> build_placement_rules() {
  std::vector<Rule> rules;

  rules.push_back(Rule{"C8",
                       95,
                       {fact(kMcc, "links", v("n")), fact(kConfig, "mcc_max_links", v("n")),
                        not_exists({fact(kMcc, "full", v("_f"))})},
                       {assert_(kMcc, "full", lit(true)), emit("capacity_reached", {id("MCC")})},
                       {}});
  rules.push_back(Rule{"C9.leader",
                       95,
                       {fact(v("l"), "layer", lit(1)), fact(v("l"), "slots", lit(0)),
                        not_exists({fact(v("l"), "full", v("_f"))})},
                       {assert_(v("l"), "full", lit(true)), emit("capacity_reached", {v("l")})},
                       "C9"});
  rules.push_back(Rule{"C9.cluster",
                       95,
                       {fact(v("h"), "status", lit("head")), fact(v("h"), "members", v("c")),
                        fact(kConfig, "max_followers", v("c")), not_exists({fact(v("h"), "full", v("_f"))})},
                       {assert_(v("h"), "full", lit(true)), emit("capacity_reached", {v("h")})},
                       "C9"});
  rules.push_back(Rule{"R4",
                       90,
                       {fact(v("u"), "status", lit("unplaced")), fact(v("u"), "in_range", lit(false)),
                        not_exists({fact(v("u"), "relay", v("_r"))})},
                       {assert_(v("u"), "relay", lit(true)), emit("requires_relay", {v("u")})},
                       {}});

  rules.push_back(operational_rule("R1", fact(kConfig, "mode", lit("central"))));
  {
    Rule r = operational_rule("R6", fact(kConfig, "mode", v("md")));
    r.conditions.insert(r.conditions.begin() + 1, test(CmpOp::Ne, v("md"), lit("central")));
    rules.push_back(std::move(r));
  }

  const std::vector<Action> open_actions = {assert_(kPhase, "open_layer", v("L")), emit("open_layer", {v("L")})};
  rules.push_back(Rule{"R5.mcc_full", 70, concat(open_layer_guard(), {fact(kMcc, "full", lit(true))}), open_actions,
                       "R5"});
  rules.push_back(Rule{"R5.range_exhausted", 70,
                       concat(open_layer_guard(), {not_exists({fact(v("_c"), "status", lit("unplaced")),
                                                               fact(v("_c"), "in_range", lit(true))})}),
                       open_actions, "R5"});
  rules.push_back(Rule{"R5.execution",
                       69,
                       {fact(kPhase, "open_layer", lit(2)), not_exists({fact(kPhase, "followers", v("_x"))})},
                       {assert_(kPhase, "followers", lit(true))},
                       "R5"});

  const std::vector<Action> group_actions = {assert_(kPhase, "cluster_kind", v("k")), emit("cluster_group", {v("k")})};
  rules.push_back(Rule{"R9.group",
                       66,
                       concat({fact(kPhase, "open_layer", lit(3)), not_exists({fact(kPhase, "cluster_kind", v("_k"))}),
                               not_exists({fact(kPhase, "clusters_done", v("_d"))})},
                              kind_choice(1)),
                       group_actions, "R9"});
  rules.push_back(Rule{"R9.group_all",
                       66,
                       concat({fact(kPhase, "open_layer", lit(3)), fact(kConfig, "cluster_all", lit(true)),
                               not_exists({fact(kPhase, "cluster_kind", v("_k"))})},
                              kind_choice(0)),
                       group_actions, "R9"});
  rules.push_back(Rule{"R9.skip",
                       66,
                       {fact(kPhase, "open_layer", lit(3)), not_exists({fact(kPhase, "cluster_kind", v("_k"))}),
                        not_exists({fact(kPhase, "clusters_done", v("_d"))}),
                        not_exists({fact(kConfig, "cluster_all", lit(true))}),
                        not_exists(kind_choice(1))},
                       {assert_(kPhase, "clusters_done", lit(true)), assert_(kPhase, "followers", lit(true))},
                       "R9"});
  rules.push_back(Rule{"R9.member",
                       65,
                       {fact(kPhase, "cluster_kind", v("k")), fact(v("h"), "status", lit("head")),
                        fact(v("h"), "cluster_kind", v("k")), fact(v("h"), "members", v("c")),
                        fact(kConfig, "max_followers", v("f")), test(CmpOp::Lt, v("c"), v("f")),
                        min_by({"mu", "mr"}, {fact(v("m"), "status", lit("unplaced")), fact(v("m"), "kind", v("k")),
                                              fact(v("m"), "util", v("mu")), fact(v("m"), "rank", v("mr"))})},
                       {assert_(v("m"), "status", lit("member")), assert_(v("m"), "head", v("h")),
                        assert_(v("h"), "members", Expr(v("c")) + lit(1)), emit("join", {v("m"), v("h")})},
                       "R9"});
  rules.push_back(Rule{"R9.head",
                       64,
                       {fact(kPhase, "cluster_kind", v("k")),
                        not_exists({fact(v("o"), "status", lit("head")), fact(v("o"), "cluster_kind", v("k")),
                                    fact(v("o"), "members", v("oc")), fact(kConfig, "max_followers", v("of")),
                                    test(CmpOp::Lt, v("oc"), v("of"))}),
                        min_by({"hu", "hr"}, {fact(v("h"), "status", lit("unplaced")), fact(v("h"), "kind", v("k")),
                                              fact(v("h"), "util", v("hu")), fact(v("h"), "rank", v("hr"))})},
                       {assert_(v("h"), "status", lit("head")), assert_(v("h"), "cluster_kind", v("k")),
                        assert_(v("h"), "members", lit(0)), emit("cluster_head", {v("h")})},
                       "R9"});
  rules.push_back(Rule{"R9.done",
                       63,
                       {fact(kPhase, "cluster_kind", v("k")),
                        not_exists({fact(v("w"), "status", lit("unplaced")), fact(v("w"), "kind", v("k"))})},
                       {retract(kPhase, "cluster_kind"), assert_(kPhase, "clusters_done", lit(true)),
                        assert_(kPhase, "followers", lit(true))},
                       "R9"});
  rules.push_back(Rule{"R9.attach",
                       60,
                       concat({fact(kPhase, "clusters_done", lit(true)),
                               min_by({"hu", "hr"}, {fact(v("h"), "status", lit("head")),
                                                     not_exists({fact(v("h"), "layer", v("_hl"))}),
                                                     fact(v("h"), "util", v("hu")), fact(v("h"), "rank", v("hr"))}),
                               fact(v("h"), "members", v("c")), fact(kConfig, "rate", v("rate"))},
                              {min_by({"lu", "lr"}, concat(open_leader("l", "s"), {fact(v("l"), "util", v("lu")),
                                                                                   fact(v("l"), "rank", v("lr"))})),
                               fact(v("l"), "load", v("ld"))}),
                       {assert_(v("h"), "layer", lit(2)), assert_(v("h"), "master", v("l")),
                        assert_(v("l"), "slots", Expr(v("s")) - lit(1)),
                        assert_(v("l"), "load", Expr(v("ld")) + Expr(v("rate")) * (Expr(lit(1)) + Expr(v("c")))),
                        emit("link", {v("l"), v("h")})},
                       "R9"});

  const std::vector<Condition> follower_body = {
      fact(kPhase, "followers", lit(true)),
      fact(kConfig, "rate", v("rate")),
      min_by({"fu", "fr"}, {fact(v("u"), "status", lit("unplaced")), fact(v("u"), "util", v("fu")),
                            fact(v("u"), "rank", v("fr"))}),
      min_by({"ll", "lu", "lr"}, concat(open_leader("l", "s"), {fact(v("l"), "load", v("ll")),
                                                                fact(v("l"), "util", v("lu")),
                                                                fact(v("l"), "rank", v("lr"))}))};
  const std::vector<Condition> tie = concat(open_leader("o", "os"),
                                            {fact(v("o"), "load", v("ll")), test(CmpOp::Ne, v("o"), v("l"))});
  const std::vector<Action> follow = {assert_(v("u"), "status", lit("placed")),
                                      assert_(v("u"), "layer", lit(2)),
                                      assert_(v("u"), "master", v("l")),
                                      assert_(v("l"), "load", Expr(v("ll")) + v("rate")),
                                      assert_(v("l"), "slots", Expr(v("s")) - lit(1)),
                                      emit("link", {v("l"), v("u")})};
  rules.push_back(Rule{"R7", 50, concat(follower_body, {not_exists(tie)}), follow, {}});
  rules.push_back(Rule{"R8", 50, concat(follower_body, {exists(tie)}), follow, {}});

  rules.push_back(Rule{"R3",
                       10,
                       {fact(kConfig, "mode", lit("holonic")), not_exists({fact(kPhase, "mesh", v("_m"))}),
                        exists({fact(v("_a"), "layer", lit(1))})},
                       {assert_(kPhase, "mesh", lit(true)), emit("peer_mesh", {lit(1)})},
                       {}});
  return rules;
}

Rule depth_rule(std::string name, int depth, const char* label) {
  return Rule{std::move(name),
              0,
              {max_by({"d"}, {fact(v("u"), "layer", v("d"))}), test(CmpOp::Eq, v("d"), lit(depth)),
               fact(kTopology, "peer_links", lit(0))},
              {assert_(kTopology, "pattern", lit(label))},
              {}};
}

std::vector<Rule> build_pattern_rules() {
  std::vector<Rule> rules;
  rules.push_back(depth_rule("R1", 1, "Central"));
  rules.push_back(depth_rule("R2", 2, "Hierarchical"));
  {
    Rule r = depth_rule("R3", 3, "Holonic");
    r.conditions.pop_back();
    rules.push_back(std::move(r));
  }
  rules.push_back(Rule{"R3.peers",
                       0,
                       {fact(kTopology, "peer_links", v("pc")), test(CmpOp::Gt, v("pc"), lit(0))},
                       {assert_(kTopology, "pattern", lit("Holonic"))},
                       "R3"});
  rules.push_back(Rule{"unassigned",
                       0,
                       {not_exists({fact(v("u"), "layer", v("d"))})},
                       {assert_(kTopology, "pattern", lit("None"))},
                       {}});
  return rules;
}

std::map<UvId, int> seeded_ranks(const FleetSnapshot& snapshot) {
  std::vector<UvId> ids;
  for (const auto* r : snapshot.registered()) ids.push_back(r->id);
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 gen(snapshot.seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(gen() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  std::map<UvId, int> ranks;
  for (std::size_t i = 0; i < ids.size(); ++i) ranks[ids[i]] = static_cast<int>(i);
  return ranks;
}

struct Config {
  std::string mode = "hierarchical";
  std::optional<int> second_phase;
  bool cluster_all = false;
};

void add_config(WorkingMemory& wm, const FleetSnapshot& snapshot, const Config& cfg, int mcc_links) {
  const auto& lim = snapshot.limits;
  wm.assert_fact({"mcc", "links", Value{static_cast<double>(mcc_links)}});
  wm.assert_fact({"config", "mcc_max_links", Value{static_cast<double>(lim.mcc_max_links)}});
  wm.assert_fact({"config", "max_followers", Value{static_cast<double>(lim.leader_max_followers)}});
  wm.assert_fact({"config", "rate", Value{static_cast<double>(lim.uplink_rate)}});
  wm.assert_fact({"config", "mode", Value{cfg.mode}});
  if (cfg.second_phase) wm.assert_fact({"config", "second_phase", Value{static_cast<double>(*cfg.second_phase)}});
  if (cfg.cluster_all) wm.assert_fact({"config", "cluster_all", Value{true}});
}

void add_uv(WorkingMemory& wm, const fleet::UvRecord& r, double util, int rank, const char* status) {
  const auto& n = r.id.name();
  wm.assert_fact({n, "kind", Value{std::string(fleet::to_string(r.kind()))}});
  wm.assert_fact({n, "in_range", Value{r.in_mcc_range}});
  wm.assert_fact({n, "util", Value{util}});
  wm.assert_fact({n, "rank", Value{static_cast<double>(rank)}});
  wm.assert_fact({n, "status", Value{std::string(status)}});
  const std::string kind(fleet::to_string(r.kind()));
  wm.assert_fact({"kind:" + kind, "is_kind", Value{kind}});
}

/// Marks a connected layer-1 UV as an existing leader.
void add_leader(WorkingMemory& wm, const Topology& t, const UvId& uv, const CapacityLimits& lim) {
  const auto& n = uv.name();
  const auto slots = lim.leader_max_followers - static_cast<int>(t.children_of(uv).size());
  wm.assert_fact({n, "layer", Value{1.0}});
  wm.assert_fact({n, "master", Value{Id{"MCC"}}});
  wm.assert_fact({n, "load", Value{static_cast<double>(topo::subtree_load(t, uv, lim))}});
  wm.assert_fact({n, "slots", Value{static_cast<double>(slots)}});
  if (slots <= 0) wm.assert_fact({n, "full", Value{true}});
}

std::string arg_name(const Value& value) {
  if (const auto* i = std::get_if<Id>(&value)) return i->name;
  if (const auto* s = std::get_if<std::string>(&value)) return *s;
  throw RuleError("decision argument is not an identifier: " + to_string(value));
}

topo::Node as_node(const Value& value) {
  auto name = arg_name(value);
  if (name == "MCC") return topo::Mcc{};
  return UvId::parse(name);
}

/// Applies link, cluster and mesh decisions. Cluster heads that never got a
/// master stay out of the topology together with their members.
void apply_decisions(Topology& t, const std::vector<Decision>& decisions) {
  std::map<UvId, std::vector<UvId>> clusters;
  bool mesh = false;
  for (const auto& d : decisions) {
    if (d.kind == "link") {
      t.connect(as_node(d.args.at(0)), UvId::parse(arg_name(d.args.at(1))));
    } else if (d.kind == "cluster_head") {
      clusters[UvId::parse(arg_name(d.args.at(0)))];
    } else if (d.kind == "join") {
      clusters[UvId::parse(arg_name(d.args.at(1)))].push_back(UvId::parse(arg_name(d.args.at(0))));
    } else if (d.kind == "peer_mesh") {
      mesh = true;
    }
  }
  for (auto& [head, members] : clusters) {
    if (t.is_connected(head)) t.add_cluster(head, members);
  }
  if (mesh) t.install_operational_mesh();
  t.canonicalize();
}

std::string_view pattern_tag(PatternLabel p) {
  switch (p) {
    case PatternLabel::Central:
      return "R1";
    case PatternLabel::Hierarchical:
      return "R2";
    case PatternLabel::Holonic:
      return "R3";
    case PatternLabel::None:
      break;
  }
  return {};
}

SynthesisResult finish(Topology t, std::vector<Decision> log, const FleetSnapshot& snapshot) {
  SynthesisResult out;
  out.pattern = infer_pattern(t);
  t.pattern = out.pattern;
  out.topology = std::move(t);
  for (const auto* r : snapshot.registered()) {
    if (!out.topology.is_connected(r->id)) out.uncontrolled.push_back(r->id);
  }
  if (out.pattern != PatternLabel::None) {
    log.push_back(Decision{std::string(pattern_tag(out.pattern)), "classify",
                           {Value{std::string(topo::to_string(out.pattern))}}});
  }
  out.decision_log = std::move(log);
  return out;
}

SynthesisResult run_fresh(const FleetSnapshot& snapshot, const Config& cfg) {
  WorkingMemory wm;
  add_config(wm, snapshot, cfg, 0);
  const auto ranks = seeded_ranks(snapshot);
  for (const auto* r : snapshot.registered()) {
    add_uv(wm, *r, snapshot.utilization_of(r->id), ranks.at(r->id), "unplaced");
  }
  auto fwd = run_forward(std::move(wm), placement_rules(), kMaxFirings);
  Topology t;
  apply_decisions(t, fwd.decisions);
  return finish(std::move(t), std::move(fwd.decisions), snapshot);
}

std::size_t connected_count(const SynthesisResult& r) { return r.topology.layers().size(); }

}  // namespace

OperationMode OperationMode::manual(PatternLabel requested) {
  if (requested == PatternLabel::None) throw ArgumentError("manual mode needs a concrete pattern");
  OperationMode m;
  m.manual_ = true;
  m.requested_ = requested;
  return m;
}

std::vector<const fleet::UvRecord*> FleetSnapshot::registered() const {
  std::vector<const fleet::UvRecord*> out;
  for (const auto& r : uvs) {
    if (fleet::is_registered(r.state)) out.push_back(&r);
  }
  return out;
}

const fleet::UvRecord* FleetSnapshot::find(const UvId& uv) const {
  for (const auto& r : uvs) {
    if (r.id == uv) return &r;
  }
  return nullptr;
}

double FleetSnapshot::utilization_of(const UvId& uv) const {
  if (auto it = utilizations.find(uv); it != utilizations.end()) return it->second;
  if (const auto* r = find(uv)) return fleet::utilization(r->clocks);
  throw UnknownUv(uv);
}

const std::vector<Rule>& placement_rules() {
  static const std::vector<Rule> rules = build_placement_rules();
  return rules;
}

const std::vector<Rule>& pattern_rules() {
  static const std::vector<Rule> rules = build_pattern_rules();
  return rules;
}

WorkingMemory topology_facts(const Topology& topology) {
  WorkingMemory wm;
  for (const auto& [uv, layer] : topology.layers()) {
    wm.assert_fact({uv.name(), "layer", Value{static_cast<double>(layer)}});
  }
  wm.assert_fact({"topology", "peer_links", Value{static_cast<double>(topology.peer_links().size())}});
  return wm;
}

PatternLabel infer_pattern(const Topology& topology) {
  const auto wm = topology_facts(topology);
  auto proof = run_backward(wm, pattern_rules(), fact(kTopology, "pattern", v("p")));
  if (!proof) throw topo::InvariantViolation("topology matches no pattern rule (depth " +
                                             std::to_string(topology.depth()) + ")");
  auto label = topo::parse_pattern(arg_name(proof->at("p")));
  if (!label) throw RuleError("pattern rule produced an unknown label");
  return *label;
}

std::vector<UvId> select_operational_layer(const FleetSnapshot& snapshot) {
  WorkingMemory wm;
  add_config(wm, snapshot, Config{}, 0);
  const auto ranks = seeded_ranks(snapshot);
  for (const auto* r : snapshot.registered()) {
    add_uv(wm, *r, snapshot.utilization_of(r->id), ranks.at(r->id), "unplaced");
  }
  auto fwd = run_forward(std::move(wm), placement_rules(), kMaxFirings);
  std::vector<UvId> out;
  for (const auto& d : fwd.decisions) {
    if (d.kind == "link") out.push_back(UvId::parse(arg_name(d.args.at(1))));
  }
  return out;
}

FollowerAssignment assign_followers(std::span<const UvId> leaders, std::span<const UvId> followers,
                                    const FleetSnapshot& snapshot, const Topology& topology) {
  WorkingMemory wm;
  add_config(wm, snapshot, Config{}, snapshot.limits.mcc_max_links);
  wm.assert_fact({"mcc", "full", Value{true}});
  wm.assert_fact({"phase", "followers", Value{true}});
  const auto ranks = seeded_ranks(snapshot);
  auto rank_of = [&](const UvId& uv) {
    auto it = ranks.find(uv);
    return it == ranks.end() ? static_cast<int>(ranks.size()) : it->second;
  };
  for (const auto& l : leaders) {
    const auto* r = snapshot.find(l);
    if (!r) throw UnknownUv(l);
    if (!topology.is_connected(l)) throw topo::NotConnected(l);
    add_uv(wm, *r, snapshot.utilization_of(l), rank_of(l), "placed");
    add_leader(wm, topology, l, snapshot.limits);
  }
  for (const auto& f : followers) {
    const auto* r = snapshot.find(f);
    if (!r) throw UnknownUv(f);
    add_uv(wm, *r, snapshot.utilization_of(f), rank_of(f), "unplaced");
  }
  auto fwd = run_forward(std::move(wm), placement_rules(), kMaxFirings);
  FollowerAssignment out;
  out.topology = topology;
  apply_decisions(out.topology, fwd.decisions);
  for (const auto& f : followers) {
    if (!out.topology.is_connected(f)) out.capacity_exhausted.push_back(f);
  }
  out.decisions = std::move(fwd.decisions);
  return out;
}

std::vector<topo::Cluster> form_clusters(std::span<const fleet::UvRecord> remaining, const FleetSnapshot& snapshot) {
  WorkingMemory wm;
  // Clusters only: the operational layer is treated as closed.
  add_config(wm, snapshot, Config{"holonic", 3, true}, snapshot.limits.mcc_max_links);
  wm.assert_fact({"mcc", "full", Value{true}});
  wm.assert_fact({"phase", "open_layer", Value{3.0}});
  const auto ranks = seeded_ranks(snapshot);
  int next_rank = static_cast<int>(ranks.size());
  for (const auto& r : remaining) {
    auto it = ranks.find(r.id);
    add_uv(wm, r, snapshot.utilization_of(r.id), it == ranks.end() ? next_rank++ : it->second, "unplaced");
  }
  auto fwd = run_forward(std::move(wm), placement_rules(), kMaxFirings);
  std::vector<topo::Cluster> out;
  for (const auto& d : fwd.decisions) {
    if (d.kind == "cluster_head") {
      out.push_back(topo::Cluster{UvId::parse(arg_name(d.args.at(0))), {}});
    } else if (d.kind == "join") {
      const auto head = UvId::parse(arg_name(d.args.at(1)));
      for (auto& c : out) {
        if (c.head == head) c.members.push_back(UvId::parse(arg_name(d.args.at(0))));
      }
    }
  }
  for (auto& c : out) std::sort(c.members.begin(), c.members.end());
  return out;
}

SynthesisResult synthesize_topology(const FleetSnapshot& snapshot) {
  const auto& mode = snapshot.mode;
  if (mode.is_manual()) {
    switch (mode.requested()) {
      case PatternLabel::Central:
        return run_fresh(snapshot, Config{"central", std::nullopt, false});
      case PatternLabel::Hierarchical:
        return run_fresh(snapshot, Config{"hierarchical", 2, false});
      case PatternLabel::Holonic:
        return run_fresh(snapshot, Config{"holonic", 3, false});
      case PatternLabel::None:
        break;
    }
  }
  auto hier = run_fresh(snapshot, Config{"hierarchical", 2, false});
  if (!hier.uncontrolled.empty() && !hier.topology.layer(topo::kOperationalLayer).empty()) {
    auto holo = run_fresh(snapshot, Config{"holonic", 3, false});
    if (connected_count(holo) > connected_count(hier)) return holo;
  }
  return hier;
}

SynthesisResult extend_topology(const SynthesisResult& previous, const FleetSnapshot& snapshot) {
  const auto& prev = previous.topology;
  bool rebuild = snapshot.mode.is_manual() || !prev.peer_links().empty() || !prev.clusters().empty();
  for (const auto& uv : prev.connected_uvs()) {
    const auto* r = snapshot.find(uv);
    if (!r || !fleet::is_registered(r->state)) rebuild = true;
  }
  if (rebuild) return synthesize_topology(snapshot);

  WorkingMemory wm;
  const auto& lim = snapshot.limits;
  const auto leaders = prev.layer(topo::kOperationalLayer);
  add_config(wm, snapshot, Config{"hierarchical", 2, false}, static_cast<int>(leaders.size()));
  if (static_cast<int>(leaders.size()) >= lim.mcc_max_links) wm.assert_fact({"mcc", "full", Value{true}});
  const auto ranks = seeded_ranks(snapshot);
  for (const auto* r : snapshot.registered()) {
    const auto layer = prev.layer_of(r->id);
    add_uv(wm, *r, snapshot.utilization_of(r->id), ranks.at(r->id), layer ? "placed" : "unplaced");
    if (layer == topo::kOperationalLayer) {
      add_leader(wm, prev, r->id, lim);
    } else if (layer) {
      wm.assert_fact({r->id.name(), "layer", Value{static_cast<double>(*layer)}});
    }
  }
  // Followers already hanging below the operational layer mean phase two is
  // open; keep it open so new arrivals can join as followers.
  if (prev.depth() >= topo::kExecutionLayer) {
    wm.assert_fact({"phase", "open_layer", Value{2.0}});
    wm.assert_fact({"phase", "followers", Value{true}});
  }
  auto fwd = run_forward(std::move(wm), placement_rules(), kMaxFirings);
  Topology t = prev;
  apply_decisions(t, fwd.decisions);
  auto extended = finish(std::move(t), std::move(fwd.decisions), snapshot);

  auto full = synthesize_topology(snapshot);
  if (connected_count(full) > connected_count(extended)) return full;
  return extended;
}

SynthesisResult handle_failure(const SynthesisResult& result, const UvId& failed, const FleetSnapshot& snapshot) {
  if (!snapshot.find(failed)) throw UnknownUv(failed);
  const auto& prev = result.topology;
  if (!prev.is_connected(failed)) return result;

  FleetSnapshot rest = snapshot;
  std::erase_if(rest.uvs, [&](const fleet::UvRecord& r) { return r.id == failed; });
  rest.utilizations.erase(failed);

  const auto* cluster = prev.cluster_headed_by(failed);
  if (cluster && !cluster->members.empty()) {
    const auto ranks = seeded_ranks(snapshot);
    auto successor = *std::min_element(cluster->members.begin(), cluster->members.end(),
                                       [&](const UvId& a, const UvId& b) {
                                         const double ua = snapshot.utilization_of(a);
                                         const double ub = snapshot.utilization_of(b);
                                         if (ua != ub) return ua < ub;
                                         return ranks.at(a) < ranks.at(b);
                                       });
    std::vector<UvId> members;
    for (const auto& m : cluster->members) {
      if (m != successor) members.push_back(m);
    }
    const auto master = prev.master_of(failed);
    Topology t = prev;
    t.remove(failed);
    for (const auto& m : cluster->members) t.mutable_layers().erase(m);
    if (master) t.connect(*master, successor);
    if (t.is_connected(successor)) t.add_cluster(successor, members);
    std::vector<Decision> log = {
        Decision{"R9", "promote", {Value{Id{successor.name()}}, Value{Id{failed.name()}}}}};
    return finish(std::move(t), std::move(log), rest);
  }
  return synthesize_topology(rest);
}

}  // namespace uvf::mcc
