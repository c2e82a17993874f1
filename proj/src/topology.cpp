#include "uvf/topology.hpp"

#include <algorithm>
#include <set>

namespace uvf::topo {

std::string node_name(const Node& node) {
  if (std::holds_alternative<Mcc>(node)) return "MCC";
  return std::get<UvId>(node).name();
}

std::string_view to_string(PatternLabel pattern) {
  switch (pattern) {
    case PatternLabel::None:
      return "None";
    case PatternLabel::Central:
      return "Central";
    case PatternLabel::Hierarchical:
      return "Hierarchical";
    case PatternLabel::Holonic:
      return "Holonic";
  }
  return "?";
}

std::optional<PatternLabel> parse_pattern(std::string_view text) {
  for (auto p : {PatternLabel::None, PatternLabel::Central, PatternLabel::Hierarchical, PatternLabel::Holonic}) {
    if (to_string(p) == text) return p;
  }
  return std::nullopt;
}

std::string_view to_string(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::MccLinkLimitExceeded:
      return "MccLinkLimitExceeded";
    case ViolationKind::LeaderLinkLimitExceeded:
      return "LeaderLinkLimitExceeded";
    case ViolationKind::ClusterMemberLimitExceeded:
      return "ClusterMemberLimitExceeded";
    case ViolationKind::OutOfRangeDirectLink:
      return "OutOfRangeDirectLink";
    case ViolationKind::NoInRangeAncestor:
      return "NoInRangeAncestor";
    case ViolationKind::LayerMismatch:
      return "LayerMismatch";
    case ViolationKind::MultipleMasters:
      return "MultipleMasters";
    case ViolationKind::MissingMaster:
      return "MissingMaster";
    case ViolationKind::InvalidPeerLink:
      return "InvalidPeerLink";
    case ViolationKind::ClusterMembershipConflict:
      return "ClusterMembershipConflict";
    case ViolationKind::UnknownUv:
      return "UnknownUv";
    case ViolationKind::LayerOutOfBounds:
      return "LayerOutOfBounds";
  }
  return "?";
}

PeerLink PeerLink::make(UvId x, UvId y) {
  if (y < x) std::swap(x, y);
  return PeerLink{std::move(x), std::move(y)};
}

void Topology::connect(const Node& master, const UvId& slave) {
  int master_layer = kMccLayer;
  if (const auto* uv = std::get_if<UvId>(&master)) {
    auto it = layer_of_.find(*uv);
    if (it == layer_of_.end()) throw InvariantViolation("master " + uv->name() + " is not connected");
    master_layer = it->second;
  }
  if (layer_of_.contains(slave)) throw InvariantViolation(slave.name() + " is already connected");
  layer_of_[slave] = master_layer + 1;
  ms_links_.push_back(MsLink{master, slave});
}

void Topology::add_cluster(const UvId& head, std::vector<UvId> members) {
  auto it = layer_of_.find(head);
  if (it == layer_of_.end()) throw InvariantViolation("cluster head " + head.name() + " is not connected");
  const int member_layer = it->second + 1;
  std::sort(members.begin(), members.end());
  for (const auto& m : members) {
    if (layer_of_.contains(m)) throw InvariantViolation(m.name() + " is already connected");
    layer_of_[m] = member_layer;
    peer_links_.push_back(PeerLink::make(head, m));
  }
  clusters_.push_back(Cluster{head, std::move(members)});
}

void Topology::add_peer(const UvId& a, const UvId& b) {
  auto link = PeerLink::make(a, b);
  if (std::find(peer_links_.begin(), peer_links_.end(), link) == peer_links_.end()) peer_links_.push_back(link);
}

void Topology::install_operational_mesh() {
  auto ops = layer(kOperationalLayer);
  for (std::size_t i = 0; i < ops.size(); ++i) {
    for (std::size_t j = i + 1; j < ops.size(); ++j) add_peer(ops[i], ops[j]);
  }
}

void Topology::remove(const UvId& uv) {
  layer_of_.erase(uv);
  std::erase_if(ms_links_, [&](const MsLink& l) {
    return l.slave == uv || (std::holds_alternative<UvId>(l.master) && std::get<UvId>(l.master) == uv);
  });
  std::erase_if(peer_links_, [&](const PeerLink& l) { return l.a == uv || l.b == uv; });
  std::erase_if(clusters_, [&](const Cluster& c) { return c.head == uv; });
  for (auto& c : clusters_) std::erase(c.members, uv);
}

void Topology::canonicalize() {
  std::sort(ms_links_.begin(), ms_links_.end());
  std::sort(peer_links_.begin(), peer_links_.end());
  for (auto& c : clusters_) std::sort(c.members.begin(), c.members.end());
  std::sort(clusters_.begin(), clusters_.end(), [](const Cluster& a, const Cluster& b) { return a.head < b.head; });
}

std::optional<int> Topology::layer_of(const UvId& uv) const {
  auto it = layer_of_.find(uv);
  if (it == layer_of_.end()) return std::nullopt;
  return it->second;
}

std::optional<Node> Topology::master_of(const UvId& uv) const {
  for (const auto& l : ms_links_) {
    if (l.slave == uv) return l.master;
  }
  return std::nullopt;
}

std::vector<UvId> Topology::children_of(const Node& node) const {
  std::vector<UvId> out;
  for (const auto& l : ms_links_) {
    if (l.master == node) out.push_back(l.slave);
  }
  return out;
}

std::vector<UvId> Topology::peers_of(const UvId& uv) const {
  std::vector<UvId> out;
  for (const auto& l : peer_links_) {
    if (l.a == uv) out.push_back(l.b);
    if (l.b == uv) out.push_back(l.a);
  }
  std::sort(out.begin(), out.end());
  return out;
}

const Cluster* Topology::cluster_headed_by(const UvId& uv) const {
  for (const auto& c : clusters_) {
    if (c.head == uv) return &c;
  }
  return nullptr;
}

const Cluster* Topology::cluster_containing(const UvId& member) const {
  for (const auto& c : clusters_) {
    if (std::find(c.members.begin(), c.members.end(), member) != c.members.end()) return &c;
  }
  return nullptr;
}

std::vector<UvId> Topology::connected_uvs() const {
  std::vector<UvId> out;
  out.reserve(layer_of_.size());
  for (const auto& [uv, _] : layer_of_) out.push_back(uv);
  return out;
}

std::vector<UvId> Topology::layer(int index) const {
  std::vector<UvId> out;
  for (const auto& [uv, l] : layer_of_) {
    if (l == index) out.push_back(uv);
  }
  return out;
}

int Topology::depth() const {
  int d = 0;
  for (const auto& [_, l] : layer_of_) d = std::max(d, l);
  return d;
}

namespace {

void add(std::vector<Violation>& out, ViolationKind kind, std::string detail) {
  out.push_back(Violation{kind, std::move(detail)});
}

}  // namespace

std::vector<Violation> structural_violations(const Topology& t) {
  std::vector<Violation> out;
  const auto& layers = t.layers();

  auto layer_of_node = [&](const Node& n) -> std::optional<int> {
    if (std::holds_alternative<Mcc>(n)) return kMccLayer;
    return t.layer_of(std::get<UvId>(n));
  };

  std::map<UvId, int> master_count;
  for (const auto& l : t.ms_links()) {
    ++master_count[l.slave];
    auto ml = layer_of_node(l.master);
    auto sl = t.layer_of(l.slave);
    if (!ml || !sl) {
      add(out, ViolationKind::MissingMaster, node_name(l.master) + "->" + l.slave.name() + " touches a disconnected node");
      continue;
    }
    if (*sl != *ml + 1) {
      add(out, ViolationKind::LayerMismatch,
          l.slave.name() + " at layer " + std::to_string(*sl) + " under " + node_name(l.master) + " at layer " +
              std::to_string(*ml));
    }
  }

  std::map<UvId, int> membership;
  std::set<UvId> heads;
  for (const auto& c : t.clusters()) {
    heads.insert(c.head);
    auto hl = t.layer_of(c.head);
    if (!hl) {
      add(out, ViolationKind::ClusterMembershipConflict, "cluster head " + c.head.name() + " is not connected");
      continue;
    }
    if (*hl != kExecutionLayer) {
      add(out, ViolationKind::LayerMismatch, "cluster head " + c.head.name() + " is not in the execution layer");
    }
    for (const auto& m : c.members) {
      ++membership[m];
      auto ml = t.layer_of(m);
      if (!ml || *ml != *hl + 1) {
        add(out, ViolationKind::LayerMismatch, "cluster member " + m.name() + " is not one layer below its head");
      }
      auto peers = t.peers_of(m);
      if (std::find(peers.begin(), peers.end(), c.head) == peers.end()) {
        add(out, ViolationKind::InvalidPeerLink, "cluster member " + m.name() + " has no peer link to its head");
      }
    }
  }
  for (const auto& [m, n] : membership) {
    if (n > 1) add(out, ViolationKind::ClusterMembershipConflict, m.name() + " belongs to several clusters");
    if (heads.contains(m)) add(out, ViolationKind::ClusterMembershipConflict, m.name() + " is both head and member");
    if (master_count.contains(m)) {
      add(out, ViolationKind::ClusterMembershipConflict, "cluster member " + m.name() + " also has a master link");
    }
  }

  for (const auto& [uv, l] : layers) {
    if (l < kOperationalLayer || l > kPlanningLayer) {
      add(out, ViolationKind::LayerOutOfBounds, uv.name() + " at layer " + std::to_string(l));
    }
    auto mc = master_count.contains(uv) ? master_count.at(uv) : 0;
    if (mc > 1) add(out, ViolationKind::MultipleMasters, uv.name());
    if (mc == 0 && !membership.contains(uv)) add(out, ViolationKind::MissingMaster, uv.name());
  }

  for (const auto& p : t.peer_links()) {
    auto la = t.layer_of(p.a);
    auto lb = t.layer_of(p.b);
    if (!la || !lb) {
      add(out, ViolationKind::InvalidPeerLink, p.a.name() + "~" + p.b.name() + " touches a disconnected UV");
      continue;
    }
    if (*la == kOperationalLayer && *lb == kOperationalLayer) continue;
    const Cluster* ca = t.cluster_headed_by(p.a);
    const Cluster* cb = t.cluster_headed_by(p.b);
    auto has = [](const Cluster* c, const UvId& m) {
      return c && std::find(c->members.begin(), c->members.end(), m) != c->members.end();
    };
    if (has(ca, p.b) || has(cb, p.a)) continue;
    add(out, ViolationKind::InvalidPeerLink, p.a.name() + "~" + p.b.name());
  }
  return out;
}

PatternLabel classify_pattern(const Topology& topology) {
  auto violations = structural_violations(topology);
  if (!violations.empty()) {
    throw InvariantViolation("inconsistent topology: " + std::string(to_string(violations.front().kind)) + " (" +
                             violations.front().detail + ")");
  }
  const int depth = topology.depth();
  if (depth == 0) return PatternLabel::None;
  if (!topology.peer_links().empty()) return PatternLabel::Holonic;
  switch (depth) {
    case 1:
      return PatternLabel::Central;
    case 2:
      return PatternLabel::Hierarchical;
    default:
      return PatternLabel::Holonic;
  }
}

namespace {

std::optional<UvId> operational_ancestor(const Topology& t, UvId uv) {
  for (int guard = 0; guard <= kPlanningLayer + 1; ++guard) {
    auto l = t.layer_of(uv);
    if (!l) return std::nullopt;
    if (*l == kOperationalLayer) return uv;
    if (auto m = t.master_of(uv)) {
      if (!std::holds_alternative<UvId>(*m)) return std::nullopt;
      uv = std::get<UvId>(*m);
    } else if (const Cluster* c = t.cluster_containing(uv)) {
      uv = c->head;
    } else {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

}  // namespace

std::vector<Violation> validate_topology(const Topology& t, const CapacityLimits& limits,
                                         std::span<const fleet::UvRecord> fleet) {
  auto out = structural_violations(t);

  std::map<UvId, const fleet::UvRecord*> by_id;
  for (const auto& r : fleet) by_id[r.id] = &r;

  auto in_range = [&](const UvId& uv) {
    auto it = by_id.find(uv);
    return it != by_id.end() && it->second->in_mcc_range;
  };

  const auto mcc_links = t.children_of(Mcc{}).size();
  if (mcc_links > static_cast<std::size_t>(limits.mcc_max_links)) {
    add(out, ViolationKind::MccLinkLimitExceeded,
        std::to_string(mcc_links) + " > " + std::to_string(limits.mcc_max_links));
  }

  for (const auto& uv : t.connected_uvs()) {
    if (!by_id.contains(uv)) {
      add(out, ViolationKind::UnknownUv, uv.name());
      continue;
    }
    const auto followers = t.children_of(uv).size();
    if (followers > static_cast<std::size_t>(limits.leader_max_followers)) {
      add(out, ViolationKind::LeaderLinkLimitExceeded, uv.name() + " leads " + std::to_string(followers));
    }
    const int layer = *t.layer_of(uv);
    if (layer == kOperationalLayer && !in_range(uv)) {
      add(out, ViolationKind::OutOfRangeDirectLink, uv.name());
    } else if (layer > kOperationalLayer && !in_range(uv)) {
      auto anc = operational_ancestor(t, uv);
      if (!anc || !in_range(*anc)) add(out, ViolationKind::NoInRangeAncestor, uv.name());
    }
  }

  for (const auto& c : t.clusters()) {
    if (c.members.size() > static_cast<std::size_t>(limits.leader_max_followers)) {
      add(out, ViolationKind::ClusterMemberLimitExceeded,
          c.head.name() + " heads " + std::to_string(c.members.size()));
    }
  }
  return out;
}

std::vector<UvId> descendants(const Topology& t, const UvId& uv) {
  std::vector<UvId> out;
  std::vector<UvId> stack{uv};
  while (!stack.empty()) {
    auto cur = stack.back();
    stack.pop_back();
    auto kids = t.children_of(cur);
    if (const Cluster* c = t.cluster_headed_by(cur)) kids.insert(kids.end(), c->members.begin(), c->members.end());
    for (auto& k : kids) {
      out.push_back(k);
      stack.push_back(std::move(k));
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::int64_t subtree_load(const Topology& t, const UvId& uv, const CapacityLimits& limits) {
  if (!t.is_connected(uv)) throw NotConnected(uv);
  return limits.uplink_rate * static_cast<std::int64_t>(descendants(t, uv).size());
}

std::int64_t TrafficReport::at(const UvId& uv) const {
  auto it = per_uv.find(uv);
  return it == per_uv.end() ? 0 : it->second;
}

bool operator==(const TrafficReport& a, const TrafficReport& b) {
  if (a.mcc != b.mcc) return false;
  for (const auto& [uv, v] : a.per_uv) {
    if (b.at(uv) != v) return false;
  }
  for (const auto& [uv, v] : b.per_uv) {
    if (a.at(uv) != v) return false;
  }
  return true;
}

std::int64_t peer_load(const Topology& t, const UvId& uv, const CapacityLimits& limits) {
  auto layer = t.layer_of(uv);
  if (!layer) return 0;
  if (*layer == kOperationalLayer) {
    std::int64_t peers = 0;
    for (const auto& p : t.peers_of(uv)) {
      if (t.layer_of(p) == kOperationalLayer) ++peers;
    }
    return 2 * limits.uplink_rate * peers;
  }
  if (const Cluster* c = t.cluster_containing(uv)) {
    auto peers = t.peers_of(uv);
    auto to_head = std::count(peers.begin(), peers.end(), c->head);
    return 2 * limits.uplink_rate * static_cast<std::int64_t>(to_head);
  }
  return 0;
}

TrafficReport compute_traffic(const Topology& t, const CapacityLimits& limits) {
  auto violations = structural_violations(t);
  if (!violations.empty()) {
    throw InvariantViolation("cannot compute traffic: " + std::string(to_string(violations.front().kind)) + " (" +
                             violations.front().detail + ")");
  }
  TrafficReport report;
  const auto connected = t.connected_uvs();
  report.mcc = limits.uplink_rate * static_cast<std::int64_t>(connected.size());
  for (const auto& uv : connected) {
    const auto peer = peer_load(t, uv, limits);
    report.per_uv[uv] = subtree_load(t, uv, limits) + peer;
    if (t.layer_of(uv) == kOperationalLayer) report.mcc += peer;
  }
  return report;
}

}  // namespace uvf::topo
