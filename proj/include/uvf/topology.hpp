#pragma once

// Layered fleet topology: the MCC at layer 0, UVs at layers 1..3 joined by
// directed master-slave links, undirected peer links, and same-kind clusters.
// Also the per-cycle traffic model evaluated over a topology snapshot.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uvf/fleet.hpp"

namespace uvf::topo {

using fleet::UvId;

struct Mcc {
  friend bool operator==(Mcc, Mcc) { return true; }
  friend std::strong_ordering operator<=>(Mcc, Mcc) { return std::strong_ordering::equal; }
};

using Node = std::variant<Mcc, UvId>;

std::string node_name(const Node& node);

enum class LinkType { MasterSlave, PeerToPeer };

enum class PatternLabel { None, Central, Hierarchical, Holonic };

std::string_view to_string(PatternLabel pattern);
std::optional<PatternLabel> parse_pattern(std::string_view text);

inline constexpr int kMccLayer = 0;
inline constexpr int kOperationalLayer = 1;
inline constexpr int kExecutionLayer = 2;
inline constexpr int kPlanningLayer = 3;

struct MsLink {
  Node master;
  UvId slave;
  friend bool operator==(const MsLink&, const MsLink&) = default;
  friend auto operator<=>(const MsLink&, const MsLink&) = default;
};

/// Stored with a < b.
struct PeerLink {
  UvId a;
  UvId b;
  static PeerLink make(UvId x, UvId y);
  friend bool operator==(const PeerLink&, const PeerLink&) = default;
  friend auto operator<=>(const PeerLink&, const PeerLink&) = default;
};

struct Cluster {
  UvId head;
  std::vector<UvId> members;  // sorted
  friend bool operator==(const Cluster&, const Cluster&) = default;
};

struct CapacityLimits {
  int mcc_max_links = 3;
  int leader_max_followers = 2;
  std::int64_t uplink_rate = 800;  // Kbit per cycle

  friend bool operator==(const CapacityLimits&, const CapacityLimits&) = default;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class NotConnected : public Error {
 public:
  explicit NotConnected(const UvId& uv) : Error("UV " + uv.name() + " is not connected") {}
};

class Topology {
 public:
  /// Adds a master-slave link; the slave's layer becomes master layer + 1.
  void connect(const Node& master, const UvId& slave);
  /// Adds a cluster headed by an already connected UV. Members are placed one
  /// layer below the head and joined to it by peer links.
  void add_cluster(const UvId& head, std::vector<UvId> members);
  void add_peer(const UvId& a, const UvId& b);
  /// Full peer mesh among the current layer-1 UVs.
  void install_operational_mesh();

  /// Removes a UV and every link, cluster membership and layer entry touching
  /// it. Descendants are left dangling; callers decide what to do with them.
  void remove(const UvId& uv);

  /// Normalizes link and cluster ordering so equal structures compare equal.
  void canonicalize();

  bool is_connected(const UvId& uv) const { return layer_of_.contains(uv); }
  std::optional<int> layer_of(const UvId& uv) const;
  std::optional<Node> master_of(const UvId& uv) const;
  std::vector<UvId> children_of(const Node& node) const;
  std::vector<UvId> peers_of(const UvId& uv) const;
  const Cluster* cluster_headed_by(const UvId& uv) const;
  const Cluster* cluster_containing(const UvId& member) const;
  std::vector<UvId> connected_uvs() const;
  std::vector<UvId> layer(int index) const;
  int depth() const;

  const std::map<UvId, int>& layers() const { return layer_of_; }
  const std::vector<MsLink>& ms_links() const { return ms_links_; }
  const std::vector<PeerLink>& peer_links() const { return peer_links_; }
  const std::vector<Cluster>& clusters() const { return clusters_; }

  PatternLabel pattern = PatternLabel::None;

  // Raw mutation for deserialization and for building deliberately broken
  // fixtures in tests; bypasses the layer bookkeeping of connect().
  std::map<UvId, int>& mutable_layers() { return layer_of_; }
  std::vector<MsLink>& mutable_ms_links() { return ms_links_; }
  std::vector<PeerLink>& mutable_peer_links() { return peer_links_; }
  std::vector<Cluster>& mutable_clusters() { return clusters_; }

  friend bool operator==(const Topology&, const Topology&) = default;

 private:
  std::map<UvId, int> layer_of_;
  std::vector<MsLink> ms_links_;
  std::vector<PeerLink> peer_links_;
  std::vector<Cluster> clusters_;
};

enum class ViolationKind {
  MccLinkLimitExceeded,
  LeaderLinkLimitExceeded,
  ClusterMemberLimitExceeded,
  OutOfRangeDirectLink,
  NoInRangeAncestor,
  LayerMismatch,
  MultipleMasters,
  MissingMaster,
  InvalidPeerLink,
  ClusterMembershipConflict,
  UnknownUv,
  LayerOutOfBounds,
};

std::string_view to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  std::string detail;
};

/// Structural consistency only (layers vs links, forest shape, peer/cluster
/// placement); capacity and range checks live in validate_topology.
std::vector<Violation> structural_violations(const Topology& topology);

PatternLabel classify_pattern(const Topology& topology);

std::vector<Violation> validate_topology(const Topology& topology, const CapacityLimits& limits,
                                         std::span<const fleet::UvRecord> fleet);

/// Connected descendants of `uv` in the master-slave forest, including the
/// members of a cluster it heads. Excludes `uv` itself.
std::vector<UvId> descendants(const Topology& topology, const UvId& uv);

std::int64_t subtree_load(const Topology& topology, const UvId& uv, const CapacityLimits& limits);

struct TrafficReport {
  std::map<UvId, std::int64_t> per_uv;
  std::int64_t mcc = 0;

  /// 0 for UVs absent from the report.
  std::int64_t at(const UvId& uv) const;

  /// Missing entries compare equal to explicit zeros.
  friend bool operator==(const TrafficReport& a, const TrafficReport& b);
};

std::int64_t peer_load(const Topology& topology, const UvId& uv, const CapacityLimits& limits);

TrafficReport compute_traffic(const Topology& topology, const CapacityLimits& limits);

}  // namespace uvf::topo
