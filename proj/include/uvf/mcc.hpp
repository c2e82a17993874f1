#pragma once

// Mission Control Center decision logic. Fleet placement is expressed as a
// rule catalog over the rule engine: forward chaining builds the structure
// and emits link/cluster decisions, which are then translated into topology
// edits; backward chaining over the pattern rules labels the result.

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "uvf/fleet.hpp"
#include "uvf/rulekit.hpp"
#include "uvf/topology.hpp"

namespace uvf::mcc {

using fleet::UvId;
using topo::CapacityLimits;
using topo::PatternLabel;
using topo::Topology;

class OperationMode {
 public:
  static OperationMode automatic() { return OperationMode{}; }
  /// Throws ArgumentError for PatternLabel::None.
  static OperationMode manual(PatternLabel requested);

  bool is_manual() const { return manual_; }
  PatternLabel requested() const { return requested_; }

  friend bool operator==(const OperationMode&, const OperationMode&) = default;

 private:
  bool manual_ = false;
  PatternLabel requested_ = PatternLabel::None;
};

struct FleetSnapshot {
  std::vector<fleet::UvRecord> uvs;
  std::map<UvId, double> utilizations;
  CapacityLimits limits;
  OperationMode mode;
  std::uint64_t seed = 0;

  /// Registered UVs in fleet order.
  std::vector<const fleet::UvRecord*> registered() const;
  const fleet::UvRecord* find(const UvId& uv) const;
  double utilization_of(const UvId& uv) const;
};

struct SynthesisResult {
  Topology topology;
  PatternLabel pattern = PatternLabel::None;
  std::vector<UvId> uncontrolled;
  std::vector<rules::Decision> decision_log;
};

class UnknownUv : public Error {
 public:
  explicit UnknownUv(const UvId& uv) : Error("unknown UV " + uv.name()) {}
};

/// Forward rules for C8, C9 and R1, R4-R9.
const std::vector<rules::Rule>& placement_rules();

/// Backward rules R1-R3 over topology facts.
const std::vector<rules::Rule>& pattern_rules();

/// Facts describing a topology for pattern inference: one (uv, layer, n) per
/// connected UV plus (topology, peer_links, count).
rules::WorkingMemory topology_facts(const Topology& topology);

/// Labels a topology by proving (topology, pattern, ?p) backward.
PatternLabel infer_pattern(const Topology& topology);

/// Up to mcc_max_links registered in-range UVs, lowest utilization first.
std::vector<UvId> select_operational_layer(const FleetSnapshot& snapshot);

struct FollowerAssignment {
  Topology topology;
  /// Followers that found no leader with a free slot.
  std::vector<UvId> capacity_exhausted;
  std::vector<rules::Decision> decisions;
};

FollowerAssignment assign_followers(std::span<const UvId> leaders, std::span<const UvId> followers,
                                    const FleetSnapshot& snapshot, const Topology& topology);

std::vector<topo::Cluster> form_clusters(std::span<const fleet::UvRecord> remaining, const FleetSnapshot& snapshot);

SynthesisResult synthesize_topology(const FleetSnapshot& snapshot);

/// Automatic-mode placement that keeps the previous structure and only places
/// UVs that are registered but not yet connected. Falls back to a full
/// synthesize_topology when the previous structure no longer applies (manual
/// mode, a connected UV left, a holonic structure) or when a full rebuild would
/// connect more UVs.
SynthesisResult extend_topology(const SynthesisResult& previous, const FleetSnapshot& snapshot);

/// Repairs after `failed` drops out. A failed cluster head is replaced by its
/// lowest-utilization member; any other connected UV triggers a full
/// re-synthesis without it. Disconnected UVs leave the result unchanged.
SynthesisResult handle_failure(const SynthesisResult& result, const UvId& failed, const FleetSnapshot& snapshot);

}  // namespace uvf::mcc
