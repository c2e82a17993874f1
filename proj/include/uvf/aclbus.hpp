#pragma once

// In-process agent platform: identities, a service directory, and ACL-style
// message delivery that enforces the link protocol of the current topology.
// Delivered payloads are charged to a per-cycle traffic ledger.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "uvf/topology.hpp"

namespace uvf::acl {

enum class Performative { Request, Inform, Agree, Refuse, Failure };

std::string_view to_string(Performative p);
std::optional<Performative> parse_performative(std::string_view text);

inline const std::string kMccAgent = "MCC";
inline const std::string kOperatorAgent = "operator";

struct AgentId {
  std::string name;
  std::string address;
  friend bool operator==(const AgentId&, const AgentId&) = default;
};

struct ServiceEntry {
  AgentId agent;
  std::set<std::string> services;
};

using Content = std::map<std::string, std::string>;

struct AclMessage {
  Performative performative = Performative::Inform;
  AgentId sender;
  /// Empty means broadcast to every peer-linked neighbour of the sender.
  std::optional<AgentId> receiver;
  Content content;
  std::string conversation_id;
  SimDuration cycle{0};
};

struct DeliveryReceipt {
  std::vector<AgentId> delivered;
  std::int64_t charged = 0;
};

/// One delivered message as written to the message log.
struct LoggedMessage {
  SimDuration cycle{0};
  Performative performative;
  std::string sender;
  std::string receiver;
  Content content;
  std::string conversation_id;
};

class DuplicateName : public Error {
 public:
  explicit DuplicateName(const std::string& name) : Error("agent " + name + " is already registered") {}
};

class UnknownAgent : public Error {
 public:
  explicit UnknownAgent(const std::string& name) : Error("agent " + name + " is not registered") {}
};

class LinkForbidden : public Error {
 public:
  LinkForbidden(const std::string& from, const std::string& to, const std::string& why)
      : Error("no link lets " + from + " send to " + to + ": " + why) {}
};

/// Content keys that steer ledger attribution.
inline const std::string kChannel = "channel";
inline const std::string kOrigin = "origin";
inline const std::string kTelemetry = "telemetry";
inline const std::string kCoordination = "coordination";

class Bus {
 public:
  explicit Bus(topo::CapacityLimits limits = {}) : limits_(limits) {}

  AgentId register_agent(const std::string& name, std::set<std::string> services);
  void deregister(const std::string& name);
  bool is_registered(const std::string& name) const;
  const AgentId& agent(const std::string& name) const;
  /// Agents advertising `service`, in registration order.
  std::vector<AgentId> lookup_service(const std::string& service) const;

  /// Fresh conversation token.
  std::string open_conversation();

  DeliveryReceipt send(const AclMessage& message, const topo::Topology& topology);

  /// Starts a new accounting cycle; clears the ledger but keeps the log.
  void begin_cycle(SimDuration cycle);
  SimDuration current_cycle() const { return cycle_; }
  const topo::TrafficReport& cycle_ledger() const { return ledger_; }

  /// REQUEST conversations still waiting for AGREE, REFUSE or FAILURE.
  std::vector<std::string> open_requests() const;

  const std::vector<LoggedMessage>& log() const { return log_; }
  /// One JSON object per line: cycle, performative, sender, receiver,
  /// content, conversation.
  std::string log_jsonl() const;

 private:
  void check_link(const AclMessage& m, const std::string& receiver, const topo::Topology& t) const;
  std::int64_t charge(const AclMessage& m, const std::string& receiver, const topo::Topology& t);
  void record(const AclMessage& m, const std::string& receiver);

  topo::CapacityLimits limits_;
  std::vector<ServiceEntry> directory_;
  std::uint64_t next_address_ = 1;
  std::uint64_t next_conversation_ = 1;
  /// conversation -> agent that opened it with a REQUEST
  std::map<std::string, std::string> initiators_;
  /// conversation -> REQUEST receiver still owing a reply
  std::map<std::string, std::string> pending_;
  SimDuration cycle_{0};
  topo::TrafficReport ledger_;
  std::vector<LoggedMessage> log_;
};

/// Registers the MCC, the operator and one agent per UV.
void register_fleet(Bus& bus, const std::vector<fleet::UvId>& uvs);

/// One telemetry round over `topology`: every master polls its slaves with
/// REQUEST/AGREE and receives their uplinks (own plus relayed data), cluster
/// members push uplinks to their head over the peer link, and every peer
/// link carries one coordination payload in each direction. Returns the
/// resulting ledger.
topo::TrafficReport run_telemetry_cycle(Bus& bus, const topo::Topology& topology, SimDuration cycle);

}  // namespace uvf::acl
