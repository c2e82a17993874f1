#include "uvf/aclbus.hpp"

#include <algorithm>
#include <json.hpp>

namespace uvf::acl {

namespace {

constexpr std::array kPerformatives = {
    std::pair{Performative::Request, "REQUEST"}, std::pair{Performative::Inform, "INFORM"},
    std::pair{Performative::Agree, "AGREE"},     std::pair{Performative::Refuse, "REFUSE"},
    std::pair{Performative::Failure, "FAILURE"},
};

bool is_reply(Performative p) {
  return p == Performative::Agree || p == Performative::Refuse || p == Performative::Failure;
}

bool is_supervision(const std::string& a, const std::string& b) {
  return (a == kMccAgent && b == kOperatorAgent) || (a == kOperatorAgent && b == kMccAgent);
}

std::optional<topo::Node> node_of(const std::string& name) {
  if (name == kMccAgent) return topo::Mcc{};
  try {
    return fleet::UvId::parse(name);
  } catch (const ArgumentError&) {
    return std::nullopt;
  }
}

std::optional<fleet::UvId> uv_of(const std::string& name) {
  auto n = node_of(name);
  if (!n || !std::holds_alternative<fleet::UvId>(*n)) return std::nullopt;
  return std::get<fleet::UvId>(*n);
}

bool has_peer(const topo::Topology& t, const fleet::UvId& a, const fleet::UvId& b) {
  const auto link = topo::PeerLink::make(a, b);
  const auto& peers = t.peer_links();
  return std::find(peers.begin(), peers.end(), link) != peers.end();
}

}  // namespace

std::string_view to_string(Performative p) {
  for (const auto& [value, name] : kPerformatives) {
    if (value == p) return name;
  }
  return "?";
}

std::optional<Performative> parse_performative(std::string_view text) {
  for (const auto& [value, name] : kPerformatives) {
    if (text == name) return value;
  }
  return std::nullopt;
}

AgentId Bus::register_agent(const std::string& name, std::set<std::string> services) {
  if (name.empty()) throw ArgumentError("agent name must not be empty");
  if (is_registered(name)) throw DuplicateName(name);
  AgentId id{name, "agent-" + std::to_string(next_address_++) + "@uvf"};
  directory_.push_back(ServiceEntry{id, std::move(services)});
  return id;
}

void Bus::deregister(const std::string& name) {
  auto it = std::find_if(directory_.begin(), directory_.end(),
                         [&](const ServiceEntry& e) { return e.agent.name == name; });
  if (it == directory_.end()) throw UnknownAgent(name);
  directory_.erase(it);
}

bool Bus::is_registered(const std::string& name) const {
  return std::any_of(directory_.begin(), directory_.end(), [&](const ServiceEntry& e) { return e.agent.name == name; });
}

const AgentId& Bus::agent(const std::string& name) const {
  for (const auto& e : directory_) {
    if (e.agent.name == name) return e.agent;
  }
  throw UnknownAgent(name);
}

std::vector<AgentId> Bus::lookup_service(const std::string& service) const {
  std::vector<AgentId> out;
  for (const auto& e : directory_) {
    if (e.services.contains(service)) out.push_back(e.agent);
  }
  return out;
}

std::string Bus::open_conversation() { return "conv-" + std::to_string(next_conversation_++); }

void Bus::begin_cycle(SimDuration cycle) {
  cycle_ = cycle;
  ledger_ = {};
}

std::vector<std::string> Bus::open_requests() const {
  std::vector<std::string> out;
  for (const auto& [conv, _] : pending_) out.push_back(conv);
  return out;
}

void Bus::check_link(const AclMessage& m, const std::string& receiver, const topo::Topology& t) const {
  const auto& sender = m.sender.name;
  if (is_supervision(sender, receiver)) return;
  if (sender == kOperatorAgent || receiver == kOperatorAgent) {
    throw LinkForbidden(sender, receiver, "the operator only talks to the MCC");
  }
  const auto from = node_of(sender);
  const auto to = node_of(receiver);
  if (!from || !to) throw LinkForbidden(sender, receiver, "not a fleet agent");

  if (const auto* slave = std::get_if<fleet::UvId>(&*to)) {
    if (t.master_of(*slave) == *from) return;
  }
  if (const auto* slave = std::get_if<fleet::UvId>(&*from)) {
    if (t.master_of(*slave) == *to) {
      auto it = initiators_.find(m.conversation_id);
      if (it != initiators_.end() && it->second == receiver) return;
      throw LinkForbidden(sender, receiver, "a slave may only reply inside a conversation opened by its master");
    }
  }
  const auto a = uv_of(sender);
  const auto b = uv_of(receiver);
  if (a && b && has_peer(t, *a, *b)) return;
  throw LinkForbidden(sender, receiver, "no master-slave or peer link");
}

std::int64_t Bus::charge(const AclMessage& m, const std::string& receiver, const topo::Topology& t) {
  if (m.performative != Performative::Inform) return 0;
  auto channel = m.content.find(kChannel);
  if (channel == m.content.end()) return 0;
  const auto rate = limits_.uplink_rate;
  const auto& sender = m.sender.name;
  std::int64_t charged = 0;

  if (channel->second == kTelemetry) {
    auto origin = m.content.find(kOrigin);
    if (auto uv = uv_of(sender); uv && (origin == m.content.end() || origin->second != sender)) {
      ledger_.per_uv[*uv] += rate;
      charged += rate;
    }
    if (receiver == kMccAgent) {
      ledger_.mcc += rate;
      charged += rate;
    }
  } else if (channel->second == kCoordination) {
    const auto a = uv_of(sender);
    const auto b = uv_of(receiver);
    if (!a || !b) return 0;
    if (t.layer_of(*a) == topo::kOperationalLayer && t.layer_of(*b) == topo::kOperationalLayer) {
      ledger_.per_uv[*a] += rate;
      ledger_.per_uv[*b] += rate;
      ledger_.mcc += 2 * rate;
      charged += 4 * rate;
    } else if (const auto* c = t.cluster_containing(*a); c && c->head == *b) {
      ledger_.per_uv[*a] += rate;
      charged += rate;
    } else if (const auto* c2 = t.cluster_containing(*b); c2 && c2->head == *a) {
      ledger_.per_uv[*b] += rate;
      charged += rate;
    }
  }
  return charged;
}

void Bus::record(const AclMessage& m, const std::string& receiver) {
  log_.push_back(LoggedMessage{cycle_, m.performative, m.sender.name, receiver, m.content, m.conversation_id});
}

DeliveryReceipt Bus::send(const AclMessage& m, const topo::Topology& t) {
  if (!is_registered(m.sender.name)) throw UnknownAgent(m.sender.name);
  for (const auto& [key, _] : m.content) {
    if (key.empty()) throw ArgumentError("message content keys must not be empty");
  }
  if ((m.performative == Performative::Request || is_reply(m.performative)) && m.conversation_id.empty()) {
    throw ArgumentError("REQUEST and its replies need a conversation id");
  }

  std::vector<std::string> receivers;
  if (m.receiver) {
    if (!is_registered(m.receiver->name)) throw UnknownAgent(m.receiver->name);
    receivers.push_back(m.receiver->name);
  } else {
    auto from = uv_of(m.sender.name);
    if (!from) throw LinkForbidden(m.sender.name, "*", "only UVs broadcast to peers");
    for (const auto& p : t.peers_of(*from)) {
      if (is_registered(p.name())) receivers.push_back(p.name());
    }
  }

  for (const auto& r : receivers) check_link(m, r, t);

  DeliveryReceipt receipt;
  for (const auto& r : receivers) {
    if (m.performative == Performative::Request) {
      initiators_.try_emplace(m.conversation_id, m.sender.name);
      pending_[m.conversation_id] = r;
    } else if (is_reply(m.performative)) {
      auto it = pending_.find(m.conversation_id);
      if (it != pending_.end() && it->second == m.sender.name) pending_.erase(it);
    }
    receipt.charged += charge(m, r, t);
    record(m, r);
    receipt.delivered.push_back(agent(r));
  }
  return receipt;
}

std::string Bus::log_jsonl() const {
  std::string out;
  for (const auto& m : log_) {
    nlohmann::json j;
    j["cycle"] = to_minutes(m.cycle);
    j["performative"] = std::string(to_string(m.performative));
    j["sender"] = m.sender;
    j["receiver"] = m.receiver;
    j["content"] = m.content;
    j["conversation"] = m.conversation_id;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void register_fleet(Bus& bus, const std::vector<fleet::UvId>& uvs) {
  bus.register_agent(kMccAgent, {"mcc-control"});
  bus.register_agent(kOperatorAgent, {"operator"});
  for (const auto& uv : uvs) bus.register_agent(uv.name(), {"uv-telemetry"});
}

topo::TrafficReport run_telemetry_cycle(Bus& bus, const topo::Topology& t, SimDuration cycle) {
  bus.begin_cycle(cycle);
  auto message = [&](Performative p, const std::string& from, const std::string& to, Content content,
                     const std::string& conv) {
    AclMessage m;
    m.performative = p;
    m.sender = bus.agent(from);
    m.receiver = bus.agent(to);
    m.content = std::move(content);
    m.conversation_id = conv;
    m.cycle = cycle;
    bus.send(m, t);
  };

  auto links = t.ms_links();
  std::stable_sort(links.begin(), links.end(), [&](const topo::MsLink& a, const topo::MsLink& b) {
    return t.layer_of(a.slave) < t.layer_of(b.slave);
  });
  for (const auto& link : links) {
    const auto master = topo::node_name(link.master);
    const auto& slave = link.slave.name();
    const auto conv = bus.open_conversation();
    message(Performative::Request, master, slave, {{"request", kTelemetry}}, conv);
    message(Performative::Agree, slave, master, {{"request", kTelemetry}}, conv);
    message(Performative::Inform, slave, master, {{kChannel, kTelemetry}, {kOrigin, slave}}, conv);
    for (const auto& d : topo::descendants(t, link.slave)) {
      message(Performative::Inform, slave, master, {{kChannel, kTelemetry}, {kOrigin, d.name()}}, conv);
    }
  }
  for (const auto& c : t.clusters()) {
    for (const auto& m : c.members) {
      message(Performative::Inform, m.name(), c.head.name(), {{kChannel, kTelemetry}, {kOrigin, m.name()}},
              bus.open_conversation());
    }
  }
  for (const auto& p : t.peer_links()) {
    const auto conv = bus.open_conversation();
    message(Performative::Inform, p.a.name(), p.b.name(), {{kChannel, kCoordination}}, conv);
    message(Performative::Inform, p.b.name(), p.a.name(), {{kChannel, kCoordination}}, conv);
  }
  return bus.cycle_ledger();
}

}  // namespace uvf::acl
