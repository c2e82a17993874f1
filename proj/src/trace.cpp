#include <array>
#include <cstdio>
#include <sstream>

#include "uvf/simkit.hpp"

namespace uvf::sim {

namespace {

constexpr std::array kTraceKinds = {
    std::pair{TraceKind::Snapshot, "snapshot"},
    std::pair{TraceKind::Message, "message"},
    std::pair{TraceKind::Decision, "decision"},
    std::pair{TraceKind::Transition, "transition"},
};

fleet::UvId uv_from(const json& j) { return fleet::UvId::parse(j.get<std::string>()); }

}  // namespace

std::string_view to_string(TraceKind kind) {
  for (const auto& [k, name] : kTraceKinds) {
    if (k == kind) return name;
  }
  return "?";
}

std::optional<TraceKind> parse_trace_kind(std::string_view text) {
  for (const auto& [k, name] : kTraceKinds) {
    if (text == name) return k;
  }
  return std::nullopt;
}

json TraceEvent::to_json() const {
  return json{{"index", index}, {"at", to_minutes(at)}, {"kind", std::string(to_string(kind))}, {"payload", payload}};
}

TraceEvent TraceEvent::from_json(const json& j) {
  TraceEvent e;
  e.index = j.at("index").get<std::size_t>();
  e.at = from_minutes(j.at("at").get<double>());
  const auto kind = parse_trace_kind(j.at("kind").get<std::string>());
  if (!kind) throw ArgumentError("unknown trace event kind " + j.at("kind").dump());
  e.kind = *kind;
  e.payload = j.at("payload");
  return e;
}

std::string trace_jsonl(const Trace& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += e.to_json().dump();
    out += '\n';
  }
  return out;
}

Trace parse_trace_jsonl(const std::string& text) {
  Trace out;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(TraceEvent::from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError("", number, e.what());
    } catch (const ArgumentError& e) {
      throw ParseError("kind", number, e.what());
    }
  }
  return out;
}

std::string trace_hash(const Trace& trace) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : trace_jsonl(trace)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json topology_to_json(const topo::Topology& t) {
  json layers = json::object();
  for (const auto& [uv, layer] : t.layers()) layers[uv.name()] = layer;
  json links = json::array();
  for (const auto& l : t.ms_links()) links.push_back({{"master", topo::node_name(l.master)}, {"slave", l.slave.name()}});
  json peers = json::array();
  for (const auto& p : t.peer_links()) peers.push_back(json::array({p.a.name(), p.b.name()}));
  json clusters = json::array();
  for (const auto& c : t.clusters()) {
    json members = json::array();
    for (const auto& m : c.members) members.push_back(m.name());
    clusters.push_back({{"head", c.head.name()}, {"members", members}});
  }
  return json{{"pattern", std::string(topo::to_string(t.pattern))},
              {"layers", layers},
              {"links", links},
              {"peers", peers},
              {"clusters", clusters}};
}

topo::Topology topology_from_json(const json& j) {
  topo::Topology t;
  const auto pattern = topo::parse_pattern(j.at("pattern").get<std::string>());
  if (!pattern) throw ArgumentError("unknown pattern " + j.at("pattern").dump());
  t.pattern = *pattern;
  for (auto it = j.at("layers").begin(); it != j.at("layers").end(); ++it) {
    t.mutable_layers()[fleet::UvId::parse(it.key())] = it->get<int>();
  }
  for (const auto& l : j.at("links")) {
    const auto master = l.at("master").get<std::string>();
    topo::Node node = master == acl::kMccAgent ? topo::Node{topo::Mcc{}} : topo::Node{fleet::UvId::parse(master)};
    t.mutable_ms_links().push_back(topo::MsLink{node, uv_from(l.at("slave"))});
  }
  for (const auto& p : j.at("peers")) t.mutable_peer_links().push_back(topo::PeerLink::make(uv_from(p[0]), uv_from(p[1])));
  for (const auto& c : j.at("clusters")) {
    topo::Cluster cluster{uv_from(c.at("head")), {}};
    for (const auto& m : c.at("members")) cluster.members.push_back(uv_from(m));
    t.mutable_clusters().push_back(std::move(cluster));
  }
  return t;
}

}  // namespace uvf::sim
