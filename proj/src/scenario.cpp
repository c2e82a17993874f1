#include <algorithm>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "uvf/simkit.hpp"

namespace uvf::sim {

namespace {

/// Maps JSON paths ("events[3].at") to the 1-based line where the value
/// starts. Only run on text that already parsed.
class LineLocator {
 public:
  explicit LineLocator(const std::string& text) : text_(text) {
    skip_ws();
    value("");
  }

  int line_of(const std::string& path) const {
    // Fall back to the closest enclosing path that was seen.
    std::string p = path;
    for (;;) {
      if (auto it = lines_.find(p); it != lines_.end()) return it->second;
      auto cut = p.find_last_of(".[");
      if (cut == std::string::npos) return p.empty() ? 1 : line_of("");
      p = p.substr(0, cut);
    }
  }

 private:
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string string_token() {
    std::string out;
    ++pos_;
    while (pos_ < text_.size() && text_[pos_] != '"') {
      if (text_[pos_] == '\\') ++pos_;
      if (pos_ < text_.size()) out += text_[pos_++];
    }
    ++pos_;
    return out;
  }

  void value(const std::string& path) {
    lines_.emplace(path, line_);
    if (pos_ >= text_.size()) return;
    const char c = text_[pos_];
    if (c == '{') {
      ++pos_;
      skip_ws();
      while (pos_ < text_.size() && text_[pos_] != '}') {
        const auto key = string_token();
        skip_ws();
        ++pos_;  // ':'
        skip_ws();
        value(path.empty() ? key : path + "." + key);
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (c == '[') {
      ++pos_;
      skip_ws();
      for (int i = 0; pos_ < text_.size() && text_[pos_] != ']'; ++i) {
        value(path + "[" + std::to_string(i) + "]");
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ',') {
          ++pos_;
          skip_ws();
        }
      }
      ++pos_;
    } else if (c == '"') {
      string_token();
    } else {
      while (pos_ < text_.size() && !std::strchr(",]} \t\r\n", text_[pos_])) ++pos_;
    }
  }

  const std::string& text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  std::map<std::string, int> lines_;
};

class Reader {
 public:
  Reader(const json& j, std::string path, const LineLocator& lines) : j_(j), path_(std::move(path)), lines_(lines) {}

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_, lines_.line_of(path_), what); }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  Reader at(const std::string& key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!j_.contains(key)) Reader(j_, child(key), lines_).fail("missing required field");
    return Reader(j_.at(key), child(key), lines_);
  }

  std::vector<Reader> items() const {
    if (!j_.is_array()) fail("expected an array");
    std::vector<Reader> out;
    for (std::size_t i = 0; i < j_.size(); ++i) out.emplace_back(j_[i], path_ + "[" + std::to_string(i) + "]", lines_);
    return out;
  }

  std::vector<std::pair<std::string, Reader>> entries() const {
    if (!j_.is_object()) fail("expected an object");
    std::vector<std::pair<std::string, Reader>> out;
    for (auto it = j_.begin(); it != j_.end(); ++it) out.emplace_back(it.key(), Reader(*it, child(it.key()), lines_));
    return out;
  }

  double number() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }

  std::int64_t integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<std::int64_t>();
  }

  std::string string() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }

  bool boolean() const {
    if (!j_.is_boolean()) fail("expected true or false");
    return j_.get<bool>();
  }

  SimDuration minutes() const {
    const double m = number();
    if (!std::isfinite(m)) fail("expected a finite number of minutes");
    return from_minutes(m);
  }

  const std::string& path() const { return path_; }

 private:
  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  const LineLocator& lines_;
};

fleet::UvId uv_ref(const Reader& r, const std::map<std::string, fleet::UvId>& fleet) {
  const auto name = r.string();
  auto it = fleet.find(name);
  if (it == fleet.end()) throw ValidationError(r.path() + ": unknown UV '" + name + "'");
  return it->second;
}

mcc::OperationMode read_mode(const Reader& r) {
  const auto mode = r.at("mode").string();
  if (mode == "automatic") return mcc::OperationMode::automatic();
  if (mode != "manual") r.at("mode").fail("expected 'automatic' or 'manual'");
  const auto pattern = topo::parse_pattern(r.at("pattern").string());
  if (!pattern || *pattern == topo::PatternLabel::None) {
    r.at("pattern").fail("expected Central, Hierarchical or Holonic");
  }
  return mcc::OperationMode::manual(*pattern);
}

}  // namespace

ParseError::ParseError(std::string field, int line, const std::string& what)
    : Error((line > 0 ? "line " + std::to_string(line) + (field.empty() ? "" : ", field '" + field + "'") + ": " : "") +
            what),
      field_(std::move(field)),
      line_(line) {}

ChurnProfile ChurnProfile::exploratory() {
  using fleet::UvEvent;
  return ChurnProfile{{{UvEvent::Init, 0.5},
                       {UvEvent::RegisterAccepted, 0.3},
                       {UvEvent::Fail, 0.05},
                       {UvEvent::MissionComplete, 0.1},
                       {UvEvent::RechargeNeeded, 0.02},
                       {UvEvent::BecomeAvailable, 0.2}}};
}

std::vector<SimDuration> Scenario::sample_points() const {
  if (!sample_at.empty()) return sample_at;
  std::vector<SimDuration> out;
  if (sample_every.count() <= 0) return out;
  for (auto t = sample_every; t <= horizon; t += sample_every) out.push_back(t);
  return out;
}

Scenario parse_scenario(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    throw ParseError("", line, e.what());
  }
  const LineLocator lines(text);
  const Reader r(root, "", lines);

  Scenario s;
  s.schema_version = static_cast<int>(r.at("schema_version").integer());
  if (s.schema_version != kSchemaVersion) {
    r.at("schema_version").fail("unsupported schema version " + std::to_string(s.schema_version));
  }
  if (r.has("name")) s.name = r.at("name").string();
  if (r.has("seed")) s.seed = static_cast<std::uint64_t>(r.at("seed").integer());

  std::map<std::string, fleet::UvId> by_name;
  for (const auto& item : r.at("fleet").items()) {
    const auto name = item.at("id").string();
    const auto kind = fleet::parse_kind(item.at("kind").string());
    if (!kind) item.at("kind").fail("expected UAV or UGV");
    fleet::UvId id;
    try {
      id = fleet::UvId(name, *kind);
    } catch (const ArgumentError& e) {
      throw ValidationError(item.path() + ": " + e.what());
    }
    if (by_name.contains(name)) throw ValidationError(item.path() + ": duplicate UV '" + name + "'");
    by_name.emplace(name, id);
    s.fleet.push_back(FleetEntry{id, item.at("in_mcc_range").boolean()});
  }

  if (r.has("limits")) {
    const auto l = r.at("limits");
    if (l.has("mcc_max_links")) s.limits.mcc_max_links = static_cast<int>(l.at("mcc_max_links").integer());
    if (l.has("leader_max_followers")) {
      s.limits.leader_max_followers = static_cast<int>(l.at("leader_max_followers").integer());
    }
    if (l.has("uplink_rate_kbit")) s.limits.uplink_rate = l.at("uplink_rate_kbit").integer();
  }
  if (r.has("max_per_kind")) {
    for (const auto& [kind_name, v] : r.at("max_per_kind").entries()) {
      const auto kind = fleet::parse_kind(kind_name);
      if (!kind) v.fail("unknown UV kind");
      s.max_per_kind[*kind] = static_cast<int>(v.integer());
    }
  }

  s.horizon = r.at("horizon").minutes();
  if (r.has("sample_every")) s.sample_every = r.at("sample_every").minutes();
  if (r.has("sample_at")) {
    for (const auto& item : r.at("sample_at").items()) s.sample_at.push_back(item.minutes());
  }
  if (r.has("initial_mode")) s.initial_mode = read_mode(r.at("initial_mode"));

  for (const auto& item : r.at("events").items()) {
    ScenarioEvent e;
    e.at = item.at("at").minutes();
    const auto type = item.at("type").string();
    if (type == "uv_event") {
      const auto ev = fleet::parse_event(item.at("event").string());
      if (!ev) item.at("event").fail("unknown UV event");
      e.action = StateEvent{uv_ref(item.at("uv"), by_name), *ev};
    } else if (type == "operator") {
      e.action = OperatorCommand{read_mode(item)};
    } else if (type == "utilization_override") {
      UtilizationOverride o;
      for (const auto& [name, v] : item.at("values").entries()) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw ValidationError(v.path() + ": unknown UV '" + name + "'");
        o.values[it->second] = v.number();
      }
      e.action = std::move(o);
    } else if (type == "failure") {
      e.action = FailureInjection{uv_ref(item.at("uv"), by_name)};
    } else {
      item.at("type").fail("unknown event type '" + type + "'");
    }
    s.events.push_back(std::move(e));
  }

  if (r.has("churn")) {
    ChurnProfile churn;
    const auto c = r.at("churn");
    if (c.has("profile") && c.at("profile").string() == "exploratory") churn = ChurnProfile::exploratory();
    if (c.has("per_minute")) {
      churn.per_minute.clear();
      auto entries = c.at("per_minute").entries();
      for (auto ev : fleet::kAllEvents) {
        for (const auto& [name, v] : entries) {
          const auto parsed = fleet::parse_event(name);
          if (!parsed) v.fail("unknown UV event");
          if (*parsed == ev) churn.per_minute.emplace_back(ev, v.number());
        }
      }
    }
    s.churn = std::move(churn);
  }

  if (r.has("reference")) {
    TrafficReference ref;
    const auto ref_r = r.at("reference");
    for (const auto& row : ref_r.at("rows").items()) {
      ReferenceRow rr;
      rr.test_case = static_cast<int>(row.at("test_case").integer());
      rr.time = row.at("time").number();
      for (const auto& [col, v] : row.at("cells").entries()) rr.cells[col] = v.integer();
      ref.rows.push_back(std::move(rr));
    }
    if (ref_r.has("notes")) {
      for (const auto& n : ref_r.at("notes").items()) {
        ref.notes.push_back(ReferenceNote{static_cast<int>(n.at("test_case").integer()), n.at("column").string(),
                                          n.at("note").string()});
      }
    }
    s.reference = std::move(ref);
  }

  validate(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("", 0, "cannot open scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

void validate(const Scenario& s) {
  auto fail = [](const std::string& what) { throw ValidationError(what); };
  if (s.schema_version != kSchemaVersion) fail("unsupported schema version");
  if (s.horizon.count() <= 0) fail("horizon must be positive");
  if (s.sample_at.empty() && s.sample_every.count() <= 0) fail("sample_every must be positive");
  if (s.limits.mcc_max_links <= 0 || s.limits.leader_max_followers <= 0 || s.limits.uplink_rate <= 0) {
    fail("capacity limits must be positive");
  }

  std::set<fleet::UvId> ids;
  std::map<fleet::UvKind, int> per_kind;
  for (const auto& f : s.fleet) {
    if (!ids.insert(f.id).second) fail("duplicate UV " + f.id.name());
    ++per_kind[f.id.kind()];
  }
  for (const auto& [kind, n] : per_kind) {
    auto it = s.max_per_kind.find(kind);
    if (it != s.max_per_kind.end() && n > it->second) {
      fail("fleet has " + std::to_string(n) + " " + std::string(fleet::to_string(kind)) + "s, limit is " +
           std::to_string(it->second));
    }
  }

  for (std::size_t i = 0; i < s.sample_at.size(); ++i) {
    if (s.sample_at[i].count() < 0 || s.sample_at[i] > s.horizon) fail("sample point outside the horizon");
    if (i > 0 && s.sample_at[i] <= s.sample_at[i - 1]) fail("sample points must be strictly increasing");
  }

  SimDuration last{0};
  for (std::size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    const auto where = "events[" + std::to_string(i) + "]";
    if (e.at.count() < 0 || e.at > s.horizon) fail(where + ": time outside the horizon");
    if (e.at < last) fail(where + ": events must be sorted by time");
    last = e.at;
    auto known = [&](const fleet::UvId& uv) {
      if (!ids.contains(uv)) fail(where + ": unknown UV " + uv.name());
    };
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, StateEvent> || std::is_same_v<T, FailureInjection>) {
            known(a.uv);
          } else if constexpr (std::is_same_v<T, UtilizationOverride>) {
            for (const auto& [uv, v] : a.values) {
              known(uv);
              if (!(v >= 0 && v <= 100)) fail(where + ": utilization must lie in [0, 100]");
            }
          }
        },
        e.action);
  }

  if (s.churn) {
    for (const auto& [ev, p] : s.churn->per_minute) {
      if (!(p >= 0 && p <= 1)) fail("churn probability for " + std::string(fleet::to_string(ev)) + " outside [0, 1]");
    }
  }
}

json mode_to_json(const mcc::OperationMode& mode) {
  if (!mode.is_manual()) return json{{"mode", "automatic"}};
  return json{{"mode", "manual"}, {"pattern", std::string(topo::to_string(mode.requested()))}};
}

mcc::OperationMode mode_from_json(const json& j) {
  const std::string text = j.dump();
  const LineLocator lines(text);
  return read_mode(Reader(j, "", lines));
}

json scenario_to_json(const Scenario& s) {
  json j;
  j["schema_version"] = s.schema_version;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["fleet"] = json::array();
  for (const auto& f : s.fleet) {
    j["fleet"].push_back(
        {{"id", f.id.name()}, {"kind", std::string(fleet::to_string(f.id.kind()))}, {"in_mcc_range", f.in_mcc_range}});
  }
  j["limits"] = {{"mcc_max_links", s.limits.mcc_max_links},
                 {"leader_max_followers", s.limits.leader_max_followers},
                 {"uplink_rate_kbit", s.limits.uplink_rate}};
  j["max_per_kind"] = json::object();
  for (const auto& [kind, n] : s.max_per_kind) j["max_per_kind"][std::string(fleet::to_string(kind))] = n;
  j["horizon"] = to_minutes(s.horizon);
  j["sample_every"] = to_minutes(s.sample_every);
  if (!s.sample_at.empty()) {
    j["sample_at"] = json::array();
    for (auto t : s.sample_at) j["sample_at"].push_back(to_minutes(t));
  }
  j["initial_mode"] = mode_to_json(s.initial_mode);
  j["events"] = json::array();
  for (const auto& e : s.events) {
    json ev;
    ev["at"] = to_minutes(e.at);
    std::visit(
        [&](const auto& a) {
          using T = std::decay_t<decltype(a)>;
          if constexpr (std::is_same_v<T, StateEvent>) {
            ev["type"] = "uv_event";
            ev["uv"] = a.uv.name();
            ev["event"] = std::string(fleet::to_string(a.event));
          } else if constexpr (std::is_same_v<T, OperatorCommand>) {
            ev.update(mode_to_json(a.mode));
            ev["type"] = "operator";
          } else if constexpr (std::is_same_v<T, UtilizationOverride>) {
            ev["type"] = "utilization_override";
            ev["values"] = json::object();
            for (const auto& [uv, v] : a.values) ev["values"][uv.name()] = v;
          } else {
            ev["type"] = "failure";
            ev["uv"] = a.uv.name();
          }
        },
        e.action);
    j["events"].push_back(std::move(ev));
  }
  if (s.churn) {
    json p = json::object();
    for (const auto& [ev, prob] : s.churn->per_minute) p[std::string(fleet::to_string(ev))] = prob;
    j["churn"] = {{"per_minute", p}};
  }
  if (s.reference) {
    json rows = json::array();
    for (const auto& r : s.reference->rows) rows.push_back({{"test_case", r.test_case}, {"time", r.time}, {"cells", r.cells}});
    json notes = json::array();
    for (const auto& n : s.reference->notes) {
      notes.push_back({{"test_case", n.test_case}, {"column", n.column}, {"note", n.note}});
    }
    j["reference"] = {{"rows", rows}, {"notes", notes}};
  }
  return j;
}

}  // namespace uvf::sim
