#include <algorithm>
#include <cstdio>
#include <fstream>

#include "uvf/simkit.hpp"

namespace uvf::sim {

namespace {

std::string format_time(double minutes) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", minutes);
  return buf;
}

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

MetricsTables extract_metrics(const Trace& trace) {
  MetricsTables m;
  std::vector<fleet::UvId> ids;
  bool any = false;
  for (const auto& e : trace) {
    if (e.kind != TraceKind::Snapshot) continue;
    const auto& p = e.payload;
    if (!any) {
      for (auto it = p.at("traffic").at("per_uv").begin(); it != p.at("traffic").at("per_uv").end(); ++it) {
        ids.push_back(fleet::UvId::parse(it.key()));
      }
      std::sort(ids.begin(), ids.end(), [](const fleet::UvId& a, const fleet::UvId& b) {
        if (a.kind() != b.kind()) return a.kind() < b.kind();
        return a < b;
      });
      for (const auto& id : ids) m.columns.push_back(id.short_label());
      any = true;
    }
    TrafficRow tr;
    tr.test_case = p.at("sample").get<int>();
    tr.time = p.at("time").get<double>();
    UtilizationRow ur;
    ur.time = tr.time;
    for (const auto& id : ids) {
      tr.cells[id.short_label()] = p.at("traffic").at("per_uv").value(id.name(), std::int64_t{0});
      ur.values[id.short_label()] = p.at("utilization").value(id.name(), 0.0);
    }
    tr.mcc = p.at("traffic").at("mcc").get<std::int64_t>();
    m.traffic.push_back(std::move(tr));
    m.utilization.push_back(std::move(ur));
  }
  if (!any) throw ArgumentError("trace contains no snapshot");
  return m;
}

std::string traffic_csv(const MetricsTables& m) {
  std::string out = "test_case,time";
  for (const auto& c : m.columns) out += ",Tr_" + c;
  out += ",Tr_MCC\n";
  for (const auto& r : m.traffic) {
    out += std::to_string(r.test_case) + "," + format_time(r.time);
    for (const auto& c : m.columns) {
      auto it = r.cells.find(c);
      out += "," + std::to_string(it == r.cells.end() ? 0 : it->second);
    }
    out += "," + std::to_string(r.mcc) + "\n";
  }
  return out;
}

std::string utilization_csv(const MetricsTables& m) {
  std::string out = "time";
  for (const auto& c : m.columns) out += ",U_" + c;
  out += "\n";
  for (const auto& r : m.utilization) {
    out += format_time(r.time);
    for (const auto& c : m.columns) {
      auto it = r.values.find(c);
      out += "," + format_percent(it == r.values.end() ? 0.0 : it->second);
    }
    out += "\n";
  }
  return out;
}

json metrics_to_json(const MetricsTables& m) {
  json traffic = json::array();
  for (const auto& r : m.traffic) {
    traffic.push_back({{"test_case", r.test_case}, {"time", r.time}, {"cells", r.cells}, {"mcc", r.mcc}});
  }
  json utilization = json::array();
  for (const auto& r : m.utilization) utilization.push_back({{"time", r.time}, {"values", r.values}});
  return json{{"columns", m.columns}, {"traffic", traffic}, {"utilization", utilization}};
}

MetricsTables metrics_from_json(const json& j) {
  MetricsTables m;
  m.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& r : j.at("traffic")) {
    m.traffic.push_back(TrafficRow{r.at("test_case").get<int>(), r.at("time").get<double>(),
                                   r.at("cells").get<std::map<std::string, std::int64_t>>(),
                                   r.at("mcc").get<std::int64_t>()});
  }
  for (const auto& r : j.at("utilization")) {
    m.utilization.push_back(
        UtilizationRow{r.at("time").get<double>(), r.at("values").get<std::map<std::string, double>>()});
  }
  return m;
}

std::vector<ReferenceDiff> compare_reference(const MetricsTables& m, const TrafficReference& ref) {
  std::vector<ReferenceDiff> out;
  for (const auto& row : ref.rows) {
    auto emitted_row = std::find_if(m.traffic.begin(), m.traffic.end(),
                                    [&](const TrafficRow& r) { return r.test_case == row.test_case; });
    for (const auto& [column, expected] : row.cells) {
      std::int64_t emitted = 0;
      if (emitted_row != m.traffic.end()) {
        if (column == "MCC") {
          emitted = emitted_row->mcc;
        } else if (auto it = emitted_row->cells.find(column); it != emitted_row->cells.end()) {
          emitted = it->second;
        }
      }
      if (emitted_row != m.traffic.end() && emitted == expected) continue;
      ReferenceDiff d{row.test_case, column, expected, emitted, ""};
      if (emitted_row == m.traffic.end()) d.note = "no sample with this index was recorded";
      for (const auto& n : ref.notes) {
        if (n.test_case == row.test_case && n.column == column) d.note = n.note;
      }
      out.push_back(std::move(d));
    }
  }
  return out;
}

json reference_diff_to_json(const std::vector<ReferenceDiff>& diffs) {
  json out = json::array();
  for (const auto& d : diffs) {
    out.push_back({{"test_case", d.test_case},
                   {"column", d.column},
                   {"expected", d.expected},
                   {"emitted", d.emitted},
                   {"note", d.note}});
  }
  return out;
}

std::vector<std::filesystem::path> export_metrics(const Trace& trace, ExportFormat format,
                                                  const std::filesystem::path& dir,
                                                  const std::optional<TrafficReference>& reference) {
  const auto m = extract_metrics(trace);
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    write_file(dir / name, text);
    written.push_back(dir / name);
  };
  if (format != ExportFormat::Json) {
    put("traffic.csv", traffic_csv(m));
    put("utilization.csv", utilization_csv(m));
  }
  if (format != ExportFormat::Csv) put("metrics.json", metrics_to_json(m).dump(2) + "\n");
  if (reference) put("traffic_reference_diff.json", reference_diff_to_json(compare_reference(m, *reference)).dump(2) + "\n");
  return written;
}

}  // namespace uvf::sim
