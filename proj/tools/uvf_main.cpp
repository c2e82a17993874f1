#include <CLI11.hpp>
#include <atomic>
#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "uvf/gateway.hpp"

namespace {

using namespace uvf;
using sim::json;

constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_interrupted{false};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sim::ParseError("", 0, "cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

sim::ExportFormat parse_format(const std::string& f) {
  if (f == "csv") return sim::ExportFormat::Csv;
  if (f == "json") return sim::ExportFormat::Json;
  return sim::ExportFormat::Both;
}

double parse_pace(const std::string& text) {
  if (text == "max") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && v >= 0) return v;
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--pace", "expected a non-negative number or 'max'");
}

std::uint16_t default_port() {
  if (const char* env = std::getenv("UVF_PORT")) {
    try {
      const int p = std::stoi(env);
      if (p > 0 && p < 65536) return static_cast<std::uint16_t>(p);
    } catch (const std::exception&) {
    }
    std::cerr << "ignoring invalid UVF_PORT=" << env << "\n";
  }
  return 8080;
}

std::string http_get(const std::string& url) {
  namespace beast = boost::beast;
  namespace http = beast::http;
  using tcp = boost::asio::ip::tcp;
  std::string rest = url;
  if (rest.rfind("http://", 0) == 0) rest = rest.substr(7);
  const auto slash = rest.find('/');
  const std::string hostport = rest.substr(0, slash);
  const std::string target = slash == std::string::npos ? "/" : rest.substr(slash);
  const auto colon = hostport.rfind(':');
  const std::string host = hostport.substr(0, colon);
  const std::string port = colon == std::string::npos ? "80" : hostport.substr(colon + 1);

  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve(host, port));
  http::request<http::empty_body> req{http::verb::get, target, 11};
  req.set(http::field::host, host);
  http::write(stream, req);
  beast::flat_buffer buffer;
  http::response<http::string_body> res;
  http::read(stream, buffer, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  if (res.result() != http::status::ok) {
    throw Error("GET " + url + " returned " + std::to_string(res.result_int()) + ": " + res.body());
  }
  return res.body();
}

void print_summary(const sim::Trace& trace) {
  std::cout << "trace events: " << trace.size() << "\n";
  std::cout << "trace hash:   " << sim::trace_hash(trace) << "\n";
  std::cout << "patterns:    ";
  for (const auto& e : trace) {
    if (e.kind == sim::TraceKind::Snapshot) std::cout << " " << e.payload["pattern"].get<std::string>();
  }
  std::cout << "\n";
}

std::vector<std::filesystem::path> write_metrics(const sim::Trace& trace, const std::string& format,
                                                 const std::filesystem::path& out,
                                                 const std::optional<sim::TrafficReference>& reference) {
  auto files = sim::export_metrics(trace, parse_format(format), out, reference);
  if (reference) {
    const auto diffs = sim::compare_reference(sim::extract_metrics(trace), *reference);
    for (const auto& d : diffs) {
      std::cout << "reference differs: sample " << d.test_case << " column " << d.column << " expected "
                << d.expected << " emitted " << d.emitted << (d.note.empty() ? "" : " (annotated)") << "\n";
    }
  }
  return files;
}

int cmd_run(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& out,
            const std::string& format, const std::string& pace_text) {
  const auto scenario = sim::load_scenario(scenario_path);
  const double pace = parse_pace(pace_text);
  sim::Simulator simulator(scenario, seed.value_or(scenario.seed));
  while (!simulator.finished() && !g_interrupted) {
    const auto before = simulator.now();
    simulator.step();
    if (pace > 0 && !std::isinf(pace)) {
      const double minutes = to_minutes(simulator.now() - before);
      std::this_thread::sleep_for(std::chrono::duration<double>(minutes / pace));
    }
  }
  if (g_interrupted) throw Error("interrupted");
  const std::filesystem::path dir(out);
  std::filesystem::create_directories(dir);
  write_text(dir / "trace.jsonl", sim::trace_jsonl(simulator.trace()));
  write_text(dir / "messages.jsonl", simulator.bus().log_jsonl());
  auto files = write_metrics(simulator.trace(), format, dir, scenario.reference);
  print_summary(simulator.trace());
  std::cout << "wrote " << (dir / "trace.jsonl").string() << ", " << (dir / "messages.jsonl").string();
  for (const auto& f : files) std::cout << ", " << f.string();
  std::cout << "\n";
  return 0;
}

int cmd_serve(const std::string& scenario_path, std::optional<std::uint64_t> seed, const std::string& address,
              std::uint16_t port, const std::string& pace_text) {
  const auto scenario = sim::load_scenario(scenario_path);
  auto session = std::make_shared<gateway::Session>(scenario, seed.value_or(scenario.seed), parse_pace(pace_text));
  gateway::Server server(session, address, port);
  std::cout << "serving session " << session->session_id() << " on http://" << address << ":" << server.port()
            << std::endl;
  while (!g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  session->stop();
  return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& out, const std::string& format,
               const std::string& scenario_path) {
  const auto trace = sim::parse_trace_jsonl(read_text(trace_path));
  std::optional<sim::TrafficReference> reference;
  if (!scenario_path.empty()) reference = sim::load_scenario(scenario_path).reference;
  const auto files = write_metrics(trace, format, out, reference);
  print_summary(trace);
  for (const auto& f : files) std::cout << "wrote " << f.string() << "\n";
  return 0;
}

int cmd_export_session(const std::string& url, const std::string& out, const std::string& trace_out) {
  std::string base = url;
  while (!base.empty() && base.back() == '/') base.pop_back();
  const auto scenario = json::parse(http_get(base + "/session/scenario"));
  write_text(out, scenario.dump(2) + "\n");
  std::cout << "wrote " << out << "\n";
  if (!trace_out.empty()) {
    const auto page = json::parse(http_get(base + "/trace?from=0"));
    std::string text;
    for (const auto& e : page["events"]) text += e.dump() + "\n";
    write_text(trace_out, text);
    std::cout << "wrote " << trace_out << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });

  CLI::App app{"Unmanned vehicle fleet simulator with an adaptive mission control center"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::optional<std::uint64_t> seed;
  std::string out = "results";
  std::string format = "both";
  std::string pace = "max";

  auto* run = app.add_subcommand("run", "Run a scenario headless and write the trace and metric exports");
  run->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "RNG seed (defaults to the scenario's seed)");
  run->add_option("--out", out, "Output directory")->capture_default_str();
  run->add_option("--format", format, "Metric export format")
      ->check(CLI::IsMember({"csv", "json", "both"}))
      ->capture_default_str();
  run->add_option("--pace", pace, "Sim-minutes per wall-second, or 'max'")->capture_default_str();

  std::string address = "127.0.0.1";
  std::uint16_t port = default_port();
  std::string serve_pace = "1";
  auto* serve = app.add_subcommand("serve", "Serve a live session over HTTP and WebSocket");
  serve->add_option("--scenario", scenario_path, "Scenario JSON file")->required();
  serve->add_option("--seed", seed, "RNG seed (defaults to the scenario's seed)");
  serve->add_option("--address", address, "Listen address")->capture_default_str();
  serve->add_option("--port", port, "Listen port (default from UVF_PORT, else 8080)")->capture_default_str();
  serve->add_option("--pace", serve_pace, "Sim-minutes per wall-second; 0 starts paused, 'max' runs flat out")
      ->capture_default_str();

  std::string trace_path;
  std::string reference_scenario;
  auto* replay = app.add_subcommand("replay", "Rebuild metric exports from a recorded trace");
  replay->add_option("--trace", trace_path, "trace.jsonl file")->required();
  replay->add_option("--out", out, "Output directory")->capture_default_str();
  replay->add_option("--format", format, "Metric export format")
      ->check(CLI::IsMember({"csv", "json", "both"}))
      ->capture_default_str();
  replay->add_option("--reference", reference_scenario, "Scenario whose reference table is compared");

  std::string url = "http://127.0.0.1:" + std::to_string(default_port());
  std::string export_out = "session.json";
  std::string trace_out;
  auto* export_session = app.add_subcommand("export-session", "Save a running session as a replayable scenario");
  export_session->add_option("--url", url, "Base URL of the serving gateway")->capture_default_str();
  export_session->add_option("--out", export_out, "Scenario file to write")->capture_default_str();
  export_session->add_option("--trace-out", trace_out, "Also save the session trace as JSON lines");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(scenario_path, seed, out, format, pace);
    if (*serve) return cmd_serve(scenario_path, seed, address, port, serve_pace);
    if (*replay) return cmd_replay(trace_path, out, format, reference_scenario);
    if (*export_session) return cmd_export_session(url, export_out, trace_out);
  } catch (const sim::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const sim::ValidationError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kExitInput;
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
