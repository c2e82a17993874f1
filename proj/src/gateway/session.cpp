#include <cmath>
#include <limits>
#include <random>

#include "uvf/gateway.hpp"

namespace uvf::gateway {

namespace {

using Clock = std::chrono::steady_clock;

constexpr auto kTick = std::chrono::milliseconds(20);

std::string new_session_id() {
  std::random_device rd;
  const auto v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json pace_json(Pace p) { return std::isinf(p) ? json("max") : json(p); }

topo::PatternLabel pattern_field(const json& j, const char* key) {
  if (!j.is_string()) throw MalformedCommand(std::string(key) + " must be a pattern name");
  const auto p = topo::parse_pattern(j.get<std::string>());
  if (!p || *p == topo::PatternLabel::None) {
    throw MalformedCommand(std::string(key) + " must be Central, Hierarchical or Holonic");
  }
  return *p;
}

CommandResult rejected(int status, const std::string& why) { return {status, json{{"error", why}}}; }

}  // namespace

Command parse_command(const json& j) {
  if (!j.is_object() || j.size() == 0) throw MalformedCommand("command must be a JSON object");
  if (j.contains("set_mode")) {
    const auto& m = j.at("set_mode");
    if (m == "automatic") return SetMode{mcc::OperationMode::automatic()};
    if (m != "manual") throw MalformedCommand("set_mode must be 'automatic' or 'manual'");
    if (!j.contains("pattern")) throw MalformedCommand("manual mode needs a pattern");
    return SetMode{mcc::OperationMode::manual(pattern_field(j.at("pattern"), "pattern"))};
  }
  if (j.contains("set_pattern")) return SetPattern{pattern_field(j.at("set_pattern"), "set_pattern")};
  if (j.contains("inject_failure")) {
    const auto& v = j.at("inject_failure");
    if (!v.is_string()) throw MalformedCommand("inject_failure must name a UV");
    try {
      return InjectFailure{fleet::UvId::parse(v.get<std::string>())};
    } catch (const ArgumentError& e) {
      throw MalformedCommand(e.what());
    }
  }
  if (j.contains("set_pace")) {
    const auto& v = j.at("set_pace");
    if (v == "max") return SetPace{std::numeric_limits<double>::infinity()};
    if (!v.is_number() || v.get<double>() < 0) throw MalformedCommand("set_pace must be a non-negative number or 'max'");
    return SetPace{v.get<double>()};
  }
  if (j.contains("step")) {
    const auto& v = j.at("step");
    if (v == true) return Step{1};
    if (!v.is_number_integer() || v.get<int>() < 1) throw MalformedCommand("step must be true or a positive count");
    return Step{v.get<int>()};
  }
  if (j.contains("advance_to")) {
    const auto& v = j.at("advance_to");
    if (!v.is_number() || v.get<double>() < 0) throw MalformedCommand("advance_to must be a non-negative minute");
    return AdvanceTo{from_minutes(v.get<double>())};
  }
  throw MalformedCommand("unknown command");
}

Session::Session(sim::Scenario scenario, std::uint64_t seed, Pace pace)
    : session_id_(new_session_id()),
      sim_(std::make_unique<sim::Simulator>(std::move(scenario), seed)),
      pace_(pace),
      published_pace_(pace) {
  if (std::isnan(pace) || pace < 0) throw ArgumentError("pace must be a non-negative number");
  publish();
  thread_ = std::thread([this] { loop(); });
}

Session::~Session() { stop(); }

void Session::stop() {
  {
    std::lock_guard lock(queue_mutex_);
    stopping_ = true;
  }
  queue_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
  std::lock_guard lock(queue_mutex_);
  for (auto& p : queue_) p.promise.set_value(rejected(409, "session stopped"));
  queue_.clear();
}

std::future<CommandResult> Session::submit(Command command) {
  Pending p{std::move(command), {}};
  auto future = p.promise.get_future();
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) {
      p.promise.set_value(rejected(409, "session stopped"));
      return future;
    }
    queue_.push_back(std::move(p));
  }
  queue_cv_.notify_all();
  return future;
}

std::future<CommandResult> Session::submit(const json& payload) {
  try {
    return submit(parse_command(payload));
  } catch (const MalformedCommand& e) {
    std::promise<CommandResult> p;
    p.set_value(rejected(400, e.what()));
    return p.get_future();
  }
}

json Session::state() const {
  std::lock_guard lock(published_mutex_);
  return state_;
}

std::vector<std::string> Session::trace_from(std::size_t from) const {
  std::lock_guard lock(published_mutex_);
  if (from >= trace_.size()) return {};
  return {trace_.begin() + static_cast<long>(from), trace_.end()};
}

std::size_t Session::trace_size() const {
  std::lock_guard lock(published_mutex_);
  return trace_.size();
}

json Session::exported_scenario() const {
  std::lock_guard lock(published_mutex_);
  return scenario_json_;
}

Pace Session::pace() const {
  std::lock_guard lock(published_mutex_);
  return published_pace_;
}

std::size_t Session::subscribe(std::function<void()> on_new_events) {
  std::lock_guard lock(subscribers_mutex_);
  const auto token = next_token_++;
  subscribers_.emplace_back(token, std::move(on_new_events));
  return token;
}

void Session::unsubscribe(std::size_t token) {
  std::lock_guard lock(subscribers_mutex_);
  std::erase_if(subscribers_, [&](const auto& s) { return s.first == token; });
}

bool Session::wait_finished(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(published_mutex_);
  return published_cv_.wait_for(lock, timeout, [&] { return finished_; });
}

mcc::OperationMode Session::mode_at(SimDuration t) const {
  auto mode = sim_->mode();
  for (const auto& e : sim_->scenario().events) {
    const bool pending = sim_->started() ? e.at > sim_->now() : true;
    if (!pending || e.at > t) continue;
    if (const auto* c = std::get_if<sim::OperatorCommand>(&e.action)) mode = c->mode;
  }
  return mode;
}

CommandResult Session::inject(sim::EventAction action, const json& echo) {
  const auto at = sim_->command_time();
  if (!at) return rejected(409, "the simulation has finished");
  sim_->inject({*at, std::move(action)});
  return {200, json{{"accepted", true}, {"at", to_minutes(*at)}, {"command", echo}}};
}

CommandResult Session::apply(const Command& command) {
  return std::visit(
      [&](const auto& c) -> CommandResult {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, SetMode>) {
          return inject(sim::OperatorCommand{c.mode}, sim::mode_to_json(c.mode));
        } else if constexpr (std::is_same_v<T, SetPattern>) {
          const auto at = sim_->command_time();
          if (!at) return rejected(409, "the simulation has finished");
          if (!mode_at(*at).is_manual()) {
            return rejected(409, "pattern assignment needs manual mode; switch the mode first");
          }
          const auto mode = mcc::OperationMode::manual(c.pattern);
          return inject(sim::OperatorCommand{mode}, sim::mode_to_json(mode));
        } else if constexpr (std::is_same_v<T, InjectFailure>) {
          const auto& fleet = sim_->scenario().fleet;
          if (std::none_of(fleet.begin(), fleet.end(), [&](const auto& f) { return f.id == c.uv; })) {
            return rejected(400, "unknown UV " + c.uv.name());
          }
          return inject(sim::FailureInjection{c.uv}, json{{"inject_failure", c.uv.name()}});
        } else if constexpr (std::is_same_v<T, SetPace>) {
          pace_ = c.pace;
          return {200, json{{"pace", pace_json(pace_)}}};
        } else if constexpr (std::is_same_v<T, Step>) {
          if (sim_->finished()) return rejected(409, "the simulation has finished");
          for (int i = 0; i < c.count && !sim_->finished(); ++i) sim_->step();
          return {200, json{{"time", to_minutes(sim_->now())}}};
        } else {
          if (sim_->started() && c.at < sim_->now()) return rejected(409, "cannot move simulated time backwards");
          sim_->advance_to(c.at);
          return {200, json{{"time", to_minutes(sim_->now())}}};
        }
      },
      command);
}

void Session::publish() {
  auto state = sim_->state_json();
  state["session_id"] = session_id_;
  state["pace"] = pace_json(pace_);
  state["api_version"] = kApiVersion;
  bool fresh = false;
  {
    std::lock_guard lock(published_mutex_);
    const auto& trace = sim_->trace();
    for (std::size_t i = trace_.size(); i < trace.size(); ++i) {
      trace_.push_back(trace[i].to_json().dump());
      fresh = true;
    }
    state_ = std::move(state);
    scenario_json_ = sim::scenario_to_json(sim_->scenario());
    published_pace_ = pace_;
    finished_ = sim_->finished();
  }
  published_cv_.notify_all();
  if (!fresh) return;
  std::lock_guard lock(subscribers_mutex_);
  for (const auto& [_, callback] : subscribers_) callback();
}

void Session::loop() {
  auto last = Clock::now();
  double clock_minutes = 0;
  std::string error;
  for (;;) {
    std::deque<Pending> batch;
    {
      std::unique_lock lock(queue_mutex_);
      const bool running = pace_ > 0 && !sim_->finished() && error.empty();
      const auto ready = [&] { return stopping_ || !queue_.empty(); };
      if (!running) {
        queue_cv_.wait(lock, ready);
      } else if (!std::isinf(pace_)) {
        queue_cv_.wait_for(lock, kTick, ready);
      }
      if (stopping_) return;
      batch.swap(queue_);
    }

    std::vector<CommandResult> results;
    for (auto& p : batch) {
      try {
        results.push_back(apply(p.command));
      } catch (const Error& e) {
        results.push_back(rejected(409, e.what()));
        if (dynamic_cast<const sim::SimulationError*>(&e)) error = e.what();
      }
    }

    const auto now = Clock::now();
    const double wall = std::chrono::duration<double>(now - last).count();
    last = now;
    clock_minutes = std::max(clock_minutes, to_minutes(sim_->now()));
    if (pace_ > 0 && !sim_->finished() && error.empty()) {
      try {
        if (std::isinf(pace_)) {
          sim_->step();
        } else {
          clock_minutes += pace_ * wall;
          sim_->advance_to(from_minutes(clock_minutes));
        }
      } catch (const Error& e) {
        error = e.what();
      }
    }
    publish();
    if (!error.empty()) {
      std::lock_guard lock(published_mutex_);
      state_["error"] = error;
    }
    // Replies go out only once their effects are visible through state().
    for (std::size_t i = 0; i < batch.size(); ++i) batch[i].promise.set_value(std::move(results[i]));
  }
}

}  // namespace uvf::gateway
