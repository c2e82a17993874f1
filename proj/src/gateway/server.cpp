#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "uvf/gateway.hpp"

namespace uvf::gateway {

namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

struct Target {
  std::string path;
  std::size_t from = 0;
  bool bad_query = false;
};

Target parse_target(std::string_view target) {
  Target t;
  const auto q = target.find('?');
  t.path = std::string(target.substr(0, q));
  if (q == std::string_view::npos) return t;
  std::string_view query = target.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const auto pair = query.substr(0, amp);
    if (pair.substr(0, 5) == "from=") {
      try {
        std::size_t used = 0;
        const std::string digits(pair.substr(5));
        t.from = std::stoull(digits, &used);
        if (used != digits.size() || digits.front() == '-') t.bad_query = true;
      } catch (const std::exception&) {
        t.bad_query = true;
      }
    }
    if (amp == std::string_view::npos) break;
    query = query.substr(amp + 1);
  }
  return t;
}

std::string joined_events(const std::vector<std::string>& events) {
  std::string out = "[";
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (i) out += ',';
    out += events[i];
  }
  return out + "]";
}

json metrics_json(const std::vector<std::string>& raw) {
  sim::Trace trace;
  for (const auto& line : raw) trace.push_back(sim::TraceEvent::from_json(json::parse(line)));
  try {
    return sim::metrics_to_json(sim::extract_metrics(trace));
  } catch (const ArgumentError&) {
    return sim::metrics_to_json({});
  }
}

class WsConnection : public std::enable_shared_from_this<WsConnection> {
 public:
  WsConnection(tcp::socket socket, std::shared_ptr<Session> session, std::size_t from)
      : ws_(std::move(socket)), session_(std::move(session)), cursor_(from) {}

  ~WsConnection() {
    if (token_) session_->unsubscribe(token_);
  }

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsConnection::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    std::weak_ptr<WsConnection> weak = shared_from_this();
    token_ = session_->subscribe([weak] {
      if (auto self = weak.lock()) net::post(self->ws_.get_executor(), [self] { self->pump(); });
    });
    pump();
    read();
  }

  void pump() {
    auto events = session_->trace_from(cursor_);
    cursor_ += events.size();
    for (auto& e : events) outbox_.push_back(R"({"type":"trace","event":)" + e + "}");
    write();
  }

  void write() {
    if (writing_ || outbox_.empty() || closed_) return;
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(outbox_.front()), beast::bind_front_handler(&WsConnection::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    if (ec) {
      closed_ = true;
      return;
    }
    outbox_.pop_front();
    write();
  }

  void read() {
    ws_.async_read(buffer_, beast::bind_front_handler(&WsConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      closed_ = true;
      return;
    }
    const auto text = beast::buffers_to_string(buffer_.data());
    buffer_.consume(buffer_.size());
    CommandResult result;
    try {
      result = session_->submit(json::parse(text)).get();
    } catch (const json::exception& e) {
      result = {400, json{{"error", std::string("malformed JSON: ") + e.what()}}};
    }
    outbox_.push_back(json{{"type", "command_result"}, {"status", result.status}, {"body", result.body}}.dump());
    write();
    read();
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<Session> session_;
  std::size_t cursor_;
  std::size_t token_ = 0;
  beast::flat_buffer buffer_;
  std::deque<std::string> outbox_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpConnection : public std::enable_shared_from_this<HttpConnection> {
 public:
  HttpConnection(tcp::socket socket, std::shared_ptr<Session> session)
      : stream_(std::move(socket)), session_(std::move(session)) {}

  void run() {
    net::dispatch(stream_.get_executor(), beast::bind_front_handler(&HttpConnection::read, shared_from_this()));
  }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, beast::bind_front_handler(&HttpConnection::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    const auto raw = req_.target();
    const auto target = parse_target(std::string_view(raw.data(), raw.size()));
    if (websocket::is_upgrade(req_)) {
      if (target.path == "/events" && !target.bad_query) {
        stream_.expires_never();
        std::make_shared<WsConnection>(stream_.release_socket(), session_, target.from)->run(std::move(req_));
        return;
      }
    }
    respond(handle(target));
  }

  http::response<http::string_body> reply(http::status status, std::string body) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::content_type, "application/json");
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
    res.keep_alive(req_.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  http::response<http::string_body> error(http::status status, const std::string& why) {
    return reply(status, json{{"error", why}}.dump());
  }

  http::response<http::string_body> handle(const Target& target) {
    const auto method = req_.method();
    if (method == http::verb::options) return reply(http::status::no_content, "");
    if (target.bad_query) return error(http::status::bad_request, "'from' must be a non-negative integer");

    if (target.path == "/command") {
      if (method != http::verb::post) return error(http::status::method_not_allowed, "use POST");
      json payload;
      try {
        payload = json::parse(req_.body());
      } catch (const json::exception& e) {
        return error(http::status::bad_request, std::string("malformed JSON: ") + e.what());
      }
      const auto result = session_->submit(payload).get();
      return reply(static_cast<http::status>(result.status), result.body.dump());
    }

    if (method != http::verb::get) return error(http::status::method_not_allowed, "use GET");
    if (target.path == "/state") return reply(http::status::ok, session_->state().dump());
    if (target.path == "/trace") {
      const auto events = session_->trace_from(target.from);
      return reply(http::status::ok, R"({"from":)" + std::to_string(target.from) + R"(,"next":)" +
                                         std::to_string(target.from + events.size()) +
                                         R"(,"events":)" + joined_events(events) + "}");
    }
    if (target.path == "/session/scenario") return reply(http::status::ok, session_->exported_scenario().dump(2));
    if (target.path == "/metrics") return reply(http::status::ok, metrics_json(session_->trace_from(0)).dump());
    if (target.path == "/events") return error(http::status::upgrade_required, "/events is a WebSocket endpoint");
    return error(http::status::not_found, "no such endpoint");
  }

  void respond(http::response<http::string_body> res) {
    auto shared = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *shared, [self = shared_from_this(), shared](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (shared->keep_alive()) {
        self->read();
      } else {
        beast::error_code ignored;
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      }
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<Session> session_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct Server::Impl {
  std::shared_ptr<Session> session;
  net::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::vector<std::thread> threads;

  void accept() {
    acceptor.async_accept(net::make_strand(ioc), [this](beast::error_code ec, tcp::socket socket) {
      if (ec == net::error::operation_aborted) return;
      if (!ec) std::make_shared<HttpConnection>(std::move(socket), session)->run();
      accept();
    });
  }
};

Server::Server(std::shared_ptr<Session> session, std::string address, std::uint16_t port, int threads)
    : impl_(std::make_unique<Impl>()) {
  impl_->session = std::move(session);
  const tcp::endpoint endpoint{net::ip::make_address(address), port};
  auto& a = impl_->acceptor;
  a.open(endpoint.protocol());
  a.set_option(net::socket_base::reuse_address(true));
  a.bind(endpoint);
  a.listen(net::socket_base::max_listen_connections);
  impl_->accept();
  for (int i = 0; i < std::max(1, threads); ++i) impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::stop() {
  if (!impl_) return;
  impl_->ioc.stop();
  for (auto& t : impl_->threads) {
    if (t.joinable()) t.join();
  }
  impl_->threads.clear();
}

}  // namespace uvf::gateway
