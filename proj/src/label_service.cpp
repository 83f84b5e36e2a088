#include "mtpl/label_service.hpp"

#include <sys/socket.h>

#include <algorithm>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace mtpl::label {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::system_clock;

namespace {

std::int64_t to_ms(Clock::time_point t) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
}

json error_body(const std::string& message) {
  return json{{"v", kSchemaVersion}, {"error", message}};
}

json status_body(const teacher::RunStatus& s) {
  return json{{"env_step", s.env_step},
              {"sessions_done", s.sessions_done},
              {"budget_remaining", s.budget_remaining},
              {"recent_eval_return", s.has_eval ? json(s.recent_eval_return) : json(nullptr)}};
}

}  // namespace

json segment_json(const Segment& segment) {
  json steps = json::array();
  for (std::size_t i = 0; i < segment.length(); ++i) {
    const auto o = segment.obs_at(i);
    const auto a = segment.action_at(i);
    steps.push_back(json{{"t", segment.start_step + i},
                         {"obs", std::vector<double>(o.begin(), o.end())},
                         {"action", std::vector<double>(a.begin(), a.end())}});
  }
  return json{{"segment_id", segment.segment_id},
              {"episode_id", segment.episode_id},
              {"steps", std::move(steps)}};
}

json query_json(const std::string& query_id, const std::string& env, const SegmentPair& pair,
                std::int64_t created_at_ms, std::int64_t deadline_ms) {
  return json{{"v", kSchemaVersion},
              {"query_id", query_id},
              {"env", env},
              {"created_at", created_at_ms},
              {"deadline", deadline_ms},
              {"seg0", segment_json(pair.first)},
              {"seg1", segment_json(pair.second)}};
}

ServiceOptions parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == bind.size()) {
    throw std::invalid_argument("bind address must be host:port, got '" + bind + "'");
  }
  ServiceOptions o;
  o.address = bind.substr(0, colon);
  const std::string port = bind.substr(colon + 1);
  std::size_t used = 0;
  int p = -1;
  try {
    p = std::stoi(port, &used);
  } catch (const std::exception&) {
  }
  if (used != port.size() || p < 0 || p > 65535) {
    throw std::invalid_argument("bad port in '" + bind + "'");
  }
  o.port = static_cast<unsigned short>(p);
  return o;
}

struct LabelService::Impl {
  asio::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread accept_thread;
  std::mutex conn_mu;
  std::vector<std::thread> connections;
  std::set<int> open_fds;

  void track(int fd) {
    std::lock_guard lock(conn_mu);
    open_fds.insert(fd);
  }
  void untrack(int fd) {
    std::lock_guard lock(conn_mu);
    open_fds.erase(fd);
  }
};

LabelService::LabelService(ServiceOptions options)
    : options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  std::random_device rd;
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(rd()));
  nonce_ = buf;
}

LabelService::~LabelService() { stop(); }

std::vector<std::string> LabelService::publish(std::span<const SegmentPair> pairs,
                                               const std::string& env_name,
                                               Clock::time_point deadline) {
  if (!running_) throw std::runtime_error("label service is not running");
  std::vector<std::string> ids;
  std::vector<json> events;
  {
    std::lock_guard lock(mu_);
    const auto now = Clock::now();
    for (const auto& p : pairs) {
      char buf[48];
      std::snprintf(buf, sizeof buf, "q-%s-%08llu", nonce_.c_str(),
                    static_cast<unsigned long long>(next_id_++));
      std::string id = buf;
      Entry e;
      e.envelope = query_json(id, env_name, p, to_ms(now), to_ms(deadline));
      e.deadline = deadline;
      events.push_back(json{{"v", kSchemaVersion}, {"type", "query"}, {"query", e.envelope}});
      queries_.emplace(id, std::move(e));
      order_.push_back(id);
      ids.push_back(std::move(id));
    }
  }
  for (const auto& ev : events) broadcast(ev);
  return ids;
}

void LabelService::expire_locked(Clock::time_point now) {
  for (auto& [id, e] : queries_) {
    if (e.state == State::pending && now >= e.deadline) {
      e.state = State::expired;
      broadcast(json{{"v", kSchemaVersion}, {"type", "expired"}, {"query_id", id}});
    }
  }
}

LabelService::Outcome LabelService::wait(const std::vector<std::string>& ids,
                                         Clock::time_point deadline) {
  std::unique_lock lock(mu_);
  auto all_done = [&] {
    return std::all_of(ids.begin(), ids.end(), [&](const std::string& id) {
      auto it = queries_.find(id);
      return it == queries_.end() || it->second.state != State::pending;
    });
  };
  while (!all_done() && Clock::now() < deadline && running_) {
    labels_cv_.wait_until(lock, std::min(deadline, Clock::now() + std::chrono::milliseconds(200)));
  }
  Outcome out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = queries_.find(ids[i]);
    if (it == queries_.end()) {
      ++out.dropped;
      continue;
    }
    Entry& e = it->second;
    if (e.state == State::labeled) {
      out.labels.push_back(teacher::HumanLabel{i, e.y, e.annotator});
    } else {
      if (e.state == State::pending) {
        e.state = State::expired;
        broadcast(json{{"v", kSchemaVersion}, {"type", "expired"}, {"query_id", ids[i]}});
      }
      ++out.dropped;
    }
  }
  return out;
}

std::vector<teacher::HumanLabel> LabelService::collect(std::span<const SegmentPair> pairs,
                                                       const std::string& env_name,
                                                       std::chrono::milliseconds timeout) {
  const auto deadline = Clock::now() + timeout;
  const auto ids = publish(pairs, env_name, deadline);
  return wait(ids, deadline).labels;
}

void LabelService::on_status(const teacher::RunStatus& status) {
  json ev;
  {
    std::lock_guard lock(mu_);
    status_ = status;
    ev = json{{"v", kSchemaVersion}, {"type", "status"}, {"status", status_body(status_)}};
  }
  broadcast(ev);
}

json LabelService::status_json_locked() const {
  json j = status_body(status_);
  j["v"] = kSchemaVersion;
  std::size_t pending = 0;
  for (const auto& [id, e] : queries_) pending += e.state == State::pending;
  j["pending_queries"] = pending;
  return j;
}

void LabelService::broadcast(const json& event) {
  const std::string text = event.dump();
  std::lock_guard lock(subs_mu_);
  std::erase_if(subscribers_, [](const auto& s) {
    std::lock_guard l(s->mu);
    return s->closed;
  });
  for (auto& s : subscribers_) {
    {
      std::lock_guard l(s->mu);
      s->outbox.push_back(text);
    }
    s->cv.notify_one();
  }
}

Response LabelService::handle(const std::string& method, const std::string& target,
                              const std::string& body) {
  std::string path = target.substr(0, target.find('?'));
  if (method == "OPTIONS") return {204, nullptr};

  const std::string queries_prefix = "/api/queries/";
  if (path == "/api/queries") {
    if (method != "GET") return {405, error_body("method not allowed")};
    std::lock_guard lock(mu_);
    expire_locked(Clock::now());
    json list = json::array();
    for (const auto& id : order_) {
      const auto& e = queries_.at(id);
      if (e.state == State::pending) list.push_back(e.envelope);
    }
    return {200, json{{"v", kSchemaVersion}, {"queries", std::move(list)}}};
  }
  if (path.starts_with(queries_prefix)) {
    if (method != "GET") return {405, error_body("method not allowed")};
    const std::string id = path.substr(queries_prefix.size());
    std::lock_guard lock(mu_);
    expire_locked(Clock::now());
    auto it = queries_.find(id);
    if (it == queries_.end() || it->second.state == State::expired) {
      return {404, error_body("unknown query")};
    }
    json j = it->second.envelope;
    j["status"] = it->second.state == State::pending ? "pending" : "labeled";
    return {200, j};
  }
  if (path == "/api/labels") {
    if (method != "POST") return {405, error_body("method not allowed")};
    json req;
    try {
      req = json::parse(body);
    } catch (const json::parse_error&) {
      return {400, error_body("malformed JSON")};
    }
    if (!req.is_object()) return {400, error_body("expected a JSON object")};
    if (req.contains("v") && req.at("v") != kSchemaVersion) {
      return {400, error_body("unsupported schema version")};
    }
    if (!req.contains("query_id") || !req.at("query_id").is_string()) {
      return {400, error_body("query_id must be a string")};
    }
    if (!req.contains("y") || !req.at("y").is_number()) {
      return {400, error_body("y must be a number")};
    }
    const double y = req.at("y").get<double>();
    if (!reward::is_valid_label(y)) return {400, error_body("y must be 0, 0.5 or 1")};
    std::string annotator;
    if (req.contains("annotator")) {
      if (!req.at("annotator").is_string()) return {400, error_body("annotator must be a string")};
      annotator = req.at("annotator").get<std::string>();
    }
    const std::string id = req.at("query_id").get<std::string>();
    {
      std::lock_guard lock(mu_);
      expire_locked(Clock::now());
      auto it = queries_.find(id);
      if (it == queries_.end()) return {404, error_body("unknown query")};
      Entry& e = it->second;
      if (e.state == State::labeled) return {409, error_body("query already labelled")};
      if (e.state == State::expired) return {410, error_body("query expired")};
      e.state = State::labeled;
      e.y = y;
      e.annotator = annotator;
    }
    labels_cv_.notify_all();
    broadcast(json{{"v", kSchemaVersion}, {"type", "labeled"}, {"query_id", id}});
    return {200, json{{"v", kSchemaVersion}, {"status", "accepted"}, {"query_id", id}}};
  }
  if (path == "/api/status") {
    if (method != "GET") return {405, error_body("method not allowed")};
    std::lock_guard lock(mu_);
    return {200, status_json_locked()};
  }
  return {404, error_body("not found")};
}

void LabelService::start() {
  if (running_) return;
  stopping_ = false;
  tcp::endpoint ep(asio::ip::make_address(options_.address), options_.port);
  auto& acc = impl_->acceptor.emplace(impl_->ioc);
  acc.open(ep.protocol());
  acc.set_option(asio::socket_base::reuse_address(true));
  acc.bind(ep);
  acc.listen();
  acc.non_blocking(true);
  port_ = acc.local_endpoint().port();
  running_ = true;

  impl_->accept_thread = std::thread([this] {
    auto& acc = *impl_->acceptor;
    while (!stopping_) {
      boost::system::error_code ec;
      tcp::socket sock(impl_->ioc);
      acc.accept(sock, ec);
      if (ec == asio::error::would_block || ec == asio::error::try_again) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      if (ec) continue;
      sock.non_blocking(false);
      const int fd = sock.native_handle();
      impl_->track(fd);
      std::lock_guard lock(impl_->conn_mu);
      impl_->connections.emplace_back([this, s = std::move(sock), fd]() mutable {
        try {
          beast::flat_buffer buf;
          for (;;) {
            http::request<http::string_body> req;
            boost::system::error_code rec;
            http::read(s, buf, req, rec);
            if (rec) break;
            if (websocket::is_upgrade(req)) {
              if (req.target() != "/ws") break;
              websocket::stream<tcp::socket> ws(std::move(s));
              ws.accept(req);
              auto sub = std::make_shared<Subscriber>();
              {
                json snapshot;
                {
                  std::lock_guard lock(mu_);
                  snapshot = json{{"v", kSchemaVersion},
                                  {"type", "status"},
                                  {"status", status_body(status_)}};
                }
                sub->outbox.push_back(snapshot.dump());
                std::lock_guard lock(subs_mu_);
                subscribers_.push_back(sub);
              }
              ws.text(true);
              beast::flat_buffer in;
              boost::system::error_code wec;
              while (!stopping_ && !wec) {
                // Only read when bytes are waiting so incoming close frames get
                // answered without blocking the writer.
                if (ws.next_layer().available(wec) > 0 && !wec) {
                  ws.read(in, wec);
                  in.consume(in.size());
                  if (wec) break;
                }
                std::deque<std::string> out;
                {
                  std::unique_lock l(sub->mu);
                  sub->cv.wait_for(l, std::chrono::milliseconds(50),
                                   [&] { return !sub->outbox.empty(); });
                  out.swap(sub->outbox);
                }
                for (const auto& m : out) {
                  ws.write(asio::buffer(m), wec);
                  if (wec) break;
                }
              }
              {
                std::lock_guard l(sub->mu);
                sub->closed = true;
              }
              if (stopping_ && !wec) {
                boost::system::error_code ignore;
                ws.close(websocket::close_code::going_away, ignore);
              }
              break;
            }
            const Response r = handle(std::string(req.method_string()),
                                      std::string(req.target()), req.body());
            http::response<http::string_body> res{static_cast<http::status>(r.status),
                                                  req.version()};
            res.set(http::field::server, "mtpl-label-service");
            res.set(http::field::access_control_allow_origin, options_.allow_origin);
            res.set(http::field::access_control_allow_methods, "GET, POST, OPTIONS");
            res.set(http::field::access_control_allow_headers, "Content-Type");
            if (r.status != 204) {
              res.set(http::field::content_type, "application/json");
              res.body() = r.body.dump();
            }
            res.keep_alive(req.keep_alive());
            res.prepare_payload();
            boost::system::error_code wec;
            http::write(s, res, wec);
            if (wec || !req.keep_alive()) break;
          }
        } catch (const std::exception&) {
          // a broken client must not take the service down
        }
        impl_->untrack(fd);
        boost::system::error_code ignore;
        if (s.is_open()) s.shutdown(tcp::socket::shutdown_both, ignore);
      });
    }
  });
}

void LabelService::stop() {
  if (!running_) return;
  stopping_ = true;
  running_ = false;
  labels_cv_.notify_all();
  if (impl_->accept_thread.joinable()) impl_->accept_thread.join();
  std::vector<std::thread> conns;
  {
    std::lock_guard lock(impl_->conn_mu);
    for (int fd : impl_->open_fds) ::shutdown(fd, SHUT_RDWR);
    conns.swap(impl_->connections);
  }
  for (auto& t : conns) t.join();
  boost::system::error_code ignore;
  impl_->acceptor->close(ignore);
  impl_->acceptor.reset();
  {
    std::lock_guard lock(subs_mu_);
    subscribers_.clear();
  }
}

}  // namespace mtpl::label
