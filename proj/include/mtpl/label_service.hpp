#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mtpl/segment.hpp"
#include "mtpl/teacher.hpp"

namespace mtpl::label {

inline constexpr int kSchemaVersion = 1;

/// Query envelope sent to annotators. Carries observations and actions only;
/// true rewards never leave the process.
nlohmann::json segment_json(const Segment& segment);
nlohmann::json query_json(const std::string& query_id, const std::string& env,
                          const SegmentPair& pair, std::int64_t created_at_ms,
                          std::int64_t deadline_ms);

struct Response {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::string address = "127.0.0.1";
  unsigned short port = 0;  // 0 picks an ephemeral port
  std::string allow_origin = "*";
};

/// Parses "host:port".
ServiceOptions parse_bind(const std::string& bind);

/// HTTP + WebSocket endpoint for human preference labels.
///
///   GET  /api/queries        pending queries
///   GET  /api/queries/{id}   one query
///   POST /api/labels         {"v":1,"query_id","y","annotator"}
///   GET  /api/status         training progress
///   WS   /ws                 pushes "query", "labeled", "expired" and "status" events
///
/// Each query accepts exactly one label; later submissions get 409.
class LabelService final : public teacher::LabelChannel, public teacher::StatusSink {
public:
  explicit LabelService(ServiceOptions options = {});
  ~LabelService() override;
  LabelService(const LabelService&) = delete;
  LabelService& operator=(const LabelService&) = delete;

  /// Binds and starts serving in background threads. Throws on bind failure.
  void start();
  void stop();
  unsigned short port() const { return port_; }

  bool running() const override { return running_; }
  std::vector<teacher::HumanLabel> collect(std::span<const SegmentPair> pairs,
                                           const std::string& env_name,
                                           std::chrono::milliseconds timeout) override;
  void on_status(const teacher::RunStatus& status) override;

  /// Publishes queries and returns their ids (unique, increasing).
  std::vector<std::string> publish(std::span<const SegmentPair> pairs, const std::string& env_name,
                                   std::chrono::system_clock::time_point deadline);

  struct Outcome {
    std::vector<teacher::HumanLabel> labels;  // pair_index = position in ids
    std::size_t dropped = 0;
  };
  /// Blocks until every id is labelled or the deadline passes; unlabelled
  /// queries are then expired and reported as dropped.
  Outcome wait(const std::vector<std::string>& ids, std::chrono::system_clock::time_point deadline);

  /// Request router, independent of the network layer.
  Response handle(const std::string& method, const std::string& target, const std::string& body);

private:
  enum class State { pending, labeled, expired };
  struct Entry {
    nlohmann::json envelope;
    std::chrono::system_clock::time_point deadline;
    State state = State::pending;
    double y = 0.0;
    std::string annotator;
  };
  struct Subscriber {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::string> outbox;
    bool closed = false;
  };

  void broadcast(const nlohmann::json& event);
  nlohmann::json status_json_locked() const;
  void expire_locked(std::chrono::system_clock::time_point now);

  ServiceOptions options_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  unsigned short port_ = 0;

  mutable std::mutex mu_;
  std::condition_variable labels_cv_;
  std::map<std::string, Entry> queries_;
  std::vector<std::string> order_;  // publication order
  std::uint64_t next_id_ = 1;
  std::string nonce_;
  teacher::RunStatus status_;

  std::mutex subs_mu_;
  std::vector<std::shared_ptr<Subscriber>> subscribers_;

  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mtpl::label
