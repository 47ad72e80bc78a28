// Copyright 2026 The SiteGuard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// HTTP facade over the engine: calibration intake, latest raw/annotated
// frame, a server-sent event stream of violations, status and metrics, and
// run/stop control. One active camera profile per process.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "siteguard/calibration.hpp"
#include "siteguard/config.hpp"
#include "siteguard/error.hpp"
#include "siteguard/pipeline.hpp"

namespace siteguard {

enum class Phase { uncalibrated, calibrated_idle, running, stopped };

constexpr std::string_view to_string(Phase p) noexcept {
  switch (p) {
    case Phase::uncalibrated: return "uncalibrated";
    case Phase::calibrated_idle: return "calibrated_idle";
    case Phase::running: return "running";
    case Phase::stopped: return "stopped";
  }
  return "uncalibrated";
}

// Request refused because of the current phase (HTTP 409).
class StateConflict : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One producer, many consumers. Every subscriber owns a bounded queue; a
// subscriber that falls `capacity` events behind is cut off rather than
// allowed to hold the producer back.
class EventHub {
 public:
  struct Item {
    std::uint64_t id = 0;
    std::string data;
  };

  enum class Wait { item, timeout, overflow, closed };

  class Subscription {
   public:
    explicit Subscription(std::size_t capacity) : capacity_(capacity) {}

    Wait next(Item& out, std::chrono::milliseconds timeout) {
      std::unique_lock lock(mu_);
      cv_.wait_for(lock, timeout, [this] { return !queue_.empty() || overflow_ || closed_; });
      if (!queue_.empty()) {
        out = std::move(queue_.front());
        queue_.pop_front();
        return Wait::item;
      }
      if (overflow_) return Wait::overflow;
      if (closed_) return Wait::closed;
      return Wait::timeout;
    }

   private:
    friend class EventHub;

    void offer(const Item& item) {
      {
        std::lock_guard lock(mu_);
        if (overflow_ || closed_) return;
        if (queue_.size() >= capacity_) {
          overflow_ = true;
          queue_.clear();
        } else {
          queue_.push_back(item);
        }
      }
      cv_.notify_all();
    }

    void close() {
      {
        std::lock_guard lock(mu_);
        closed_ = true;
      }
      cv_.notify_all();
    }

    std::size_t capacity_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Item> queue_;
    bool overflow_ = false;
    bool closed_ = false;
  };

  explicit EventHub(std::size_t capacity = 1024) : capacity_(capacity) {}

  std::shared_ptr<Subscription> subscribe() {
    auto s = std::make_shared<Subscription>(capacity_);
    std::lock_guard lock(mu_);
    if (closed_) s->close();
    subs_.insert(s);
    return s;
  }

  void unsubscribe(const std::shared_ptr<Subscription>& s) {
    std::lock_guard lock(mu_);
    subs_.erase(s);
  }

  void publish(std::uint64_t id, const std::string& data) {
    std::lock_guard lock(mu_);
    last_id_ = std::max(last_id_, id);
    const Item item{id, data};
    for (const auto& s : subs_) s->offer(item);
  }

  void close_all() {
    std::lock_guard lock(mu_);
    closed_ = true;
    for (const auto& s : subs_) s->close();
  }

  std::size_t subscribers() const {
    std::lock_guard lock(mu_);
    return subs_.size();
  }

  std::uint64_t last_id() const {
    std::lock_guard lock(mu_);
    return last_id_;
  }

  void set_last_id(std::uint64_t id) {
    std::lock_guard lock(mu_);
    last_id_ = id;
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::set<std::shared_ptr<Subscription>> subs_;
  std::uint64_t last_id_ = 0;
  bool closed_ = false;
};

inline std::string sse_event(std::uint64_t id, const std::string& data) {
  return "id: " + std::to_string(id) + "\nevent: violation\ndata: " + data + "\n\n";
}

// Lines of an event log with id greater than `after`, in file order.
inline std::vector<EventHub::Item> read_event_log(const std::filesystem::path& path, std::uint64_t after) {
  std::vector<EventHub::Item> out;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto id = nlohmann::json::parse(line).at("event_id").get<std::uint64_t>();
      if (id > after) out.push_back({id, line});
    } catch (const nlohmann::json::exception&) {
      break;  // torn tail of a log still being written
    }
  }
  return out;
}

struct ServiceOptions {
  EngineConfig engine;
  std::string host = "0.0.0.0";
  int port = 8080;
  std::chrono::milliseconds heartbeat{15000};
  std::size_t client_buffer = 1024;
  std::filesystem::path static_dir;  // served at / when set
  std::size_t http_threads = 16;
};

class Service {
 public:
  explicit Service(ServiceOptions opt) : opt_(std::move(opt)), hub_(opt_.client_buffer) {
    std::error_code ec;
    if (std::filesystem::exists(opt_.engine.calibration, ec)) {
      profile_ = load_calibration(opt_.engine.calibration);
      phase_ = Phase::calibrated_idle;
    }
    const auto log = events_path();
    const auto previous = read_event_log(log, 0);
    if (!previous.empty()) hub_.set_last_id(previous.back().id);
    prime_snapshot();
    routes();
  }

  ~Service() { shutdown(); }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Blocking; returns when shutdown() is called.
  bool listen() { return server_.listen(opt_.host, opt_.port); }

  // Binds (port 0 picks a free one) and serves on a background thread.
  int start_background() {
    const int port = opt_.port == 0 ? server_.bind_to_any_port(opt_.host) : opt_.port;
    if (opt_.port != 0 && !server_.bind_to_port(opt_.host, port)) throw Error(ErrorKind::Io, "cannot bind");
    if (port <= 0) throw Error(ErrorKind::Io, "cannot bind");
    http_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port;
  }

  void shutdown() {
    if (shut_down_.exchange(true)) return;
    stop_run();
    join_run();
    hub_.close_all();
    server_.stop();
    if (http_thread_.joinable()) http_thread_.join();
  }

  Phase phase() const {
    std::lock_guard lock(mu_);
    return phase_;
  }

  CalibrationProfile calibrate(const nlohmann::json& body) {
    nlohmann::json j = body;
    if (j.contains("corners") && j["corners"].is_array()) {
      for (auto& c : j["corners"])
        if (c.is_object()) c = nlohmann::json::array({c.value("u", 0.0), c.value("v", 0.0)});
    }
    std::lock_guard lock(mu_);
    if (phase_ == Phase::running) throw StateConflict("cannot recalibrate while running");
    auto p = calibration_from_json(j);
    const auto& path = opt_.engine.calibration;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    save_calibration(p, path);
    p = load_calibration(path);
    profile_ = p;
    phase_ = Phase::calibrated_idle;
    return p;
  }

  void start_run() {
    std::lock_guard lock(mu_);
    if (phase_ == Phase::running) throw StateConflict("already running");
    if (!profile_) throw StateConflict("not calibrated");
    if (phase_ != Phase::calibrated_idle) throw StateConflict("recalibrate before starting a new run");
    if (run_thread_.joinable()) run_thread_.join();
    stop_ = false;
    last_error_.clear();
    PipelineOptions po = pipeline_options(opt_.engine);
    po.append_events = true;
    po.first_event_id = hub_.last_id() + 1;
    PipelineObserver obs;
    obs.on_acquired = [this](const EncodedFrame& f) {
      Bytes png = f.format == "png" ? f.data : encode_png(decode_image(f.data));
      std::lock_guard l(frame_mu_);
      snapshot_ = std::move(png);
    };
    obs.on_output = [this](const FrameAssessment&, const Bytes& png) {
      std::lock_guard l(frame_mu_);
      annotated_ = png;
    };
    obs.on_event = [this](const ViolationEvent& e, const std::string& line) { hub_.publish(e.event_id, line); };
    source_ = make_source(opt_.engine, &stop_);
    pipeline_ = std::make_shared<Pipeline>(*profile_, make_detector_factory(opt_.engine), po, obs);
    phase_ = Phase::running;
    run_thread_ = std::thread([this, pipe = pipeline_, src = source_] {
      try {
        pipe->run(*src, stop_);
      } catch (const std::exception& e) {
        std::lock_guard l(mu_);
        last_error_ = e.what();
      }
      std::lock_guard l(mu_);
      phase_ = Phase::stopped;
    });
  }

  void stop_run() {
    std::lock_guard lock(mu_);
    if (phase_ != Phase::running) return;
    stop_ = true;
  }

  // Waits for the current run, if any, to finish.
  void join_run() {
    std::thread t;
    {
      std::lock_guard lock(mu_);
      t = std::move(run_thread_);
    }
    if (t.joinable()) t.join();
  }

  PipelineMetrics metrics() const {
    std::shared_ptr<Pipeline> p;
    {
      std::lock_guard lock(mu_);
      p = pipeline_;
    }
    return p ? p->metrics() : PipelineMetrics{};
  }

  nlohmann::ordered_json status() const {
    nlohmann::ordered_json j;
    {
      std::lock_guard lock(mu_);
      j["phase"] = std::string(to_string(phase_));
      if (profile_) {
        nlohmann::ordered_json p;
        p["corners"] = to_json(*profile_)["corners"];
        p["edge_length_ft"] = profile_->edge_length_ft;
        p["pixels_per_foot"] = profile_->pixels_per_foot;
        p["created_at"] = profile_->created_at;
        j["profile"] = p;
      } else {
        j["profile"] = nullptr;
      }
      if (!last_error_.empty()) j["last_error"] = last_error_;
    }
    j["metrics"] = to_json(metrics());
    j["last_event_id"] = hub_.last_id();
    return j;
  }

  EventHub& hub() noexcept { return hub_; }
  httplib::Server& server() noexcept { return server_; }
  std::filesystem::path events_path() const { return opt_.engine.output_dir / "events.jsonl"; }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::ordered_json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, std::string_view kind, const std::string& detail) {
    nlohmann::ordered_json j;
    j["error"] = std::string(kind);
    j["detail"] = detail;
    send_json(res, status, j);
  }

  // Shows the first frame of a rewindable source so calibration can happen
  // before any run. Standard input cannot be peeked.
  void prime_snapshot() {
    if (opt_.engine.source.kind == "stream") return;
    try {
      auto src = make_source(opt_.engine);
      if (auto f = src->next()) snapshot_ = f->format == "png" ? f->data : encode_png(decode_image(f->data));
    } catch (const Error&) {
      // No snapshot until a run starts.
    }
  }

  void serve_bytes(httplib::Response& res, const std::optional<Bytes>& bytes) {
    if (!bytes) {
      send_error(res, 404, to_string(ErrorKind::NoFrameYet), "no frame has been produced yet");
      return;
    }
    res.set_content(reinterpret_cast<const char*>(bytes->data()), bytes->size(), "image/png");
    res.set_header("Cache-Control", "no-store");
  }

  void routes() {
    server_.new_task_queue = [n = opt_.http_threads] { return new httplib::ThreadPool(n); };
    if (!opt_.static_dir.empty()) server_.set_mount_point("/", opt_.static_dir.string());

    server_.Post("/api/calibration", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, "MalformedRequest", e.what());
        return;
      }
      try {
        send_json(res, 201, to_json(calibrate(body)));
      } catch (const StateConflict& e) {
        send_error(res, 409, "Conflict", e.what());
      } catch (const Error& e) {
        send_error(res, e.is_validation() ? 422 : 500, to_string(e.kind()), e.detail());
      }
    });

    server_.Get("/api/snapshot", [this](const httplib::Request&, httplib::Response& res) {
      std::optional<Bytes> b;
      {
        std::lock_guard l(frame_mu_);
        b = snapshot_;
      }
      serve_bytes(res, b);
    });

    server_.Get("/api/frame", [this](const httplib::Request&, httplib::Response& res) {
      std::optional<Bytes> b;
      {
        std::lock_guard l(frame_mu_);
        b = annotated_;
      }
      serve_bytes(res, b);
    });

    server_.Get("/api/status", [this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, status()); });
    server_.Get("/api/metrics",
                [this](const httplib::Request&, httplib::Response& res) { send_json(res, 200, to_json(metrics())); });

    server_.Post("/api/run", [this](const httplib::Request&, httplib::Response& res) {
      try {
        start_run();
        send_json(res, 202, status());
      } catch (const StateConflict& e) {
        send_error(res, 409, "Conflict", e.what());
      } catch (const Error& e) {
        send_error(res, e.is_validation() ? 422 : 500, to_string(e.kind()), e.detail());
      }
    });

    server_.Post("/api/stop", [this](const httplib::Request&, httplib::Response& res) {
      stop_run();
      join_run();
      send_json(res, 200, status());
    });

    server_.Get("/api/events", [this](const httplib::Request& req, httplib::Response& res) { stream_events(req, res); });
  }

  void stream_events(const httplib::Request& req, httplib::Response& res) {
    struct Conn {
      std::shared_ptr<EventHub::Subscription> sub;
      std::deque<EventHub::Item> backlog;
      std::uint64_t sent = 0;
      bool greeted = false;
    };
    auto conn = std::make_shared<Conn>();
    // Subscribe before reading the log: anything published meanwhile is in
    // both places and the id check below drops the duplicate.
    conn->sub = hub_.subscribe();
    std::string last = req.get_header_value("Last-Event-ID");
    if (last.empty()) last = req.get_param_value("last_event_id");
    if (!last.empty()) {
      try {
        conn->sent = std::stoull(last);
      } catch (const std::exception&) {
        hub_.unsubscribe(conn->sub);
        send_error(res, 400, "MalformedRequest", "Last-Event-ID must be an integer");
        return;
      }
      for (auto& item : read_event_log(events_path(), conn->sent)) conn->backlog.push_back(std::move(item));
    }
    res.set_header("Cache-Control", "no-store");
    res.set_header("X-Accel-Buffering", "no");
    const auto heartbeat = opt_.heartbeat;
    res.set_chunked_content_provider(
        "text/event-stream",
        [conn, heartbeat](std::size_t, httplib::DataSink& sink) {
          auto send = [&sink](const std::string& s) { return sink.write(s.data(), s.size()); };
          if (!conn->greeted) {
            conn->greeted = true;
            return send(": connected\n\n");
          }
          if (!conn->backlog.empty()) {
            std::string chunk;
            for (const auto& item : conn->backlog) {
              chunk += sse_event(item.id, item.data);
              conn->sent = item.id;
            }
            conn->backlog.clear();
            return send(chunk);
          }
          EventHub::Item item;
          switch (conn->sub->next(item, heartbeat)) {
            case EventHub::Wait::item:
              if (item.id <= conn->sent) return true;
              conn->sent = item.id;
              return send(sse_event(item.id, item.data));
            case EventHub::Wait::timeout:
              return send(": heartbeat\n\n");
            case EventHub::Wait::overflow:
              send("event: error\ndata: {\"error\":\"SlowConsumer\",\"last_event_id\":" + std::to_string(conn->sent) +
                   "}\n\n");
              sink.done();
              return true;
            case EventHub::Wait::closed:
              sink.done();
              return true;
          }
          return false;
        },
        [this, conn](bool) { hub_.unsubscribe(conn->sub); });
  }

  ServiceOptions opt_;
  EventHub hub_;
  httplib::Server server_;
  std::thread http_thread_;
  std::atomic<bool> shut_down_{false};

  mutable std::mutex mu_;
  Phase phase_ = Phase::uncalibrated;
  std::optional<CalibrationProfile> profile_;
  std::shared_ptr<Pipeline> pipeline_;
  std::shared_ptr<FrameSource> source_;
  std::thread run_thread_;
  std::atomic<bool> stop_{false};
  std::string last_error_;

  std::mutex frame_mu_;
  std::optional<Bytes> snapshot_;
  std::optional<Bytes> annotated_;
};

}  // namespace siteguard
