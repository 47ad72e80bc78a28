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

// Client side of the inference backend protocol. Detection models run in a
// separate process and exchange newline-delimited JSON with the engine, over
// the child's stdio or a TCP connection:
//
//   engine  -> backend  {"type":"hello","version":1}
//   backend -> engine   {"type":"ready","labels":[...]}
//   engine  -> backend  {"type":"frame","id":N,"format":"png","data_b64":"..."}
//   backend -> engine   {"type":"detections","id":N,"detections":[...]}

#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <boost/archive/iterators/base64_from_binary.hpp>
#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <json.hpp>

#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"
#include "siteguard/image.hpp"

namespace siteguard {

inline constexpr int kAdapterProtocolVersion = 1;

inline std::string base64_encode(const Bytes& data) {
  using namespace boost::archive::iterators;
  using It = base64_from_binary<transform_width<Bytes::const_iterator, 6, 8>>;
  std::string out(It(data.begin()), It(data.end()));
  out.append((3 - data.size() % 3) % 3, '=');
  return out;
}

inline Bytes base64_decode(std::string_view text) {
  using namespace boost::archive::iterators;
  using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
  if (text.size() % 4 != 0) throw Error(ErrorKind::AdapterProtocolError, "base64 length is not a multiple of 4");
  std::size_t pad = 0;
  while (pad < text.size() && text[text.size() - 1 - pad] == '=') ++pad;
  if (pad > 2) throw Error(ErrorKind::AdapterProtocolError, "bad base64 padding");
  // Padding decodes as zero bits and is trimmed afterwards.
  std::string body(text);
  std::fill(body.end() - static_cast<std::ptrdiff_t>(pad), body.end(), 'A');
  try {
    Bytes out(It(body.cbegin()), It(body.cend()));
    out.resize(out.size() - pad);
    return out;
  } catch (const std::exception&) {
    throw Error(ErrorKind::AdapterProtocolError, "invalid base64 payload");
  }
}

namespace detail {

class UniqueFd {
 public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  UniqueFd(UniqueFd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  UniqueFd(const UniqueFd&) = delete;
  UniqueFd& operator=(const UniqueFd&) = delete;
  ~UniqueFd() { reset(); }

  int get() const noexcept { return fd_; }
  explicit operator bool() const noexcept { return fd_ >= 0; }
  void reset() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_ = -1;
};

}  // namespace detail

// Newline-framed duplex byte channel with deadline-bounded reads.
class LineChannel {
 public:
  LineChannel() = default;
  LineChannel(detail::UniqueFd read_fd, detail::UniqueFd write_fd, bool is_socket)
      : read_fd_(std::move(read_fd)), write_fd_(std::move(write_fd)), is_socket_(is_socket) {}

  void write_line(const std::string& line) {
    std::string buf = line;
    buf.push_back('\n');
    const int fd = write_fd_ ? write_fd_.get() : read_fd_.get();
    std::size_t off = 0;
    while (off < buf.size()) {
      const ssize_t n = is_socket_ ? ::send(fd, buf.data() + off, buf.size() - off, MSG_NOSIGNAL)
                                   : ::write(fd, buf.data() + off, buf.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::AdapterClosed, std::string("write failed: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(n);
    }
  }

  std::string read_line(std::chrono::steady_clock::time_point deadline) {
    for (;;) {
      const auto nl = buffer_.find('\n');
      if (nl != std::string::npos) {
        std::string line = buffer_.substr(0, nl);
        buffer_.erase(0, nl + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
      }
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) throw Error(ErrorKind::AdapterTimeout, "no reply before deadline");
      const auto wait_ms = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
      pollfd pfd{read_fd_.get(), POLLIN, 0};
      const int rc = ::poll(&pfd, 1, static_cast<int>(std::max<long long>(1, wait_ms)));
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw Error(ErrorKind::AdapterClosed, std::string("poll failed: ") + std::strerror(errno));
      }
      if (rc == 0) continue;
      char chunk[65536];
      const ssize_t n = ::read(read_fd_.get(), chunk, sizeof(chunk));
      if (n < 0) {
        if (errno == EINTR || errno == EAGAIN) continue;
        throw Error(ErrorKind::AdapterClosed, std::string("read failed: ") + std::strerror(errno));
      }
      if (n == 0) throw Error(ErrorKind::AdapterClosed, "backend closed the connection");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  void close() {
    read_fd_.reset();
    write_fd_.reset();
  }

 private:
  detail::UniqueFd read_fd_;
  detail::UniqueFd write_fd_;
  bool is_socket_ = false;
  std::string buffer_;
};

// Where the backend lives: a command line (spawned, spoken to over stdio) or
// an already running TCP server.
struct AdapterEndpoint {
  enum class Kind { process, tcp } kind = Kind::process;
  std::string command;
  std::string host;
  int port = 0;

  static AdapterEndpoint process(std::string cmd) { return {Kind::process, std::move(cmd), {}, 0}; }
  static AdapterEndpoint tcp(std::string host, int port) { return {Kind::tcp, {}, std::move(host), port}; }
};

class InferenceAdapter {
 public:
  explicit InferenceAdapter(AdapterEndpoint endpoint,
                            std::chrono::milliseconds deadline = std::chrono::milliseconds(1000))
      : endpoint_(std::move(endpoint)), deadline_(deadline) {
    ::signal(SIGPIPE, SIG_IGN);
    if (endpoint_.kind == AdapterEndpoint::Kind::process) {
      spawn();
    } else {
      connect_tcp();
    }
    try {
      handshake();
    } catch (...) {
      shutdown();
      throw;
    }
  }

  InferenceAdapter(const InferenceAdapter&) = delete;
  InferenceAdapter& operator=(const InferenceAdapter&) = delete;

  ~InferenceAdapter() { shutdown(); }

  const std::vector<std::string>& labels() const noexcept { return labels_; }

  FrameDetections infer(const EncodedFrame& frame) {
    if (closed_) throw Error(ErrorKind::AdapterClosed, "adapter is closed");
    const std::uint64_t id = frame.index;
    nlohmann::ordered_json msg;
    msg["type"] = "frame";
    msg["id"] = id;
    msg["format"] = frame.format;
    msg["data_b64"] = base64_encode(frame.data);
    send(msg.dump());

    const auto deadline = std::chrono::steady_clock::now() + deadline_;
    for (;;) {
      nlohmann::json reply;
      try {
        reply = receive(deadline);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::AdapterTimeout) stale_ids_.insert(id);
        throw;
      }
      const auto type = reply.value("type", std::string{});
      if (type == "error") {
        throw Error(ErrorKind::AdapterProtocolError, "backend error: " + reply.value("message", std::string{}));
      }
      if (type != "detections" || !reply.contains("id") || !reply["id"].is_number_unsigned()) {
        throw Error(ErrorKind::AdapterProtocolError, "expected a detections message");
      }
      const auto got = reply["id"].get<std::uint64_t>();
      // A reply to a frame that already timed out arrives late; drop it.
      if (got != id && stale_ids_.erase(got) > 0) continue;
      if (got != id) {
        throw Error(ErrorKind::AdapterProtocolError,
                    "reply id " + std::to_string(got) + " does not match frame " + std::to_string(id));
      }
      try {
        return FrameDetections::make(
            id, detections_from_json(reply.value("detections", nlohmann::json::array()), "reply"));
      } catch (const Error& e) {
        throw Error(ErrorKind::AdapterProtocolError, e.detail());
      }
    }
  }

  void shutdown() {
    if (closed_) return;
    closed_ = true;
    channel_.close();
    if (child_ > 0) {
      ::kill(child_, SIGTERM);
      int status = 0;
      ::waitpid(child_, &status, 0);
      child_ = -1;
    }
  }

 private:
  void send(const std::string& line) {
    try {
      channel_.write_line(line);
    } catch (const Error&) {
      closed_ = true;
      throw;
    }
  }

  nlohmann::json receive(std::chrono::steady_clock::time_point deadline) {
    std::string line;
    try {
      line = channel_.read_line(deadline);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::AdapterClosed) closed_ = true;
      throw;
    }
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw Error(ErrorKind::AdapterProtocolError, "reply is not a JSON object");
      return j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::AdapterProtocolError, std::string("unparseable reply: ") + e.what());
    }
  }

  void handshake() {
    nlohmann::ordered_json hello;
    hello["type"] = "hello";
    hello["version"] = kAdapterProtocolVersion;
    send(hello.dump());
    const auto ready = receive(std::chrono::steady_clock::now() + deadline_);
    if (ready.value("type", std::string{}) != "ready") {
      throw Error(ErrorKind::AdapterProtocolError, "handshake: expected a ready message");
    }
    if (ready.contains("version") && ready["version"] != kAdapterProtocolVersion) {
      throw Error(ErrorKind::AdapterProtocolError, "handshake: protocol version mismatch");
    }
    if (ready.contains("labels") && ready["labels"].is_array()) {
      for (const auto& l : ready["labels"])
        if (l.is_string()) labels_.push_back(l.get<std::string>());
    }
  }

  void spawn() {
    int to_child[2];
    int from_child[2];
    if (::pipe2(to_child, O_CLOEXEC) != 0 || ::pipe2(from_child, O_CLOEXEC) != 0) {
      throw Error(ErrorKind::AdapterClosed, std::string("pipe: ") + std::strerror(errno));
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw Error(ErrorKind::AdapterClosed, std::string("fork: ") + std::strerror(errno));
    if (pid == 0) {
      ::dup2(to_child[0], STDIN_FILENO);
      ::dup2(from_child[1], STDOUT_FILENO);
      ::execl("/bin/sh", "sh", "-c", endpoint_.command.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(to_child[0]);
    ::close(from_child[1]);
    child_ = pid;
    channel_ = LineChannel(detail::UniqueFd(from_child[0]), detail::UniqueFd(to_child[1]), false);
  }

  void connect_tcp() {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    const auto port = std::to_string(endpoint_.port);
    if (::getaddrinfo(endpoint_.host.c_str(), port.c_str(), &hints, &res) != 0 || res == nullptr) {
      throw Error(ErrorKind::AdapterClosed, "cannot resolve " + endpoint_.host);
    }
    std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
    for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
      detail::UniqueFd fd(::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol));
      if (!fd) continue;
      if (::connect(fd.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
        channel_ = LineChannel(std::move(fd), detail::UniqueFd(), true);
        return;
      }
    }
    throw Error(ErrorKind::AdapterClosed, "cannot connect to " + endpoint_.host + ":" + port);
  }

  AdapterEndpoint endpoint_;
  std::chrono::milliseconds deadline_;
  LineChannel channel_;
  pid_t child_ = -1;
  bool closed_ = false;
  std::vector<std::string> labels_;
  std::set<std::uint64_t> stale_ids_;
};

// --- backend side -----------------------------------------------------------

// Parsed engine->backend frame request.
struct FrameRequest {
  std::uint64_t id = 0;
  std::string format;
  Bytes data;
};

inline nlohmann::ordered_json ready_message(const std::vector<std::string>& labels) {
  nlohmann::ordered_json j;
  j["type"] = "ready";
  j["version"] = kAdapterProtocolVersion;
  j["labels"] = labels;
  return j;
}

inline nlohmann::ordered_json detections_message(std::uint64_t id, const std::vector<Detection>& dets) {
  nlohmann::ordered_json j;
  j["type"] = "detections";
  j["id"] = id;
  j["detections"] = detections_to_json(dets);
  return j;
}

inline FrameRequest parse_frame_request(const nlohmann::json& j) {
  if (j.value("type", std::string{}) != "frame" || !j.contains("id") || !j["id"].is_number_unsigned()) {
    throw Error(ErrorKind::AdapterProtocolError, "expected a frame message");
  }
  FrameRequest r;
  r.id = j["id"].get<std::uint64_t>();
  r.format = j.value("format", std::string("png"));
  r.data = base64_decode(j.value("data_b64", std::string{}));
  return r;
}

}  // namespace siteguard
