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

// Stand-in inference backend. Answers frame requests with detections read
// from a replay file (keyed by frame id), so the adapter path can be tested
// and benchmarked without a neural network. Fault-injection flags exercise
// the engine's timeout and protocol-error handling.

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "siteguard/adapter.hpp"
#include "siteguard/replay.hpp"

namespace sg = siteguard;

namespace {

struct Options {
  std::string replay;
  int delay_ms = 0;
  long silent_after = -1;
  long malformed_at = -1;
  long wrong_id_at = -1;
  long slow_at = -1;
  int version = sg::kAdapterProtocolVersion;
  int listen_port = 0;
};

int serve(std::FILE* in, std::FILE* out, const Options& opt, const std::optional<sg::ReplaySource>& replay) {
  auto emit = [out](const std::string& line) {
    std::fputs(line.c_str(), out);
    std::fputc('\n', out);
    std::fflush(out);
  };
  std::string line;
  long served = 0;
  for (int c; (c = std::fgetc(in)) != EOF;) {
    if (c != '\n') {
      line.push_back(static_cast<char>(c));
      continue;
    }
    nlohmann::json msg;
    try {
      msg = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      emit(R"({"type":"error","message":"unparseable request"})");
      line.clear();
      continue;
    }
    line.clear();
    const auto type = msg.value("type", std::string{});
    if (type == "hello") {
      auto ready = sg::ready_message({"person", "with_mask", "without_mask", "mask_worn_incorrect"});
      ready["version"] = opt.version;
      emit(ready.dump());
      continue;
    }
    if (type != "frame") {
      emit(R"({"type":"error","message":"unexpected message type"})");
      continue;
    }
    sg::FrameRequest req;
    try {
      req = sg::parse_frame_request(msg);
    } catch (const sg::Error& e) {
      emit(nlohmann::json{{"type", "error"}, {"message", e.detail()}}.dump());
      continue;
    }
    const long n = served++;
    if (opt.silent_after >= 0 && n >= opt.silent_after) continue;
    if (opt.delay_ms > 0 && (opt.slow_at < 0 || n == opt.slow_at)) std::this_thread::sleep_for(std::chrono::milliseconds(opt.delay_ms));
    if (n == opt.malformed_at) {
      emit("{not json");
      continue;
    }
    const auto dets = replay ? replay->detect(req.id).detections : std::vector<sg::Detection>{};
    emit(sg::detections_message(n == opt.wrong_id_at ? req.id + 1000 : req.id, dets).dump());
  }
  return 0;
}

int serve_tcp(const Options& opt, const std::optional<sg::ReplaySource>& replay) {
  const int srv = ::socket(AF_INET, SOCK_STREAM, 0);
  const int yes = 1;
  ::setsockopt(srv, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  addr.sin_port = htons(static_cast<uint16_t>(opt.listen_port));
  if (::bind(srv, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0 || ::listen(srv, 1) != 0) {
    std::perror("bind");
    return 1;
  }
  std::fprintf(stderr, "listening on %d\n", opt.listen_port);
  const int conn = ::accept(srv, nullptr, nullptr);
  ::close(srv);
  if (conn < 0) return 1;
  std::FILE* in = ::fdopen(conn, "r");
  std::FILE* out = ::fdopen(::dup(conn), "w");
  const int rc = serve(in, out, opt, replay);
  std::fclose(in);
  std::fclose(out);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mock inference backend speaking the line-delimited JSON protocol"};
  Options opt;
  app.add_option("--replay", opt.replay, "JSONL detections served by frame id");
  app.add_option("--delay-ms", opt.delay_ms, "sleep before every reply");
  app.add_option("--slow-at", opt.slow_at, "apply --delay-ms only to the n-th frame");
  app.add_option("--silent-after", opt.silent_after, "stop replying after this many frames");
  app.add_option("--malformed-at", opt.malformed_at, "reply with garbage to the n-th frame (0-based)");
  app.add_option("--wrong-id-at", opt.wrong_id_at, "reply with a mismatched id to the n-th frame");
  app.add_option("--version", opt.version, "protocol version announced in the ready message");
  app.add_option("--listen", opt.listen_port, "serve one TCP connection on this loopback port");
  CLI11_PARSE(app, argc, argv);

  std::optional<sg::ReplaySource> replay;
  try {
    if (!opt.replay.empty()) replay = sg::ReplaySource::load(opt.replay);
  } catch (const sg::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  if (opt.listen_port > 0) return serve_tcp(opt, replay);
  return serve(stdin, stdout, opt, replay);
}
