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

// Engine configuration file (JSON). Relative paths are resolved against the
// directory holding the file. Example:
//
//   {
//     "source": {"kind": "directory", "path": "frames", "fps": 30},
//     "detector": {"kind": "process", "command": "python3 infer.py", "deadline_ms": 1000, "workers": 2},
//     "calibration": "calibration.json",
//     "threshold_ft": 6.0,
//     "face_confidence_floor": 0.5,
//     "person_confidence_floor": 0.5,
//     "output_dir": "out",
//     "max_in_flight": 4
//   }
//
// Source kinds: directory, stream (length-prefixed frames on stdin),
// replay_case (a fixture directory supplying frames, detections and its own
// calibration) and synthetic (test card, "frames" count). Detector kinds:
// process, tcp ("host", "port"), replay ("path" to detections JSONL).

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "siteguard/adapter.hpp"
#include "siteguard/compliance.hpp"
#include "siteguard/error.hpp"
#include "siteguard/pipeline.hpp"
#include "siteguard/replay.hpp"

namespace siteguard {

inline constexpr const char* kConfigEnvVar = "SITEGUARD_CONFIG";

struct SourceConfig {
  std::string kind = "synthetic";
  std::filesystem::path path;
  double fps = 30.0;
  std::uint64_t frames = 0;  // synthetic only
  int width = 640;
  int height = 480;
};

struct DetectorConfig {
  std::string kind = "process";
  std::string command;
  std::string host = "127.0.0.1";
  int port = 0;
  std::filesystem::path path;
  std::chrono::milliseconds deadline{1000};
  std::size_t workers = 1;
};

struct EngineConfig {
  SourceConfig source;
  DetectorConfig detector;
  std::filesystem::path calibration = "calibration.json";
  ComplianceConfig compliance;
  std::filesystem::path output_dir = "siteguard-out";
  std::size_t max_in_flight = 4;

  void validate() const {
    compliance.validate();
    static const char* kSources[] = {"directory", "stream", "replay_case", "synthetic"};
    static const char* kDetectors[] = {"process", "tcp", "replay"};
    if (std::find(std::begin(kSources), std::end(kSources), source.kind) == std::end(kSources))
      throw Error(ErrorKind::InvalidArgument, "unknown source kind '" + source.kind + "'");
    if (std::find(std::begin(kDetectors), std::end(kDetectors), detector.kind) == std::end(kDetectors))
      throw Error(ErrorKind::InvalidArgument, "unknown detector kind '" + detector.kind + "'");
    if (!(source.fps > 0)) throw Error(ErrorKind::InvalidArgument, "source fps must be positive");
    if ((source.kind == "directory" || source.kind == "replay_case") && source.path.empty())
      throw Error(ErrorKind::InvalidArgument, source.kind + " source needs a path");
    if (detector.port < 0 || detector.port > 65535) throw Error(ErrorKind::InvalidArgument, "bad detector port");
    if (detector.workers == 0 || max_in_flight == 0)
      throw Error(ErrorKind::InvalidArgument, "workers and max_in_flight must be at least 1");
    if (detector.deadline.count() <= 0) throw Error(ErrorKind::InvalidArgument, "deadline_ms must be positive");
  }
};

inline EngineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {}) {
  auto resolve = [&base](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
  };
  EngineConfig c;
  try {
    if (j.contains("source")) {
      const auto& s = j.at("source");
      c.source.kind = s.value("kind", c.source.kind);
      c.source.path = resolve(s.value("path", std::string{}));
      c.source.fps = s.value("fps", c.source.fps);
      c.source.frames = s.value("frames", c.source.frames);
      c.source.width = s.value("width", c.source.width);
      c.source.height = s.value("height", c.source.height);
    }
    if (j.contains("detector")) {
      const auto& d = j.at("detector");
      c.detector.kind = d.value("kind", c.detector.kind);
      c.detector.command = d.value("command", std::string{});
      c.detector.host = d.value("host", c.detector.host);
      c.detector.port = d.value("port", 0);
      c.detector.path = resolve(d.value("path", std::string{}));
      c.detector.deadline = std::chrono::milliseconds(d.value("deadline_ms", 1000));
      c.detector.workers = d.value("workers", std::size_t{1});
    }
    if (j.contains("calibration")) c.calibration = resolve(j.at("calibration").get<std::string>());
    else if (c.source.kind == "replay_case") c.calibration = c.source.path / "calibration.json";
    else c.calibration = resolve(c.calibration.string());
    c.compliance.threshold_ft = j.value("threshold_ft", c.compliance.threshold_ft);
    c.compliance.face_confidence_floor = j.value("face_confidence_floor", c.compliance.face_confidence_floor);
    c.compliance.person_confidence_floor = j.value("person_confidence_floor", c.compliance.person_confidence_floor);
    c.output_dir = resolve(j.value("output_dir", c.output_dir.string()));
    c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline EngineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

// SITEGUARD_CONFIG wins over the path given on the command line.
inline std::filesystem::path config_path(const std::filesystem::path& fallback) {
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return env;
  return fallback;
}

// Frame source described by the config. `stop` lets a blocking stdin read
// give up on shutdown.
inline std::unique_ptr<FrameSource> make_source(const EngineConfig& c, const std::atomic<bool>* stop = nullptr) {
  const auto& s = c.source;
  if (s.kind == "directory") return std::make_unique<DirectorySource>(s.path, s.fps);
  if (s.kind == "stream") return std::make_unique<StreamSource>(0, s.fps, stop);
  if (s.kind == "replay_case") {
    const auto rc = ReplayCase::load(s.path);
    return std::make_unique<SyntheticSource>(rc.frames, rc.width, rc.height, rc.fps);
  }
  return std::make_unique<SyntheticSource>(s.frames, s.width, s.height, s.fps);
}

// Detector settings are only checked here, when a run starts, so a service
// can come up (and be calibrated) before a backend is configured.
inline DetectorFactory make_detector_factory(const EngineConfig& c) {
  const auto& d = c.detector;
  if (d.kind == "process" && d.command.empty())
    throw Error(ErrorKind::InvalidArgument, "process detector needs a command");
  if (d.kind == "tcp" && d.port == 0) throw Error(ErrorKind::InvalidArgument, "tcp detector needs a port");
  if (d.kind == "replay" && d.path.empty() && c.source.kind != "replay_case")
    throw Error(ErrorKind::InvalidArgument, "replay detector needs a path");
  if (d.kind == "process") return adapter_detector_factory(AdapterEndpoint::process(d.command), d.deadline);
  if (d.kind == "tcp") return adapter_detector_factory(AdapterEndpoint::tcp(d.host, d.port), d.deadline);
  if (d.path.empty()) return replay_detector_factory(ReplayCase::load(c.source.path).detections);
  return replay_detector_factory(std::make_shared<const ReplaySource>(ReplaySource::load(d.path)));
}

inline PipelineOptions pipeline_options(const EngineConfig& c) {
  PipelineOptions o;
  o.output_dir = c.output_dir;
  o.max_in_flight = c.max_in_flight;
  o.inference_workers = c.detector.workers;
  o.compliance = c.compliance;
  if (c.source.kind == "replay_case") {
    const auto rc = ReplayCase::load(c.source.path);
    o.wall_clock = replay_clock(rc.start_time, rc.fps);
  }
  return o;
}

}  // namespace siteguard
