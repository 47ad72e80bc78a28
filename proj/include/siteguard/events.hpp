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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"

namespace siteguard {

class MaskStatus {
 public:
  enum class State : std::uint8_t { compliant, violation_no_mask, violation_incorrect, unknown };

  MaskStatus() = default;

  static MaskStatus compliant(double c) { return {State::compliant, c}; }
  static MaskStatus no_mask(double c) { return {State::violation_no_mask, c}; }
  static MaskStatus incorrect(double c) { return {State::violation_incorrect, c}; }
  static MaskStatus unknown() { return {}; }

  State state() const noexcept { return state_; }
  std::optional<double> confidence() const noexcept { return confidence_; }
  bool is_violation() const noexcept {
    return state_ == State::violation_no_mask || state_ == State::violation_incorrect;
  }

  friend bool operator==(const MaskStatus&, const MaskStatus&) = default;

 private:
  MaskStatus(State s, double c) : state_(s), confidence_(c) {}

  State state_ = State::unknown;
  std::optional<double> confidence_;
};

constexpr std::string_view to_string(MaskStatus::State s) noexcept {
  switch (s) {
    case MaskStatus::State::compliant: return "compliant";
    case MaskStatus::State::violation_no_mask: return "violation_no_mask";
    case MaskStatus::State::violation_incorrect: return "violation_incorrect";
    case MaskStatus::State::unknown: return "unknown";
  }
  return "unknown";
}

inline nlohmann::ordered_json to_json(const MaskStatus& m) {
  nlohmann::ordered_json j;
  j["status"] = std::string(to_string(m.state()));
  if (m.confidence()) j["confidence"] = *m.confidence();
  return j;
}

enum class ViolationKind : std::uint8_t { distance, mask };

struct EventSubject {
  int person_id = 0;
  BoundingBox box;
};

struct ViolationEvent {
  std::uint64_t event_id = 0;
  std::uint64_t frame_index = 0;
  std::string wall_time;
  ViolationKind kind = ViolationKind::distance;
  std::vector<EventSubject> subjects;
  std::optional<double> distance_ft;
  std::optional<MaskStatus> mask_detail;
};

inline nlohmann::ordered_json to_json(const ViolationEvent& e) {
  nlohmann::ordered_json j;
  j["event_id"] = e.event_id;
  j["frame"] = e.frame_index;
  j["wall_time"] = e.wall_time;
  j["kind"] = e.kind == ViolationKind::distance ? "distance" : "mask";
  j["subjects"] = nlohmann::ordered_json::array();
  j["boxes"] = nlohmann::ordered_json::array();
  for (const auto& s : e.subjects) {
    j["subjects"].push_back(s.person_id);
    j["boxes"].push_back(box_to_json(s.box));
  }
  if (e.distance_ft) j["distance_ft"] = std::round(*e.distance_ft * 1000.0) / 1000.0;
  if (e.mask_detail) j["mask"] = to_json(*e.mask_detail);
  return j;
}

// Assigns gap-free increasing ids and writes one JSON line per event. Lines
// are flushed before listeners hear about them, so a reader that opens the
// file after a notification always finds that event (stream resume relies on
// this) and the file is a valid JSONL prefix at any moment.
class EventLog {
 public:
  using Listener = std::function<void(const ViolationEvent&, const std::string& line)>;

  EventLog() = default;
  explicit EventLog(const std::filesystem::path& path, std::uint64_t first_id = 1, bool append = false)
      : next_id_(first_id) {
    out_.open(path, std::ios::out | (append ? std::ios::app : std::ios::trunc));
    if (!out_) throw Error(ErrorKind::Io, "cannot open event log " + path.string());
  }

  void set_listener(Listener l) {
    std::lock_guard lock(mu_);
    listener_ = std::move(l);
  }

  // Stamps and records a frame's events; returns them with ids filled in.
  std::vector<ViolationEvent> append(std::vector<ViolationEvent> events, const std::string& wall_time) {
    std::lock_guard lock(mu_);
    for (auto& e : events) {
      e.event_id = next_id_++;
      e.wall_time = wall_time;
      const std::string line = to_json(e).dump();
      if (out_.is_open()) out_ << line << '\n' << std::flush;
      if (listener_) listener_(e, line);
    }
    return events;
  }

  std::uint64_t next_id() const {
    std::lock_guard lock(mu_);
    return next_id_;
  }

 private:
  mutable std::mutex mu_;
  std::ofstream out_;
  std::uint64_t next_id_ = 1;
  Listener listener_;
};

}  // namespace siteguard
