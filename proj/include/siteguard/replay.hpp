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

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include <json.hpp>

#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"

namespace siteguard {

// Pre-recorded detections, one JSON record per line:
//   {"frame":0,"detections":[{"label":"person","box":[x0,y0,x1,y1],"conf":0.98}, ...]}
// Frame indices must be strictly increasing. Frames without a record have no
// detections.
class ReplaySource {
 public:
  static ReplaySource load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
    return parse(in, path.filename().string());
  }

  static ReplaySource parse(std::istream& in, const std::string& name = "replay") {
    ReplaySource src;
    std::string line;
    std::size_t line_no = 0;
    bool first = true;
    std::uint64_t last = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const std::string where = name + ":" + std::to_string(line_no);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedRecord, where + ": " + e.what());
      }
      if (!j.is_object() || !j.contains("frame") || !j["frame"].is_number_unsigned()) {
        throw Error(ErrorKind::MalformedRecord, where + ": missing non-negative integer 'frame'");
      }
      const auto frame = j["frame"].get<std::uint64_t>();
      if (!first && frame <= last) {
        throw Error(ErrorKind::NonMonotonicFrameIndex,
                    where + ": frame " + std::to_string(frame) + " after " + std::to_string(last));
      }
      auto dets = detections_from_json(j.value("detections", nlohmann::json::array()), where);
      src.records_.push_back(FrameDetections::make(frame, std::move(dets)));
      last = frame;
      first = false;
    }
    return src;
  }

  FrameDetections detect(std::uint64_t frame_index) const {
    const auto it = std::lower_bound(
        records_.begin(), records_.end(), frame_index,
        [](const FrameDetections& r, std::uint64_t f) { return r.frame_index < f; });
    if (it != records_.end() && it->frame_index == frame_index) return *it;
    return FrameDetections{frame_index, {}};
  }

  const std::vector<FrameDetections>& records() const noexcept { return records_; }

 private:
  std::vector<FrameDetections> records_;
};

}  // namespace siteguard
