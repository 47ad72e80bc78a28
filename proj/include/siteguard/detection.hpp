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
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "siteguard/error.hpp"

namespace siteguard {

struct BoundingBox {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() * height(); }

  bool valid() const {
    return std::isfinite(xmin) && std::isfinite(ymin) && std::isfinite(xmax) &&
           std::isfinite(ymax) && xmin >= 0.0 && ymin >= 0.0 && xmin < xmax && ymin < ymax;
  }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

inline BoundingBox make_box(double xmin, double ymin, double xmax, double ymax) {
  BoundingBox b{xmin, ymin, xmax, ymax};
  if (!b.valid()) {
    throw Error(ErrorKind::InvalidBox, "box [" + std::to_string(xmin) + ", " + std::to_string(ymin) +
                                           ", " + std::to_string(xmax) + ", " +
                                           std::to_string(ymax) + "]");
  }
  return b;
}

inline BoundingBox intersection(const BoundingBox& a, const BoundingBox& b) {
  return {std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin), std::min(a.xmax, b.xmax),
          std::min(a.ymax, b.ymax)};
}

// Area of a ∩ b, 0 when they do not overlap.
inline double overlap_area(const BoundingBox& a, const BoundingBox& b) {
  const BoundingBox i = intersection(a, b);
  const double w = i.xmax - i.xmin;
  const double h = i.ymax - i.ymin;
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

enum class ClassLabel : std::uint8_t { person, with_mask, without_mask, mask_worn_incorrect };

inline constexpr std::array<ClassLabel, 3> kFaceLabels{ClassLabel::with_mask, ClassLabel::without_mask,
                                                       ClassLabel::mask_worn_incorrect};

constexpr std::string_view to_string(ClassLabel l) noexcept {
  switch (l) {
    case ClassLabel::person: return "person";
    case ClassLabel::with_mask: return "with_mask";
    case ClassLabel::without_mask: return "without_mask";
    case ClassLabel::mask_worn_incorrect: return "mask_worn_incorrect";
  }
  return "person";
}

constexpr bool is_face(ClassLabel l) noexcept { return l != ClassLabel::person; }

constexpr std::size_t face_index(ClassLabel l) noexcept {
  return static_cast<std::size_t>(l) - 1;
}

// Accepts the canonical names plus the "mask_weared_incorrect" spelling used
// by public mask datasets.
inline std::optional<ClassLabel> parse_label(std::string_view s) {
  if (s == "person") return ClassLabel::person;
  if (s == "with_mask") return ClassLabel::with_mask;
  if (s == "without_mask") return ClassLabel::without_mask;
  if (s == "mask_worn_incorrect" || s == "mask_weared_incorrect") return ClassLabel::mask_worn_incorrect;
  return std::nullopt;
}

struct Detection {
  ClassLabel label = ClassLabel::person;
  BoundingBox box;
  double confidence = 0.0;

  friend bool operator==(const Detection&, const Detection&) = default;
};

struct GroundTruth {
  ClassLabel label = ClassLabel::with_mask;
  BoundingBox box;
  std::string source_image;

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

// Descending confidence, ties broken by ascending xmin.
inline bool detection_order(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return a.box.xmin < b.box.xmin;
}

struct FrameDetections {
  std::uint64_t frame_index = 0;
  std::vector<Detection> detections;

  static FrameDetections make(std::uint64_t index, std::vector<Detection> dets) {
    std::stable_sort(dets.begin(), dets.end(), detection_order);
    return {index, std::move(dets)};
  }

  friend bool operator==(const FrameDetections&, const FrameDetections&) = default;
};

inline FrameDetections filter_by_confidence(const FrameDetections& dets, double tau) {
  FrameDetections out{dets.frame_index, {}};
  std::copy_if(dets.detections.begin(), dets.detections.end(), std::back_inserter(out.detections),
               [tau](const Detection& d) { return d.confidence >= tau; });
  return out;
}

// --- wire format ----------------------------------------------------------

inline nlohmann::ordered_json box_to_json(const BoundingBox& b) {
  return nlohmann::ordered_json::array({b.xmin, b.ymin, b.xmax, b.ymax});
}

inline nlohmann::ordered_json to_json(const Detection& d) {
  nlohmann::ordered_json j;
  j["label"] = std::string(to_string(d.label));
  j["box"] = box_to_json(d.box);
  j["conf"] = d.confidence;
  return j;
}

inline nlohmann::ordered_json detections_to_json(const std::vector<Detection>& dets) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& d : dets) arr.push_back(to_json(d));
  return arr;
}

inline nlohmann::ordered_json to_json(const FrameDetections& f) {
  nlohmann::ordered_json j;
  j["frame"] = f.frame_index;
  j["detections"] = detections_to_json(f.detections);
  return j;
}

// Throws MalformedRecord with `where` prefixed to the reason.
inline Detection detection_from_json(const nlohmann::json& j, const std::string& where) {
  auto fail = [&](const std::string& why) -> Detection {
    throw Error(ErrorKind::MalformedRecord, where + ": " + why);
  };
  if (!j.is_object()) return fail("detection is not an object");
  if (!j.contains("label") || !j["label"].is_string()) return fail("missing label");
  const auto label = parse_label(j["label"].get<std::string>());
  if (!label) return fail("unknown label '" + j["label"].get<std::string>() + "'");
  if (!j.contains("box") || !j["box"].is_array() || j["box"].size() != 4) return fail("box must be [x0,y0,x1,y1]");
  std::array<double, 4> c{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!j["box"][i].is_number()) return fail("box coordinate is not a number");
    c[i] = j["box"][i].get<double>();
  }
  const BoundingBox box{c[0], c[1], c[2], c[3]};
  if (!box.valid()) return fail("invalid box");
  if (!j.contains("conf") || !j["conf"].is_number()) return fail("missing conf");
  const double conf = j["conf"].get<double>();
  if (!(conf >= 0.0 && conf <= 1.0)) return fail("conf " + std::to_string(conf) + " outside [0,1]");
  return {*label, box, conf};
}

inline std::vector<Detection> detections_from_json(const nlohmann::json& arr, const std::string& where) {
  if (!arr.is_array()) throw Error(ErrorKind::MalformedRecord, where + ": detections is not an array");
  std::vector<Detection> out;
  out.reserve(arr.size());
  for (const auto& d : arr) out.push_back(detection_from_json(d, where));
  return out;
}

}  // namespace siteguard
