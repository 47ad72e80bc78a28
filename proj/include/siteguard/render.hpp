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

// Overlay drawing for annotated output frames. Persons in a risk group are
// boxed red, everyone else green; each risk group also gets a red rectangle
// around its members, and associated faces carry a mask label.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "siteguard/compliance.hpp"

namespace siteguard::render {

// BGR order for OpenCV.
inline const cv::Scalar kRed(0x35, 0x39, 0xE5);    // #E53935
inline const cv::Scalar kGreen(0x47, 0xA0, 0x43);  // #43A047
inline const cv::Scalar kWhite(255, 255, 255);
inline const cv::Scalar kBlack(0, 0, 0);
inline constexpr int kLineThickness = 3;
inline constexpr int kTextHeightPx = 16;
inline constexpr int kGroupPadding = 8;
inline constexpr int kFont = cv::FONT_HERSHEY_SIMPLEX;

inline cv::Rect to_rect(const BoundingBox& b) {
  const int x0 = static_cast<int>(std::lround(b.xmin)), y0 = static_cast<int>(std::lround(b.ymin));
  const int x1 = static_cast<int>(std::lround(b.xmax)), y1 = static_cast<int>(std::lround(b.ymax));
  return {x0, y0, std::max(1, x1 - x0), std::max(1, y1 - y0)};
}

// "mask 97%", "no-mask 99%", "incorrect 89%"; empty for unknown.
inline std::string mask_label(const MaskStatus& m) {
  const char* word = nullptr;
  switch (m.state()) {
    case MaskStatus::State::compliant: word = "mask"; break;
    case MaskStatus::State::violation_no_mask: word = "no-mask"; break;
    case MaskStatus::State::violation_incorrect: word = "incorrect"; break;
    case MaskStatus::State::unknown: return {};
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s %d%%", word, static_cast<int>(std::lround(m.confidence().value_or(0.0) * 100.0)));
  return buf;
}

inline double font_scale(int thickness) { return cv::getFontScaleFromHeight(kFont, kTextHeightPx, thickness); }

// Text on a filled backing box whose bottom-left corner is `anchor`, nudged
// to stay inside the image.
inline void draw_label(cv::Mat& img, const std::string& text, cv::Point anchor, const cv::Scalar& fg,
                       const cv::Scalar& bg) {
  const int thickness = 1;
  const double scale = font_scale(thickness);
  int baseline = 0;
  const cv::Size sz = cv::getTextSize(text, kFont, scale, thickness, &baseline);
  const int pad = 2;
  int x = std::clamp(anchor.x, 0, std::max(0, img.cols - sz.width - 2 * pad));
  int y = std::clamp(anchor.y, sz.height + 2 * pad, std::max(sz.height + 2 * pad, img.rows));
  cv::rectangle(img, cv::Rect(x, y - sz.height - 2 * pad, sz.width + 2 * pad, sz.height + 2 * pad), bg, cv::FILLED);
  cv::putText(img, text, cv::Point(x + pad, y - pad), kFont, scale, fg, thickness, cv::LINE_8);
}

inline void draw_frame_stamp(cv::Mat& img, std::uint64_t frame_index) {
  draw_label(img, "frame " + std::to_string(frame_index), cv::Point(0, 0), kWhite, kBlack);
}

inline cv::Mat render_overlay(const cv::Mat& frame, const FrameAssessment& fa) {
  cv::Mat out = frame.clone();
  for (const auto& group : fa.risk_groups) {
    cv::Rect hull;
    bool first = true;
    for (int id : group) {
      for (const auto& p : fa.persons) {
        if (p.person_id != id) continue;
        hull = first ? to_rect(p.box) : (hull | to_rect(p.box));
        first = false;
      }
    }
    if (first) continue;
    hull.x -= kGroupPadding;
    hull.y -= kGroupPadding;
    hull.width += 2 * kGroupPadding;
    hull.height += 2 * kGroupPadding;
    cv::rectangle(out, hull, kRed, kLineThickness, cv::LINE_8);
  }
  for (const auto& p : fa.persons) {
    const auto color = fa.at_risk(p.person_id) ? kRed : kGreen;
    cv::rectangle(out, to_rect(p.box), color, kLineThickness, cv::LINE_8);
  }
  for (const auto& p : fa.persons) {
    const auto text = mask_label(p.mask);
    if (text.empty() || !p.face) continue;
    const auto color = p.mask.is_violation() ? kRed : kGreen;
    const auto r = to_rect(p.face->box);
    cv::rectangle(out, r, color, kLineThickness, cv::LINE_8);
    draw_label(out, text, cv::Point(r.x, r.y - kLineThickness), kWhite, color);
  }
  draw_frame_stamp(out, fa.frame_index);
  return out;
}

}  // namespace siteguard::render
