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

#include <array>
#include <chrono>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "siteguard/error.hpp"
#include "siteguard/geometry.hpp"

namespace siteguard {

// RFC3339 UTC timestamp with millisecond precision.
inline std::string format_rfc3339(std::chrono::system_clock::time_point t) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  std::time_t secs = static_cast<std::time_t>(ms / 1000);
  long frac = static_cast<long>(ms % 1000);
  if (frac < 0) {
    frac += 1000;
    --secs;
  }
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof(out), "%s.%03ldZ", buf, frac);
  return out;
}

inline std::string now_rfc3339() { return format_rfc3339(std::chrono::system_clock::now()); }

// Accepts "YYYY-MM-DDTHH:MM:SS[.fff]Z" (UTC only).
inline std::chrono::system_clock::time_point parse_rfc3339(const std::string& text) {
  std::tm tm{};
  std::istringstream in(text);
  in >> std::get_time(&tm, "%Y-%m-%dT%H:%M:%S");
  if (in.fail()) throw Error(ErrorKind::InvalidArgument, "bad timestamp '" + text + "'");
  long ms = 0;
  if (in.peek() == '.') {
    in.get();
    int digits = 0;
    while (std::isdigit(in.peek())) {
      const int d = in.get() - '0';
      if (digits < 3) ms = ms * 10 + d;
      ++digits;
    }
    if (digits == 0) throw Error(ErrorKind::InvalidArgument, "bad timestamp '" + text + "'");
    for (; digits < 3; ++digits) ms *= 10;
  }
  if (in.get() != 'Z' || in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorKind::InvalidArgument, "timestamp must be UTC with a Z suffix: '" + text + "'");
  }
  return std::chrono::system_clock::from_time_t(timegm(&tm)) + std::chrono::milliseconds(ms);
}

// The four clicked image corners of a ground square of known edge length.
// Corners are in click order: bottom-left, bottom-right, top-right, top-left.
struct CalibrationProfile {
  std::array<ImagePoint, 4> corners{};
  double edge_length_ft = 6.0;
  double pixels_per_foot = 100.0;
  Homography homography;
  std::string created_at;

  double square_side_px() const { return edge_length_ft * pixels_per_foot; }
};

// Bird's-eye target square for a profile: axis-aligned, origin at its top-left,
// with corners listed in the same winding as the clicks.
inline std::array<PlanePoint, 4> destination_square(double side_px) {
  return {PlanePoint{0.0, side_px}, PlanePoint{side_px, side_px}, PlanePoint{side_px, 0.0},
          PlanePoint{0.0, 0.0}};
}

inline Homography calibration_to_homography(const CalibrationProfile& profile) {
  const auto dst = destination_square(profile.square_side_px());
  return solve_homography(std::span<const ImagePoint, 4>(profile.corners),
                          std::span<const PlanePoint, 4>(dst));
}

namespace detail {

inline void require_convex(const std::array<ImagePoint, 4>& c) {
  int sign = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const ImagePoint& a = c[i];
    const ImagePoint& b = c[(i + 1) % 4];
    const ImagePoint& d = c[(i + 2) % 4];
    const double cross = (b.u - a.u) * (d.v - b.v) - (b.v - a.v) * (d.u - b.u);
    const int s = cross > 0 ? 1 : -1;
    if (sign == 0) {
      sign = s;
    } else if (s != sign) {
      throw Error(ErrorKind::DegenerateConfiguration,
                  "corners do not form a convex quadrilateral in click order");
    }
  }
}

}  // namespace detail

// Validates the corners and derives the homography.
inline CalibrationProfile make_calibration(const std::array<ImagePoint, 4>& corners,
                                           double edge_length_ft = 6.0,
                                           double pixels_per_foot = 100.0,
                                           std::string created_at = now_rfc3339()) {
  if (!(edge_length_ft > 0.0) || !std::isfinite(edge_length_ft)) {
    throw Error(ErrorKind::InvalidArgument, "edge_length_ft must be positive");
  }
  if (!(pixels_per_foot > 0.0) || !std::isfinite(pixels_per_foot)) {
    throw Error(ErrorKind::InvalidArgument, "pixels_per_foot must be positive");
  }
  CalibrationProfile p;
  p.corners = corners;
  p.edge_length_ft = edge_length_ft;
  p.pixels_per_foot = pixels_per_foot;
  p.created_at = std::move(created_at);
  geometry::detail::require_non_degenerate(
      std::span<const ImagePoint, 4>(p.corners), [](const ImagePoint& c) { return c.u; },
      [](const ImagePoint& c) { return c.v; }, "corner");
  detail::require_convex(p.corners);
  p.homography = calibration_to_homography(p);
  return p;
}

inline nlohmann::ordered_json to_json(const CalibrationProfile& p) {
  nlohmann::ordered_json j;
  j["corners"] = nlohmann::ordered_json::array();
  for (const auto& c : p.corners) j["corners"].push_back({c.u, c.v});
  j["edge_length_ft"] = p.edge_length_ft;
  j["pixels_per_foot"] = p.pixels_per_foot;
  j["homography"] = nlohmann::ordered_json::array();
  for (const auto& row : p.homography.matrix()) j["homography"].push_back({row[0], row[1], row[2]});
  j["created_at"] = p.created_at;
  return j;
}

// Parses a profile and recomputes its matrix from the corners; a stored
// matrix that disagrees by more than `tolerance` in any element is rejected.
inline CalibrationProfile calibration_from_json(const nlohmann::json& j, double tolerance = 1e-6) {
  std::array<ImagePoint, 4> corners{};
  Matrix3 stored{};
  double edge = 6.0;
  double ppf = 100.0;
  std::string created_at;
  bool has_matrix = false;
  try {
    const auto& jc = j.at("corners");
    if (!jc.is_array() || jc.size() != 4) {
      throw Error(ErrorKind::InvalidArgument, "corners must hold exactly 4 points");
    }
    for (std::size_t i = 0; i < 4; ++i) {
      if (!jc[i].is_array() || jc[i].size() != 2) {
        throw Error(ErrorKind::InvalidArgument, "corner must be [u, v]");
      }
      corners[i] = {jc[i][0].get<double>(), jc[i][1].get<double>()};
    }
    edge = j.value("edge_length_ft", 6.0);
    ppf = j.value("pixels_per_foot", 100.0);
    created_at = j.value("created_at", std::string{});
    if (j.contains("homography")) {
      const auto& jh = j.at("homography");
      if (!jh.is_array() || jh.size() != 3) throw Error(ErrorKind::InvalidArgument, "homography must be 3x3");
      for (std::size_t r = 0; r < 3; ++r) {
        if (!jh[r].is_array() || jh[r].size() != 3) {
          throw Error(ErrorKind::InvalidArgument, "homography must be 3x3");
        }
        for (std::size_t c = 0; c < 3; ++c) stored[r][c] = jh[r][c].get<double>();
      }
      has_matrix = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("calibration JSON: ") + e.what());
  }
  CalibrationProfile p =
      make_calibration(corners, edge, ppf, created_at.empty() ? now_rfc3339() : created_at);
  if (has_matrix) {
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        if (!(std::abs(p.homography(r, c) - stored[r][c]) <= tolerance)) {
          throw Error(ErrorKind::LoadMismatch,
                      "stored homography element (" + std::to_string(r) + "," + std::to_string(c) +
                          ") differs from the recomputed value");
        }
  }
  return p;
}

inline void save_calibration(const CalibrationProfile& p, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << to_json(p).dump(2) << '\n';
}

inline CalibrationProfile load_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidArgument, path.string() + ": " + e.what());
  }
  return calibration_from_json(j);
}

}  // namespace siteguard
