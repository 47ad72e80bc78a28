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

// Ground-plane calibration: a 4-point projective transform from camera pixels
// to a bird's-eye canvas where pixel distance is proportional to ground
// distance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "siteguard/error.hpp"

namespace siteguard {

struct ImagePoint {
  double u = 0.0;
  double v = 0.0;

  friend bool operator==(const ImagePoint&, const ImagePoint&) = default;
};

struct PlanePoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const PlanePoint&, const PlanePoint&) = default;
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

namespace geometry {

inline constexpr double kCollinearityAreaPx2 = 1e-6;
inline constexpr double kPivotThreshold = 1e-12;
inline constexpr double kHorizonThreshold = 1e-12;
inline constexpr double kNormalizationFloor = 1e-9;
inline constexpr double kSingularDeterminant = 1e-12;

namespace detail {

inline double triangle_area(double ax, double ay, double bx, double by, double cx, double cy) {
  return 0.5 * std::abs((bx - ax) * (cy - ay) - (by - ay) * (cx - ax));
}

template <typename P, typename GetX, typename GetY>
void require_non_degenerate(std::span<const P, 4> pts, GetX gx, GetY gy, const char* which) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (!std::isfinite(gx(pts[i])) || !std::isfinite(gy(pts[i]))) {
      throw Error(ErrorKind::DegenerateConfiguration,
                  std::string(which) + " point " + std::to_string(i) + " is not finite");
    }
  }
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      if (gx(pts[i]) == gx(pts[j]) && gy(pts[i]) == gy(pts[j])) {
        throw Error(ErrorKind::DegenerateConfiguration,
                    std::string(which) + " points " + std::to_string(i) + " and " +
                        std::to_string(j) + " coincide");
      }
    }
  }
  static constexpr std::array<std::array<std::size_t, 3>, 4> kTriples{
      {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}}};
  for (const auto& t : kTriples) {
    const double area = triangle_area(gx(pts[t[0]]), gy(pts[t[0]]), gx(pts[t[1]]), gy(pts[t[1]]),
                                      gx(pts[t[2]]), gy(pts[t[2]]));
    if (area <= kCollinearityAreaPx2) {
      throw Error(ErrorKind::DegenerateConfiguration,
                  std::string(which) + " points " + std::to_string(t[0]) + ", " +
                      std::to_string(t[1]) + ", " + std::to_string(t[2]) + " are collinear");
    }
  }
}

// The DLT solve runs in extended precision; the result is rounded to double
// once, at the end.
using Wide = long double;
using WideMatrix3 = std::array<std::array<Wide, 3>, 3>;

// Similarity that moves the centroid to the origin and sets the RMS distance
// from it to sqrt(2).
struct Conditioner {
  Wide cx = 0.0L;
  Wide cy = 0.0L;
  Wide scale = 1.0L;

  template <typename P, typename GetX, typename GetY>
  static Conditioner fit(std::span<const P, 4> pts, GetX gx, GetY gy) {
    Conditioner c;
    for (const auto& p : pts) {
      c.cx += gx(p);
      c.cy += gy(p);
    }
    c.cx /= 4.0L;
    c.cy /= 4.0L;
    Wide sq = 0.0L;
    for (const auto& p : pts) {
      const Wide dx = gx(p) - c.cx;
      const Wide dy = gy(p) - c.cy;
      sq += dx * dx + dy * dy;
    }
    c.scale = std::sqrt(2.0L) / std::sqrt(sq / 4.0L);
    return c;
  }

  std::pair<Wide, Wide> apply(Wide x, Wide y) const { return {(x - cx) * scale, (y - cy) * scale}; }

  WideMatrix3 matrix() const {
    return {{{scale, 0.0L, -scale * cx}, {0.0L, scale, -scale * cy}, {0.0L, 0.0L, 1.0L}}};
  }

  WideMatrix3 inverse_matrix() const {
    return {{{1.0L / scale, 0.0L, cx}, {0.0L, 1.0L / scale, cy}, {0.0L, 0.0L, 1.0L}}};
  }
};

template <typename T>
std::array<std::array<T, 3>, 3> multiply(const std::array<std::array<T, 3>, 3>& a,
                                         const std::array<std::array<T, 3>, 3>& b) {
  std::array<std::array<T, 3>, 3> r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
  return r;
}

inline double determinant(const Matrix3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

// Gaussian elimination with partial pivoting.
template <typename T, std::size_t N>
std::array<T, N> solve_linear(std::array<std::array<T, N>, N> a, std::array<T, N> b) {
  for (std::size_t col = 0; col < N; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < N; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (std::abs(a[pivot][col]) < kPivotThreshold) {
      throw Error(ErrorKind::SingularSystem,
                  "pivot below threshold in column " + std::to_string(col));
    }
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (std::size_t r = col + 1; r < N; ++r) {
      const T f = a[r][col] / a[col][col];
      if (f == 0) continue;
      for (std::size_t c = col; c < N; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::array<T, N> x{};
  for (std::size_t i = N; i-- > 0;) {
    T s = b[i];
    for (std::size_t c = i + 1; c < N; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace detail
}  // namespace geometry

// A 3x3 projective matrix normalized so that a33 == 1. Immutable once built.
class Homography {
 public:
  Homography() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

  // Rescales `m` to a33 == 1 and checks that it is invertible.
  static Homography from_matrix(const Matrix3& m) {
    const double a33 = m[2][2];
    double max_abs = 0.0;
    for (const auto& row : m)
      for (double e : row) {
        if (!std::isfinite(e)) throw Error(ErrorKind::SingularSystem, "matrix has non-finite element");
        max_abs = std::max(max_abs, std::abs(e));
      }
    if (max_abs == 0.0 || std::abs(a33) < geometry::kNormalizationFloor * max_abs) {
      throw Error(ErrorKind::SingularSystem, "a33 vanishes; matrix cannot be normalized");
    }
    Matrix3 n = m;
    for (auto& row : n)
      for (double& e : row) e /= a33;
    n[2][2] = 1.0;

    Matrix3 scaled = n;
    for (auto& row : scaled) {
      double row_max = 0.0;
      for (double e : row) row_max = std::max(row_max, std::abs(e));
      if (row_max == 0.0) throw Error(ErrorKind::SingularSystem, "matrix has a zero row");
      for (double& e : row) e /= row_max;
    }
    if (std::abs(geometry::detail::determinant(scaled)) <= geometry::kSingularDeterminant) {
      throw Error(ErrorKind::SingularSystem, "matrix is singular");
    }
    Homography h;
    h.m_ = n;
    return h;
  }

  const Matrix3& matrix() const noexcept { return m_; }
  double operator()(std::size_t row, std::size_t col) const { return m_[row][col]; }

  friend bool operator==(const Homography&, const Homography&) = default;

 private:
  Matrix3 m_;
};

// Applies an arbitrary (not necessarily normalized) projective matrix with
// the input homogeneous coordinate fixed to 1.
inline PlanePoint project(const Matrix3& a, ImagePoint p) {
  const double xp = a[0][0] * p.u + a[0][1] * p.v + a[0][2];
  const double yp = a[1][0] * p.u + a[1][1] * p.v + a[1][2];
  const double wp = a[2][0] * p.u + a[2][1] * p.v + a[2][2];
  if (!(std::abs(wp) > geometry::kHorizonThreshold)) {
    throw Error(ErrorKind::PointAtHorizon,
                "w' = " + std::to_string(wp) + " at (" + std::to_string(p.u) + ", " +
                    std::to_string(p.v) + ")");
  }
  return {xp / wp, yp / wp};
}

inline PlanePoint transform_point(const Homography& h, ImagePoint p) {
  return project(h.matrix(), p);
}

// Direct linear transform on exactly four correspondences. Both point sets
// are conditioned (centroid to origin, RMS radius sqrt(2)) before the 8x8
// system is solved, then the result is mapped back.
inline Homography solve_homography(std::span<const ImagePoint, 4> src,
                                   std::span<const PlanePoint, 4> dst) {
  using geometry::detail::Conditioner;
  auto iu = [](const ImagePoint& p) { return p.u; };
  auto iv = [](const ImagePoint& p) { return p.v; };
  auto px = [](const PlanePoint& p) { return p.x; };
  auto py = [](const PlanePoint& p) { return p.y; };
  geometry::detail::require_non_degenerate(src, iu, iv, "source");
  geometry::detail::require_non_degenerate(dst, px, py, "destination");

  const Conditioner cs = Conditioner::fit(src, iu, iv);
  const Conditioner cd = Conditioner::fit(dst, px, py);

  using geometry::detail::Wide;
  std::array<std::array<Wide, 8>, 8> a{};
  std::array<Wide, 8> b{};
  for (std::size_t i = 0; i < 4; ++i) {
    const auto [u, v] = cs.apply(src[i].u, src[i].v);
    const auto [x, y] = cd.apply(dst[i].x, dst[i].y);
    a[2 * i] = {u, v, 1.0L, 0.0L, 0.0L, 0.0L, -u * x, -v * x};
    b[2 * i] = x;
    a[2 * i + 1] = {0.0L, 0.0L, 0.0L, u, v, 1.0L, -u * y, -v * y};
    b[2 * i + 1] = y;
  }
  const auto h = geometry::detail::solve_linear(a, b);
  const geometry::detail::WideMatrix3 normalized{
      {{h[0], h[1], h[2]}, {h[3], h[4], h[5]}, {h[6], h[7], 1.0L}}};
  const auto wide = geometry::detail::multiply(
      cd.inverse_matrix(), geometry::detail::multiply(normalized, cs.matrix()));

  Wide max_abs = 0.0L;
  for (const auto& row : wide)
    for (Wide e : row) max_abs = std::max(max_abs, std::abs(e));
  if (!(std::abs(wide[2][2]) >= geometry::kNormalizationFloor * max_abs)) {
    throw Error(ErrorKind::SingularSystem, "solved a33 vanishes");
  }
  Matrix3 m{};
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 3; ++c) m[r][c] = static_cast<double>(wide[r][c] / wide[2][2]);
  m[2][2] = 1.0;
  return Homography::from_matrix(m);
}

inline Homography invert_homography(const Homography& h) {
  const Matrix3& m = h.matrix();
  const double det = geometry::detail::determinant(m);
  if (!(std::abs(det) > 0.0) || !std::isfinite(det)) {
    throw Error(ErrorKind::SingularSystem, "cannot invert a singular homography");
  }
  Matrix3 inv{};
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return Homography::from_matrix(inv);
}

}  // namespace siteguard
