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

#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "siteguard/calibration.hpp"
#include "siteguard/geometry.hpp"

namespace sg = siteguard;

namespace {

std::array<sg::ImagePoint, 4> to_image(const oracle::Quad& q) {
  return {sg::ImagePoint{q[0][0], q[0][1]}, sg::ImagePoint{q[1][0], q[1][1]},
          sg::ImagePoint{q[2][0], q[2][1]}, sg::ImagePoint{q[3][0], q[3][1]}};
}

std::array<sg::PlanePoint, 4> to_plane(const oracle::Quad& q) {
  return {sg::PlanePoint{q[0][0], q[0][1]}, sg::PlanePoint{q[1][0], q[1][1]},
          sg::PlanePoint{q[2][0], q[2][1]}, sg::PlanePoint{q[3][0], q[3][1]}};
}

sg::Homography solve(const std::array<sg::ImagePoint, 4>& s, const std::array<sg::PlanePoint, 4>& d) {
  return sg::solve_homography(std::span<const sg::ImagePoint, 4>(s), std::span<const sg::PlanePoint, 4>(d));
}

void expect_matrix_near(const sg::Homography& h, const sg::Matrix3& m, double tol) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(h(r, c), m[r][c], tol) << "element " << r << "," << c;
}

const std::array<sg::ImagePoint, 4> kTrapezoid{
    {{100, 300}, {300, 300}, {260, 200}, {140, 200}}};
const std::array<sg::PlanePoint, 4> kSquare600{{{0, 600}, {600, 600}, {600, 0}, {0, 0}}};

sg::ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const sg::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return sg::ErrorKind::Io;
}

}  // namespace

TEST(SolveHomography, UnitSquareToItselfIsIdentity) {
  const std::array<sg::ImagePoint, 4> s{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  const std::array<sg::PlanePoint, 4> d{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  expect_matrix_near(solve(s, d), {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}, 1e-12);
}

TEST(SolveHomography, PureScale) {
  const std::array<sg::ImagePoint, 4> s{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  const std::array<sg::PlanePoint, 4> d{{{0, 0}, {2, 0}, {2, 2}, {0, 2}}};
  expect_matrix_near(solve(s, d), {{{2, 0, 0}, {0, 2, 0}, {0, 0, 1}}}, 1e-12);
}

TEST(SolveHomography, TrapezoidReprojectsBySubstitution) {
  const auto h = solve(kTrapezoid, kSquare600);
  EXPECT_EQ(h(2, 2), 1.0);
  for (int i = 0; i < 4; ++i) {
    const auto p = oracle::substitute(h.matrix(), kTrapezoid[i].u, kTrapezoid[i].v);
    EXPECT_LT(std::abs(p[0] - kSquare600[i].x), 1e-6);
    EXPECT_LT(std::abs(p[1] - kSquare600[i].y), 1e-6);
  }
}

TEST(SolveHomography, CollinearSourceIsDegenerate) {
  const std::array<sg::ImagePoint, 4> s{{{0, 0}, {1, 0}, {2, 0}, {0, 1}}};
  const std::array<sg::PlanePoint, 4> d{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  EXPECT_EQ(kind_of([&] { solve(s, d); }), sg::ErrorKind::DegenerateConfiguration);
}

TEST(SolveHomography, DuplicateAndCollinearDestinationAreDegenerate) {
  const std::array<sg::ImagePoint, 4> s{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
  const std::array<sg::PlanePoint, 4> dup{{{0, 0}, {0, 0}, {1, 1}, {0, 1}}};
  const std::array<sg::PlanePoint, 4> line{{{0, 0}, {1, 1}, {2, 2}, {0, 1}}};
  EXPECT_EQ(kind_of([&] { solve(s, dup); }), sg::ErrorKind::DegenerateConfiguration);
  EXPECT_EQ(kind_of([&] { solve(s, line); }), sg::ErrorKind::DegenerateConfiguration);
}

TEST(SolveHomography, AgreesWithHighPrecisionLeastSquares) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto sq = oracle::random_convex_quad(rng, 0.0, 1280.0);
    const auto dq = oracle::random_convex_quad(rng, 0.0, 1000.0);
    const auto h = solve(to_image(sq), to_plane(dq));
    expect_matrix_near(h, oracle::homography_least_squares(sq, dq), 1e-9);
  }
}

TEST(TransformPoint, Examples) {
  const auto id = sg::Homography{};
  EXPECT_EQ(sg::transform_point(id, {5, 7}), (sg::PlanePoint{5, 7}));
  const auto scale = sg::Homography::from_matrix({{{2, 0, 0}, {0, 2, 0}, {0, 0, 1}}});
  EXPECT_EQ(sg::transform_point(scale, {3, 4}), (sg::PlanePoint{6, 8}));
  const auto persp = sg::Homography::from_matrix({{{1, 0, 0}, {0, 1, 0}, {0.1, 0, 1}}});
  const auto p = sg::transform_point(persp, {10, 0});
  EXPECT_DOUBLE_EQ(p.x, 5.0);
  EXPECT_DOUBLE_EQ(p.y, 0.0);
}

TEST(TransformPoint, HorizonIsAnError) {
  const auto persp = sg::Homography::from_matrix({{{1, 0, 0}, {0, 1, 0}, {0.1, 0, 1}}});
  EXPECT_EQ(kind_of([&] { sg::transform_point(persp, {-10, 3}); }), sg::ErrorKind::PointAtHorizon);
}

TEST(TransformPoint, HomogeneousScaleInvariance) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> e(-1.0, 1.0), pt(0.0, 500.0), lam(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    sg::Matrix3 m{{{1 + e(rng), e(rng), 100 * e(rng)}, {e(rng), 1 + e(rng), 100 * e(rng)},
                   {1e-3 * e(rng), 1e-3 * e(rng), 1.0}}};
    const sg::ImagePoint p{pt(rng), pt(rng)};
    sg::PlanePoint base;
    try {
      base = sg::project(m, p);
    } catch (const sg::Error&) {
      continue;
    }
    // Power-of-two scaling is exact in binary floating point.
    sg::Matrix3 m2 = m;
    for (auto& row : m2)
      for (auto& x : row) x *= -4.0;
    EXPECT_EQ(sg::project(m2, p), base);
    double l = lam(rng);
    if (std::abs(l) < 1e-3) l = 1.5;
    sg::Matrix3 ml = m;
    for (auto& row : ml)
      for (auto& x : row) x *= l;
    const auto q = sg::project(ml, p);
    EXPECT_NEAR(q.x, base.x, 1e-12 * std::max(1.0, std::abs(base.x)));
    EXPECT_NEAR(q.y, base.y, 1e-12 * std::max(1.0, std::abs(base.y)));
  }
}

TEST(TransformPoint, PreservesCollinearity) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> pt(0.0, 640.0), t(0.0, 1.0);
  const auto h = solve(kTrapezoid, kSquare600);
  for (int i = 0; i < 1000; ++i) {
    const sg::ImagePoint a{pt(rng), 150 + 0.3 * pt(rng)}, b{pt(rng), 150 + 0.3 * pt(rng)};
    const double s = t(rng);
    const sg::ImagePoint c{a.u + s * (b.u - a.u), a.v + s * (b.v - a.v)};
    const auto pa = sg::transform_point(h, a), pb = sg::transform_point(h, b), pc = sg::transform_point(h, c);
    const double cross = (pb.x - pa.x) * (pc.y - pa.y) - (pb.y - pa.y) * (pc.x - pa.x);
    const double len = std::hypot(pb.x - pa.x, pb.y - pa.y) * std::hypot(pc.x - pa.x, pc.y - pa.y);
    EXPECT_LT(std::abs(cross), 1e-6 * std::max(1.0, len));
  }
}

TEST(InvertHomography, Examples) {
  expect_matrix_near(sg::invert_homography(sg::Homography{}), {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}, 0);
  const auto scale = sg::Homography::from_matrix({{{2, 0, 0}, {0, 2, 0}, {0, 0, 1}}});
  expect_matrix_near(sg::invert_homography(scale), {{{0.5, 0, 0}, {0, 0.5, 0}, {0, 0, 1}}}, 1e-15);
}

TEST(InvertHomography, RoundTripRandomPoints) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pt(0.0, 640.0);
  for (int k = 0; k < 20; ++k) {
    const auto sq = oracle::random_convex_quad(rng, 0.0, 640.0);
    const auto h = solve(to_image(sq), kSquare600);
    const auto inv = sg::invert_homography(h);
    EXPECT_EQ(inv(2, 2), 1.0);
    double worst = 0.0;
    int used = 0;
    while (used < 100) {
      const sg::ImagePoint p{pt(rng), pt(rng)};
      const auto& m = h.matrix();
      if (std::abs(m[2][0] * p.u + m[2][1] * p.v + 1.0) <= 1e-6) continue;
      const auto q = sg::transform_point(h, p);
      sg::ImagePoint back;
      try {
        const auto r = sg::transform_point(inv, {q.x, q.y});
        back = {r.x, r.y};
      } catch (const sg::Error&) {
        continue;
      }
      worst = std::max({worst, std::abs(back.u - p.u), std::abs(back.v - p.v)});
      ++used;
    }
    EXPECT_LT(worst, 1e-9);
  }
}

TEST(InvertHomography, SingularMatrixRejected) {
  EXPECT_EQ(kind_of([] { sg::Homography::from_matrix({{{1, 2, 3}, {2, 4, 6}, {0, 0, 1}}}); }),
            sg::ErrorKind::SingularSystem);
}

TEST(Calibration, AxisAlignedSquareGivesTranslation) {
  const auto p = sg::make_calibration({{{100, 700}, {700, 700}, {700, 100}, {100, 100}}}, 6.0, 100.0);
  expect_matrix_near(p.homography, {{{1, 0, -100}, {0, 1, -100}, {0, 0, 1}}}, 1e-9);
}

TEST(Calibration, TrapezoidMapsOntoSquare) {
  const auto p = sg::make_calibration(kTrapezoid, 6.0, 100.0);
  for (int i = 0; i < 4; ++i) {
    const auto q = oracle::substitute(p.homography.matrix(), kTrapezoid[i].u, kTrapezoid[i].v);
    EXPECT_LT(std::abs(q[0] - kSquare600[i].x), 1e-6);
    EXPECT_LT(std::abs(q[1] - kSquare600[i].y), 1e-6);
  }
}

TEST(Calibration, RepeatedCornerAndNonConvexRejected) {
  EXPECT_EQ(kind_of([] { sg::make_calibration({{{0, 0}, {0, 0}, {10, 10}, {0, 10}}}); }),
            sg::ErrorKind::DegenerateConfiguration);
  // Bow-tie click order.
  EXPECT_EQ(kind_of([] { sg::make_calibration({{{0, 100}, {100, 0}, {100, 100}, {0, 0}}}); }),
            sg::ErrorKind::DegenerateConfiguration);
  EXPECT_EQ(kind_of([] { sg::make_calibration(kTrapezoid, 6.0, 0.0); }), sg::ErrorKind::InvalidArgument);
}

TEST(Calibration, PersistRoundTripAndMismatch) {
  const auto dir = std::filesystem::temp_directory_path() / "siteguard_geometry_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "calibration.json";
  const auto p = sg::make_calibration(kTrapezoid, 6.0, 100.0, "2026-01-01T00:00:00.000Z");
  sg::save_calibration(p, path);
  const auto q = sg::load_calibration(path);
  EXPECT_EQ(q.homography, p.homography);
  EXPECT_EQ(q.created_at, p.created_at);

  auto j = sg::to_json(p);
  j["homography"][0][2] = j["homography"][0][2].get<double>() + 1e-3;
  std::ofstream(path) << j.dump();
  EXPECT_EQ(kind_of([&] { sg::load_calibration(path); }), sg::ErrorKind::LoadMismatch);
  std::filesystem::remove_all(dir);
}
