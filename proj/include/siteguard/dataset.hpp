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

// Dataset tooling: per-class instance counts, the three augmentation families
// (flip, rotate, brightness/contrast) with their box transforms, class
// balancing to a target count, and a seeded train/test file split.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"
#include "siteguard/image.hpp"
#include "siteguard/voc.hpp"

namespace siteguard {

struct AnnotatedImage {
  std::string name;  // file name of the image, e.g. "maksssksksss0.png"
  cv::Mat image;     // 8-bit, 3 channels
  std::vector<GroundTruth> annotations;

  int width() const { return image.cols; }
  int height() const { return image.rows; }
};

using ClassCounts = std::array<std::size_t, 3>;  // indexed by face_index()

inline ClassCounts class_counts(const std::vector<GroundTruth>& gts) {
  ClassCounts c{};
  for (const auto& g : gts)
    if (is_face(g.label)) ++c[face_index(g.label)];
  return c;
}

inline ClassCounts class_counts(const std::vector<AnnotatedImage>& dataset) {
  ClassCounts c{};
  for (const auto& img : dataset) {
    const auto k = class_counts(img.annotations);
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += k[i];
  }
  return c;
}

inline nlohmann::ordered_json counts_to_json(const ClassCounts& c) {
  nlohmann::ordered_json j;
  for (auto l : kFaceLabels) j[std::string(to_string(l))] = c[face_index(l)];
  return j;
}

struct AugmentationOp {
  enum class Kind : std::uint8_t { flip_horizontal, rotate, brightness_contrast };

  Kind kind = Kind::flip_horizontal;
  double angle_deg = 0.0;
  double alpha = 1.0;
  double beta = 0.0;

  static AugmentationOp flip() { return {}; }
  static AugmentationOp rotate(double degrees) { return {Kind::rotate, degrees, 1.0, 0.0}; }
  static AugmentationOp brightness_contrast(double a, double b) { return {Kind::brightness_contrast, 0.0, a, b}; }

  void validate() const {
    switch (kind) {
      case Kind::flip_horizontal: return;
      case Kind::rotate:
        if ((angle_deg >= -15.0 && angle_deg <= 15.0) || angle_deg == 90.0 || angle_deg == 180.0 ||
            angle_deg == 270.0) {
          return;
        }
        throw Error(ErrorKind::InvalidArgument, "rotation angle must lie in [-15,15] or be 90, 180 or 270");
      case Kind::brightness_contrast:
        if (!(alpha >= 0.5 && alpha <= 1.5)) throw Error(ErrorKind::InvalidArgument, "alpha must lie in [0.5,1.5]");
        if (!(beta >= -60.0 && beta <= 60.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in [-60,60]");
        return;
    }
  }
};

inline nlohmann::ordered_json to_json(const AugmentationOp& op) {
  nlohmann::ordered_json j;
  switch (op.kind) {
    case AugmentationOp::Kind::flip_horizontal: j["op"] = "flip_horizontal"; break;
    case AugmentationOp::Kind::rotate:
      j["op"] = "rotate";
      j["angle_deg"] = op.angle_deg;
      break;
    case AugmentationOp::Kind::brightness_contrast:
      j["op"] = "brightness_contrast";
      j["alpha"] = op.alpha;
      j["beta"] = op.beta;
      break;
  }
  return j;
}

inline constexpr double kMinBoxArea = 4.0;

struct AugmentResult {
  AnnotatedImage image;
  std::size_t dropped = 0;  // boxes whose clipped area fell below kMinBoxArea
};

namespace detail {

// sin/cos with exact values at multiples of 90 degrees.
inline std::array<double, 2> sin_cos_deg(double deg) {
  const double r = std::fmod(deg, 360.0);
  const double q = r < 0 ? r + 360.0 : r;
  if (q == 0.0) return {0.0, 1.0};
  if (q == 90.0) return {1.0, 0.0};
  if (q == 180.0) return {0.0, -1.0};
  if (q == 270.0) return {-1.0, 0.0};
  const double rad = deg * std::numbers::pi / 180.0;
  return {std::sin(rad), std::cos(rad)};
}

inline int canvas_extent(double v) { return std::max(1, static_cast<int>(std::ceil(v - 1e-6))); }

}  // namespace detail

inline AugmentResult flip_horizontal(const AnnotatedImage& in) {
  AugmentResult r;
  r.image.name = in.name;
  cv::flip(in.image, r.image.image, 1);
  const double w = in.width();
  for (const auto& g : in.annotations) {
    r.image.annotations.push_back({g.label, {w - g.box.xmax, g.box.ymin, w - g.box.xmin, g.box.ymax}, g.source_image});
  }
  return r;
}

// Positive angles turn the picture clockwise as displayed (y grows downward).
// The canvas grows to the rotated image's bounds; uncovered pixels are black.
inline AugmentResult rotate_image(const AnnotatedImage& in, double degrees) {
  const auto [s, c] = detail::sin_cos_deg(degrees);
  const double w = in.width(), h = in.height();
  const int out_w = detail::canvas_extent(std::abs(w * c) + std::abs(h * s));
  const int out_h = detail::canvas_extent(std::abs(w * s) + std::abs(h * c));
  const double cx = w / 2.0, cy = h / 2.0, ox = out_w / 2.0, oy = out_h / 2.0;

  // Continuous coordinates: (x', y') = R (x - cx, y - cy) + (ox, oy).
  auto forward = [&](double x, double y) {
    const double dx = x - cx, dy = y - cy;
    return std::array<double, 2>{c * dx - s * dy + ox, s * dx + c * dy + oy};
  };

  // Destination pixel index -> source pixel index, with pixel centers at +0.5.
  cv::Mat inv(2, 3, CV_64F);
  inv.at<double>(0, 0) = c;
  inv.at<double>(0, 1) = s;
  inv.at<double>(1, 0) = -s;
  inv.at<double>(1, 1) = c;
  inv.at<double>(0, 2) = -c * (ox - 0.5) - s * (oy - 0.5) + cx - 0.5;
  inv.at<double>(1, 2) = s * (ox - 0.5) - c * (oy - 0.5) + cy - 0.5;

  AugmentResult r;
  r.image.name = in.name;
  cv::warpAffine(in.image, r.image.image, inv, cv::Size(out_w, out_h), cv::INTER_LINEAR | cv::WARP_INVERSE_MAP,
                 cv::BORDER_CONSTANT, cv::Scalar::all(0));

  for (const auto& g : in.annotations) {
    double x0 = INFINITY, y0 = INFINITY, x1 = -INFINITY, y1 = -INFINITY;
    for (const auto& [x, y] : {std::array{g.box.xmin, g.box.ymin}, std::array{g.box.xmax, g.box.ymin},
                               std::array{g.box.xmax, g.box.ymax}, std::array{g.box.xmin, g.box.ymax}}) {
      const auto p = forward(x, y);
      x0 = std::min(x0, p[0]);
      y0 = std::min(y0, p[1]);
      x1 = std::max(x1, p[0]);
      y1 = std::max(y1, p[1]);
    }
    x0 = std::clamp(x0, 0.0, double(out_w));
    x1 = std::clamp(x1, 0.0, double(out_w));
    y0 = std::clamp(y0, 0.0, double(out_h));
    y1 = std::clamp(y1, 0.0, double(out_h));
    const BoundingBox box{x0, y0, x1, y1};
    if (!box.valid() || box.area() < kMinBoxArea) {
      ++r.dropped;
      continue;
    }
    r.image.annotations.push_back({g.label, box, g.source_image});
  }
  return r;
}

// out = clamp(alpha * in + beta, 0, 255) per channel, rounded to nearest.
inline AugmentResult brightness_contrast(const AnnotatedImage& in, double alpha, double beta) {
  AugmentResult r;
  r.image.name = in.name;
  in.image.convertTo(r.image.image, -1, alpha, beta);
  r.image.annotations = in.annotations;
  return r;
}

inline AugmentResult apply_augmentation(const AnnotatedImage& in, const AugmentationOp& op) {
  op.validate();
  switch (op.kind) {
    case AugmentationOp::Kind::flip_horizontal: return flip_horizontal(in);
    case AugmentationOp::Kind::rotate: return rotate_image(in, op.angle_deg);
    case AugmentationOp::Kind::brightness_contrast: return brightness_contrast(in, op.alpha, op.beta);
  }
  return {in, 0};
}

// Portable sampling helpers: the standard distributions are not guaranteed
// to produce the same sequence across library implementations.
namespace detail {

inline double unit_real(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return static_cast<std::size_t>(x % n);
  }
}

inline double uniform_real(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_real(rng); }

}  // namespace detail

// Draws one op from the allowed ranges. Parameters are rounded (0.1 degree,
// 0.01 gain, 1 level bias) so the manifest records them exactly.
inline AugmentationOp random_op(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  switch (detail::uniform_index(rng, 3)) {
    case 0: return AugmentationOp::flip();
    case 1: {
      if (detail::uniform_index(rng, 4) == 0) {
        return AugmentationOp::rotate(90.0 * static_cast<double>(1 + detail::uniform_index(rng, 3)));
      }
      return AugmentationOp::rotate(std::round(detail::uniform_real(rng, -15.0, 15.0) * 10.0) / 10.0);
    }
    default: {
      const double a = std::round(detail::uniform_real(rng, 0.5, 1.5) * 100.0) / 100.0;
      const double b = std::round(detail::uniform_real(rng, -60.0, 60.0));
      return AugmentationOp::brightness_contrast(a, b);
    }
  }
}

struct BalancePlan {
  std::size_t target = 0;
  ClassCounts current{};
  ClassCounts needed{};

  bool empty() const { return needed == ClassCounts{}; }
  std::size_t total_target() const { return target * needed.size(); }
};

inline BalancePlan balance_plan(const ClassCounts& counts, std::size_t target) {
  BalancePlan p;
  p.target = target;
  p.current = counts;
  for (std::size_t i = 0; i < counts.size(); ++i) p.needed[i] = counts[i] < target ? target - counts[i] : 0;
  return p;
}

inline nlohmann::ordered_json to_json(const BalancePlan& p) {
  nlohmann::ordered_json j;
  j["target"] = p.target;
  j["current"] = counts_to_json(p.current);
  j["needed"] = counts_to_json(p.needed);
  j["total_target"] = p.total_target();
  return j;
}

struct ManifestEntry {
  std::string source;
  std::string output;
  AugmentationOp op;
  std::uint64_t seed = 0;
  std::size_t dropped = 0;
  ClassCounts counts{};  // running totals after this copy
};

inline nlohmann::ordered_json to_json(const ManifestEntry& m) {
  nlohmann::ordered_json j;
  j["source"] = m.source;
  j["output"] = m.output;
  j["op"] = to_json(m.op);
  j["seed"] = m.seed;
  j["dropped"] = m.dropped;
  j["counts"] = counts_to_json(m.counts);
  return j;
}

struct BalanceResult {
  std::vector<AnnotatedImage> generated;
  std::vector<ManifestEntry> manifest;
  ClassCounts counts{};  // original plus generated
};

// Classes are handled in label order. For each deficient class, images holding
// at least one instance of it are cycled in dataset order; every copy gets an
// op drawn from its own seed, taken from a generator seeded with `seed`.
inline BalanceResult run_balancing(const std::vector<AnnotatedImage>& dataset, const BalancePlan& plan,
                                   std::uint64_t seed) {
  BalanceResult out;
  out.counts = class_counts(dataset);
  std::mt19937_64 rng(seed);
  std::size_t serial = 0;
  for (const auto label : kFaceLabels) {
    const auto k = face_index(label);
    if (out.counts[k] >= plan.target) continue;
    std::vector<const AnnotatedImage*> sources;
    for (const auto& img : dataset)
      if (class_counts(img.annotations)[k] > 0) sources.push_back(&img);
    if (sources.empty()) throw Error(ErrorKind::InsufficientSourceImages, std::string(to_string(label)));

    // Ops that clip away every instance make no progress; bound the attempts.
    const std::size_t max_attempts = 64 * (plan.target - out.counts[k]) + 64;
    for (std::size_t attempt = 0; out.counts[k] < plan.target; ++attempt) {
      if (attempt >= max_attempts) {
        throw Error(ErrorKind::InsufficientSourceImages,
                    std::string(to_string(label)) + ": augmented copies keep losing every instance");
      }
      const AnnotatedImage& src = *sources[attempt % sources.size()];
      const std::uint64_t copy_seed = rng();
      const auto op = random_op(copy_seed);
      auto res = apply_augmentation(src, op);
      const auto added = class_counts(res.image.annotations);
      for (std::size_t i = 0; i < added.size(); ++i) out.counts[i] += added[i];

      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_aug%05zu.png", serial++);
      res.image.name = std::filesystem::path(src.name).stem().string() + suffix;
      for (auto& g : res.image.annotations) g.source_image = res.image.name;

      out.manifest.push_back({src.name, res.image.name, op, copy_seed, res.dropped, out.counts});
      out.generated.push_back(std::move(res.image));
    }
  }
  return out;
}

// Loading and saving -------------------------------------------------------

namespace detail {

inline std::optional<std::filesystem::path> find_image(const std::filesystem::path& dir, const std::string& stem) {
  for (const auto& sub : {dir, dir / "images"}) {
    for (const char* ext : {".png", ".jpg", ".jpeg", ".PNG", ".JPG", ".JPEG"}) {
      auto p = sub / (stem + ext);
      if (std::filesystem::exists(p)) return p;
    }
  }
  return std::nullopt;
}

}  // namespace detail

// Lists VOC files in `dir` or `dir/annotations`, sorted by file name.
inline std::vector<std::filesystem::path> list_annotations(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> xmls;
  for (const auto& sub : {dir, dir / "annotations"}) {
    if (!std::filesystem::is_directory(sub)) continue;
    for (const auto& e : std::filesystem::directory_iterator(sub))
      if (e.is_regular_file() && e.path().extension() == ".xml") xmls.push_back(e.path());
  }
  std::sort(xmls.begin(), xmls.end());
  return xmls;
}

// Annotation-only load (no pixels), enough for counting.
inline std::vector<AnnotatedImage> load_annotations(const std::filesystem::path& dir) {
  std::vector<AnnotatedImage> out;
  for (const auto& xml : list_annotations(dir)) {
    auto doc = load_voc(xml);
    AnnotatedImage img;
    img.name = doc.filename.empty() ? xml.stem().string() + ".png" : doc.filename;
    img.annotations = std::move(doc.objects);
    out.push_back(std::move(img));
  }
  return out;
}

// Boxes poking past the image border are clipped; boxes left under
// kMinBoxArea are dropped and counted in `clipped_away`.
inline std::vector<AnnotatedImage> load_dataset(const std::filesystem::path& dir, std::size_t* clipped_away = nullptr) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, dir.string() + " is not a directory");
  std::vector<AnnotatedImage> out;
  for (const auto& xml : list_annotations(dir)) {
    auto doc = load_voc(xml);
    const auto path = detail::find_image(dir, xml.stem().string());
    if (!path) throw Error(ErrorKind::Io, "no image found for " + xml.filename().string());
    AnnotatedImage img;
    img.name = path->filename().string();
    img.image = load_image(*path);
    for (auto g : doc.objects) {
      g.box = intersection(g.box, BoundingBox{0, 0, double(img.width()), double(img.height())});
      if (!g.box.valid() || g.box.area() < kMinBoxArea) {
        if (clipped_away) ++*clipped_away;
        continue;
      }
      g.source_image = img.name;
      img.annotations.push_back(g);
    }
    out.push_back(std::move(img));
  }
  return out;
}

inline void save_annotated(const std::filesystem::path& dir, const AnnotatedImage& img) {
  std::filesystem::create_directories(dir / "images");
  std::filesystem::create_directories(dir / "annotations");
  write_file(dir / "images" / img.name, encode_png(img.image, 3));
  VocAnnotation doc{img.name, img.width(), img.height(), img.annotations};
  std::ofstream xml(dir / "annotations" / (std::filesystem::path(img.name).stem().string() + ".xml"));
  if (!xml) throw Error(ErrorKind::Io, "cannot write annotation for " + img.name);
  xml << serialize_voc(doc);
}

inline std::string manifest_jsonl(const BalanceResult& r) {
  std::string s;
  for (const auto& m : r.manifest) s += to_json(m).dump() + "\n";
  return s;
}

// Seeded file split: Fisher-Yates shuffle, first round(ratio * n) go to train.
// Both parts are returned sorted.
struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

inline Split split_files(std::vector<std::string> names, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error(ErrorKind::InvalidArgument, "ratio must lie in [0,1]");
  std::sort(names.begin(), names.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = names.size(); i > 1; --i) std::swap(names[i - 1], names[detail::uniform_index(rng, i)]);
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(names.size())));
  Split s;
  s.train.assign(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.test.assign(names.begin() + static_cast<std::ptrdiff_t>(n_train), names.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace siteguard
