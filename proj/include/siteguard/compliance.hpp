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

// Per-frame compliance analysis: each person is reduced to the bottom-center
// of their box (the ground contact point), projected into the bird's-eye
// plane, and every pair is measured there. Faces are attached to persons to
// report mask wearing.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "siteguard/calibration.hpp"
#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"
#include "siteguard/events.hpp"
#include "siteguard/geometry.hpp"
#include "siteguard/union_find.hpp"

namespace siteguard {

struct ComplianceConfig {
  double threshold_ft = 6.0;
  double face_confidence_floor = 0.5;
  double person_confidence_floor = 0.5;

  void validate() const {
    if (!(threshold_ft > 0.0) || !std::isfinite(threshold_ft)) {
      throw Error(ErrorKind::InvalidArgument, "threshold_ft must be positive");
    }
    if (!(face_confidence_floor >= 0.0 && face_confidence_floor <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "face_confidence_floor must lie in [0,1]");
    }
    if (!(person_confidence_floor >= 0.0 && person_confidence_floor <= 1.0)) {
      throw Error(ErrorKind::InvalidArgument, "person_confidence_floor must lie in [0,1]");
    }
  }
};

inline constexpr double kMinFaceContainment = 0.5;

struct PersonRecord {
  int person_id = 0;
  BoundingBox box;
  double confidence = 0.0;
  ImagePoint anchor;
  PlanePoint plane_pos;
  std::optional<Detection> face;
  MaskStatus mask;
};

struct DistancePair {
  int a = 0;
  int b = 0;
  double distance_ft = 0.0;
  bool violating = false;
};

struct FrameAssessment {
  std::uint64_t frame_index = 0;
  std::vector<PersonRecord> persons;
  std::vector<DistancePair> pairs;
  std::vector<std::vector<int>> risk_groups;
  std::vector<ViolationEvent> events;
  // Persons dropped because their ground point maps beyond the horizon.
  std::size_t excluded_at_horizon = 0;

  bool at_risk(int person_id) const {
    return std::any_of(risk_groups.begin(), risk_groups.end(), [person_id](const auto& g) {
      return std::find(g.begin(), g.end(), person_id) != g.end();
    });
  }
};

inline ImagePoint anchor_point(const BoundingBox& box) { return {(box.xmin + box.xmax) / 2.0, box.ymax}; }

// w' of an image point, signed so that the calibration square lies on the
// positive side. Points at or past the horizon line come out <= 0.
inline double ground_side(const CalibrationProfile& profile, ImagePoint p) {
  const auto& a = profile.homography.matrix();
  auto w = [&a](double u, double v) { return a[2][0] * u + a[2][1] * v + a[2][2]; };
  double cu = 0.0, cv = 0.0;
  for (const auto& c : profile.corners) {
    cu += c.u / 4.0;
    cv += c.v / 4.0;
  }
  return w(cu, cv) < 0.0 ? -w(p.u, p.v) : w(p.u, p.v);
}

inline std::vector<DistancePair> pairwise_distances(const std::vector<PersonRecord>& persons,
                                                    double pixels_per_foot, double threshold_ft = 6.0) {
  std::vector<DistancePair> pairs;
  pairs.reserve(persons.size() * (persons.size() > 0 ? persons.size() - 1 : 0) / 2);
  for (std::size_t i = 0; i < persons.size(); ++i) {
    for (std::size_t j = i + 1; j < persons.size(); ++j) {
      const PersonRecord* p = &persons[i];
      const PersonRecord* q = &persons[j];
      if (q->person_id < p->person_id) std::swap(p, q);
      const double dx = p->plane_pos.x - q->plane_pos.x;
      const double dy = p->plane_pos.y - q->plane_pos.y;
      const double d = std::hypot(dx, dy) / pixels_per_foot;
      pairs.push_back({p->person_id, q->person_id, d, d < threshold_ft});
    }
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const DistancePair& x, const DistancePair& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  return pairs;
}

// Connected components of the graph whose edges are the violating pairs.
// Each group is sorted; groups are ordered by their smallest member.
inline std::vector<std::vector<int>> risk_groups(const std::vector<DistancePair>& pairs,
                                                 const std::vector<PersonRecord>& persons) {
  std::map<int, std::size_t> slot;
  for (const auto& p : persons) slot.emplace(p.person_id, slot.size());
  UnionFind uf(slot.size());
  for (const auto& pr : pairs) {
    if (!pr.violating) continue;
    const auto a = slot.find(pr.a);
    const auto b = slot.find(pr.b);
    if (a == slot.end() || b == slot.end()) continue;
    uf.unite(a->second, b->second);
  }
  std::map<std::size_t, std::vector<int>> by_root;
  for (const auto& [id, s] : slot) {
    if (uf.set_size(s) >= 2) by_root[uf.find(s)].push_back(id);
  }
  std::vector<std::vector<int>> groups;
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    groups.push_back(std::move(members));
  }
  std::sort(groups.begin(), groups.end());
  return groups;
}

inline double containment(const BoundingBox& face, const BoundingBox& person) {
  const double a = face.area();
  return a > 0.0 ? overlap_area(face, person) / a : 0.0;
}

// Result maps person_id to the index (into `faces`) of its face.
//
// Candidate (face, person) edges with containment >= 0.5 are taken greedily in
// order of containment, then face confidence, then person id; an edge is
// accepted when neither end is already assigned.
inline std::map<int, std::size_t> associate_faces(const std::vector<PersonRecord>& persons,
                                                  const std::vector<Detection>& faces) {
  struct Edge {
    double containment;
    double confidence;
    int person_id;
    std::size_t face;
  };
  std::vector<Edge> edges;
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (const auto& p : persons) {
      const double c = containment(faces[f].box, p.box);
      if (c >= kMinFaceContainment) edges.push_back({c, faces[f].confidence, p.person_id, f});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    if (x.containment != y.containment) return x.containment > y.containment;
    if (x.confidence != y.confidence) return x.confidence > y.confidence;
    if (x.person_id != y.person_id) return x.person_id < y.person_id;
    return x.face < y.face;
  });
  std::map<int, std::size_t> assigned;
  std::vector<bool> face_used(faces.size(), false);
  for (const auto& e : edges) {
    if (face_used[e.face] || assigned.count(e.person_id)) continue;
    assigned.emplace(e.person_id, e.face);
    face_used[e.face] = true;
  }
  return assigned;
}

inline MaskStatus mask_status(const std::optional<Detection>& face, const ComplianceConfig& cfg) {
  if (!face || face->confidence < cfg.face_confidence_floor) return MaskStatus::unknown();
  switch (face->label) {
    case ClassLabel::with_mask: return MaskStatus::compliant(face->confidence);
    case ClassLabel::without_mask: return MaskStatus::no_mask(face->confidence);
    case ClassLabel::mask_worn_incorrect: return MaskStatus::incorrect(face->confidence);
    case ClassLabel::person: break;
  }
  return MaskStatus::unknown();
}

// Builds the per-frame events in a fixed order: distance events by (a, b),
// then mask events by person id. Ids and timestamps are left for the event
// log to assign.
inline std::vector<ViolationEvent> frame_events(const FrameAssessment& fa) {
  std::vector<ViolationEvent> out;
  auto box_of = [&](int id) {
    for (const auto& p : fa.persons)
      if (p.person_id == id) return p.box;
    return BoundingBox{};
  };
  for (const auto& pr : fa.pairs) {
    if (!pr.violating) continue;
    ViolationEvent e;
    e.frame_index = fa.frame_index;
    e.kind = ViolationKind::distance;
    e.subjects = {{pr.a, box_of(pr.a)}, {pr.b, box_of(pr.b)}};
    e.distance_ft = pr.distance_ft;
    out.push_back(std::move(e));
  }
  for (const auto& p : fa.persons) {
    if (!p.mask.is_violation()) continue;
    ViolationEvent e;
    e.frame_index = fa.frame_index;
    e.kind = ViolationKind::mask;
    e.subjects = {{p.person_id, p.box}};
    e.mask_detail = p.mask;
    out.push_back(std::move(e));
  }
  return out;
}

inline FrameAssessment assess_frame(const FrameDetections& dets, const CalibrationProfile& profile,
                                    const ComplianceConfig& cfg = {}) {
  cfg.validate();
  FrameAssessment fa;
  fa.frame_index = dets.frame_index;

  std::vector<Detection> faces;
  int next_id = 1;
  for (const auto& d : dets.detections) {
    if (is_face(d.label)) {
      faces.push_back(d);
      continue;
    }
    if (d.confidence < cfg.person_confidence_floor) continue;
    PersonRecord p;
    p.box = d.box;
    p.confidence = d.confidence;
    p.anchor = anchor_point(d.box);
    if (!(ground_side(profile, p.anchor) > geometry::kHorizonThreshold)) {
      ++fa.excluded_at_horizon;
      continue;
    }
    p.plane_pos = transform_point(profile.homography, p.anchor);
    p.person_id = next_id++;
    fa.persons.push_back(p);
  }

  const auto assignment = associate_faces(fa.persons, faces);
  for (auto& p : fa.persons) {
    if (const auto it = assignment.find(p.person_id); it != assignment.end()) p.face = faces[it->second];
    p.mask = mask_status(p.face, cfg);
  }

  fa.pairs = pairwise_distances(fa.persons, profile.pixels_per_foot, cfg.threshold_ft);
  fa.risk_groups = risk_groups(fa.pairs, fa.persons);
  fa.events = frame_events(fa);
  return fa;
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

inline nlohmann::ordered_json to_json(const FrameAssessment& fa) {
  nlohmann::ordered_json j;
  j["frame"] = fa.frame_index;
  j["persons"] = nlohmann::ordered_json::array();
  for (const auto& p : fa.persons) {
    nlohmann::ordered_json jp;
    jp["id"] = p.person_id;
    jp["box"] = box_to_json(p.box);
    jp["conf"] = p.confidence;
    jp["anchor"] = {p.anchor.u, p.anchor.v};
    jp["plane"] = {round3(p.plane_pos.x), round3(p.plane_pos.y)};
    jp["mask"] = to_json(p.mask);
    jp["status"] = fa.at_risk(p.person_id) ? "risk" : "safe";
    j["persons"].push_back(std::move(jp));
  }
  j["pairs"] = nlohmann::ordered_json::array();
  for (const auto& pr : fa.pairs) {
    nlohmann::ordered_json jp;
    jp["a"] = pr.a;
    jp["b"] = pr.b;
    jp["distance_ft"] = round3(pr.distance_ft);
    jp["violating"] = pr.violating;
    j["pairs"].push_back(std::move(jp));
  }
  j["risk_groups"] = fa.risk_groups;
  j["excluded"] = fa.excluded_at_horizon;
  return j;
}

}  // namespace siteguard
