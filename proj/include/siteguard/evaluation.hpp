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

// Scoring detector output against VOC ground truth. A ground truth counts as
// correct when it is matched (IoU >= 0.5, greedy by prediction confidence) to
// a prediction with the same label and confidence of at least 0.8.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"
#include "siteguard/voc.hpp"

namespace siteguard {

struct EvalConfig {
  double confidence_floor = 0.8;
  double iou_threshold = 0.5;

  void validate() const {
    if (!(confidence_floor >= 0.0 && confidence_floor <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "confidence_floor must lie in [0,1]");
    if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "iou_threshold must lie in [0,1]");
  }
};

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = overlap_area(a, b);
  if (inter <= 0.0) return 0.0;
  return inter / (a.area() + b.area() - inter);
}

struct MatchPair {
  std::size_t prediction = 0;
  std::size_t ground_truth = 0;
  double iou = 0.0;
};

struct MatchResult {
  std::vector<MatchPair> pairs;  // sorted by prediction index
  std::vector<std::size_t> unmatched_predictions;
  std::vector<std::size_t> unmatched_ground_truths;
};

// Predictions are visited in descending confidence (index breaks ties); each
// takes the free ground truth with the highest IoU at or above the threshold,
// lower index on ties. Labels play no part here.
inline MatchResult match_detections(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                                    const EvalConfig& cfg = {}) {
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return preds[a].confidence > preds[b].confidence; });
  std::vector<bool> gt_used(gts.size(), false), pred_used(preds.size(), false);
  MatchResult r;
  for (const auto p : order) {
    std::size_t best = gts.size();
    double best_iou = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[g]) continue;
      const double v = iou(preds[p].box, gts[g].box);
      if (v >= cfg.iou_threshold && v > best_iou) {
        best = g;
        best_iou = v;
      }
    }
    if (best == gts.size()) continue;
    gt_used[best] = pred_used[p] = true;
    r.pairs.push_back({p, best, best_iou});
  }
  std::sort(r.pairs.begin(), r.pairs.end(), [](auto& a, auto& b) { return a.prediction < b.prediction; });
  for (std::size_t p = 0; p < preds.size(); ++p)
    if (!pred_used[p]) r.unmatched_predictions.push_back(p);
  for (std::size_t g = 0; g < gts.size(); ++g)
    if (!gt_used[g]) r.unmatched_ground_truths.push_back(g);
  return r;
}

inline std::size_t correct_count(const MatchResult& r, const std::vector<Detection>& preds,
                                 const std::vector<GroundTruth>& gts, const EvalConfig& cfg = {}) {
  std::size_t n = 0;
  for (const auto& m : r.pairs) {
    const auto& p = preds[m.prediction];
    if (p.label == gts[m.ground_truth].label && p.confidence >= cfg.confidence_floor) ++n;
  }
  return n;
}

inline double accuracy(const MatchResult& r, const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts,
                       const EvalConfig& cfg = {}) {
  if (gts.empty()) return 1.0;
  return static_cast<double>(correct_count(r, preds, gts, cfg)) / static_cast<double>(gts.size());
}

// Rows: ground-truth label; columns: label of the matched prediction. Indexed
// by ClassLabel, so the person row and column stay empty for VOC ground truth.
struct ConfusionMatrix {
  std::array<std::array<std::size_t, 4>, 4> cells{};
  std::array<std::size_t, 4> unmatched_ground_truths{};
  std::array<std::size_t, 4> unmatched_predictions{};

  std::size_t& at(ClassLabel gt, ClassLabel pred) {
    return cells[static_cast<std::size_t>(gt)][static_cast<std::size_t>(pred)];
  }
  std::size_t at(ClassLabel gt, ClassLabel pred) const {
    return cells[static_cast<std::size_t>(gt)][static_cast<std::size_t>(pred)];
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) cells[i][j] += o.cells[i][j];
      unmatched_ground_truths[i] += o.unmatched_ground_truths[i];
      unmatched_predictions[i] += o.unmatched_predictions[i];
    }
    return *this;
  }
};

inline ConfusionMatrix confusion_matrix(const MatchResult& r, const std::vector<Detection>& preds,
                                        const std::vector<GroundTruth>& gts) {
  ConfusionMatrix m;
  for (const auto& p : r.pairs) m.at(gts[p.ground_truth].label, preds[p.prediction].label) += 1;
  for (auto g : r.unmatched_ground_truths) ++m.unmatched_ground_truths[static_cast<std::size_t>(gts[g].label)];
  for (auto p : r.unmatched_predictions) ++m.unmatched_predictions[static_cast<std::size_t>(preds[p].label)];
  return m;
}

// Predictions file: one record per image,
//   {"image":"x.png","detections":[{"label":..,"box":[..],"conf":..}, ...]}
using PredictionSet = std::map<std::string, std::vector<Detection>>;

inline PredictionSet load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  PredictionSet out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.filename().string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedRecord, where + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("image") || !j["image"].is_string())
      throw Error(ErrorKind::MalformedRecord, where + ": missing string 'image'");
    auto dets = detections_from_json(j.value("detections", nlohmann::json::array()), where);
    auto& slot = out[j["image"].get<std::string>()];
    if (!slot.empty()) throw Error(ErrorKind::MalformedRecord, where + ": duplicate image " + j["image"].get<std::string>());
    slot = std::move(dets);
  }
  return out;
}

struct EvaluationReport {
  EvalConfig config;
  std::size_t images = 0;
  std::size_t ground_truths = 0;
  std::size_t predictions = 0;
  std::size_t matched = 0;
  std::size_t correct = 0;
  std::array<std::size_t, 4> gt_per_class{};
  std::array<std::size_t, 4> correct_per_class{};
  ConfusionMatrix confusion;

  double accuracy() const {
    return ground_truths == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(ground_truths);
  }

  void add(const std::vector<Detection>& preds, const std::vector<GroundTruth>& gts) {
    const auto r = match_detections(preds, gts, config);
    ++images;
    ground_truths += gts.size();
    predictions += preds.size();
    matched += r.pairs.size();
    correct += correct_count(r, preds, gts, config);
    for (const auto& g : gts) ++gt_per_class[static_cast<std::size_t>(g.label)];
    for (const auto& m : r.pairs) {
      const auto& p = preds[m.prediction];
      const auto& g = gts[m.ground_truth];
      if (p.label == g.label && p.confidence >= config.confidence_floor)
        ++correct_per_class[static_cast<std::size_t>(g.label)];
    }
    confusion += confusion_matrix(r, preds, gts);
  }
};

// Scores every VOC file under `gt_dir`; images without predictions score as
// all-missed. Predictions for images with no annotation file are ignored.
inline EvaluationReport evaluate(const PredictionSet& preds, const std::filesystem::path& gt_dir,
                                 const EvalConfig& cfg = {}) {
  cfg.validate();
  EvaluationReport rep;
  rep.config = cfg;
  std::vector<std::filesystem::path> files;
  for (const auto& sub : {gt_dir, gt_dir / "annotations"}) {
    if (!std::filesystem::is_directory(sub)) continue;
    for (const auto& e : std::filesystem::directory_iterator(sub))
      if (e.path().extension() == ".xml") files.push_back(e.path());
  }
  if (files.empty()) throw Error(ErrorKind::Io, "no VOC annotation files in " + gt_dir.string());
  std::sort(files.begin(), files.end());
  static const std::vector<Detection> none;
  for (const auto& f : files) {
    const auto doc = load_voc(f);
    const std::string key = doc.filename.empty() ? f.stem().string() + ".png" : doc.filename;
    auto it = preds.find(key);
    if (it == preds.end()) it = preds.find(f.stem().string());
    rep.add(it == preds.end() ? none : it->second, doc.objects);
  }
  return rep;
}

inline nlohmann::ordered_json to_json(const EvaluationReport& r) {
  nlohmann::ordered_json j;
  j["confidence_floor"] = r.config.confidence_floor;
  j["iou_threshold"] = r.config.iou_threshold;
  j["images"] = r.images;
  j["ground_truths"] = r.ground_truths;
  j["predictions"] = r.predictions;
  j["matched"] = r.matched;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy();
  nlohmann::ordered_json per_class;
  for (auto l : kFaceLabels) {
    const auto i = static_cast<std::size_t>(l);
    per_class[std::string(to_string(l))] = {
        {"ground_truths", r.gt_per_class[i]},
        {"correct", r.correct_per_class[i]},
        {"accuracy", r.gt_per_class[i] == 0 ? 1.0
                                            : static_cast<double>(r.correct_per_class[i]) /
                                                  static_cast<double>(r.gt_per_class[i])}};
  }
  j["per_class"] = per_class;
  nlohmann::ordered_json cm;
  cm["labels"] = nlohmann::ordered_json::array();
  for (auto l : {ClassLabel::person, ClassLabel::with_mask, ClassLabel::without_mask, ClassLabel::mask_worn_incorrect})
    cm["labels"].push_back(std::string(to_string(l)));
  cm["rows_ground_truth_cols_prediction"] = r.confusion.cells;
  cm["unmatched_ground_truths"] = r.confusion.unmatched_ground_truths;
  cm["unmatched_predictions"] = r.confusion.unmatched_predictions;
  j["confusion"] = cm;
  return j;
}

inline std::string to_text(const EvaluationReport& r) {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "accuracy %.4f  (%zu of %zu ground truths correct; floor %.2f, IoU >= %.2f)\n",
                r.accuracy(), r.correct, r.ground_truths, r.config.confidence_floor, r.config.iou_threshold);
  out << buf;
  std::snprintf(buf, sizeof buf, "%-22s %8s %8s %9s\n", "class", "gt", "correct", "accuracy");
  out << buf;
  for (auto l : kFaceLabels) {
    const auto i = static_cast<std::size_t>(l);
    const double acc = r.gt_per_class[i] == 0 ? 1.0
                                              : static_cast<double>(r.correct_per_class[i]) /
                                                    static_cast<double>(r.gt_per_class[i]);
    std::snprintf(buf, sizeof buf, "%-22s %8zu %8zu %9.4f\n", std::string(to_string(l)).c_str(), r.gt_per_class[i],
                  r.correct_per_class[i], acc);
    out << buf;
  }
  out << "\nconfusion (rows: ground truth, columns: prediction)\n";
  std::snprintf(buf, sizeof buf, "%-22s %10s %10s %10s %10s %10s\n", "", "person", "with_mask", "without", "incorrect",
                "missed");
  out << buf;
  for (auto l : kFaceLabels) {
    const auto i = static_cast<std::size_t>(l);
    const auto& row = r.confusion.cells[i];
    std::snprintf(buf, sizeof buf, "%-22s %10zu %10zu %10zu %10zu %10zu\n", std::string(to_string(l)).c_str(), row[0],
                  row[1], row[2], row[3], r.confusion.unmatched_ground_truths[i]);
    out << buf;
  }
  const auto& up = r.confusion.unmatched_predictions;
  std::snprintf(buf, sizeof buf, "%-22s %10zu %10zu %10zu %10zu\n", "unmatched predictions", up[0], up[1], up[2], up[3]);
  out << buf;
  return out.str();
}

}  // namespace siteguard
