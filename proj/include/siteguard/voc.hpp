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

// Pascal-VOC style annotation files as published with the public face-mask
// datasets: <annotation><filename/><size/><object><name/><bndbox/></object>...

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "siteguard/detection.hpp"
#include "siteguard/error.hpp"

namespace siteguard {

struct VocAnnotation {
  std::string filename;
  int width = 0;
  int height = 0;
  std::vector<GroundTruth> objects;
};

namespace detail {

inline double voc_coordinate(const boost::property_tree::ptree& bndbox, const char* key) {
  const auto text = bndbox.get_optional<std::string>(key);
  if (!text) throw Error(ErrorKind::InvalidBox, std::string("bndbox missing <") + key + ">");
  try {
    std::size_t used = 0;
    const double v = std::stod(*text, &used);
    while (used < text->size() && std::isspace(static_cast<unsigned char>((*text)[used]))) ++used;
    if (used != text->size()) throw std::invalid_argument(*text);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorKind::InvalidBox, std::string("bndbox <") + key + "> is not a number: '" + *text + "'");
  }
}

}  // namespace detail

inline VocAnnotation parse_voc_document(const std::string& xml_text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(xml_text);
    pt::read_xml(in, tree, pt::xml_parser::trim_whitespace);
  } catch (const pt::xml_parser_error& e) {
    throw Error(ErrorKind::MalformedXml, e.what());
  }
  const auto root = tree.get_child_optional("annotation");
  if (!root) throw Error(ErrorKind::MalformedXml, "missing <annotation> root");

  VocAnnotation doc;
  doc.filename = root->get("filename", std::string{});
  doc.width = root->get("size.width", 0);
  doc.height = root->get("size.height", 0);
  for (const auto& [tag, node] : *root) {
    if (tag != "object") continue;
    const std::string name = node.get("name", std::string{});
    const auto label = parse_label(name);
    if (!label || *label == ClassLabel::person) throw Error(ErrorKind::UnknownLabel, name);
    const auto bndbox = node.get_child_optional("bndbox");
    if (!bndbox) throw Error(ErrorKind::InvalidBox, "object '" + name + "' has no <bndbox>");
    const BoundingBox box{detail::voc_coordinate(*bndbox, "xmin"), detail::voc_coordinate(*bndbox, "ymin"),
                          detail::voc_coordinate(*bndbox, "xmax"), detail::voc_coordinate(*bndbox, "ymax")};
    if (!box.valid()) {
      throw Error(ErrorKind::InvalidBox, "object '" + name + "' has an empty or negative box");
    }
    doc.objects.push_back({*label, box, doc.filename});
  }
  return doc;
}

inline std::vector<GroundTruth> parse_voc_annotation(const std::string& xml_text) {
  return parse_voc_document(xml_text).objects;
}

inline VocAnnotation load_voc(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_voc_document(ss.str());
  } catch (const Error& e) {
    throw Error(e.kind(), path.filename().string() + ": " + e.detail());
  }
}

// Coordinates are written as integers (rounded); a box that collapses when
// rounded keeps a 1 px extent.
inline std::string serialize_voc(const VocAnnotation& doc) {
  auto coord = [](double v) { return static_cast<long>(std::lround(v)); };
  std::ostringstream out;
  out << "<annotation>\n";
  out << "    <folder>images</folder>\n";
  out << "    <filename>" << doc.filename << "</filename>\n";
  out << "    <size>\n        <width>" << doc.width << "</width>\n        <height>" << doc.height
      << "</height>\n        <depth>3</depth>\n    </size>\n";
  out << "    <segmented>0</segmented>\n";
  for (const auto& o : doc.objects) {
    long x0 = coord(o.box.xmin), y0 = coord(o.box.ymin), x1 = coord(o.box.xmax), y1 = coord(o.box.ymax);
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    out << "    <object>\n        <name>" << to_string(o.label) << "</name>\n";
    out << "        <pose>Unspecified</pose>\n        <truncated>0</truncated>\n"
           "        <occluded>0</occluded>\n        <difficult>0</difficult>\n";
    out << "        <bndbox>\n            <xmin>" << x0 << "</xmin>\n            <ymin>" << y0
        << "</ymin>\n            <xmax>" << x1 << "</xmax>\n            <ymax>" << y1
        << "</ymax>\n        </bndbox>\n    </object>\n";
  }
  out << "</annotation>\n";
  return out.str();
}

}  // namespace siteguard
