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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "siteguard/error.hpp"

namespace siteguard {

using Bytes = std::vector<std::uint8_t>;

// A compressed frame as it arrives from a source, before decoding.
struct EncodedFrame {
  std::uint64_t index = 0;
  std::string format = "png";
  Bytes data;
};

inline std::string sniff_format(const Bytes& data) {
  if (data.size() >= 8 && data[0] == 0x89 && data[1] == 'P' && data[2] == 'N' && data[3] == 'G') return "png";
  if (data.size() >= 3 && data[0] == 0xFF && data[1] == 0xD8 && data[2] == 0xFF) return "jpeg";
  return "unknown";
}

// Decodes to 8-bit BGR.
inline cv::Mat decode_image(const Bytes& data) {
  if (data.empty()) throw Error(ErrorKind::InvalidArgument, "empty image buffer");
  cv::Mat img = cv::imdecode(cv::Mat(1, static_cast<int>(data.size()), CV_8UC1,
                                     const_cast<std::uint8_t*>(data.data())),
                             cv::IMREAD_COLOR);
  if (img.empty()) throw Error(ErrorKind::InvalidArgument, "image buffer could not be decoded");
  return img;
}

// Fast PNG (zlib level 1): output must keep up with the frame rate.
inline Bytes encode_png(const cv::Mat& img, int compression = 1) {
  Bytes out;
  if (!cv::imencode(".png", img, out, {cv::IMWRITE_PNG_COMPRESSION, compression})) {
    throw Error(ErrorKind::Io, "PNG encoding failed");
  }
  return out;
}

inline Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const Bytes& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(ErrorKind::Io, "short write to " + path.string());
}

inline cv::Mat load_image(const std::filesystem::path& path) { return decode_image(read_file(path)); }

inline bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace siteguard
