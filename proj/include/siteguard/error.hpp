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

#include <stdexcept>
#include <string>
#include <string_view>

namespace siteguard {

enum class ErrorKind {
  DegenerateConfiguration,
  SingularSystem,
  PointAtHorizon,
  LoadMismatch,
  MalformedXml,
  UnknownLabel,
  InvalidBox,
  MalformedRecord,
  NonMonotonicFrameIndex,
  AdapterTimeout,
  AdapterProtocolError,
  AdapterClosed,
  InsufficientSourceImages,
  NoFrameYet,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::PointAtHorizon: return "PointAtHorizon";
    case ErrorKind::LoadMismatch: return "LoadMismatch";
    case ErrorKind::MalformedXml: return "MalformedXml";
    case ErrorKind::UnknownLabel: return "UnknownLabel";
    case ErrorKind::InvalidBox: return "InvalidBox";
    case ErrorKind::MalformedRecord: return "MalformedRecord";
    case ErrorKind::NonMonotonicFrameIndex: return "NonMonotonicFrameIndex";
    case ErrorKind::AdapterTimeout: return "AdapterTimeout";
    case ErrorKind::AdapterProtocolError: return "AdapterProtocolError";
    case ErrorKind::AdapterClosed: return "AdapterClosed";
    case ErrorKind::InsufficientSourceImages: return "InsufficientSourceImages";
    case ErrorKind::NoFrameYet: return "NoFrameYet";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// Every failure the library reports is an Error tagged with its kind, so
// callers (CLI exit codes, HTTP status mapping) can dispatch without parsing
// message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

  // Validation errors are the caller's fault (bad input); everything else is
  // a runtime failure.
  bool is_validation() const noexcept {
    switch (kind_) {
      case ErrorKind::DegenerateConfiguration:
      case ErrorKind::SingularSystem:
      case ErrorKind::LoadMismatch:
      case ErrorKind::MalformedXml:
      case ErrorKind::UnknownLabel:
      case ErrorKind::InvalidBox:
      case ErrorKind::MalformedRecord:
      case ErrorKind::NonMonotonicFrameIndex:
      case ErrorKind::InsufficientSourceImages:
      case ErrorKind::InvalidArgument:
        return true;
      default:
        return false;
    }
  }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace siteguard
