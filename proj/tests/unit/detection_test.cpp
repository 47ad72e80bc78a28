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


#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "siteguard/adapter.hpp"
#include "siteguard/detection.hpp"
#include "siteguard/replay.hpp"
#include "siteguard/voc.hpp"

namespace sg = siteguard;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

const fs::path kFixtures{SITEGUARD_FIXTURES};
const std::string kMock{SITEGUARD_MOCK_BACKEND};

sg::ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const sg::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return sg::ErrorKind::Io;
}

std::string voc_with(const std::string& objects) {
  return "<annotation><filename>a.png</filename><size><width>200</width><height>200</height></size>" + objects +
         "</annotation>";
}

std::string voc_object(const std::string& name, const std::string& x0, const std::string& y0,
                       const std::string& x1, const std::string& y1) {
  return "<object><name>" + name + "</name><bndbox><xmin>" + x0 + "</xmin><ymin>" + y0 + "</ymin><xmax>" + x1 +
         "</xmax><ymax>" + y1 + "</ymax></bndbox></object>";
}

sg::Detection det(sg::ClassLabel l, double conf, double x0 = 0, double y0 = 0, double x1 = 10, double y1 = 10) {
  return {l, sg::make_box(x0, y0, x1, y1), conf};
}

sg::ReplaySource replay_from(const std::string& text) {
  std::istringstream in(text);
  return sg::ReplaySource::parse(in, "inline");
}

}  // namespace

TEST(BoundingBox, RejectsInvalidCoordinates) {
  EXPECT_EQ(kind_of([] { sg::make_box(10, 0, 10, 5); }), sg::ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { sg::make_box(0, 5, 4, 2); }), sg::ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { sg::make_box(-1, 0, 4, 2); }), sg::ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { sg::make_box(0, 0, std::nan(""), 2); }), sg::ErrorKind::InvalidBox);
  EXPECT_DOUBLE_EQ(sg::make_box(1, 2, 4, 6).area(), 12.0);
}

TEST(ClassLabel, ClosedSetWithSpellingVariant) {
  EXPECT_EQ(sg::parse_label("with_mask"), sg::ClassLabel::with_mask);
  EXPECT_EQ(sg::parse_label("without_mask"), sg::ClassLabel::without_mask);
  EXPECT_EQ(sg::parse_label("mask_worn_incorrect"), sg::ClassLabel::mask_worn_incorrect);
  EXPECT_EQ(sg::parse_label("mask_weared_incorrect"), sg::ClassLabel::mask_worn_incorrect);
  EXPECT_EQ(sg::parse_label("person"), sg::ClassLabel::person);
  EXPECT_FALSE(sg::parse_label("hat"));
  EXPECT_FALSE(sg::parse_label("With_Mask"));
}

TEST(Voc, SingleObjectFixture) {
  const auto gts = sg::parse_voc_annotation(voc_with(voc_object("with_mask", "79", "105", "109", "142")));
  ASSERT_EQ(gts.size(), 1u);
  EXPECT_EQ(gts[0].label, sg::ClassLabel::with_mask);
  EXPECT_EQ(gts[0].box, sg::make_box(79, 105, 109, 142));
  EXPECT_EQ(gts[0].source_image, "a.png");
}

TEST(Voc, ZeroObjectsGivesEmptyList) { EXPECT_TRUE(sg::parse_voc_annotation(voc_with("")).empty()); }

TEST(Voc, UnknownLabelCarriesName) {
  try {
    sg::parse_voc_annotation(voc_with(voc_object("hat", "1", "1", "5", "5")));
    FAIL() << "expected UnknownLabel";
  } catch (const sg::Error& e) {
    EXPECT_EQ(e.kind(), sg::ErrorKind::UnknownLabel);
    EXPECT_EQ(e.detail(), "hat");
    EXPECT_TRUE(e.is_validation());
  }
}

TEST(Voc, PersonIsNotAGroundTruthClass) {
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation(voc_with(voc_object("person", "1", "1", "5", "5"))); }),
            sg::ErrorKind::UnknownLabel);
}

TEST(Voc, MalformedAndInvalid) {
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation("<annotation><object>"); }), sg::ErrorKind::MalformedXml);
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation("<other/>"); }), sg::ErrorKind::MalformedXml);
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation(voc_with(voc_object("with_mask", "30", "1", "20", "5"))); }),
            sg::ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation(voc_with(voc_object("with_mask", "3", "5", "20", "5"))); }),
            sg::ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation(voc_with(voc_object("with_mask", "a", "1", "20", "5"))); }),
            sg::ErrorKind::InvalidBox);
  EXPECT_EQ(kind_of([] { sg::parse_voc_annotation(voc_with("<object><name>with_mask</name></object>")); }),
            sg::ErrorKind::InvalidBox);
}

TEST(Voc, RoundTripOverFixtureFiles) {
  int files = 0;
  for (const auto& entry : fs::directory_iterator(kFixtures / "voc" / "annotations")) {
    const auto doc = sg::load_voc(entry.path());
    const auto again = sg::parse_voc_document(sg::serialize_voc(doc));
    EXPECT_EQ(again.filename, doc.filename);
    EXPECT_EQ(again.width, doc.width);
    EXPECT_EQ(again.height, doc.height);
    ASSERT_EQ(again.objects.size(), doc.objects.size()) << entry.path();
    for (std::size_t i = 0; i < doc.objects.size(); ++i) {
      EXPECT_EQ(again.objects[i].label, doc.objects[i].label);
      EXPECT_EQ(again.objects[i].box, doc.objects[i].box);
    }
    ++files;
  }
  EXPECT_EQ(files, 20);
}

TEST(Voc, SerializeNormalizesSpelling) {
  const auto doc = sg::load_voc(kFixtures / "voc" / "annotations" / "maksssksksss6.xml");
  const auto xml = sg::serialize_voc(doc);
  EXPECT_EQ(xml.find("mask_weared_incorrect"), std::string::npos);
  EXPECT_NE(xml.find("mask_worn_incorrect"), std::string::npos);
}

TEST(FilterByConfidence, Examples) {
  using L = sg::ClassLabel;
  const auto f = sg::FrameDetections::make(0, {det(L::person, 0.9), det(L::person, 0.4, 20, 0, 30, 10)});
  const auto kept = sg::filter_by_confidence(f, 0.5);
  ASSERT_EQ(kept.detections.size(), 1u);
  EXPECT_EQ(kept.detections[0].confidence, 0.9);

  EXPECT_EQ(sg::filter_by_confidence(f, 0.0).detections, f.detections);

  const auto g = sg::FrameDetections::make(3, {det(L::with_mask, 0.99), det(L::with_mask, 1.0, 5, 5, 9, 9)});
  const auto top = sg::filter_by_confidence(g, 1.0);
  ASSERT_EQ(top.detections.size(), 1u);
  EXPECT_EQ(top.detections[0].confidence, 1.0);
  EXPECT_EQ(top.frame_index, 3u);
}

TEST(FilterByConfidence, PreservesOrderProperty) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<sg::Detection> dets;
    for (int i = 0; i < 12; ++i) {
      const double x = 100 * u(rng);
      dets.push_back(det(sg::ClassLabel::person, std::round(u(rng) * 20) / 20, x, 0, x + 5, 5));
    }
    const auto f = sg::FrameDetections::make(1, dets);
    const double tau = u(rng);
    const auto kept = sg::filter_by_confidence(f, tau);
    std::vector<sg::Detection> expected;
    for (const auto& d : f.detections)
      if (d.confidence >= tau) expected.push_back(d);
    EXPECT_EQ(kept.detections, expected);
  }
}

TEST(FrameDetections, OrderIsConfidenceThenXmin) {
  using L = sg::ClassLabel;
  const auto f = sg::FrameDetections::make(
      0, {det(L::person, 0.5, 30, 0, 40, 5), det(L::person, 0.9, 50, 0, 60, 5), det(L::person, 0.5, 10, 0, 20, 5)});
  ASSERT_EQ(f.detections.size(), 3u);
  EXPECT_EQ(f.detections[0].box.xmin, 50);
  EXPECT_EQ(f.detections[1].box.xmin, 10);
  EXPECT_EQ(f.detections[2].box.xmin, 30);
}

TEST(Replay, CaseOneFrameZero) {
  const auto src = sg::ReplaySource::load(kFixtures / "replay" / "case1" / "detections.jsonl");
  const auto f = src.detect(0);
  int persons = 0;
  int no_mask_99 = 0;
  int mask_97 = 0;
  for (const auto& d : f.detections) {
    if (d.label == sg::ClassLabel::person) ++persons;
    if (d.label == sg::ClassLabel::without_mask && d.confidence == 0.99) ++no_mask_99;
    if (d.label == sg::ClassLabel::with_mask && d.confidence == 0.97) ++mask_97;
  }
  EXPECT_GE(persons, 2);
  EXPECT_EQ(no_mask_99, 1);
  EXPECT_EQ(mask_97, 1);
}

TEST(Replay, AbsentFrameIsEmpty) {
  const auto src = sg::ReplaySource::load(kFixtures / "replay" / "case1" / "detections.jsonl");
  const auto f = src.detect(2);
  EXPECT_EQ(f.frame_index, 2u);
  EXPECT_TRUE(f.detections.empty());
  EXPECT_TRUE(src.detect(999).detections.empty());
}

TEST(Replay, ConfidenceOutOfRangeIsMalformed) {
  EXPECT_EQ(kind_of([] {
              replay_from(R"({"frame":0,"detections":[{"label":"person","box":[0,0,5,5],"conf":1.3}]})");
            }),
            sg::ErrorKind::MalformedRecord);
}

TEST(Replay, MalformedRecordsNameTheLine) {
  try {
    replay_from("{\"frame\":0,\"detections\":[]}\n\n{\"frame\":1,\"detections\":[{\"label\":\"cat\"}]}\n");
    FAIL();
  } catch (const sg::Error& e) {
    EXPECT_EQ(e.kind(), sg::ErrorKind::MalformedRecord);
    EXPECT_NE(e.detail().find("inline:3"), std::string::npos) << e.detail();
  }
  EXPECT_EQ(kind_of([] { replay_from("not json\n"); }), sg::ErrorKind::MalformedRecord);
  EXPECT_EQ(kind_of([] { replay_from(R"({"frame":-1,"detections":[]})"); }), sg::ErrorKind::MalformedRecord);
  EXPECT_EQ(kind_of([] {
              replay_from(R"({"frame":0,"detections":[{"label":"person","box":[5,0,1,5],"conf":0.5}]})");
            }),
            sg::ErrorKind::MalformedRecord);
}

TEST(Replay, NonMonotonicFrames) {
  EXPECT_EQ(kind_of([] { replay_from("{\"frame\":3,\"detections\":[]}\n{\"frame\":3,\"detections\":[]}\n"); }),
            sg::ErrorKind::NonMonotonicFrameIndex);
  EXPECT_EQ(kind_of([] { replay_from("{\"frame\":3,\"detections\":[]}\n{\"frame\":1,\"detections\":[]}\n"); }),
            sg::ErrorKind::NonMonotonicFrameIndex);
}

TEST(Replay, DeterministicAcrossLoads) {
  const auto path = kFixtures / "replay" / "case3" / "detections.jsonl";
  const auto a = sg::ReplaySource::load(path);
  const auto b = sg::ReplaySource::load(path);
  std::string sa, sb;
  for (std::uint64_t i = 0; i < 4; ++i) {
    sa += sg::to_json(a.detect(i)).dump() + "\n";
    sb += sg::to_json(b.detect(i)).dump() + "\n";
  }
  EXPECT_EQ(sa, sb);
}

TEST(Base64, RoundTripProperty) {
  std::mt19937 rng(11);
  for (std::size_t n = 0; n < 70; ++n) {
    sg::Bytes data(n);
    for (auto& b : data) b = static_cast<std::uint8_t>(rng());
    const auto text = sg::base64_encode(data);
    EXPECT_EQ(text.size() % 4, 0u);
    EXPECT_EQ(sg::base64_decode(text), data) << "length " << n;
  }
  EXPECT_EQ(sg::base64_encode({'f', 'o', 'o', 'b'}), "Zm9vYg==");
  EXPECT_EQ(kind_of([] { sg::base64_decode("Zm9v!"); }), sg::ErrorKind::AdapterProtocolError);
}

TEST(Adapter, EchoesReplayDetectionsUnchanged) {
  const auto replay = kFixtures / "replay" / "case1" / "detections.jsonl";
  sg::InferenceAdapter adapter(sg::AdapterEndpoint::process(kMock + " --replay " + replay.string()));
  EXPECT_EQ(adapter.labels().size(), 4u);
  const auto src = sg::ReplaySource::load(replay);
  for (std::uint64_t i = 0; i < 3; ++i) {
    const auto got = adapter.infer({i, "png", {0x89, 'P', 'N', 'G'}});
    EXPECT_EQ(got.frame_index, i);
    EXPECT_EQ(got.detections, src.detect(i).detections);
  }
}

TEST(Adapter, SilentBackendTimesOut) {
  sg::InferenceAdapter adapter(sg::AdapterEndpoint::process(kMock + " --silent-after 1"), 200ms);
  EXPECT_NO_THROW(adapter.infer({0, "png", {1, 2, 3}}));
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(kind_of([&] { adapter.infer({1, "png", {1, 2, 3}}); }), sg::ErrorKind::AdapterTimeout);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 2s);
}

TEST(Adapter, LateReplyToTimedOutFrameIsDiscarded) {
  const auto replay = kFixtures / "replay" / "case4" / "detections.jsonl";
  sg::InferenceAdapter adapter(
      sg::AdapterEndpoint::process(kMock + " --delay-ms 300 --slow-at 0 --replay " + replay.string()), 150ms);
  EXPECT_EQ(kind_of([&] { adapter.infer({0, "png", {1}}); }), sg::ErrorKind::AdapterTimeout);
  std::this_thread::sleep_for(250ms);
  // The reply for frame 0 is now queued ahead of frame 1's and must be skipped.
  const auto got = adapter.infer({1, "png", {1}});
  EXPECT_EQ(got.frame_index, 1u);
  EXPECT_EQ(got.detections, sg::ReplaySource::load(replay).detect(1).detections);
}

TEST(Adapter, MalformedReplyIsProtocolError) {
  sg::InferenceAdapter adapter(sg::AdapterEndpoint::process(kMock + " --malformed-at 0"));
  EXPECT_EQ(kind_of([&] { adapter.infer({0, "png", {1}}); }), sg::ErrorKind::AdapterProtocolError);
}

TEST(Adapter, MismatchedIdIsProtocolError) {
  sg::InferenceAdapter adapter(sg::AdapterEndpoint::process(kMock + " --wrong-id-at 1"));
  EXPECT_NO_THROW(adapter.infer({0, "png", {1}}));
  EXPECT_EQ(kind_of([&] { adapter.infer({1, "png", {1}}); }), sg::ErrorKind::AdapterProtocolError);
}

TEST(Adapter, VersionMismatchAbortsHandshake) {
  EXPECT_EQ(kind_of([] { sg::InferenceAdapter a(sg::AdapterEndpoint::process(kMock + " --version 2")); }),
            sg::ErrorKind::AdapterProtocolError);
}

TEST(Adapter, BackendExitIsClosed) {
  EXPECT_EQ(kind_of([] { sg::InferenceAdapter a(sg::AdapterEndpoint::process("exit 0")); }),
            sg::ErrorKind::AdapterClosed);
}

TEST(Adapter, SpeaksOverTcp) {
  // Pick a free port, then let the backend bind it.
  int port = 0;
  {
    const int s = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    ASSERT_EQ(::bind(s, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
    socklen_t len = sizeof(addr);
    ::getsockname(s, reinterpret_cast<sockaddr*>(&addr), &len);
    port = ntohs(addr.sin_port);
    ::close(s);
  }
  const auto replay = kFixtures / "replay" / "case2" / "detections.jsonl";
  const auto cmd = kMock + " --listen " + std::to_string(port) + " --replay " + replay.string();
  const pid_t pid = ::fork();
  ASSERT_GE(pid, 0);
  if (pid == 0) {
    ::execl("/bin/sh", "sh", "-c", ("exec " + cmd + " 2>/dev/null").c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  std::optional<sg::InferenceAdapter> adapter;
  for (int attempt = 0; attempt < 50 && !adapter; ++attempt) {
    try {
      adapter.emplace(sg::AdapterEndpoint::tcp("127.0.0.1", port));
    } catch (const sg::Error&) {
      std::this_thread::sleep_for(50ms);
    }
  }
  ASSERT_TRUE(adapter.has_value());
  const auto got = adapter->infer({1, "png", {1, 2}});
  EXPECT_EQ(got.detections, sg::ReplaySource::load(replay).detect(1).detections);
  adapter->shutdown();
  int status = 0;
  ::waitpid(pid, &status, 0);
}
