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

// Frame pipeline: acquisition -> inference (N workers) -> assess, render and
// write (one ordered stage). At most `max_in_flight` frames exist between
// acquisition and output at any time; results are put back in acquisition
// order before assessment, so the event log is ordered by frame.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "siteguard/adapter.hpp"
#include "siteguard/calibration.hpp"
#include "siteguard/compliance.hpp"
#include "siteguard/events.hpp"
#include "siteguard/image.hpp"
#include "siteguard/render.hpp"
#include "siteguard/replay.hpp"

namespace siteguard {

// Sources ------------------------------------------------------------------

class FrameSource {
 public:
  virtual ~FrameSource() = default;
  // Next frame, or nothing at end of input.
  virtual std::optional<EncodedFrame> next() = 0;
  virtual double frame_rate_hint() const { return 30.0; }
};

// Numbered images in a directory, ordered by the number in their name (files
// without digits sort after, by name). Frame indices are 0-based positions.
class DirectorySource : public FrameSource {
 public:
  explicit DirectorySource(const std::filesystem::path& dir, double fps = 30.0) : fps_(fps) {
    if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::Io, dir.string() + " is not a directory");
    for (const auto& e : std::filesystem::directory_iterator(dir))
      if (e.is_regular_file() && is_image_file(e.path())) files_.push_back(e.path());
    std::sort(files_.begin(), files_.end(), [](const auto& a, const auto& b) {
      const auto ka = number_in(a.stem().string()), kb = number_in(b.stem().string());
      if (ka != kb) return ka < kb;
      return a.filename() < b.filename();
    });
  }

  std::optional<EncodedFrame> next() override {
    if (pos_ >= files_.size()) return std::nullopt;
    EncodedFrame f;
    f.index = pos_;
    f.data = read_file(files_[pos_]);
    f.format = sniff_format(f.data);
    ++pos_;
    return f;
  }

  double frame_rate_hint() const override { return fps_; }
  std::size_t size() const noexcept { return files_.size(); }
  const std::vector<std::filesystem::path>& files() const noexcept { return files_; }

 private:
  static std::uint64_t number_in(const std::string& s) {
    const auto end = s.find_last_of("0123456789");
    if (end == std::string::npos) return UINT64_MAX;
    auto begin = end;
    while (begin > 0 && std::isdigit(static_cast<unsigned char>(s[begin - 1]))) --begin;
    const auto digits = s.substr(begin, std::min<std::size_t>(end - begin + 1, 18));
    return std::stoull(digits);
  }

  std::vector<std::filesystem::path> files_;
  std::size_t pos_ = 0;
  double fps_;
};

// Length-prefixed frames: 4-byte big-endian length, then that many bytes of
// PNG (or JPEG), repeated until end of input.
class StreamSource : public FrameSource {
 public:
  static constexpr std::uint32_t kMaxFrameBytes = 64u << 20;

  // Does not take ownership of `fd`. `stop`, when set, ends the stream at the
  // next interrupted read.
  explicit StreamSource(int fd, double fps = 30.0, const std::atomic<bool>* stop = nullptr)
      : fd_(fd), fps_(fps), stop_(stop) {}

  std::optional<EncodedFrame> next() override {
    std::uint8_t hdr[4];
    const auto got = read_fully(hdr, 4);
    if (got == 0) return std::nullopt;
    if (got < 4) throw Error(ErrorKind::MalformedRecord, "stream ended inside a frame header");
    const std::uint32_t len = (std::uint32_t{hdr[0]} << 24) | (std::uint32_t{hdr[1]} << 16) |
                              (std::uint32_t{hdr[2]} << 8) | std::uint32_t{hdr[3]};
    if (len == 0 || len > kMaxFrameBytes) {
      throw Error(ErrorKind::MalformedRecord, "frame length " + std::to_string(len) + " out of range");
    }
    EncodedFrame f;
    f.index = next_index_++;
    f.data.resize(len);
    if (read_fully(f.data.data(), len) < len) throw Error(ErrorKind::MalformedRecord, "stream ended inside a frame");
    f.format = sniff_format(f.data);
    return f;
  }

  double frame_rate_hint() const override { return fps_; }

 private:
  std::size_t read_fully(std::uint8_t* buf, std::size_t n) {
    std::size_t off = 0;
    while (off < n) {
      const ssize_t r = ::read(fd_, buf + off, n - off);
      if (r == 0) break;
      if (r < 0) {
        if (errno == EINTR) {
          if (stop_ && stop_->load()) break;
          continue;
        }
        throw Error(ErrorKind::Io, std::string("read: ") + std::strerror(errno));
      }
      off += static_cast<std::size_t>(r);
    }
    return off;
  }

  int fd_;
  double fps_;
  const std::atomic<bool>* stop_;
  std::uint64_t next_index_ = 0;
};

inline void write_stream_frame(std::ostream& out, const Bytes& data) {
  const auto n = static_cast<std::uint32_t>(data.size());
  const char hdr[4] = {static_cast<char>(n >> 24), static_cast<char>(n >> 16), static_cast<char>(n >> 8),
                       static_cast<char>(n)};
  out.write(hdr, 4);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

// A fixed test card repeated `count` times: grey sky, darker ground and a
// grid, so that encoded frames have realistic size.
class SyntheticSource : public FrameSource {
 public:
  SyntheticSource(std::uint64_t count, int width, int height, double fps = 30.0) : count_(count), fps_(fps) {
    cv::Mat img(height, width, CV_8UC3, cv::Scalar(150, 150, 150));
    cv::rectangle(img, cv::Rect(0, height / 2, width, height - height / 2), cv::Scalar(90, 110, 120), cv::FILLED);
    for (int x = 0; x < width; x += 40) cv::line(img, {x, height / 2}, {x, height - 1}, cv::Scalar(70, 90, 100), 1);
    for (int y = height / 2; y < height; y += 30) cv::line(img, {0, y}, {width - 1, y}, cv::Scalar(70, 90, 100), 1);
    png_ = encode_png(img);
  }

  std::optional<EncodedFrame> next() override {
    if (next_ >= count_) return std::nullopt;
    return EncodedFrame{next_++, "png", png_};
  }

  double frame_rate_hint() const override { return fps_; }

 private:
  std::uint64_t count_;
  std::uint64_t next_ = 0;
  double fps_;
  Bytes png_;
};

// Detectors ----------------------------------------------------------------

class Detector {
 public:
  virtual ~Detector() = default;
  virtual FrameDetections detect(const EncodedFrame& frame) = 0;
};

class ReplayDetector : public Detector {
 public:
  explicit ReplayDetector(std::shared_ptr<const ReplaySource> src) : src_(std::move(src)) {}
  FrameDetections detect(const EncodedFrame& frame) override { return src_->detect(frame.index); }

 private:
  std::shared_ptr<const ReplaySource> src_;
};

class AdapterDetector : public Detector {
 public:
  AdapterDetector(AdapterEndpoint endpoint, std::chrono::milliseconds deadline)
      : adapter_(std::move(endpoint), deadline) {}
  FrameDetections detect(const EncodedFrame& frame) override { return adapter_.infer(frame); }

 private:
  InferenceAdapter adapter_;
};

// Called once per inference worker.
using DetectorFactory = std::function<std::unique_ptr<Detector>()>;

inline DetectorFactory replay_detector_factory(std::shared_ptr<const ReplaySource> src) {
  return [src] { return std::make_unique<ReplayDetector>(src); };
}

inline DetectorFactory adapter_detector_factory(AdapterEndpoint endpoint,
                                                std::chrono::milliseconds deadline = std::chrono::milliseconds(1000)) {
  return [endpoint, deadline] { return std::make_unique<AdapterDetector>(endpoint, deadline); };
}

// Metrics ------------------------------------------------------------------

struct StageStats {
  std::uint64_t count = 0;
  double mean_ms = 0.0;
  double median_ms = 0.0;
  double p95_ms = 0.0;
};

// Running mean over every sample; median and p95 over the most recent
// kWindow samples.
class LatencyRecorder {
 public:
  static constexpr std::size_t kWindow = 4096;

  void add(double ms) {
    ++count_;
    sum_ += ms;
    if (window_.size() < kWindow) {
      window_.push_back(ms);
    } else {
      window_[next_] = ms;
      next_ = (next_ + 1) % kWindow;
    }
  }

  StageStats stats() const {
    StageStats s;
    s.count = count_;
    if (count_ == 0) return s;
    s.mean_ms = sum_ / static_cast<double>(count_);
    auto v = window_;
    std::sort(v.begin(), v.end());
    s.median_ms = v.size() % 2 ? v[v.size() / 2] : (v[v.size() / 2 - 1] + v[v.size() / 2]) / 2.0;
    // Nearest-rank percentile.
    const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(v.size())));
    s.p95_ms = v[std::max<std::size_t>(rank, 1) - 1];
    return s;
  }

 private:
  std::uint64_t count_ = 0;
  double sum_ = 0.0;
  std::vector<double> window_;
  std::size_t next_ = 0;
};

inline constexpr std::array<const char*, 5> kStages{"decode", "infer", "assess", "render", "encode"};

struct PipelineMetrics {
  std::uint64_t frames_acquired = 0;
  std::uint64_t frames_processed = 0;
  std::uint64_t frames_dropped = 0;
  std::uint64_t events_emitted = 0;
  double elapsed_s = 0.0;
  double achieved_fps = 0.0;
  double source_fps = 0.0;
  std::size_t max_in_flight = 0;
  std::size_t peak_in_flight = 0;
  std::size_t inference_workers = 0;
  bool interrupted = false;
  bool running = false;
  std::string source_error;
  std::map<std::string, StageStats> stages;
  std::map<std::string, std::uint64_t> drop_reasons;
};

inline nlohmann::ordered_json to_json(const PipelineMetrics& m) {
  nlohmann::ordered_json j;
  j["frames_acquired"] = m.frames_acquired;
  j["frames_processed"] = m.frames_processed;
  j["frames_dropped"] = m.frames_dropped;
  j["events_emitted"] = m.events_emitted;
  j["elapsed_s"] = m.elapsed_s;
  j["achieved_fps"] = m.achieved_fps;
  j["source_fps"] = m.source_fps;
  // Processing kept pace with the source when this is >= 1.
  j["realtime_factor"] = (m.elapsed_s > 0 && m.source_fps > 0)
                             ? (static_cast<double>(m.frames_processed + m.frames_dropped) / m.source_fps) / m.elapsed_s
                             : 0.0;
  j["max_in_flight"] = m.max_in_flight;
  j["peak_in_flight"] = m.peak_in_flight;
  j["inference_workers"] = m.inference_workers;
  j["interrupted"] = m.interrupted;
  j["running"] = m.running;
  if (!m.source_error.empty()) j["source_error"] = m.source_error;
  nlohmann::ordered_json stages;
  for (const char* name : kStages) {
    StageStats s;
    if (const auto it = m.stages.find(name); it != m.stages.end()) s = it->second;
    stages[name] = {{"count", s.count}, {"mean_ms", s.mean_ms}, {"median_ms", s.median_ms}, {"p95_ms", s.p95_ms}};
  }
  j["stages"] = stages;
  j["drop_reasons"] = m.drop_reasons;
  return j;
}

// Pipeline -----------------------------------------------------------------

struct PipelineOptions {
  std::filesystem::path output_dir;  // empty: nothing is written to disk
  bool write_frames = true;
  std::size_t max_in_flight = 4;
  std::size_t inference_workers = 1;
  ComplianceConfig compliance;
  // Wall-time stamp for a frame's events; defaults to the current time.
  std::function<std::string(std::uint64_t frame_index)> wall_clock;
  std::uint64_t first_event_id = 1;
  bool append_events = false;  // keep earlier runs' lines in events.jsonl
};

struct PipelineObserver {
  std::function<void(const EncodedFrame&)> on_acquired;
  std::function<void(const FrameAssessment&, const Bytes& annotated_png)> on_output;
  EventLog::Listener on_event;
};

// Wall clock that advances with the frame index from a fixed start, so
// replays stamp identical times on every run.
inline std::function<std::string(std::uint64_t)> replay_clock(const std::string& start_rfc3339, double fps) {
  const auto start = parse_rfc3339(start_rfc3339);
  return [start, fps](std::uint64_t frame) {
    const auto offset = std::chrono::milliseconds(std::llround(static_cast<double>(frame) * 1000.0 / fps));
    return format_rfc3339(start + offset);
  };
}

inline std::string frame_file_name(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06llu.png", static_cast<unsigned long long>(index));
  return buf;
}

namespace detail {

template <typename T>
class BlockingQueue {
 public:
  void push(T v) {
    {
      std::lock_guard lock(mu_);
      items_.push_back(std::move(v));
    }
    cv_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [this] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T v = std::move(items_.front());
    items_.pop_front();
    return v;
  }

  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool closed_ = false;
};

inline double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

class Pipeline {
 public:
  Pipeline(CalibrationProfile profile, DetectorFactory factory, PipelineOptions options = {},
           PipelineObserver observer = {})
      : profile_(std::move(profile)),
        factory_(std::move(factory)),
        opt_(std::move(options)),
        observer_(std::move(observer)) {
    opt_.compliance.validate();
    if (opt_.max_in_flight == 0) throw Error(ErrorKind::InvalidArgument, "max_in_flight must be at least 1");
    if (opt_.inference_workers == 0) throw Error(ErrorKind::InvalidArgument, "inference_workers must be at least 1");
    if (!factory_) throw Error(ErrorKind::InvalidArgument, "no detector configured");
    if (!opt_.wall_clock) opt_.wall_clock = [](std::uint64_t) { return now_rfc3339(); };
  }

  // Processes the source to its end, or until `stop` is set; frames already
  // acquired are finished either way. Output files are flushed on return.
  PipelineMetrics run(FrameSource& source, const std::atomic<bool>& stop) {
    const auto t_start = std::chrono::steady_clock::now();
    {
      std::lock_guard lock(metrics_mu_);
      metrics_ = PipelineMetrics{};
      metrics_.max_in_flight = opt_.max_in_flight;
      metrics_.inference_workers = opt_.inference_workers;
      metrics_.source_fps = source.frame_rate_hint();
      metrics_.running = true;
      recorders_.clear();
      t_start_ = t_start;
    }

    std::unique_ptr<EventLog> log;
    std::ofstream assessments;
    if (!opt_.output_dir.empty()) {
      std::filesystem::create_directories(opt_.output_dir);
      if (opt_.write_frames) std::filesystem::create_directories(opt_.output_dir / "frames");
      log = std::make_unique<EventLog>(opt_.output_dir / "events.jsonl", opt_.first_event_id, opt_.append_events);
      assessments.open(opt_.output_dir / "assessments.jsonl", opt_.append_events ? std::ios::app : std::ios::trunc);
      if (!assessments) throw Error(ErrorKind::Io, "cannot write assessments.jsonl");
    } else {
      log = std::make_unique<EventLog>();
    }
    if (observer_.on_event) log->set_listener(observer_.on_event);
    write_metrics();

    std::counting_semaphore<> slots(static_cast<std::ptrdiff_t>(opt_.max_in_flight));
    detail::BlockingQueue<Work> work;
    Reorder reorder;
    std::atomic<bool> abort{false};
    std::atomic<std::size_t> in_flight{0};

    std::vector<std::thread> workers;
    for (std::size_t i = 0; i < opt_.inference_workers; ++i)
      workers.emplace_back([&] { inference_worker(work, reorder); });

    std::exception_ptr output_error;
    std::thread output([&] {
      try {
        output_stage(reorder, slots, in_flight, *log, assessments);
      } catch (...) {
        output_error = std::current_exception();
        abort = true;
        drain(reorder, slots, in_flight);
      }
    });

    std::uint64_t seq = 0;
    bool interrupted = false;
    for (;;) {
      if (stop.load() || abort.load()) {
        interrupted = stop.load();
        break;
      }
      slots.acquire();
      std::optional<EncodedFrame> frame;
      try {
        frame = source.next();
      } catch (const Error& e) {
        std::lock_guard lock(metrics_mu_);
        metrics_.source_error = e.what();
      }
      if (!frame) {
        slots.release();
        interrupted = stop.load();
        break;
      }
      if (observer_.on_acquired) observer_.on_acquired(*frame);
      const auto now = ++in_flight;
      {
        std::lock_guard lock(metrics_mu_);
        ++metrics_.frames_acquired;
        metrics_.peak_in_flight = std::max(metrics_.peak_in_flight, now);
      }
      work.push({seq++, std::move(*frame)});
    }
    reorder.set_total(seq);
    work.close();
    for (auto& t : workers) t.join();
    output.join();

    const double elapsed = detail::ms_since(t_start) / 1000.0;
    PipelineMetrics result;
    {
      std::lock_guard lock(metrics_mu_);
      metrics_.running = false;
      metrics_.interrupted = interrupted;
      metrics_.elapsed_s = elapsed;
      metrics_.achieved_fps = elapsed > 0 ? static_cast<double>(metrics_.frames_processed) / elapsed : 0.0;
      for (const auto& [name, rec] : recorders_) metrics_.stages[name] = rec.stats();
      result = metrics_;
    }
    write_metrics();
    if (output_error) std::rethrow_exception(output_error);
    return result;
  }

  // Consistent snapshot, safe to call while run() is in progress.
  PipelineMetrics metrics() const {
    std::lock_guard lock(metrics_mu_);
    PipelineMetrics m = metrics_;
    if (m.running) {
      m.elapsed_s = detail::ms_since(t_start_) / 1000.0;
      m.achieved_fps = m.elapsed_s > 0 ? static_cast<double>(m.frames_processed) / m.elapsed_s : 0.0;
      for (const auto& [name, rec] : recorders_) m.stages[name] = rec.stats();
    }
    return m;
  }

  const CalibrationProfile& profile() const noexcept { return profile_; }

 private:
  struct Work {
    std::uint64_t seq = 0;
    EncodedFrame frame;
  };

  struct Result {
    std::uint64_t seq = 0;
    std::uint64_t frame_index = 0;
    std::optional<std::string> drop_reason;
    FrameDetections detections;
    cv::Mat image;
  };

  // Results keyed by acquisition sequence number, released strictly in order.
  class Reorder {
   public:
    void put(Result r) {
      {
        std::lock_guard lock(mu_);
        pending_.emplace(r.seq, std::move(r));
      }
      cv_.notify_all();
    }

    void set_total(std::uint64_t n) {
      {
        std::lock_guard lock(mu_);
        total_ = n;
      }
      cv_.notify_all();
    }

    // Next result in sequence, or nothing once every acquired frame is out.
    std::optional<Result> take_next() {
      std::unique_lock lock(mu_);
      cv_.wait(lock, [this] { return pending_.count(next_) > 0 || (total_ && next_ >= *total_); });
      const auto it = pending_.find(next_);
      if (it == pending_.end()) return std::nullopt;
      Result r = std::move(it->second);
      pending_.erase(it);
      ++next_;
      return r;
    }

   private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::map<std::uint64_t, Result> pending_;
    std::uint64_t next_ = 0;
    std::optional<std::uint64_t> total_;
  };

  void record(const char* stage, double ms) {
    std::lock_guard lock(metrics_mu_);
    recorders_[stage].add(ms);
  }

  void inference_worker(detail::BlockingQueue<Work>& work, Reorder& reorder) {
    std::unique_ptr<Detector> detector;
    while (auto item = work.pop()) {
      Result r;
      r.seq = item->seq;
      r.frame_index = item->frame.index;
      try {
        if (!detector) detector = factory_();
        const auto t0 = std::chrono::steady_clock::now();
        r.detections = detector->detect(item->frame);
        record("infer", detail::ms_since(t0));
        r.detections.frame_index = item->frame.index;
        const auto t1 = std::chrono::steady_clock::now();
        r.image = decode_image(item->frame.data);
        record("decode", detail::ms_since(t1));
      } catch (const Error& e) {
        r.drop_reason = std::string(to_string(e.kind()));
        // A closed backend cannot recover; start a fresh one for the next frame.
        if (e.kind() == ErrorKind::AdapterClosed) detector.reset();
      } catch (const std::exception& e) {
        r.drop_reason = "Exception";
      }
      reorder.put(std::move(r));
    }
  }

  void output_stage(Reorder& reorder, std::counting_semaphore<>& slots, std::atomic<std::size_t>& in_flight,
                    EventLog& log, std::ofstream& assessments) {
    while (auto r = reorder.take_next()) {
      if (r->drop_reason) {
        {
          std::lock_guard lock(metrics_mu_);
          ++metrics_.frames_dropped;
          ++metrics_.drop_reasons[*r->drop_reason];
        }
        --in_flight;
        slots.release();
        continue;
      }
      auto t0 = std::chrono::steady_clock::now();
      auto fa = assess_frame(r->detections, profile_, opt_.compliance);
      record("assess", detail::ms_since(t0));

      t0 = std::chrono::steady_clock::now();
      const cv::Mat annotated = render::render_overlay(r->image, fa);
      record("render", detail::ms_since(t0));

      t0 = std::chrono::steady_clock::now();
      Bytes png = encode_png(annotated);
      record("encode", detail::ms_since(t0));

      if (!opt_.output_dir.empty() && opt_.write_frames) {
        write_file(opt_.output_dir / "frames" / frame_file_name(r->frame_index), png);
      }
      fa.events = log.append(std::move(fa.events), opt_.wall_clock(r->frame_index));
      if (assessments.is_open()) {
        assessments << to_json(fa).dump() << '\n';
        assessments.flush();
      }
      if (observer_.on_output) observer_.on_output(fa, png);
      {
        std::lock_guard lock(metrics_mu_);
        ++metrics_.frames_processed;
        metrics_.events_emitted += fa.events.size();
      }
      --in_flight;
      slots.release();
    }
  }

  // After an output failure: keep releasing slots so acquisition can finish.
  static void drain(Reorder& reorder, std::counting_semaphore<>& slots, std::atomic<std::size_t>& in_flight) {
    while (reorder.take_next()) {
      --in_flight;
      slots.release();
    }
  }

  void write_metrics() const {
    if (opt_.output_dir.empty()) return;
    const auto tmp = opt_.output_dir / "metrics.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << to_json(metrics()).dump(2) << '\n';
    }
    std::filesystem::rename(tmp, opt_.output_dir / "metrics.json");
  }

  CalibrationProfile profile_;
  DetectorFactory factory_;
  PipelineOptions opt_;
  PipelineObserver observer_;

  mutable std::mutex metrics_mu_;
  PipelineMetrics metrics_;
  std::map<std::string, LatencyRecorder> recorders_;
  std::chrono::steady_clock::time_point t_start_{};
};

// Replay fixture directory: case.json ({"width","height","frames","fps",
// "start_time"}), calibration.json and detections.jsonl. Frames are a
// synthetic test card; only the detections matter.
struct ReplayCase {
  int width = 640;
  int height = 480;
  std::uint64_t frames = 0;
  double fps = 30.0;
  std::string start_time = "1970-01-01T00:00:00.000Z";
  CalibrationProfile profile;
  std::shared_ptr<const ReplaySource> detections;

  static ReplayCase load(const std::filesystem::path& dir) {
    ReplayCase c;
    std::ifstream in(dir / "case.json");
    if (!in) throw Error(ErrorKind::Io, "cannot read " + (dir / "case.json").string());
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
      c.width = j.value("width", 640);
      c.height = j.value("height", 480);
      c.frames = j.at("frames").get<std::uint64_t>();
      c.fps = j.value("fps", 30.0);
      c.start_time = j.value("start_time", c.start_time);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::MalformedRecord, "case.json: " + std::string(e.what()));
    }
    if (c.width <= 0 || c.height <= 0 || !(c.fps > 0)) throw Error(ErrorKind::InvalidArgument, "case.json: bad geometry");
    c.profile = load_calibration(dir / "calibration.json");
    c.detections = std::make_shared<const ReplaySource>(ReplaySource::load(dir / "detections.jsonl"));
    return c;
  }
};

inline PipelineMetrics run_replay_case(const std::filesystem::path& case_dir, const std::filesystem::path& out_dir,
                                       std::size_t workers = 1, PipelineObserver observer = {}) {
  const auto c = ReplayCase::load(case_dir);
  PipelineOptions opt;
  opt.output_dir = out_dir;
  opt.inference_workers = workers;
  opt.wall_clock = replay_clock(c.start_time, c.fps);
  Pipeline p(c.profile, replay_detector_factory(c.detections), opt, std::move(observer));
  SyntheticSource src(c.frames, c.width, c.height, c.fps);
  const std::atomic<bool> never{false};
  return p.run(src, never);
}

}  // namespace siteguard
