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


// siteguard command-line entry point. Exit codes: 0 success, 2 validation
// error (bad input, bad usage), 1 runtime failure.

#include <pthread.h>
#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "siteguard/calibration.hpp"
#include "siteguard/config.hpp"
#include "siteguard/dataset.hpp"
#include "siteguard/evaluation.hpp"
#include "siteguard/pipeline.hpp"
#include "siteguard/service.hpp"

namespace sg = siteguard;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitValidation = 2;

bool g_json = false;

void emit(const ojson& j, const std::string& text) {
  if (g_json) {
    std::cout << j.dump() << '\n';
  } else {
    std::cout << text;
  }
}

int fail(int code, std::string_view kind, const std::string& detail) {
  if (g_json) {
    ojson j;
    j["error"] = std::string(kind);
    j["detail"] = detail;
    j["exit_code"] = code;
    std::cout << j.dump() << '\n';
  } else {
    std::cerr << "siteguard: " << kind << ": " << detail << '\n';
  }
  return code;
}

// Corners from a points file: either a JSON object with "corners" (and
// optionally edge_length_ft / pixels_per_foot) or four "u v" lines, in
// BL, BR, TR, TL order.
nlohmann::json read_points(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw sg::Error(sg::ErrorKind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{' || text[first] == '[')) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw sg::Error(sg::ErrorKind::InvalidArgument, path.string() + ": " + e.what());
    }
    return j.is_array() ? nlohmann::json{{"corners", j}} : j;
  }
  nlohmann::json corners = nlohmann::json::array();
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream row(line);
    double u = 0, v = 0;
    if (!(row >> u >> v)) throw sg::Error(sg::ErrorKind::InvalidArgument, "bad point line: " + line);
    corners.push_back({u, v});
  }
  return {{"corners", corners}};
}

struct CalibrateArgs {
  std::string points;
  std::optional<double> edge_ft;
  std::optional<double> ppf;
  std::string out = "calibration.json";
};

int cmd_calibrate(const CalibrateArgs& a) {
  auto j = read_points(a.points);
  if (a.edge_ft) j["edge_length_ft"] = *a.edge_ft;
  if (a.ppf) j["pixels_per_foot"] = *a.ppf;
  j.erase("homography");
  j.erase("created_at");
  const auto profile = sg::calibration_from_json(j);
  sg::save_calibration(profile, a.out);
  // Reload proves the stored matrix reproduces from its corners.
  const auto back = sg::load_calibration(a.out);
  std::ostringstream text;
  text << "wrote " << a.out << "\nhomography:\n";
  for (const auto& row : back.homography.matrix()) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "  % .10e % .10e % .10e\n", row[0], row[1], row[2]);
    text << buf;
  }
  emit(sg::to_json(back), text.str());
  return kExitOk;
}

struct ServeArgs {
  std::string config = "siteguard.json";
  std::string source;
  std::string detector;
  std::string calibration;
  std::string output;
  std::string static_dir;
  std::string host = "0.0.0.0";
  int port = 8080;
  double heartbeat_s = 15.0;
  bool autorun = false;
};

int cmd_serve(const ServeArgs& a) {
  const fs::path cfg_path = sg::config_path(a.config);
  nlohmann::json cfg = nlohmann::json::object();
  fs::path base = fs::current_path();
  if (fs::exists(cfg_path)) {
    std::ifstream in(cfg_path);
    try {
      cfg = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw sg::Error(sg::ErrorKind::InvalidArgument, cfg_path.string() + ": " + e.what());
    }
    base = fs::absolute(cfg_path).parent_path();
  } else if (std::getenv(sg::kConfigEnvVar)) {
    throw sg::Error(sg::ErrorKind::Io, "config " + cfg_path.string() + " not found");
  }
  // Flags override the file. --source is a frame directory, "-" for stdin,
  // or a replay fixture directory (one holding case.json).
  if (!a.source.empty()) {
    const fs::path s = fs::absolute(a.source);
    if (a.source == "-") cfg["source"] = {{"kind", "stream"}};
    else if (fs::exists(s / "case.json")) cfg["source"] = {{"kind", "replay_case"}, {"path", s.string()}};
    else cfg["source"] = {{"kind", "directory"}, {"path", s.string()}};
  }
  if (!a.detector.empty()) {
    if (a.detector.rfind("replay:", 0) == 0)
      cfg["detector"] = {{"kind", "replay"}, {"path", fs::absolute(a.detector.substr(7)).string()}};
    else if (a.detector.rfind("tcp:", 0) == 0)
      cfg["detector"] = {{"kind", "tcp"}, {"port", std::stoi(a.detector.substr(a.detector.rfind(':') + 1))},
                         {"host", a.detector.substr(4, a.detector.rfind(':') - 4)}};
    else
      cfg["detector"] = {{"kind", "process"}, {"command", a.detector}};
  }
  if (!a.calibration.empty()) cfg["calibration"] = fs::absolute(a.calibration).string();
  if (!a.output.empty()) cfg["output_dir"] = fs::absolute(a.output).string();

  sg::ServiceOptions opt;
  opt.engine = sg::config_from_json(cfg, base);
  opt.host = a.host;
  opt.port = a.port;
  opt.heartbeat = std::chrono::milliseconds(static_cast<long>(a.heartbeat_s * 1000));
  opt.static_dir = a.static_dir;
  // SIGINT/SIGTERM are taken by a dedicated thread; every other thread
  // inherits the blocked mask.
  sigset_t sigs;
  sigemptyset(&sigs);
  sigaddset(&sigs, SIGINT);
  sigaddset(&sigs, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &sigs, nullptr);
  sg::Service svc(opt);
  std::atomic<bool> signalled{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&sigs, &sig);
    signalled = true;
    svc.shutdown();
  });
  if (a.autorun) svc.start_run();
  std::cerr << "siteguard serving on " << a.host << ":" << a.port << " (phase " << sg::to_string(svc.phase())
            << ")\n";
  const bool ok = svc.listen();
  const bool by_signal = signalled;
  if (!by_signal) ::kill(::getpid(), SIGTERM);  // release the waiter
  waiter.join();
  if (!ok && !by_signal) return fail(kExitRuntime, "Io", "cannot listen on " + a.host + ":" + std::to_string(a.port));
  return kExitOk;
}

struct ReplayArgs {
  std::string fixtures;
  std::string out = "replay-out";
  std::size_t workers = 1;
  bool check = false;
};

int cmd_replay(const ReplayArgs& a) {
  std::vector<fs::path> cases;
  if (fs::exists(fs::path(a.fixtures) / "case.json")) {
    cases.push_back(a.fixtures);
  } else {
    if (!fs::is_directory(a.fixtures)) throw sg::Error(sg::ErrorKind::Io, a.fixtures + " is not a directory");
    for (const auto& e : fs::directory_iterator(a.fixtures))
      if (fs::exists(e.path() / "case.json")) cases.push_back(e.path());
    std::sort(cases.begin(), cases.end());
  }
  if (cases.empty()) throw sg::Error(sg::ErrorKind::InvalidArgument, "no replay cases under " + a.fixtures);
  ojson report = ojson::array();
  std::ostringstream text;
  bool all_match = true;
  for (const auto& dir : cases) {
    const auto out = fs::path(a.out) / dir.filename();
    const auto m = sg::run_replay_case(dir, out, a.workers);
    ojson r;
    r["case"] = dir.filename().string();
    r["output"] = out.string();
    r["frames_processed"] = m.frames_processed;
    r["events"] = m.events_emitted;
    std::ifstream log(out / "events.jsonl");
    std::size_t distance = 0, mask = 0;
    for (std::string line; std::getline(log, line);) (nlohmann::json::parse(line)["kind"] == "distance" ? distance : mask)++;
    r["distance_events"] = distance;
    r["mask_events"] = mask;
    text << dir.filename().string() << ": " << m.frames_processed << " frames, " << distance << " distance, " << mask
         << " mask events";
    const auto golden = dir / "expected_events.jsonl";
    if (a.check && fs::exists(golden)) {
      const bool same = sg::read_file(golden) == sg::read_file(out / "events.jsonl");
      r["matches_golden"] = same;
      all_match = all_match && same;
      text << (same ? "  [golden ok]" : "  [golden MISMATCH]");
    }
    text << '\n';
    report.push_back(r);
  }
  emit(report, text.str());
  return all_match ? kExitOk : kExitRuntime;
}

struct AugmentArgs {
  std::string in;
  std::string out;
  std::size_t target = 0;
  std::uint64_t seed = 0;
  bool dry_run = false;
};

int cmd_augment(const AugmentArgs& a) {
  const fs::path out = a.out.empty() ? fs::path(a.in + "-balanced") : fs::path(a.out);
  std::size_t clipped = 0;
  const auto ds = a.dry_run ? sg::load_annotations(a.in) : sg::load_dataset(a.in, &clipped);
  if (ds.empty()) throw sg::Error(sg::ErrorKind::InvalidArgument, "no annotations found under " + a.in);
  const auto before = sg::class_counts(ds);
  const auto plan = sg::balance_plan(before, a.target);
  ojson j;
  j["images"] = ds.size();
  j["before"] = sg::counts_to_json(before);
  j["plan"] = sg::to_json(plan);
  std::size_t planned_total = 0;
  for (std::size_t i = 0; i < before.size(); ++i) planned_total += before[i] + plan.needed[i];
  j["planned_total"] = planned_total;
  std::ostringstream text;
  auto row = [&text](const char* name, const sg::ClassCounts& c) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-10s %10zu %14zu %21zu %8zu\n", name, c[0], c[1], c[2], c[0] + c[1] + c[2]);
    text << buf;
  };
  text << "           with_mask  without_mask  mask_worn_incorrect    total\n";
  row("before", before);
  row("needed", plan.needed);
  sg::ClassCounts planned{};
  for (std::size_t i = 0; i < planned.size(); ++i) planned[i] = before[i] + plan.needed[i];
  row("planned", planned);
  if (!a.dry_run) {
    const auto res = sg::run_balancing(ds, plan, a.seed);
    fs::create_directories(out);
    for (const auto& img : ds) sg::save_annotated(out, img);
    for (const auto& img : res.generated) sg::save_annotated(out, img);
    std::ofstream(out / "manifest.jsonl") << sg::manifest_jsonl(res);
    std::size_t dropped = 0;
    for (const auto& m : res.manifest) dropped += m.dropped;
    j["generated_images"] = res.generated.size();
    j["after"] = sg::counts_to_json(res.counts);
    j["dropped_boxes"] = dropped;
    j["clipped_on_load"] = clipped;
    j["output"] = out.string();
    row("after", res.counts);
    text << res.generated.size() << " images generated into " << out.string() << '\n';
    std::ofstream(out / "report.json") << j.dump(2) << '\n';
  }
  emit(j, text.str());
  return kExitOk;
}

struct EvalArgs {
  std::string preds;
  std::string gt;
  double floor = 0.8;
  double iou = 0.5;
};

int cmd_eval(const EvalArgs& a) {
  sg::EvalConfig cfg;
  cfg.confidence_floor = a.floor;
  cfg.iou_threshold = a.iou;
  const auto report = sg::evaluate(sg::load_predictions(a.preds), a.gt, cfg);
  emit(sg::to_json(report), sg::to_text(report));
  return kExitOk;
}

struct SplitArgs {
  std::string in;
  double ratio = 0.8;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_split(const SplitArgs& a) {
  std::vector<std::string> names;
  for (const auto& xml : sg::list_annotations(a.in)) names.push_back(xml.stem().string());
  if (names.empty()) throw sg::Error(sg::ErrorKind::InvalidArgument, "no annotations found under " + a.in);
  const auto s = sg::split_files(names, a.ratio, a.seed);
  ojson j;
  j["ratio"] = a.ratio;
  j["seed"] = a.seed;
  j["train"] = s.train;
  j["test"] = s.test;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream train(fs::path(a.out) / "train.txt"), test(fs::path(a.out) / "test.txt");
    for (const auto& n : s.train) train << n << '\n';
    for (const auto& n : s.test) test << n << '\n';
  }
  std::ostringstream text;
  text << "train " << s.train.size() << ", test " << s.test.size() << '\n';
  emit(j, text.str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"siteguard: worksite mask and distancing compliance engine"};
  app.require_subcommand(1);
  app.add_flag("--json", g_json, "machine-readable output (results and errors)");

  CalibrateArgs cal;
  auto* c_cal = app.add_subcommand("calibrate", "derive and store a calibration from 4 clicked corners");
  c_cal->add_option("--points", cal.points, "points file: JSON {\"corners\": [[u,v],...]} or 4 lines 'u v' (BL BR TR TL)")
      ->required();
  c_cal->add_option("--edge-ft", cal.edge_ft, "edge length of the ground square in feet (default 6)");
  c_cal->add_option("--ppf", cal.ppf, "bird's-eye pixels per foot (default 100)");
  c_cal->add_option("--out", cal.out, "calibration file to write")->capture_default_str();

  ServeArgs srv;
  auto* c_srv = app.add_subcommand("serve", "run the HTTP service");
  c_srv->add_option("--config", srv.config, "JSON config (SITEGUARD_CONFIG overrides)")->capture_default_str();
  c_srv->add_option("--source", srv.source, "frame directory, '-' for a framed stream on stdin, or a replay case");
  c_srv->add_option("--detector", srv.detector, "backend command line, 'tcp:HOST:PORT' or 'replay:FILE'");
  c_srv->add_option("--calibration", srv.calibration, "calibration file");
  c_srv->add_option("--output", srv.output, "output directory");
  c_srv->add_option("--static", srv.static_dir, "directory served at /");
  c_srv->add_option("--host", srv.host)->capture_default_str();
  c_srv->add_option("--port", srv.port)->capture_default_str()->check(CLI::Range(1, 65535));
  c_srv->add_option("--heartbeat", srv.heartbeat_s, "seconds between event-stream heartbeats")->capture_default_str();
  c_srv->add_flag("--autorun", srv.autorun, "start processing immediately when calibrated");

  ReplayArgs rep;
  auto* c_rep = app.add_subcommand("replay", "run replay fixture cases through the pipeline");
  c_rep->add_option("--fixtures", rep.fixtures, "a case directory or a directory of cases")->required();
  c_rep->add_option("--out", rep.out, "output root")->capture_default_str();
  c_rep->add_option("--workers", rep.workers, "inference workers")->capture_default_str()->check(CLI::PositiveNumber);
  c_rep->add_flag("--check", rep.check, "compare event logs with expected_events.jsonl");

  AugmentArgs aug;
  auto* c_aug = app.add_subcommand("augment", "balance face classes by augmentation");
  c_aug->add_option("--in", aug.in, "VOC dataset directory")->required();
  c_aug->add_option("--out", aug.out, "output directory (default <in>-balanced)");
  c_aug->add_option("--target", aug.target, "instances per class")->required();
  c_aug->add_option("--seed", aug.seed, "random seed")->capture_default_str();
  c_aug->add_flag("--dry-run", aug.dry_run, "print the plan only (annotations are read, images are not)");

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "score predictions against VOC ground truth");
  c_ev->add_option("--preds", ev.preds, "predictions JSONL")->required();
  c_ev->add_option("--gt", ev.gt, "ground-truth VOC directory")->required();
  c_ev->add_option("--min-confidence", ev.floor)->capture_default_str();
  c_ev->add_option("--iou", ev.iou)->capture_default_str();

  SplitArgs sp;
  auto* c_sp = app.add_subcommand("split", "seeded train/test split of a VOC dataset");
  c_sp->add_option("--in", sp.in, "VOC dataset directory")->required();
  c_sp->add_option("--ratio", sp.ratio, "train fraction")->capture_default_str();
  c_sp->add_option("--seed", sp.seed)->capture_default_str();
  c_sp->add_option("--out", sp.out, "write train.txt and test.txt here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    if (g_json) return fail(kExitValidation, "UsageError", e.what());
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (*c_cal) return cmd_calibrate(cal);
    if (*c_srv) return cmd_serve(srv);
    if (*c_rep) return cmd_replay(rep);
    if (*c_aug) return cmd_augment(aug);
    if (*c_ev) return cmd_eval(ev);
    if (*c_sp) return cmd_split(sp);
  } catch (const sg::Error& e) {
    return fail(e.is_validation() ? kExitValidation : kExitRuntime, sg::to_string(e.kind()), e.detail());
  } catch (const std::exception& e) {
    return fail(kExitRuntime, "RuntimeError", e.what());
  }
  return kExitRuntime;
}
