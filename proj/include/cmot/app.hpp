#pragma once

// Command implementations behind the `cmot` tool. Each command reads and
// writes files, prints to the given streams and throws on failure; the
// executable maps UsageError to exit code 2 and every other error to 1.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmot/config.hpp"
#include "cmot/gradcheck.hpp"
#include "cmot/io.hpp"
#include "cmot/metrics.hpp"
#include "cmot/pipeline.hpp"
#include "cmot/sim.hpp"

namespace cmot {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace app {

// ---------------------------------------------------------------- simulate

struct SimulateOptions {
  std::optional<std::string> preset;
  std::optional<std::string> config;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
};

struct SimulateResult {
  SceneStats stats;
  int agents = 0;
  int frames = 0;
};

inline EmbeddingSequence scene_embeddings(const Scene& s) {
  EmbeddingSequence seq;
  seq.frames.resize(s.frames.size());
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    const auto& dets = s.frames[f].detections;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (!dets[i].embedding) continue;
      EmbeddingRow row;
      row.det_index = static_cast<std::uint32_t>(i);
      row.values.assign(dets[i].embedding->begin(), dets[i].embedding->end());
      seq.frames[f].push_back(std::move(row));
    }
  }
  return seq;
}

inline void write_scene(const Scene& s, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(Errc::io, "cannot create " + dir.string() + ": " + ec.message());

  std::vector<MotRecord> gt, det;
  DensitySequence dens;
  dens.r = static_cast<std::uint32_t>(s.geom.r());
  dens.grid_h = static_cast<std::uint32_t>(s.geom.grid_h());
  dens.grid_w = static_cast<std::uint32_t>(s.geom.grid_w());
  for (std::size_t f = 0; f < s.frames.size(); ++f) {
    const int frame = static_cast<int>(f) + 1;
    for (const TrackBox& t : s.frames[f].gt) gt.push_back(to_record(t));
    for (const Detection& d : s.frames[f].detections) det.push_back(to_record(frame, d));
    dens.frames.push_back(s.frames[f].density);
  }
  write_mot((dir / "gt.txt").string(), gt);
  write_mot((dir / "det.txt").string(), det);
  write_density((dir / "density.cmdg").string(), dens);
  write_embeddings((dir / "embeddings.cmeb").string(), scene_embeddings(s));
}

inline SimulateResult simulate(const SimulateOptions& opt, std::ostream& out) {
  if (opt.out_dir.empty()) throw UsageError("--out-dir is required");
  if (opt.preset.has_value() == opt.config.has_value())
    throw UsageError("exactly one of --preset or --config is required");
  SimConfig cfg;
  if (opt.preset) {
    const auto& names = preset_names();
    if (std::find(names.begin(), names.end(), *opt.preset) == names.end())
      throw UsageError("unknown preset '" + *opt.preset + "'");
    cfg = preset(*opt.preset);
  } else {
    cfg = read_sim_config(*opt.config);
  }
  if (opt.seed) cfg.seed = *opt.seed;

  const Scene s = generate(cfg);
  write_scene(s, opt.out_dir);
  SimulateResult r{scene_stats(s), cfg.n_agents, cfg.n_frames};
  char buf[256];
  std::snprintf(buf, sizeof buf, "agents=%d frames=%d miss_rate=%.4f fp_per_frame=%.4f\n", r.agents,
                r.frames, r.stats.miss_rate, r.stats.fp_per_frame);
  out << buf;
  return r;
}

// ------------------------------------------------------------------- track

struct TrackOptions {
  std::string det;
  std::optional<std::string> density;
  std::optional<std::string> embeddings;
  std::optional<std::string> config;
  std::string out;
  std::optional<std::string> report;  // defaults next to --out
};

inline std::string default_report_path(const std::string& out) {
  std::filesystem::path p(out);
  p.replace_extension(".refine.jsonl");
  return p.string();
}

inline nlohmann::json box_json(const Detection& d) {
  return nlohmann::json::array({d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h, d.confidence});
}

inline nlohmann::json report_json(int frame, const RefineReport& r) {
  nlohmann::json j;
  j["frame"] = frame;
  j["initial_count_gap"] = r.initial_count_gap;
  j["final_count_gap"] = r.final_count_gap;
  j["added"] = nlohmann::json::array();
  for (const Detection& d : r.added) j["added"].push_back(box_json(d));
  j["removed"] = nlohmann::json::array();
  for (const Detection& d : r.removed) j["removed"].push_back(box_json(d));
  return j;
}

struct TrackResult {
  std::size_t frames = 0;
  std::size_t records = 0;
  std::size_t added = 0;
  std::size_t removed = 0;
};

inline TrackResult track(const TrackOptions& opt, std::ostream& out) {
  if (opt.det.empty()) throw UsageError("--det is required");
  if (opt.out.empty()) throw UsageError("--out is required");
  const RunConfig cfg = opt.config ? read_config(*opt.config) : RunConfig{};
  const std::vector<MotRecord> recs = read_mot(opt.det);

  std::vector<DensityGrid> dens;
  if (opt.density) {
    const GridGeometry& g = cfg.geom();
    DensitySequence seq = read_density(*opt.density, DensityExpectation{static_cast<std::uint32_t>(g.grid_h()),
                                                                        static_cast<std::uint32_t>(g.grid_w()),
                                                                        static_cast<std::uint32_t>(g.r())});
    dens = std::move(seq.frames);
  }
  const int n_frames = std::max(max_frame(recs), static_cast<int>(dens.size()));
  auto frames = group_detections(recs, n_frames);
  if (opt.embeddings) attach_embeddings(frames, read_embeddings(*opt.embeddings));

  const PipelineResult res = run_tracking(frames, dens, cfg);
  std::vector<MotRecord> outrecs;
  outrecs.reserve(res.tracks.size());
  for (const TrackBox& t : res.tracks) outrecs.push_back(to_record(t));
  write_mot(opt.out, outrecs);

  TrackResult tr{frames.size(), outrecs.size(), 0, 0};
  if (opt.density) {
    const std::string path = opt.report ? *opt.report : default_report_path(opt.out);
    std::ofstream rep(path, std::ios::binary);
    if (!rep) fail(Errc::io, "cannot write " + path);
    for (std::size_t f = 0; f < res.reports.size(); ++f) {
      rep << report_json(static_cast<int>(f) + 1, res.reports[f]).dump() << '\n';
      tr.added += res.reports[f].added.size();
      tr.removed += res.reports[f].removed.size();
    }
    if (!rep) fail(Errc::io, "write failed: " + path);
  }
  out << "frames=" << tr.frames << " records=" << tr.records;
  if (opt.density) out << " recovered=" << tr.added << " rejected=" << tr.removed;
  out << '\n';
  return tr;
}

// -------------------------------------------------------------------- eval

struct EvalOptions {
  std::string gt;
  std::string res;
  std::optional<std::string> density_pred;
  std::optional<std::string> density_gt;
  std::string name = "sequence";
  double iou_match = 0.5;
};

inline SequenceEval eval(const EvalOptions& opt, std::ostream& out) {
  if (opt.gt.empty() || opt.res.empty()) throw UsageError("--gt and --res are required");
  if (opt.density_pred.has_value() != opt.density_gt.has_value())
    throw UsageError("--density-pred and --density-gt must be given together");
  const std::vector<MotRecord> gt_recs = read_mot(opt.gt);
  const std::vector<MotRecord> res_recs = read_mot(opt.res);
  const int gt_frames = max_frame(gt_recs);
  if (max_frame(res_recs) > gt_frames)
    fail(Errc::shape_mismatch, "result file has frame " + std::to_string(max_frame(res_recs)) +
                                   " but ground truth ends at frame " + std::to_string(gt_frames));
  const auto gt = to_track_boxes(gt_recs, true);
  const auto hyp = to_track_boxes(res_recs);
  SequenceEval e = evaluate_sequence(gt, hyp, opt.iou_match);

  if (opt.density_pred) {
    const DensitySequence pred = read_density(*opt.density_pred);
    const DensitySequence ref =
        read_density(*opt.density_gt, DensityExpectation{pred.grid_h, pred.grid_w, pred.r});
    if (pred.frames.size() != ref.frames.size() || static_cast<int>(pred.frames.size()) != gt_frames)
      fail(Errc::shape_mismatch, "density files have " + std::to_string(pred.frames.size()) + " and " +
                                     std::to_string(ref.frames.size()) + " frames, ground truth has " +
                                     std::to_string(gt_frames));
    std::vector<int> counts(static_cast<std::size_t>(gt_frames), 0);
    for (const TrackBox& t : gt) ++counts[static_cast<std::size_t>(t.frame - 1)];
    const CountingEval c = counting_eval(pred.frames, counts, ref.frames);
    e.counting_mae = c.mae;
    e.counting_ssim = c.ssim;
  }
  out << metrics_table(opt.name, e) << csv_header() << '\n' << csv_row(opt.name, e) << '\n';
  return e;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckCliOptions {
  std::string loss = "all";
  int trials = 100;
  double tol = 1e-4;
  std::uint64_t seed = GradcheckOptions{}.seed;
};

// Returns true when every checked loss passes.
inline bool run_gradcheck(const GradcheckCliOptions& opt, std::ostream& out) {
  if (opt.loss != "all" && !is_gradcheck_loss(opt.loss)) throw UsageError("unknown loss '" + opt.loss + "'");
  if (opt.trials < 1) throw UsageError("--trials must be >= 1");
  if (!(opt.tol >= 0.0)) throw UsageError("--tol must be >= 0");
  std::vector<std::string> names;
  if (opt.loss == "all") names = gradcheck_losses();
  else names.push_back(opt.loss);
  bool ok = true;
  char buf[256];
  for (const std::string& n : names) {
    const GradcheckReport r = gradcheck(n, {opt.trials, opt.tol, GradcheckOptions{}.step, opt.seed});
    std::snprintf(buf, sizeof buf, "%-16s trials=%d max_rel_error=%.3e tol=%.1e %s\n", n.c_str(), r.trials,
                  r.max_rel_error, opt.tol, r.passed ? "PASS" : "FAIL");
    out << buf;
    ok = ok && r.passed;
  }
  return ok;
}

// ------------------------------------------------------------------- sweep

struct SweepOptions {
  std::string param;
  std::vector<double> values;
  std::string preset = "crowded";
  std::optional<std::string> config;
  std::string out;
  std::optional<std::string> svg;  // defaults next to --out
};

struct SweepRow {
  double value = 0.0;
  SequenceEval eval;
  double count_loss = 0.0;
};

// Mean counting loss of the detection-derived density (after refinement)
// against the gt density, both amplified by mu. With no density network to
// train, this is the only quantity mu influences.
inline double mean_count_loss(const Scene& s, const RunConfig& cfg) {
  if (s.frames.empty()) return 0.0;
  double total = 0.0;
  for (const SceneFrame& f : s.frames) {
    const RefinedFrame rf = refine_frame(f.detections, f.density, cfg.refine);
    std::vector<Point2> pts;
    for (GridCell c : detection_cells(rf.detections, s.geom))
      pts.push_back({static_cast<double>(c.x), static_cast<double>(c.y)});
    DensityGrid pred(s.geom.grid_h(), s.geom.grid_w());
    if (!pts.empty()) pred = density_from_centers(pts, adaptive_sigmas(pts, cfg.refine.sigma), s.geom);
    for (double& v : pred.raw()) v *= cfg.count.mu;
    total += counting_loss(pred, f.density, cfg.count).value;
  }
  return total / static_cast<double>(s.frames.size());
}

inline std::string sweep_value(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

inline std::string sweep_svg(const std::string& param, const std::vector<SweepRow>& rows) {
  const double W = 640, H = 400, L = 60, R = 20, T = 30, B = 50;
  double xmin = rows.front().value, xmax = rows.front().value;
  double ymin = 1.0, ymax = 0.0;
  for (const SweepRow& r : rows) {
    xmin = std::min(xmin, r.value);
    xmax = std::max(xmax, r.value);
    for (double v : {r.eval.clear.mota, r.eval.id.idf1}) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  const double pad = std::max(0.01, 0.1 * (ymax - ymin));
  ymin -= pad;
  ymax += pad;
  const auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  const auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };
  char buf[256];
  std::string s;
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                "font-family=\"sans-serif\" font-size=\"12\">\n",
                W, H);
  s += buf;
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L,
                H - B, W - R, H - B);
  s += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L,
                T, L, H - B);
  s += buf;
  for (const SweepRow& r : rows) {
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n",
                  px(r.value), H - B + 18, sweep_value(r.value).c_str());
    s += buf;
  }
  for (int i = 0; i <= 4; ++i) {
    const double y = ymin + (ymax - ymin) * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.3f</text>\n", L - 6,
                  py(y) + 4, y);
    s += buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%s</text>\n",
                (L + W - R) / 2, H - 12, param.c_str());
  s += buf;
  const auto series = [&](const char* name, const char* color, auto get, int slot) {
    std::string pts;
    for (const SweepRow& r : rows) {
      std::snprintf(buf, sizeof buf, "%s%.1f,%.1f", pts.empty() ? "" : " ", px(r.value), py(get(r)));
      pts += buf;
    }
    s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts +
         "\"/>\n";
    for (const SweepRow& r : rows) {
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n", px(r.value),
                    py(get(r)), color);
      s += buf;
    }
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" fill=\"%s\">%s</text>\n", L + 10 + 80.0 * slot,
                  T - 10, color, name);
    s += buf;
  };
  series("MOTA", "#1f77b4", [](const SweepRow& r) { return r.eval.clear.mota; }, 0);
  series("IDF1", "#d62728", [](const SweepRow& r) { return r.eval.id.idf1; }, 1);
  s += "</svg>\n";
  return s;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "value,MOTA,IDF1,FP,FN,IDS,count_loss\n";
  for (const SweepRow& r : rows) {
    const ClearMot& c = r.eval.clear;
    s += sweep_value(r.value) + "," + format_fixed(c.mota, 6) + "," + format_fixed(r.eval.id.idf1, 6) + "," +
         std::to_string(c.fp) + "," + std::to_string(c.fn) + "," + std::to_string(c.ids) + "," +
         format_fixed(r.count_loss, 6) + "\n";
  }
  return s;
}

inline std::vector<SweepRow> sweep(const SweepOptions& opt, std::ostream& out, std::ostream& err) {
  if (opt.param != "window" && opt.param != "mu") throw UsageError("--param must be window or mu");
  if (opt.values.empty()) throw UsageError("--values must list at least one value");
  if (opt.out.empty()) throw UsageError("--out is required");
  const auto& names = preset_names();
  if (std::find(names.begin(), names.end(), opt.preset) == names.end())
    throw UsageError("unknown preset '" + opt.preset + "'");

  std::vector<double> values;
  for (double v : opt.values) {
    if (std::find(values.begin(), values.end(), v) != values.end()) {
      err << "warning: duplicate value " << sweep_value(v) << " ignored\n";
      continue;
    }
    if (opt.param == "window" && (v != std::floor(v) || v < 1 || static_cast<long>(v) % 2 == 0))
      throw UsageError("window values must be odd integers >= 1, got " + sweep_value(v));
    if (opt.param == "mu" && !(v > 0.0)) throw UsageError("mu values must be positive, got " + sweep_value(v));
    values.push_back(v);
  }

  const RunConfig base = opt.config ? read_config(*opt.config) : RunConfig{};
  const Scene scene = generate(preset(opt.preset));
  std::vector<SweepRow> rows;
  for (double v : values) {
    RunConfig c = base;
    c.refine.geom = scene.geom;
    if (opt.param == "window") c.refine.window = static_cast<int>(v);
    else c.count.mu = v;
    SweepRow row{v, evaluate_scene(scene, c, true), mean_count_loss(scene, c)};
    out << opt.param << "=" << sweep_value(v) << " MOTA=" << format_fixed(row.eval.clear.mota, 4)
        << " IDF1=" << format_fixed(row.eval.id.idf1, 4) << " FP=" << row.eval.clear.fp
        << " FN=" << row.eval.clear.fn << " IDS=" << row.eval.clear.ids << "\n";
    rows.push_back(std::move(row));
  }

  const auto write_text = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail(Errc::io, "cannot write " + path);
    f << text;
    if (!f) fail(Errc::io, "write failed: " + path);
  };
  write_text(opt.out, sweep_csv(rows));
  std::filesystem::path svg = opt.out;
  svg.replace_extension(".svg");
  write_text(opt.svg ? *opt.svg : svg.string(), sweep_svg(opt.param, rows));
  return rows;
}

}  // namespace app
}  // namespace cmot
