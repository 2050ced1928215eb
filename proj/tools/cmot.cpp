// cmot: simulate scenes, track with optional density refinement, evaluate,
// check loss gradients and sweep parameters.
//
// Exit codes: 0 success, 1 computation failure, 2 usage error.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cmot/app.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

std::vector<std::string> preset_list() {
  std::vector<std::string> v;
  for (auto n : cmot::preset_names()) v.emplace_back(n);
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Count-consistent multi-object tracking toolkit"};
  cli.set_version_flag("--version", "cmot 1.0.0");
  cli.require_subcommand(1, 1);

  cmot::app::SimulateOptions sim;
  std::string sim_preset, sim_config;
  std::uint64_t sim_seed = 0;
  auto* c_sim = cli.add_subcommand("simulate", "Generate a seeded synthetic scene");
  auto* o_preset = c_sim->add_option("--preset", sim_preset, "Scene preset")->check(CLI::IsMember(preset_list()));
  auto* o_config = c_sim->add_option("--config", sim_config, "Simulator config file (key = value)")
                       ->check(CLI::ExistingFile);
  o_preset->excludes(o_config);
  c_sim->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  auto* o_seed = c_sim->add_option("--seed", sim_seed, "Override the scene seed");

  cmot::app::TrackOptions trk;
  std::string trk_density, trk_emb, trk_config, trk_report;
  auto* c_track = cli.add_subcommand("track", "Track detections, optionally refined against a density map");
  c_track->add_option("--det", trk.det, "Detections (MOTChallenge text)")->required()->check(CLI::ExistingFile);
  auto* o_tdens = c_track->add_option("--density", trk_density, "Density grids (CMDG)")->check(CLI::ExistingFile);
  auto* o_temb = c_track->add_option("--embeddings", trk_emb, "Embeddings (CMEB)")->check(CLI::ExistingFile);
  auto* o_tcfg = c_track->add_option("--config", trk_config, "Run config file")->check(CLI::ExistingFile);
  c_track->add_option("--out", trk.out, "Result file")->required();
  auto* o_trep = c_track->add_option("--report", trk_report, "Refine report (JSON lines), with --density");

  cmot::app::EvalOptions ev;
  std::string ev_dpred, ev_dgt;
  auto* c_eval = cli.add_subcommand("eval", "Score a result file against ground truth");
  c_eval->add_option("--gt", ev.gt, "Ground truth (MOTChallenge text)")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--res", ev.res, "Tracker output")->required()->check(CLI::ExistingFile);
  auto* o_dpred = c_eval->add_option("--density-pred", ev_dpred, "Predicted density (CMDG)")->check(CLI::ExistingFile);
  auto* o_dgt = c_eval->add_option("--density-gt", ev_dgt, "Ground-truth density (CMDG)")->check(CLI::ExistingFile);
  o_dpred->needs(o_dgt);
  o_dgt->needs(o_dpred);
  c_eval->add_option("--name", ev.name, "Sequence name for the table and CSV row")->capture_default_str();
  c_eval->add_option("--iou", ev.iou_match, "IoU threshold for a match")->capture_default_str();

  cmot::app::GradcheckCliOptions gc;
  std::vector<std::string> loss_names{"all"};
  for (const auto& n : cmot::gradcheck_losses()) loss_names.push_back(n);
  auto* c_grad = cli.add_subcommand("gradcheck", "Compare analytic loss gradients with finite differences");
  c_grad->add_option("--loss", gc.loss, "Loss to check")->check(CLI::IsMember(loss_names))->capture_default_str();
  c_grad->add_option("--trials", gc.trials, "Random instances per loss")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c_grad->add_option("--tol", gc.tol, "Pass when the max relative error is below this")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  c_grad->add_option("--seed", gc.seed, "Instance seed")->capture_default_str();

  cmot::app::SweepOptions sw;
  std::string sw_config, sw_svg;
  std::vector<std::string> sw_values;
  auto* c_sweep = cli.add_subcommand(
      "sweep",
      "Track a seeded scene with density refinement once per parameter value.\n"
      "window changes the refinement window; mu only changes the count_loss column,\n"
      "since no density network is trained here.");
  c_sweep->add_option("--param", sw.param, "Parameter to vary")->required()->check(CLI::IsMember({"window", "mu"}));
  c_sweep->add_option("--values", sw_values, "Comma-separated values")->required()->delimiter(',');
  c_sweep->add_option("--preset", sw.preset, "Scene preset")
      ->check(CLI::IsMember(preset_list()))
      ->capture_default_str();
  auto* o_scfg = c_sweep->add_option("--config", sw_config, "Base run config")->check(CLI::ExistingFile);
  c_sweep->add_option("--out", sw.out, "CSV output")->required();
  auto* o_svg = c_sweep->add_option("--svg", sw_svg, "SVG chart (default: CSV path with .svg)");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (c_sim->parsed()) {
      if (*o_preset) sim.preset = sim_preset;
      if (*o_config) sim.config = sim_config;
      if (*o_seed) sim.seed = sim_seed;
      cmot::app::simulate(sim, std::cout);
    } else if (c_track->parsed()) {
      if (*o_tdens) trk.density = trk_density;
      if (*o_temb) trk.embeddings = trk_emb;
      if (*o_tcfg) trk.config = trk_config;
      if (*o_trep) trk.report = trk_report;
      cmot::app::track(trk, std::cout);
    } else if (c_eval->parsed()) {
      if (*o_dpred) ev.density_pred = ev_dpred;
      if (*o_dgt) ev.density_gt = ev_dgt;
      cmot::app::eval(ev, std::cout);
    } else if (c_grad->parsed()) {
      if (!cmot::app::run_gradcheck(gc, std::cout)) return kFailure;
    } else if (c_sweep->parsed()) {
      for (const std::string& v : sw_values) {
        if (v.empty()) continue;
        std::size_t used = 0;
        double x = 0.0;
        try {
          x = std::stod(v, &used);
        } catch (const std::exception&) {
          used = 0;
        }
        if (used != v.size()) throw cmot::UsageError("--values: not a number: '" + v + "'");
        sw.values.push_back(x);
      }
      if (*o_scfg) sw.config = sw_config;
      if (*o_svg) sw.svg = sw_svg;
      cmot::app::sweep(sw, std::cout, std::cerr);
    }
  } catch (const cmot::UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
