#pragma once

// Run configuration: `key = value` lines, '#' starts a comment. Missing keys
// keep their defaults, unknown keys are errors.

#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>
#include <charconv>
#include <string>
#include <tuple>
#include <vector>

#include "cmot/error.hpp"
#include "cmot/io.hpp"
#include "cmot/losses.hpp"
#include "cmot/metrics.hpp"
#include "cmot/refine.hpp"
#include "cmot/sim.hpp"
#include "cmot/track.hpp"

namespace cmot {

struct RunConfig {
  AssocConfig assoc;
  RefineConfig refine;
  CountLossParams count;
  double iou_match = 0.5;

  const GridGeometry& geom() const noexcept { return refine.geom; }
};

namespace detail {

struct ConfigKey {
  std::function<void(RunConfig&, std::string_view, std::size_t)> set;
  std::function<std::string(const RunConfig&)> get;
};

inline std::string fmt_value(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline const std::map<std::string, ConfigKey, std::less<>>& config_keys() {
  using R = RunConfig;
  static const auto table = [] {
    std::map<std::string, ConfigKey, std::less<>> t;
    auto real = [&t](const char* key, auto member) {
      t[key] = {[member](R& c, std::string_view v, std::size_t line) { member(c) = parse_double(v, line, 0); },
                [member](const R& c) { return fmt_value(member(c)); }};
    };
    auto integer = [&t](const char* key, auto member) {
      t[key] = {[member](R& c, std::string_view v, std::size_t line) { member(c) = parse_int_field(v, line, 0); },
                [member](const R& c) { return std::to_string(member(c)); }};
    };
    real("lambda", [](auto& c) -> auto& { return c.assoc.lambda; });
    real("tau", [](auto& c) -> auto& { return c.assoc.tau; });
    integer("max_age", [](auto& c) -> auto& { return c.assoc.max_age; });
    real("gating_threshold", [](auto& c) -> auto& { return c.assoc.gating_threshold; });
    real("embedding_momentum", [](auto& c) -> auto& { return c.assoc.embedding_momentum; });
    integer("n_init", [](auto& c) -> auto& { return c.assoc.n_init; });
    real("max_embedding_cost", [](auto& c) -> auto& { return c.assoc.max_embedding_cost; });
    real("new_track_confidence", [](auto& c) -> auto& { return c.assoc.new_track_confidence; });
    integer("window", [](auto& c) -> auto& { return c.refine.window; });
    real("add_mass_threshold", [](auto& c) -> auto& { return c.refine.add_mass_threshold; });
    real("remove_gain_threshold", [](auto& c) -> auto& { return c.refine.remove_gain_threshold; });
    real("exempt_confidence", [](auto& c) -> auto& { return c.refine.exempt_confidence; });
    integer("max_added_per_frame", [](auto& c) -> auto& { return c.refine.max_added_per_frame; });
    real("min_peak_separation", [](auto& c) -> auto& { return c.refine.min_peak_separation; });
    real("default_box_w", [](auto& c) -> auto& { return c.refine.default_box_w; });
    real("default_box_h", [](auto& c) -> auto& { return c.refine.default_box_h; });
    real("recovered_confidence", [](auto& c) -> auto& { return c.refine.recovered_confidence; });
    integer("knn_k", [](auto& c) -> auto& { return c.refine.sigma.k; });
    real("knn_gamma", [](auto& c) -> auto& { return c.refine.sigma.gamma; });
    real("sigma_floor", [](auto& c) -> auto& { return c.refine.sigma.sigma_floor; });
    real("sigma_cap", [](auto& c) -> auto& { return c.refine.sigma.sigma_cap; });
    real("mu", [](auto& c) -> auto& { return c.count.mu; });
    integer("ssim_window", [](auto& c) -> auto& { return c.count.ssim.window; });
    real("ssim_sigma", [](auto& c) -> auto& { return c.count.ssim.sigma; });
    real("iou_match", [](auto& c) -> auto& { return c.iou_match; });
    t["ssim_as_dissimilarity"] = {
        [](R& c, std::string_view v, std::size_t line) {
          if (v == "true" || v == "1") c.count.ssim_as_dissimilarity = true;
          else if (v == "false" || v == "0") c.count.ssim_as_dissimilarity = false;
          else fail(Errc::parse, "line " + std::to_string(line) + ": expected true or false");
        },
        [](const R& c) { return std::string(c.count.ssim_as_dissimilarity ? "true" : "false"); }};
    // Geometry keys are collected by the parser and validated together.
    t["r"] = {[](R&, std::string_view, std::size_t) {},
              [](const R& c) { return std::to_string(c.refine.geom.r()); }};
    t["image_width"] = {[](R&, std::string_view, std::size_t) {},
                        [](const R& c) { return std::to_string(c.refine.geom.in_w()); }};
    t["image_height"] = {[](R&, std::string_view, std::size_t) {},
                         [](const R& c) { return std::to_string(c.refine.geom.in_h()); }};
    return t;
  }();
  return table;
}

inline void require(bool ok, const std::string& key, const std::string& rule) {
  if (!ok) fail(Errc::invalid_argument, "config key '" + key + "': " + rule);
}

inline void validate_run_config(const RunConfig& c) {
  require(c.assoc.lambda >= 0.0 && c.assoc.lambda <= 1.0, "lambda", "must lie in [0, 1]");
  require(c.assoc.tau >= 0.0 && c.assoc.tau <= 1.0, "tau", "must lie in [0, 1]");
  require(c.assoc.max_age >= 0, "max_age", "must be >= 0");
  require(c.assoc.gating_threshold > 0.0, "gating_threshold", "must be positive");
  require(c.assoc.embedding_momentum >= 0.0 && c.assoc.embedding_momentum <= 1.0, "embedding_momentum",
          "must lie in [0, 1]");
  require(c.assoc.n_init >= 1, "n_init", "must be >= 1");
  require(c.assoc.max_embedding_cost >= 0.0, "max_embedding_cost", "must be non-negative");
  require(c.assoc.new_track_confidence >= 0.0 && c.assoc.new_track_confidence <= 1.0,
          "new_track_confidence", "must lie in [0, 1]");
  require(c.refine.window >= 1 && c.refine.window % 2 == 1, "window", "must be odd and >= 1");
  require(c.refine.add_mass_threshold > 0.0 && c.refine.add_mass_threshold <= 1.0, "add_mass_threshold",
          "must lie in (0, 1]");
  require(c.refine.remove_gain_threshold >= 0.0, "remove_gain_threshold", "must be non-negative");
  require(c.refine.max_added_per_frame >= 0, "max_added_per_frame", "must be >= 0");
  require(c.refine.min_peak_separation >= 0.0, "min_peak_separation", "must be non-negative");
  require(c.refine.default_box_w > 0.0, "default_box_w", "must be positive");
  require(c.refine.default_box_h > 0.0, "default_box_h", "must be positive");
  require(c.refine.recovered_confidence > 0.0 && c.refine.recovered_confidence < 1.0, "recovered_confidence",
          "must lie in (0, 1)");
  require(c.refine.sigma.k >= 1, "knn_k", "must be >= 1");
  require(c.refine.sigma.gamma >= 0.0, "knn_gamma", "must be non-negative");
  require(c.refine.sigma.sigma_floor > 0.0, "sigma_floor", "must be positive");
  require(c.refine.sigma.sigma_cap >= c.refine.sigma.sigma_floor, "sigma_cap", "must be >= sigma_floor");
  require(c.count.mu > 0.0, "mu", "must be positive");
  require(c.count.ssim.window >= 1 && c.count.ssim.window % 2 == 1, "ssim_window", "must be odd and >= 1");
  require(c.count.ssim.sigma > 0.0, "ssim_sigma", "must be positive");
  require(c.iou_match > 0.0 && c.iou_match <= 1.0, "iou_match", "must lie in (0, 1]");
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in, const std::string& name = "config") {
  RunConfig c;
  int img_w = c.refine.geom.in_w(), img_h = c.refine.geom.in_h(), r = c.refine.geom.r();
  std::string line;
  std::size_t lineno = 0;
  const auto& keys = detail::config_keys();
  try {
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = line;
      if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
      body = detail::trim(body);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos)
        fail(Errc::parse, "line " + std::to_string(lineno) + ": expected 'key = value'");
      const std::string_view key = detail::trim(body.substr(0, eq));
      const std::string_view value = detail::trim(body.substr(eq + 1));
      if (key.empty() || value.empty())
        fail(Errc::parse, "line " + std::to_string(lineno) + ": expected 'key = value'");
      const auto it = keys.find(key);
      if (it == keys.end())
        fail(Errc::unknown_key, "line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
      if (key == "r") r = detail::parse_int_field(value, lineno, 0);
      else if (key == "image_width") img_w = detail::parse_int_field(value, lineno, 0);
      else if (key == "image_height") img_h = detail::parse_int_field(value, lineno, 0);
      else it->second.set(c, value, lineno);
    }
    try {
      c.refine.geom = GridGeometry(img_w, img_h, r);
    } catch (const Error& e) {
      fail(Errc::invalid_argument, std::string("config keys 'image_width'/'image_height'/'r': ") + e.what());
    }
    detail::validate_run_config(c);
  } catch (const Error& e) {
    throw Error(e.code(), name + ": " + e.what());
  }
  return c;
}

inline RunConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline RunConfig read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path);
  return parse_config(in, path);
}

// Fully resolved configuration, one `key = value` per line, sorted by key.
inline std::string to_string(const RunConfig& c) {
  std::string out;
  for (const auto& [key, k] : detail::config_keys()) out += key + " = " + k.get(c) + "\n";
  return out;
}

// Simulator configuration in the same `key = value` format. An optional
// `preset = name` line selects the starting point; other keys override it
// regardless of order.
inline SimConfig parse_sim_config(std::istream& in, const std::string& name = "sim config") {
  using Setter = std::function<void(SimConfig&, std::string_view, std::size_t)>;
  const auto real = [](double SimConfig::*m) -> Setter {
    return [m](SimConfig& c, std::string_view v, std::size_t line) { c.*m = detail::parse_double(v, line, 0); };
  };
  const auto integer = [](int SimConfig::*m) -> Setter {
    return [m](SimConfig& c, std::string_view v, std::size_t line) { c.*m = detail::parse_int_field(v, line, 0); };
  };
  static const std::map<std::string, Setter, std::less<>> keys{
      {"seed",
       [](SimConfig& c, std::string_view v, std::size_t line) {
         std::uint64_t seed = 0;
         const auto t = detail::trim(v);
         const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), seed);
         if (ec != std::errc{} || ptr != t.data() + t.size() || t.empty())
           fail(Errc::parse, "line " + std::to_string(line) + ": seed must be an unsigned integer");
         c.seed = seed;
       }},
      {"width", integer(&SimConfig::width)},
      {"height", integer(&SimConfig::height)},
      {"r", integer(&SimConfig::r)},
      {"n_agents", integer(&SimConfig::n_agents)},
      {"n_frames", integer(&SimConfig::n_frames)},
      {"agent_height_min", real(&SimConfig::agent_height_min)},
      {"agent_height_max", real(&SimConfig::agent_height_max)},
      {"agent_aspect", real(&SimConfig::agent_aspect)},
      {"speed_min", real(&SimConfig::speed_min)},
      {"speed_max", real(&SimConfig::speed_max)},
      {"turn_noise_std", real(&SimConfig::turn_noise_std)},
      {"occlusion_miss_base", real(&SimConfig::occlusion_miss_base)},
      {"occlusion_miss_gain", real(&SimConfig::occlusion_miss_gain)},
      {"fp_rate", real(&SimConfig::fp_rate)},
      {"box_jitter_std", real(&SimConfig::box_jitter_std)},
      {"embedding_noise_std", real(&SimConfig::embedding_noise_std)},
  };

  std::vector<std::tuple<std::size_t, std::string, std::string>> entries;
  std::string base;
  std::string line;
  std::size_t lineno = 0;
  SimConfig c;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = line;
      if (const auto hash = body.find('#'); hash != std::string_view::npos) body = body.substr(0, hash);
      body = detail::trim(body);
      if (body.empty()) continue;
      const auto eq = body.find('=');
      const std::string_view key = eq == std::string_view::npos ? body : detail::trim(body.substr(0, eq));
      const std::string_view value = eq == std::string_view::npos ? "" : detail::trim(body.substr(eq + 1));
      if (eq == std::string_view::npos || key.empty() || value.empty())
        fail(Errc::parse, "line " + std::to_string(lineno) + ": expected 'key = value'");
      if (key == "preset") base = value;
      else if (!keys.contains(key))
        fail(Errc::unknown_key, "line " + std::to_string(lineno) + ": unknown key '" + std::string(key) + "'");
      else entries.emplace_back(lineno, std::string(key), std::string(value));
    }
    if (!base.empty()) c = preset(base);
    for (const auto& [ln, key, value] : entries) keys.find(key)->second(c, value, ln);
    c.validate();
  } catch (const Error& e) {
    throw Error(e.code(), name + ": " + e.what());
  }
  return c;
}

inline SimConfig read_sim_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::io, "cannot open " + path);
  return parse_sim_config(in, path);
}

}  // namespace cmot
