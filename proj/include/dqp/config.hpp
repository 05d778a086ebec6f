#pragma once

// Run configuration: a single JSON document with named keys for every
// experimental setting. Unknown keys are rejected so typos cannot silently
// fall back to defaults.

#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqp/bench.hpp"
#include "dqp/error.hpp"
#include "dqp/layout.hpp"
#include "dqp/mcmc.hpp"

namespace dqp {

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                       const std::string& where) {
  if (!j.is_object()) throw invalid_argument("config: expected an object at " + where);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw invalid_argument("config: unknown key '" + it.key() + "' at " + where);
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

inline SplitSpec parse_split(const nlohmann::json& j, const std::string& where) {
  check_keys(j, {"take", "children"}, where);
  SplitSpec s;
  s.take = j.at("take").get<std::vector<int>>();
  if (j.contains("children")) {
    int idx = 0;
    for (const auto& c : j.at("children"))
      s.children.push_back(parse_split(c, where + ".children[" + std::to_string(idx++) + "]"));
  }
  return s;
}

}  // namespace detail

struct SigmaConfig {
  std::string mode = "per-site";  // per-site | ols | constant
  double value = 1.0;             // constant mode
  bool sample = false;            // multiplier update on top of the profile
  double step = 0.1;
  double prior_sd = 0.5;
};

struct RunConfig {
  std::vector<double> levels;
  std::optional<SplitSpec> split;  // absent = oblique
  CorrelationKernel kernel{KernelFamily::gaussian, 5.0};
  ConcentrationRule concentration = default_concentration();
  std::string concentration_name = "default";
  BetaParamRule beta_rule = BetaParamRule::martingale;
  TrendPrior trend{(Eigen::VectorXd(2) << 5.0, 0.0).finished(),
                   (Eigen::VectorXd(2) << 3.0, 3.0).finished()};
  SigmaConfig sigma;
  MCMCConfig mcmc;
  std::uint64_t seed = 1;

  // sample-prior
  int prior_draws = 100;
  std::vector<double> prior_x;
  std::string route = "beta";

  // bench
  std::vector<StudyCell> cells;
  int datasets = 20;
  int threads = 2;
  bool published_design = false;
  std::string cyclone_csv;
  CycloneConfig cyclone;

  PyramidLayout make_layout() const {
    QuantileLevels lv(levels);
    return split ? build_general_layout(lv, *split) : build_oblique_layout(lv);
  }
};

inline RunConfig parse_config(const nlohmann::json& j) {
  detail::check_keys(j, {"levels", "layout", "kernel", "concentration", "beta_rule", "trend_prior",
                         "sigma", "mcmc", "seed", "prior", "bench", "cyclone"},
                     "top level");
  RunConfig c;
  if (j.contains("levels")) c.levels = j.at("levels").get<std::vector<double>>();
  if (j.contains("layout")) {
    const auto& l = j.at("layout");
    if (l.is_string()) {
      if (l.get<std::string>() != "oblique")
        throw invalid_argument("config: layout must be \"oblique\" or a split object");
    } else {
      c.split = detail::parse_split(l, "layout");
    }
  }
  if (j.contains("kernel")) {
    detail::check_keys(j.at("kernel"), {"family", "phi"}, "kernel");
    c.kernel = CorrelationKernel(kernel_family_from_string(j.at("kernel").at("family").get<std::string>()),
                                 j.at("kernel").at("phi").get<double>());
  }
  if (j.contains("concentration")) {
    const auto& cc = j.at("concentration");
    detail::check_keys(cc, {"rule", "value"}, "concentration");
    std::string rule = cc.at("rule").get<std::string>();
    if (rule == "default") {
      c.concentration = default_concentration();
    } else if (rule == "constant") {
      c.concentration = constant_concentration(cc.at("value").get<double>());
    } else {
      throw invalid_argument("config: concentration rule must be default or constant");
    }
    c.concentration_name = rule;
  }
  if (j.contains("beta_rule")) {
    std::string r = j.at("beta_rule").get<std::string>();
    if (r == "martingale")
      c.beta_rule = BetaParamRule::martingale;
    else if (r == "unit-complement")
      c.beta_rule = BetaParamRule::unit_complement;
    else
      throw invalid_argument("config: beta_rule must be martingale or unit-complement");
  }
  if (j.contains("trend_prior")) {
    const auto& t = j.at("trend_prior");
    detail::check_keys(t, {"mean", "var"}, "trend_prior");
    auto mean = t.at("mean").get<std::vector<double>>();
    auto var = t.at("var").get<std::vector<double>>();
    if (mean.size() != var.size()) throw invalid_argument("config: trend_prior mean/var sizes differ");
    c.trend.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    c.trend.var = Eigen::Map<Eigen::VectorXd>(var.data(), static_cast<Eigen::Index>(var.size()));
  }
  if (j.contains("sigma")) {
    const auto& s = j.at("sigma");
    detail::check_keys(s, {"mode", "value", "sample", "step", "prior_sd"}, "sigma");
    c.sigma.mode = detail::get_or<std::string>(s, "mode", "per-site");
    if (c.sigma.mode != "per-site" && c.sigma.mode != "ols" && c.sigma.mode != "constant")
      throw invalid_argument("config: sigma mode must be per-site, ols, or constant");
    c.sigma.value = detail::get_or<double>(s, "value", 1.0);
    c.sigma.sample = detail::get_or<bool>(s, "sample", false);
    c.sigma.step = detail::get_or<double>(s, "step", 0.1);
    c.sigma.prior_sd = detail::get_or<double>(s, "prior_sd", 0.5);
  }
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    detail::check_keys(m, {"warmup", "iterations", "thin", "level_step", "trend_step",
                           "trend_blocks"},
                       "mcmc");
    c.mcmc.warmup = detail::get_or<int>(m, "warmup", c.mcmc.warmup);
    c.mcmc.iterations = detail::get_or<int>(m, "iterations", c.mcmc.iterations);
    c.mcmc.thin = detail::get_or<int>(m, "thin", c.mcmc.thin);
    if (m.contains("level_step")) c.mcmc.level_step = m.at("level_step").get<std::vector<double>>();
    c.mcmc.trend_step_frac = detail::get_or<double>(m, "trend_step", c.mcmc.trend_step_frac);
    c.mcmc.trend_blocks = detail::get_or<int>(m, "trend_blocks", c.mcmc.trend_blocks);
  }
  c.mcmc.scale_mode = c.sigma.sample ? ScaleMode::sample : ScaleMode::plugin;
  c.mcmc.scale_step = c.sigma.step;
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  c.mcmc.seed = c.seed;

  if (j.contains("prior")) {
    const auto& p = j.at("prior");
    detail::check_keys(p, {"draws", "x", "route"}, "prior");
    c.prior_draws = detail::get_or<int>(p, "draws", 100);
    if (p.contains("x")) c.prior_x = p.at("x").get<std::vector<double>>();
    c.route = detail::get_or<std::string>(p, "route", "beta");
    if (c.route != "beta" && c.route != "gamma")
      throw invalid_argument("config: prior route must be beta or gamma");
  }

  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    detail::check_keys(b, {"cells", "datasets", "threads", "published_design"}, "bench");
    if (b.contains("cells"))
      for (const auto& cell : b.at("cells")) {
        detail::check_keys(cell, {"scenario", "T", "n"}, "bench.cells[]");
        c.cells.push_back({cell.at("scenario").get<std::string>(), cell.at("T").get<int>(),
                           cell.at("n").get<int>()});
      }
    c.datasets = detail::get_or<int>(b, "datasets", 20);
    c.threads = detail::get_or<int>(b, "threads", 2);
    c.published_design = detail::get_or<bool>(b, "published_design", false);
  }

  if (j.contains("cyclone")) {
    const auto& cy = j.at("cyclone");
    detail::check_keys(cy, {"csv", "phi", "beta_prior_mean", "beta_prior_var"}, "cyclone");
    c.cyclone_csv = cy.at("csv").get<std::string>();
    c.cyclone.phi = detail::get_or<double>(cy, "phi", 5.0);
    if (cy.contains("beta_prior_mean")) {
      auto mm = cy.at("beta_prior_mean").get<std::vector<double>>();
      c.cyclone.beta_prior_mean = Eigen::Map<Eigen::VectorXd>(mm.data(), static_cast<Eigen::Index>(mm.size()));
    }
    if (cy.contains("beta_prior_var")) {
      auto vv = cy.at("beta_prior_var").get<std::vector<double>>();
      c.cyclone.beta_prior_var = Eigen::Map<Eigen::VectorXd>(vv.data(), static_cast<Eigen::Index>(vv.size()));
    }
    c.cyclone.mcmc = c.mcmc;
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw invalid_argument(std::string("config: parse error: ") + e.what());
  }
  return parse_config(j);
}

inline ScaleProfile make_scale_profile(const SigmaConfig& sc, const Dataset& data) {
  if (sc.mode == "per-site") return scale_profile_per_site(data);
  if (sc.mode == "ols") return scale_profile_ols(data);
  return scale_profile_constant(sc.value);
}

inline DqpModel model_from_config(const RunConfig& c, Dataset data) {
  ScaleProfile prof = make_scale_profile(c.sigma, data);
  DqpModel m = make_model(c.make_layout(), c.concentration, c.beta_rule, c.kernel, c.trend, prof,
                          std::move(data));
  m.scale_prior_sd = c.sigma.prior_sd;
  return m;
}

}  // namespace dqp
