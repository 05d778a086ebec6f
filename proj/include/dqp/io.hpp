#pragma once

// File formats: two-column data CSV, surface CSV/JSON, JSON-lines draw
// streams, and the benchmark/summary CSV reports.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dqp/bench.hpp"
#include "dqp/inference.hpp"
#include "dqp/mcmc.hpp"

namespace dqp {

// Reads a CSV with a two-name header (e.g. "x,y" or "year,wind_speed").
// Parse failures report the 1-based line number.
inline std::vector<std::pair<double, double>> read_xy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::string line;
  std::vector<std::pair<double, double>> rows;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (lineno == 1 && !line.empty() && (std::isalpha(static_cast<unsigned char>(line[0])) != 0))
      continue;  // header
    std::istringstream ss(line);
    std::string a, b, extra;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
      throw io_error(path + ":" + std::to_string(lineno) + ": expected two comma-separated fields");
    if (std::getline(ss, extra, ',') && !extra.empty())
      throw io_error(path + ":" + std::to_string(lineno) + ": expected exactly two fields");
    try {
      std::size_t pa = 0, pb = 0;
      double x = std::stod(a, &pa);
      double y = std::stod(b, &pb);
      rows.emplace_back(x, y);
    } catch (const std::exception&) {
      throw io_error(path + ":" + std::to_string(lineno) + ": malformed numeric field");
    }
  }
  if (rows.empty()) throw io_error(path + ": no data rows");
  return rows;
}

inline Dataset read_dataset_csv(const std::string& path) {
  auto rows = read_xy_csv(path);
  std::vector<double> xs, ys;
  for (auto& [x, y] : rows) {
    xs.push_back(x);
    ys.push_back(y);
  }
  return Dataset::from_xy(xs, ys);
}

// Surface CSV: first column tau, remaining columns the covariate values.
inline void write_surface_csv(const std::string& path, const QuantileSurface& s,
                              const QuantileLevels& levels, const Eigen::VectorXd& xs) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << std::setprecision(17) << "tau";
  for (Eigen::Index i = 0; i < xs.size(); ++i) out << ",x=" << xs(i);
  out << "\n";
  for (Eigen::Index t = 0; t < s.q.rows(); ++t) {
    out << levels[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < s.q.cols(); ++i) out << ',' << s.q(t, i);
    out << "\n";
  }
}

inline nlohmann::json surface_json(const QuantileSurface& s, const QuantileLevels& levels,
                                   const Eigen::VectorXd& xs, const MappingParams* params) {
  nlohmann::json j;
  j["scale"] = (s.scale == Scale::uniform) ? "uniform" : "real";
  j["levels"] = levels.values();
  j["x"] = std::vector<double>(xs.data(), xs.data() + xs.size());
  std::vector<std::vector<double>> q;
  for (Eigen::Index t = 0; t < s.q.rows(); ++t)
    q.emplace_back(s.q.row(t).begin(), s.q.row(t).end());
  j["q"] = q;
  if (params) {
    j["mu"] = std::vector<double>(params->mu.data(), params->mu.data() + params->mu.size());
    j["sigma"] = std::vector<double>(params->sigma.data(), params->sigma.data() + params->sigma.size());
  }
  return j;
}

namespace detail {
inline std::vector<std::vector<double>> matrix_rows(const Eigen::MatrixXd& m) {
  std::vector<std::vector<double>> rows;
  rows.reserve(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index t = 0; t < m.rows(); ++t) rows.emplace_back(m.row(t).begin(), m.row(t).end());
  return rows;
}

inline Eigen::MatrixXd matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return Eigen::MatrixXd(0, 0);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < rows[t].size(); ++i)
      m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(i)) = rows[t][i];
  return m;
}
}  // namespace detail

// One thinned state per line: quantiles, latents, trend, scale.
inline void write_draws_jsonl(const std::string& path, const PosteriorDraws& draws) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  for (const Draw& d : draws.draws) {
    nlohmann::json j;
    j["q"] = detail::matrix_rows(d.q);
    j["z"] = detail::matrix_rows(d.z);
    j["beta"] = std::vector<double>(d.beta.data(), d.beta.data() + d.beta.size());
    j["sigma"] = std::vector<double>(d.sigma.data(), d.sigma.data() + d.sigma.size());
    j["log_scale"] = d.log_scale;
    out << j.dump() << "\n";
  }
}

inline PosteriorDraws read_draws_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  PosteriorDraws draws;
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw io_error(path + ":" + std::to_string(lineno) + ": bad JSON: " + e.what());
    }
    Draw d;
    d.q = detail::matrix_from_rows(j.at("q").get<std::vector<std::vector<double>>>());
    d.z = detail::matrix_from_rows(j.at("z").get<std::vector<std::vector<double>>>());
    auto beta = j.at("beta").get<std::vector<double>>();
    auto sigma = j.at("sigma").get<std::vector<double>>();
    d.beta = Eigen::Map<Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
    d.sigma = Eigen::Map<Eigen::VectorXd>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    d.log_scale = j.at("log_scale").get<double>();
    draws.draws.push_back(std::move(d));
  }
  return draws;
}

inline void write_amse_report(const std::string& path, const StudyReport& report) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "scenario,T,n,method,amse,se\n" << std::setprecision(10);
  for (const StudyRow& row : report.rows) {
    out << row.scenario << ',' << row.T << ',' << row.n << ',' << row.method << ',' << row.amse
        << ',' << row.se;
    if (row.failed) out << ",failed";
    out << "\n";
  }
}

// (tau, x, mean, lower, upper) rows from the thinned draws.
inline void write_quantiles_csv(const std::string& path, const PosteriorDraws& draws,
                                const QuantileLevels& levels, const Eigen::VectorXd& xs,
                                double level = 0.95) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "tau,x,mean,lower,upper\n" << std::setprecision(10);
  QuantileSurface mean;
  mean.q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(levels.size()), xs.size());
  for (const Draw& d : draws.draws) mean.q += d.q;
  mean.q /= static_cast<double>(draws.draws.size());
  for (std::size_t t = 0; t < levels.size(); ++t)
    for (Eigen::Index i = 0; i < xs.size(); ++i) {
      std::vector<double> vals;
      vals.reserve(draws.draws.size());
      for (const Draw& d : draws.draws) vals.push_back(d.q(static_cast<Eigen::Index>(t), i));
      auto [lo, hi] = percentile_interval(std::move(vals), level);
      out << levels[t] << ',' << xs(i) << ',' << mean.q(static_cast<Eigen::Index>(t), i) << ','
          << lo << ',' << hi << "\n";
    }
}

// (tau, coefficient, estimate, lower, upper) rows.
inline void write_slopes_csv(const std::string& path, const std::vector<LinearFit>& fits,
                             const QuantileLevels& levels) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << "tau,coefficient,estimate,lower,upper\n" << std::setprecision(10);
  for (std::size_t t = 0; t < fits.size(); ++t)
    for (Eigen::Index j = 0; j < fits[t].coef.size(); ++j)
      out << levels[t] << ',' << j << ',' << fits[t].coef(j) << ',' << fits[t].lower(j) << ','
          << fits[t].upper(j) << "\n";
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write " + path);
  out << text;
}

}  // namespace dqp
