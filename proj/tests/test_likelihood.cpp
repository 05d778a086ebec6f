#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dqp/likelihood.hpp"
#include "dqp/prior.hpp"
#include "dqp/rng.hpp"
#include "helpers.hpp"

using namespace dqp;

namespace {

QuantileSurface single_column(std::vector<double> vals) {
  QuantileSurface s;
  s.scale = Scale::real;
  s.q.resize(static_cast<Eigen::Index>(vals.size()), 1);
  for (std::size_t t = 0; t < vals.size(); ++t) s.q(static_cast<Eigen::Index>(t), 0) = vals[t];
  return s;
}

double obs_log_density(double y, const QuantileSurface& s, const MappingParams& p,
                       const QuantileLevels* lv) {
  Dataset d{s.q.cols() == 1 ? CovariateSet::from_scalar({0.0}) : CovariateSet{}, Eigen::VectorXd(1),
            {0}};
  d.y(0) = y;
  return log_likelihood(d, s, p, lv);
}

}  // namespace

TEST_CASE("single median knot at the trend reduces to the plain normal") {
  QuantileLevels lv({0.5});
  MappingParams p(Eigen::VectorXd::Constant(1, 1.7), Eigen::VectorXd::Constant(1, 0.8));
  QuantileSurface s = single_column({1.7});
  for (double y : {-2.0, 0.0, 1.7, 2.4, 6.0}) {
    double want = norm_log_pdf((y - 1.7) / 0.8) - std::log(0.8);
    CHECK(obs_log_density(y, s, p, &lv) == Catch::Approx(want).margin(1e-12));
  }
}

TEST_CASE("knots at exact normal quantiles reproduce the normal density") {
  QuantileLevels lv({0.25, 0.5, 0.75});
  double mu = -0.4, sg = 2.2;
  MappingParams p(Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, sg));
  QuantileSurface s = single_column({mu + sg * norm_quantile(0.25), mu, mu + sg * norm_quantile(0.75)});
  for (double y : {-5.0, -1.2, -0.4, 0.1, 3.9}) {
    double want = norm_log_pdf((y - mu) / sg) - std::log(sg);
    CHECK(obs_log_density(y, s, p, &lv) == Catch::Approx(want).margin(1e-10));
  }
}

TEST_CASE("density integrates to one") {
  Rng rng(401);
  QuantileLevels lv({0.25, 0.5, 0.75});
  for (int rep = 0; rep < 20; ++rep) {
    double mu = -1.0 + 2.0 * rng.uniform();
    double sg = 0.5 + 1.5 * rng.uniform();
    // random knots: sorted normal-ish values around mu
    std::vector<double> knots;
    for (int t = 0; t < 3; ++t) knots.push_back(mu + sg * (-2.0 + 4.0 * rng.uniform()));
    std::sort(knots.begin(), knots.end());
    if (knots[1] - knots[0] < 1e-3 || knots[2] - knots[1] < 1e-3) continue;
    QuantileSurface s = single_column(knots);
    MappingParams p(Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, sg));

    auto f = [&](double y) { return std::exp(obs_log_density(y, s, p, &lv)); };
    // integrate piecewise: knots are density discontinuities
    std::vector<double> cuts{mu - 10.0 * sg, knots[0], knots[1], knots[2], mu + 10.0 * sg};
    double total = 0.0;
    for (std::size_t j = 0; j + 1 < cuts.size(); ++j)
      total += testutil::adaptive_simpson(f, cuts[j], cuts[j + 1], 1e-10);
    CHECK(total == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("piecewise cdf") {
  QuantileLevels lv({0.2, 0.5, 0.9});
  double mu = 0.3, sg = 1.1;
  MappingParams p(Eigen::VectorXd::Constant(1, mu), Eigen::VectorXd::Constant(1, sg));
  QuantileSurface s = single_column({-0.9, 0.4, 2.0});

  SECTION("knot identities and limits") {
    CHECK(piecewise_cdf_at(-0.9, s, 0, p, &lv) == Catch::Approx(0.2).margin(1e-14));
    CHECK(piecewise_cdf_at(0.4, s, 0, p, &lv) == Catch::Approx(0.5).margin(1e-14));
    CHECK(piecewise_cdf_at(2.0, s, 0, p, &lv) == Catch::Approx(0.9).margin(1e-14));
    CHECK(piecewise_cdf_at(-60.0, s, 0, p, &lv) == Catch::Approx(0.0).margin(1e-12));
    CHECK(piecewise_cdf_at(60.0, s, 0, p, &lv) == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("monotone and continuous") {
    double prev = 0.0;
    for (double y = -6.0; y <= 6.0; y += 0.01) {
      double f = piecewise_cdf_at(y, s, 0, p, &lv);
      CHECK(f >= prev - 1e-12);
      prev = f;
    }
  }

  SECTION("derivative matches the density") {
    for (double y : {-1.5, -0.2, 0.7, 1.4, 3.0}) {
      double h = 1e-6;
      double fd = (piecewise_cdf_at(y + h, s, 0, p, &lv) - piecewise_cdf_at(y - h, s, 0, p, &lv)) /
                  (2.0 * h);
      CHECK(fd == Catch::Approx(std::exp(obs_log_density(y, s, p, &lv))).epsilon(1e-6));
    }
  }
}

TEST_CASE("vanished piece mass rejects instead of returning infinities") {
  QuantileLevels lv({0.4, 0.6});
  MappingParams p(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0));
  QuantileSurface s = single_column({40.0, 41.0});  // middle piece has ~0 normal mass
  CHECK(obs_log_density(40.5, s, p, &lv) == kNegInf);
}

TEST_CASE("observations map to sites by exact covariate match") {
  Dataset d = Dataset::from_xy({1.0, 2.0, 1.0, 3.0, 2.0}, {0.1, 0.2, 0.3, 0.4, 0.5});
  CHECK(d.sites.size() == 3);
  CHECK(d.site == std::vector<int>{0, 1, 0, 2, 1});
  CHECK(d.count() == 5);
}
