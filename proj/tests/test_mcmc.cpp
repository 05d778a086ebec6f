#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <iostream>
#include <vector>

#include "dqp/inference.hpp"
#include "dqp/mcmc.hpp"
#include "helpers.hpp"

using namespace dqp;

namespace {

TrendPrior paper_trend() {
  return {(Eigen::VectorXd(2) << 5.0, 0.0).finished(),
          (Eigen::VectorXd(2) << 3.0, 3.0).finished()};
}

DqpModel quartile_model(Dataset data, const TrendPrior& trend, double sigma0 = 1.0) {
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  return make_model(layout, default_concentration(), BetaParamRule::martingale,
                    CorrelationKernel(KernelFamily::gaussian, 5.0), trend,
                    scale_profile_constant(sigma0), std::move(data));
}

// Forward draws from the joint prior: beta from its normal prior, the
// pyramid from the canonical construction, mapped through (mu, sigma).
struct ForwardPrior {
  QuantileSurface surface;
  Eigen::VectorXd beta;
};

ForwardPrior forward_prior_draw(const DqpModel& m, Rng& rng) {
  Eigen::VectorXd beta(m.trend.mean.size());
  for (Eigen::Index j = 0; j < beta.size(); ++j)
    beta(j) = m.trend.mean(j) + std::sqrt(m.trend.var(j)) * rng.normal();
  GpDependence dep{m.chol, {}};
  FdqpDraw d = sample_fdqp_uniform(*m.layout, m.alphas, dep, m.sites.size(), rng);
  MappingParams params(m.design * beta, m.sigma0);
  return {map_to_real(d.uniform, params), beta};
}

}  // namespace

TEST_CASE("chains are deterministic given the seed") {
  Dataset data = Dataset::from_xy({1, 1, 2, 2, 3, 3, 4, 4}, {1.2, 0.8, 2.1, 1.7, 3.3, 2.6, 4.0, 4.4});
  DqpModel m = quartile_model(data, paper_trend());
  MCMCConfig cfg;
  cfg.warmup = 200;
  cfg.iterations = 1000;
  cfg.thin = 10;
  cfg.seed = 99;
  PosteriorDraws a = run_chain(m, cfg);
  PosteriorDraws b = run_chain(m, cfg);
  REQUIRE(a.draws.size() == b.draws.size());
  REQUIRE(a.draws.size() == 100);
  for (std::size_t i = 0; i < a.draws.size(); ++i) {
    CHECK(a.draws[i].q == b.draws[i].q);
    CHECK(a.draws[i].beta == b.draws[i].beta);
  }
}

TEST_CASE("every retained state is strictly non-crossing") {
  Dataset data = Dataset::from_xy({1, 1, 1, 2, 2, 2, 3, 3, 3}, {0.9, 1.4, 1.0, 2.2, 1.6, 2.4, 2.9, 3.6, 3.1});
  DqpModel m = quartile_model(data, paper_trend());
  MCMCConfig cfg;
  cfg.warmup = 100;
  cfg.iterations = 2000;
  cfg.thin = 10;
  cfg.seed = 7;
  PosteriorDraws out = run_chain(m, cfg);
  for (const Draw& d : out.draws)
    for (Eigen::Index i = 0; i < d.q.cols(); ++i)
      for (Eigen::Index t = 1; t < d.q.rows(); ++t) REQUIRE(d.q(t, i) > d.q(t - 1, i));
}

TEST_CASE("prior recovery with the likelihood disabled", "[slow]") {
  Dataset empty = Dataset::prior_only(CovariateSet::from_scalar({1.0, 2.0, 3.0}));
  DqpModel m = quartile_model(empty, paper_trend());

  MCMCConfig cfg;
  cfg.warmup = 2000;
  cfg.iterations = 200000;
  cfg.thin = 100;
  cfg.level_step = {1.2, 1.2};
  cfg.trend_step_frac = 0.6;
  cfg.seed = 2024;
  PosteriorDraws out = run_chain(m, cfg);
  REQUIRE(out.draws.size() == 2000);

  Rng rng(515);
  std::vector<std::vector<double>> fwd(3), chain(3);
  std::vector<double> fwd_beta0, chain_beta0;
  for (int i = 0; i < 2000; ++i) {
    ForwardPrior fp = forward_prior_draw(m, rng);
    for (int s = 0; s < 3; ++s) fwd[static_cast<std::size_t>(s)].push_back(fp.surface.q(1, s));
    fwd_beta0.push_back(fp.beta(0));
  }
  for (const Draw& d : out.draws) {
    for (int s = 0; s < 3; ++s) chain[static_cast<std::size_t>(s)].push_back(d.q(1, s));
    chain_beta0.push_back(d.beta(0));
  }
  for (int s = 0; s < 3; ++s) {
    double d = testutil::ks_two_sample(fwd[static_cast<std::size_t>(s)], chain[static_cast<std::size_t>(s)]);
    INFO("site " << s << " KS " << d << " crit " << testutil::ks_crit_two(2000, 2000));
    CHECK(d < testutil::ks_crit_two(2000, 2000));
  }

  SECTION("trend coefficients recover their prior") {
    double d = testutil::ks_two_sample(fwd_beta0, chain_beta0);
    CHECK(d < testutil::ks_crit_two(2000, 2000));
    CHECK(testutil::mean(chain_beta0) == Catch::Approx(5.0).margin(4.0 * std::sqrt(3.0 / 2000.0) * 3.0));
    CHECK(testutil::sd(chain_beta0) == Catch::Approx(std::sqrt(3.0)).epsilon(0.12));
  }
}

TEST_CASE("scale multiplier recovers its prior under a flat likelihood", "[slow]") {
  Dataset empty = Dataset::prior_only(CovariateSet::from_scalar({1.0, 2.5}));
  DqpModel m = quartile_model(empty, paper_trend());
  MCMCConfig cfg;
  cfg.warmup = 2000;
  cfg.iterations = 150000;
  cfg.thin = 75;
  cfg.level_step = {1.2, 1.2};
  cfg.trend_step_frac = 0.6;
  cfg.scale_mode = ScaleMode::sample;
  cfg.scale_step = 0.6;
  cfg.seed = 31;
  PosteriorDraws out = run_chain(m, cfg);
  std::vector<double> ls;
  for (const Draw& d : out.draws) ls.push_back(d.log_scale);
  double d = testutil::ks_one_sample(ls, [&](double x) { return norm_cdf(x / m.scale_prior_sd); });
  INFO("KS " << d << " crit " << testutil::ks_crit_one(ls.size()));
  CHECK(d < testutil::ks_crit_one(ls.size()));
}

TEST_CASE("conjugate check: pure normal likelihood with no quantile levels") {
  // With T = 0 the piecewise density is exactly N(mu_x, sigma_x^2), so the
  // beta posterior is available in closed form.
  Rng gen(66);
  std::vector<double> xs, ys;
  double sig = 1.5;
  for (int i = 1; i <= 5; ++i)
    for (int r = 0; r < 6; ++r) {
      xs.push_back(i);
      ys.push_back(2.0 + 1.0 * i + sig * gen.normal());
    }
  Dataset data = Dataset::from_xy(xs, ys);
  TrendPrior trend{(Eigen::VectorXd(2) << 0.0, 0.0).finished(),
                   (Eigen::VectorXd(2) << 4.0, 4.0).finished()};
  DqpModel m = make_model(std::nullopt, default_concentration(), BetaParamRule::martingale,
                          CorrelationKernel(KernelFamily::gaussian, 5.0), trend,
                          scale_profile_constant(sig), data);

  // Analytic posterior (X on observations, known sigma).
  Eigen::MatrixXd X(data.count(), 2);
  Eigen::VectorXd y(data.count());
  for (Eigen::Index i = 0; i < data.count(); ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = data.sites.points(data.site[static_cast<std::size_t>(i)], 0);
    y(i) = data.y(i);
  }
  Eigen::MatrixXd prec = Eigen::Vector2d(1.0 / 4.0, 1.0 / 4.0).asDiagonal();
  prec += X.transpose() * X / (sig * sig);
  Eigen::VectorXd mean_post = prec.ldlt().solve(X.transpose() * y / (sig * sig));
  Eigen::MatrixXd cov_post = prec.inverse();

  MCMCConfig cfg;
  cfg.warmup = 2000;
  cfg.iterations = 100000;
  cfg.thin = 20;
  cfg.trend_step_frac = 0.05;
  cfg.seed = 5150;
  PosteriorDraws out = run_chain(m, cfg);
  std::vector<double> b0, b1;
  for (const Draw& d : out.draws) {
    b0.push_back(d.beta(0));
    b1.push_back(d.beta(1));
  }
  INFO("trend acceptance " << out.trend_moves.rate());
  CHECK(testutil::mean(b0) == Catch::Approx(mean_post(0)).margin(5.0 * std::sqrt(cov_post(0, 0) / 200.0)));
  CHECK(testutil::mean(b1) == Catch::Approx(mean_post(1)).margin(5.0 * std::sqrt(cov_post(1, 1) / 200.0)));
  CHECK(testutil::sd(b0) == Catch::Approx(std::sqrt(cov_post(0, 0))).epsilon(0.1));
  CHECK(testutil::sd(b1) == Catch::Approx(std::sqrt(cov_post(1, 1))).epsilon(0.1));
}

TEST_CASE("degenerate and identity proposals") {
  Dataset data = Dataset::from_xy({1, 2, 3}, {1.1, 2.0, 2.8});
  DqpModel m = quartile_model(data, paper_trend());
  ChainState st = init_state(m);

  SECTION("zero-width trend proposal leaves the chain unchanged and accepts") {
    ChainState before = st;
    Rng rng(1);
    MoveStats stats;
    update_trend(m, st, {0, 1}, 0.0, rng, stats);
    CHECK(stats.accepted == 1);
    CHECK(st.beta == before.beta);
    CHECK(st.q == before.q);
  }

  SECTION("vanishing step sizes accept almost surely") {
    Rng rng(2);
    MoveStats stats;
    for (int i = 0; i < 200; ++i) update_quantile_level(m, st, 1, 1e-9, rng, stats);
    CHECK(stats.accepted == stats.proposed);
  }
}

TEST_CASE("initialization failures name the offending component") {
  std::vector<double> xs{1, 1, 2, 2}, ys{0.0, 1e200, 0.5, 0.7};
  Dataset data = Dataset::from_xy(xs, ys);
  DqpModel m = quartile_model(data, paper_trend());
  CHECK_THROWS_WITH(init_state(m), Catch::Matchers::ContainsSubstring("observation"));
}

TEST_CASE("desk-scale homogeneous-error fit recovers the linear truth", "[slow]") {
  // n = 100 draws from y = x + e with standard normal errors; the
  // posterior-mean median curve should sit close to the identity line.
  Rng gen(515);
  std::vector<double> xs, ys;
  for (int i = 1; i <= 10; ++i)
    for (int r = 0; r < 10; ++r) {
      xs.push_back(i);
      ys.push_back(i + gen.normal());
    }
  Dataset data = Dataset::from_xy(xs, ys);
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  DqpModel m = make_model(layout, default_concentration(), BetaParamRule::martingale,
                          CorrelationKernel(KernelFamily::gaussian, 5.0), paper_trend(),
                          scale_profile_per_site(data), data);
  MCMCConfig cfg;
  cfg.warmup = 1000;
  cfg.iterations = 20000;
  cfg.thin = 20;
  cfg.trend_step_frac = 0.03;
  cfg.seed = 99;
  PosteriorDraws draws = run_chain(m, cfg);
  QuantileSurface mean = posterior_mean_curves(draws);

  double rms = 0.0;
  for (int i = 0; i < 10; ++i) {
    double err = mean.q(1, i) - (i + 1.0);
    rms += err * err;
  }
  rms = std::sqrt(rms / 10.0);
  INFO("median-curve RMS error " << rms);
  CHECK(rms < 0.25);

  LinearFit fit = slope_intervals(draws, m.design, 1, empirical_weights(m.data));
  INFO("median slope interval [" << fit.lower(1) << ", " << fit.upper(1) << "]");
  CHECK(fit.lower(1) < 1.0);
  CHECK(fit.upper(1) > 1.0);
}

TEST_CASE("acceptance rates are reported per move type") {
  Rng gen(77);
  std::vector<double> xs, ys;
  for (int i = 1; i <= 10; ++i)
    for (int r = 0; r < 10; ++r) {
      xs.push_back(i);
      ys.push_back(i + gen.normal());
    }
  Dataset data = Dataset::from_xy(xs, ys);
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  DqpModel m = make_model(layout, default_concentration(), BetaParamRule::martingale,
                          CorrelationKernel(KernelFamily::gaussian, 5.0), paper_trend(),
                          scale_profile_per_site(data), data);
  MCMCConfig cfg;
  cfg.warmup = 500;
  cfg.iterations = 4000;
  cfg.thin = 20;
  cfg.seed = 8;
  PosteriorDraws out = run_chain(m, cfg);
  std::cout << "[rates] scenario-style smoke run:";
  for (std::size_t t = 0; t < out.per_level.size(); ++t)
    std::cout << " level" << t << "=" << out.per_level[t].rate();
  std::cout << " trend=" << out.trend_moves.rate() << "\n";
  for (const auto& s : out.per_level) {
    CHECK(s.rate() > 0.0);
    CHECK(s.rate() < 1.0);
  }
}
