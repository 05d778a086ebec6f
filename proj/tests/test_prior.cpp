#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dqp/prior.hpp"
#include "helpers.hpp"

using namespace dqp;

namespace {

GpDependence shared_dependence(const Eigen::MatrixXd& lambda) {
  return GpDependence{cholesky_with_jitter(lambda), {}};
}

}  // namespace

TEST_CASE("forward sampling of the uniform surface") {
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  AlphaSchedule alphas = martingale_alphas(layout);

  SECTION("single site: the root quantile is a beta variate") {
    GpDependence dep = shared_dependence(Eigen::MatrixXd::Identity(1, 1));
    Rng rng(101);
    std::vector<double> medians;
    for (int i = 0; i < 10000; ++i) {
      FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 1, rng);
      REQUIRE(d.uniform.non_crossing());
      medians.push_back(d.uniform.q(1, 0));
    }
    // root alphas are (18, 18) under c_m = (m+5)^2
    double ks = testutil::ks_one_sample(medians, [](double x) { return inc_beta(18.0, 18.0, x); });
    CHECK(ks < testutil::ks_crit_one(medians.size()));
  }

  SECTION("perfect correlation collapses the columns") {
    GpDependence dep = shared_dependence(Eigen::MatrixXd::Ones(4, 4));
    Rng rng(103);
    for (int i = 0; i < 50; ++i) {
      FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 4, rng);
      for (Eigen::Index t = 0; t < 3; ++t) {
        double ref = d.uniform.q(t, 0);
        CHECK((d.uniform.q.row(t).array() - ref).abs().maxCoeff() < 0.05);
      }
    }
  }

  SECTION("independent sites decorrelate the medians") {
    GpDependence dep = shared_dependence(Eigen::MatrixXd::Identity(2, 2));
    Rng rng(107);
    std::vector<double> a, b;
    for (int i = 0; i < 4000; ++i) {
      FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 2, rng);
      a.push_back(d.uniform.q(1, 0));
      b.push_back(d.uniform.q(1, 1));
    }
    CHECK(std::fabs(testutil::spearman(a, b)) < 0.05);
  }

  SECTION("gamma route also yields non-crossing simplex draws") {
    GpDependence dep = shared_dependence(Eigen::MatrixXd::Identity(3, 3));
    Rng rng(109);
    for (int i = 0; i < 200; ++i) {
      FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 3, rng, VRoute::gamma);
      CHECK(d.uniform.non_crossing());
      for (const auto& v : d.node_v) {
        Eigen::VectorXd sums = v.colwise().sum();
        CHECK((sums.array() - 1.0).abs().maxCoeff() < 1e-12);
      }
    }
  }

  SECTION("latent matrix lines up with the placements") {
    GpDependence dep = shared_dependence(Eigen::MatrixXd::Identity(2, 2));
    Rng rng(113);
    FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 2, rng);
    Eigen::MatrixXd z = latent_matrix(d, layout);
    CHECK(z.rows() == 3);
    CHECK(z.row(1) == d.node_z[0].row(0));  // median lives at the root
  }
}

TEST_CASE("kernel range controls the cross-site dependence of the medians") {
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  AlphaSchedule alphas = martingale_alphas(layout);
  CovariateSet X = CovariateSet::from_scalar({1.0, 2.0});
  auto median_corr = [&](double phi, std::uint64_t seed) {
    Eigen::MatrixXd lam = correlation_matrix(CorrelationKernel(KernelFamily::gaussian, phi), X);
    GpDependence dep = shared_dependence(lam);
    Rng rng(seed);
    std::vector<double> a, b;
    for (int k = 0; k < 3000; ++k) {
      FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 2, rng);
      a.push_back(d.uniform.q(1, 0));
      b.push_back(d.uniform.q(1, 1));
    }
    return testutil::spearman(a, b);
  };
  double wide = median_corr(50.0, 11);
  double narrow = median_corr(0.5, 13);
  INFO("phi=50 corr " << wide << ", phi=0.5 corr " << narrow);
  CHECK(wide > narrow + 0.2);
}

TEST_CASE("map to the real line") {
  QuantileSurface s;
  s.scale = Scale::uniform;
  s.q.resize(2, 1);
  s.q << 0.5, 0.975;
  MappingParams params(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 3.0));
  QuantileSurface r = map_to_real(s, params);
  CHECK(r.q(0, 0) == Catch::Approx(2.0).margin(1e-12));

  MappingParams std01(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  QuantileSurface r2 = map_to_real(s, std01);
  CHECK(r2.q(1, 0) == Catch::Approx(1.959964).margin(1e-5));
  CHECK(r2.non_crossing());

  SECTION("exact 0 or 1 is rejected") {
    QuantileSurface bad;
    bad.scale = Scale::uniform;
    bad.q.resize(1, 1);
    bad.q << 1.0;
    CHECK_THROWS_AS(map_to_real(bad, std01), invalid_argument);
  }
}

TEST_CASE("h transform") {
  SECTION("symmetric root case is zero") {
    CHECK(h_transform(0.0, kNegInf, kInf, 0.0, 1.0, 7.3, 7.3) == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("round trip recovers the latent to 1e-8") {
    Rng rng(211);
    for (int rep = 0; rep < 1000; ++rep) {
      double mu = -2.0 + 4.0 * rng.uniform();
      double sigma = 0.5 + 2.0 * rng.uniform();
      double a = 0.5 + 20.0 * rng.uniform();
      double b = 0.5 + 20.0 * rng.uniform();
      double z = -3.0 + 6.0 * rng.uniform();
      double qL = kNegInf, qR = kInf;
      if (rng.uniform() < 0.7) qL = mu + sigma * (-3.0 + 2.0 * rng.uniform());
      if (rng.uniform() < 0.7) qR = mu + sigma * (1.0 + 2.0 * rng.uniform());
      double q = forward_from_z(z, qL, qR, mu, sigma, a, b);
      REQUIRE(std::isfinite(q));
      CHECK(h_transform(q, qL, qR, mu, sigma, a, b) == Catch::Approx(z).margin(1e-8));
    }
  }

  SECTION("boundary behavior near the left endpoint") {
    double qL = -1.0, qR = 1.0;
    HResult r = h_with_jacobian(qL + 1e-13, qL, qR, 0.0, 1.0, 2.0, 2.0);
    CHECK(r.ok);
    CHECK(r.z < -6.0);
  }

  SECTION("ordering violations are rejected") {
    CHECK_THROWS_AS(h_transform(2.0, -1.0, 1.0, 0.0, 1.0, 2.0, 2.0), invalid_argument);
  }
}

TEST_CASE("jacobian factors match central finite differences") {
  Rng rng(223);
  int checked = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    double mu = -1.0 + 2.0 * rng.uniform();
    double sigma = 0.5 + 1.5 * rng.uniform();
    double a = 0.8 + 15.0 * rng.uniform();
    double b = 0.8 + 15.0 * rng.uniform();
    double qL = (rng.uniform() < 0.5) ? kNegInf : mu - sigma * (1.0 + 2.0 * rng.uniform());
    double qR = (rng.uniform() < 0.5) ? kInf : mu + sigma * (1.0 + 2.0 * rng.uniform());
    double z = -2.0 + 4.0 * rng.uniform();
    double q = forward_from_z(z, qL, qR, mu, sigma, a, b);
    REQUIRE(std::isfinite(q));

    HResult r = h_with_jacobian(q, qL, qR, mu, sigma, a, b);
    REQUIRE(r.ok);
    double step = 1e-6 * sigma;
    if (!(q - step > qL && q + step < qR)) continue;
    double zp = h_transform(q + step, qL, qR, mu, sigma, a, b);
    double zm = h_transform(q - step, qL, qR, mu, sigma, a, b);
    double fd = (zp - zm) / (2.0 * step);
    CHECK(std::exp(r.log_jac) == Catch::Approx(std::fabs(fd)).epsilon(1e-5));
    ++checked;
  }
  CHECK(checked > 900);
}

namespace {

// Direct top-down conditional-beta density for a single site: each level
// contributes psi(ratio; a, b) * phi(q; mu, sigma) / (Phi(qR) - Phi(qL)).
double univariate_log_density(const QuantileSurface& s, const MappingParams& params,
                              const PyramidLayout& layout, const BetaLevelParams& betas) {
  auto parents = parent_indices(layout);
  double total = 0.0;
  for (int t : layout.pyramid_order()) {
    double q = s.q(t, 0);
    double qL = parents[static_cast<std::size_t>(t)].left < 0 ? kNegInf
                : s.q(parents[static_cast<std::size_t>(t)].left, 0);
    double qR = parents[static_cast<std::size_t>(t)].right < 0 ? kInf
                : s.q(parents[static_cast<std::size_t>(t)].right, 0);
    double mu = params.mu(0), sg = params.sigma(0);
    double fl = (qL == kNegInf) ? 0.0 : norm_cdf((qL - mu) / sg);
    double fr = (qR == kInf) ? 1.0 : norm_cdf((qR - mu) / sg);
    double ratio = (norm_cdf((q - mu) / sg) - fl) / (fr - fl);
    total += beta_log_pdf(ratio, betas.a[static_cast<std::size_t>(t)], betas.b[static_cast<std::size_t>(t)]) +
             norm_log_pdf((q - mu) / sg) - std::log(sg) - std::log(fr - fl);
  }
  return total;
}

}  // namespace

TEST_CASE("log prior density") {
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  AlphaSchedule alphas = martingale_alphas(layout);
  BetaLevelParams betas = beta_level_params(layout, alphas);

  SECTION("single site matches the direct conditional-beta oracle") {
    auto chol = cholesky_with_jitter(Eigen::MatrixXd::Identity(1, 1));
    MappingParams params(Eigen::VectorXd::Constant(1, 0.3), Eigen::VectorXd::Constant(1, 1.2));
    Rng rng(301);
    GpDependence dep = shared_dependence(Eigen::MatrixXd::Identity(1, 1));
    for (int rep = 0; rep < 50; ++rep) {
      FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 1, rng);
      QuantileSurface s = map_to_real(d.uniform, params);
      double got = log_prior_density(s, chol, params, layout, betas);
      double want = univariate_log_density(s, params, layout, betas);
      CHECK(got == Catch::Approx(want).margin(1e-8));
    }
  }

  SECTION("site relabeling leaves the density unchanged") {
    Eigen::MatrixXd lambda(3, 3);
    lambda << 1.0, 0.6, 0.2, 0.6, 1.0, 0.5, 0.2, 0.5, 1.0;
    MappingParams params((Eigen::VectorXd(3) << 0.0, 0.5, 1.0).finished(),
                         (Eigen::VectorXd(3) << 1.0, 1.3, 0.8).finished());
    Rng rng(307);
    GpDependence dep = shared_dependence(lambda);
    FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 3, rng);
    QuantileSurface s = map_to_real(d.uniform, params);
    double base = log_prior_density(s, cholesky_with_jitter(lambda), params, layout, betas);

    std::vector<int> perm{2, 0, 1};
    Eigen::MatrixXd lp(3, 3);
    QuantileSurface sp;
    sp.scale = Scale::real;
    sp.q.resize(3, 3);
    Eigen::VectorXd mp(3), gp(3);
    for (int i = 0; i < 3; ++i) {
      mp(i) = params.mu(perm[static_cast<std::size_t>(i)]);
      gp(i) = params.sigma(perm[static_cast<std::size_t>(i)]);
      sp.q.col(i) = s.q.col(perm[static_cast<std::size_t>(i)]);
      for (int j = 0; j < 3; ++j) lp(i, j) = lambda(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    double permuted = log_prior_density(sp, cholesky_with_jitter(lp), MappingParams(mp, gp), layout, betas);
    CHECK(base == Catch::Approx(permuted).margin(1e-9));
  }

  SECTION("crossing surfaces get minus infinity") {
    auto chol = cholesky_with_jitter(Eigen::MatrixXd::Identity(1, 1));
    MappingParams params(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
    QuantileSurface s;
    s.scale = Scale::real;
    s.q.resize(3, 1);
    s.q << 0.0, -0.5, 0.5;
    CHECK(log_prior_density(s, chol, params, layout, betas) == kNegInf);
  }

  SECTION("total mass is one by importance sampling") {
    // Flat concentration makes the prior diffuse enough for a normal proposal.
    AlphaSchedule flat = martingale_alphas(layout, constant_concentration(4.0));
    BetaLevelParams fb = beta_level_params(layout, flat);
    Eigen::MatrixXd lambda(2, 2);
    lambda << 1.0, 0.5, 0.5, 1.0;
    auto chol = cholesky_with_jitter(lambda);
    MappingParams params(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
    Rng rng(311);
    double proposal_sd = 1.6;
    int draws = 400000;
    double acc = 0.0;
    for (int s = 0; s < draws; ++s) {
      QuantileSurface cand;
      cand.scale = Scale::real;
      cand.q.resize(3, 2);
      double log_g = 0.0;
      for (int col = 0; col < 2; ++col) {
        std::vector<double> qs(3);
        for (auto& q : qs) {
          q = proposal_sd * rng.normal();
          log_g += norm_log_pdf(q / proposal_sd) - std::log(proposal_sd);
        }
        std::sort(qs.begin(), qs.end());
        log_g += std::log(6.0);  // 3! orderings collapse onto the sorted point
        for (int t = 0; t < 3; ++t) cand.q(t, col) = qs[static_cast<std::size_t>(t)];
      }
      double log_pi = log_prior_density(cand, chol, params, layout, fb);
      if (log_pi > kNegInf) acc += std::exp(log_pi - log_g);
    }
    CHECK(acc / draws == Catch::Approx(1.0).epsilon(0.02));
  }
}

TEST_CASE("forward samples agree with the density pointwise") {
  // Histogram of the root draw against exp(log_prior_density) on a grid.
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.5}));
  AlphaSchedule alphas = martingale_alphas(layout, constant_concentration(6.0));
  BetaLevelParams betas = beta_level_params(layout, alphas);
  auto chol = cholesky_with_jitter(Eigen::MatrixXd::Identity(1, 1));
  MappingParams params(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1));
  GpDependence dep = shared_dependence(Eigen::MatrixXd::Identity(1, 1));
  Rng rng(313);

  int draws = 200000;
  int bins = 16;
  double lo = -1.6, hi = 1.6;
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (int i = 0; i < draws; ++i) {
    FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, 1, rng);
    double q = params.mu(0) + params.sigma(0) * norm_quantile(d.uniform.q(0, 0));
    int b = static_cast<int>((q - lo) / (hi - lo) * bins);
    if (b >= 0 && b < bins) counts[static_cast<std::size_t>(b)] += 1.0;
  }
  for (int b = 0; b < bins; ++b) {
    double mid = lo + (b + 0.5) * (hi - lo) / bins;
    QuantileSurface s;
    s.scale = Scale::real;
    s.q.resize(1, 1);
    s.q << mid;
    double dens = std::exp(log_prior_density(s, chol, params, layout, betas));
    double expected = dens * (hi - lo) / bins;
    if (expected < 0.01) continue;
    double got = counts[static_cast<std::size_t>(b)] / draws;
    CHECK(got == Catch::Approx(expected).epsilon(0.08));
  }
}

TEST_CASE("beta level params") {
  PyramidLayout layout = build_oblique_layout(QuantileLevels({0.25, 0.5, 0.75}));
  AlphaSchedule alphas = martingale_alphas(layout);
  BetaLevelParams bp = beta_level_params(layout, alphas);
  CHECK(bp.a[1] == Catch::Approx(18.0));  // root level
  CHECK(bp.b[1] == Catch::Approx(18.0));
  CHECK(bp.a[0] == Catch::Approx(12.25));
  CHECK(bp.b[0] == Catch::Approx(12.25));

  // The alternative rule b = 1 - a only makes sense for alpha_1 < 1.
  CHECK_THROWS_AS(beta_level_params(layout, alphas, BetaParamRule::unit_complement),
                  invalid_argument);
  AlphaSchedule small = martingale_alphas(layout, constant_concentration(1.0));
  BetaLevelParams alt = beta_level_params(layout, small, BetaParamRule::unit_complement);
  CHECK(alt.a[1] == Catch::Approx(0.5));
  CHECK(alt.b[1] == Catch::Approx(0.5));
}
