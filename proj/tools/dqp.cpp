// Command-line front end: prior simulation, posterior fitting, prediction at
// new covariate values, linearized summaries, the simulation-study benchmark,
// and the Levy-distance property check.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 I/O error.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "dqp/dqp.hpp"

namespace fs = std::filesystem;
using namespace dqp;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;  // 0 = keep the config's seed
  int threads = 0;
};

RunConfig load(const CommonArgs& args) {
  RunConfig c = load_config(args.config_path);
  if (args.seed != 0) {
    c.seed = args.seed;
    c.mcmc.seed = args.seed;
    c.cyclone.mcmc.seed = args.seed;
  }
  if (args.threads != 0) c.threads = args.threads;
  fs::create_directories(args.out_dir);
  return c;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void cmd_sample_prior(const CommonArgs& args) {
  RunConfig c = load(args);
  if (c.prior_x.empty()) throw invalid_argument("config: prior.x is required for sample-prior");
  PyramidLayout layout = c.make_layout();
  AlphaSchedule alphas = martingale_alphas(layout, c.concentration);
  CovariateSet X = CovariateSet::from_scalar(c.prior_x);
  if (!X.distinct()) throw invalid_argument("config: prior.x has duplicates");
  GpDependence dep{cholesky_with_jitter(correlation_matrix(c.kernel, X)), {}};
  VRoute route = (c.route == "beta") ? VRoute::beta : VRoute::gamma;

  Rng rng(c.seed);
  Eigen::VectorXd xs = X.points.col(0);
  std::ofstream out(join(args.out_dir, "prior_draws.jsonl"));
  if (!out) throw io_error("cannot write prior_draws.jsonl");
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(layout.level_count()), X.size());
  for (int k = 0; k < c.prior_draws; ++k) {
    FdqpDraw d = sample_fdqp_uniform(layout, alphas, dep, X.size(), rng, route);
    if (!d.uniform.non_crossing()) throw numerical_error("sample-prior: crossing draw");
    out << surface_json(d.uniform, layout.levels(), xs, nullptr).dump() << "\n";
    mean += d.uniform.q;
  }
  mean /= static_cast<double>(c.prior_draws);
  QuantileSurface ms;
  ms.q = mean;
  ms.scale = Scale::uniform;
  write_surface_csv(join(args.out_dir, "prior_mean.csv"), ms, layout.levels(), xs);
  write_text(join(args.out_dir, "layout.txt"), layout.serialize());
  std::cout << "sample-prior: " << c.prior_draws << " draws at " << X.size() << " sites -> "
            << args.out_dir << "\n";
}

void write_fit_outputs(const std::string& out_dir, const DqpModel& model,
                       const PosteriorDraws& draws) {
  const QuantileLevels& levels = model.layout->levels();
  Eigen::VectorXd xs = model.sites.points.col(0);
  write_draws_jsonl(join(out_dir, "draws.jsonl"), draws);
  write_quantiles_csv(join(out_dir, "quantiles.csv"), draws, levels, xs);
  Eigen::VectorXd w = empirical_weights(model.data);
  std::vector<LinearFit> fits;
  for (std::size_t t = 0; t < levels.size(); ++t)
    fits.push_back(slope_intervals(draws, model.design, static_cast<int>(t), w));
  write_slopes_csv(join(out_dir, "slopes.csv"), fits, levels);

  std::ofstream acc(join(out_dir, "acceptance.csv"));
  acc << "move,proposed,accepted,degenerate,rate\n";
  for (std::size_t t = 0; t < draws.per_level.size(); ++t)
    acc << "level_" << levels[t] << ',' << draws.per_level[t].proposed << ','
        << draws.per_level[t].accepted << ',' << draws.per_level[t].degenerate << ','
        << draws.per_level[t].rate() << "\n";
  acc << "trend," << draws.trend_moves.proposed << ',' << draws.trend_moves.accepted << ','
      << draws.trend_moves.degenerate << ',' << draws.trend_moves.rate() << "\n";
  acc << "scale," << draws.scale_moves.proposed << ',' << draws.scale_moves.accepted << ','
      << draws.scale_moves.degenerate << ',' << draws.scale_moves.rate() << "\n";
}

void cmd_fit(const CommonArgs& args, const std::string& data_path) {
  RunConfig c = load(args);
  Dataset data = read_dataset_csv(data_path);
  DqpModel model = model_from_config(c, std::move(data));
  PosteriorDraws draws = run_chain(model, c.mcmc);
  write_fit_outputs(args.out_dir, model, draws);
  write_text(join(args.out_dir, "layout.txt"), model.layout->serialize());
  std::cout << "fit: " << draws.draws.size() << " thinned draws -> " << args.out_dir << "\n";
}

void cmd_predict(const CommonArgs& args, const std::string& data_path,
                 const std::string& draws_path, const std::vector<double>& x_star) {
  RunConfig c = load(args);
  Dataset data = read_dataset_csv(data_path);
  DqpModel model = model_from_config(c, std::move(data));
  PosteriorDraws draws = read_draws_jsonl(draws_path);
  if (draws.draws.empty()) throw io_error("predict: no draws in " + draws_path);
  if (draws.draws.front().z.rows() != static_cast<Eigen::Index>(model.level_count()))
    throw invalid_argument("predict: draws do not carry latents for this layout");

  Rng rng(c.seed);
  std::ofstream out(join(args.out_dir, "predictive_quantiles.csv"));
  if (!out) throw io_error("cannot write predictive_quantiles.csv");
  out << "tau,x,mean,lower,upper\n" << std::setprecision(10);
  const QuantileLevels& levels = model.layout->levels();
  for (double xv : x_star) {
    auto grids = predict_new_x(model, draws, Eigen::RowVectorXd::Constant(1, xv), rng);
    for (std::size_t t = 0; t < levels.size(); ++t) {
      std::vector<double> vals;
      for (const auto& g : grids) vals.push_back(g.values[t]);
      double mean = 0.0;
      for (double v : vals) mean += v;
      mean /= static_cast<double>(vals.size());
      auto [lo, hi] = percentile_interval(vals, 0.95);
      out << levels[t] << ',' << xv << ',' << mean << ',' << lo << ',' << hi << "\n";
    }
  }
  std::cout << "predict: " << x_star.size() << " sites -> " << args.out_dir << "\n";
}

void cmd_linearize(const CommonArgs& args, const std::string& data_path,
                   const std::string& draws_path) {
  RunConfig c = load(args);
  Dataset data = read_dataset_csv(data_path);
  DqpModel model = model_from_config(c, std::move(data));
  PosteriorDraws draws = read_draws_jsonl(draws_path);
  Eigen::VectorXd w = empirical_weights(model.data);
  const QuantileLevels& levels = model.layout->levels();
  std::vector<LinearFit> fits;
  for (std::size_t t = 0; t < levels.size(); ++t)
    fits.push_back(slope_intervals(draws, model.design, static_cast<int>(t), w));
  write_slopes_csv(join(args.out_dir, "slopes.csv"), fits, levels);
  std::cout << "linearize: " << levels.size() << " levels -> " << args.out_dir << "\n";
}

void cmd_bench(const CommonArgs& args) {
  RunConfig c = load(args);
  if (!c.cyclone_csv.empty()) {
    Dataset data = read_dataset_csv(c.cyclone_csv);
    CycloneConfig cc = c.cyclone;
    CycloneResult res = cyclone_pipeline(data, cc);
    std::cout << "cyclone: " << res.rows << " rows";
    if (res.range_warning) std::cout << " (warning: responses outside the expected range)";
    std::cout << "\n";
    Eigen::VectorXd years = res.sites.points.col(0).array() + res.year_offset;
    write_quantiles_csv(join(args.out_dir, "quantiles.csv"), res.draws, cyclone_levels(), years);
    write_slopes_csv(join(args.out_dir, "slopes.csv"), res.slopes, cyclone_levels());
    const auto& lv = cyclone_levels();
    for (std::size_t t = 0; t < lv.size(); ++t)
      std::cout << "  slope(tau=" << lv[t] << ") = " << res.slopes[t].coef(1) << " ["
                << res.slopes[t].lower(1) << ", " << res.slopes[t].upper(1) << "]\n";
    return;
  }
  if (c.cells.empty()) throw invalid_argument("config: bench.cells is empty");
  StudyConfig sc;
  sc.cells = c.cells;
  sc.datasets = c.published_design ? 100 : c.datasets;
  sc.mcmc = c.mcmc;
  sc.phi = c.kernel.range;
  sc.threads = c.threads;
  sc.seed = c.seed;
  if (c.published_design) {
    sc.mcmc.warmup = 1000;
    sc.mcmc.iterations = 100000;
    sc.mcmc.thin = 100;
    std::cerr << "warning: full published design requested (100 datasets x 100k iterates per "
                 "cell); expect a long run\n";
  }
  StudyReport report = run_study(sc);
  write_amse_report(join(args.out_dir, "amse_report.csv"), report);
  for (const StudyRow& row : report.rows)
    if (row.method == "DQP" || row.method == "DQP-lm")
      std::cout << row.scenario << " T=" << row.T << " n=" << row.n << " " << row.method
                << " AMSE=" << row.amse << " (se " << row.se << ")" << (row.failed ? " [failures]" : "")
                << "\n";
}

void cmd_levy_check(const std::string& out_dir, int pairs, std::uint64_t seed) {
  fs::create_directories(out_dir);
  Rng rng(seed);
  double worst_excess = -1.0;
  std::ofstream out(join(out_dir, "levy_report.csv"));
  if (!out) throw io_error("cannot write levy_report.csv");
  out << "pair,gap,levy,excess\n" << std::setprecision(12);
  for (int rep = 0; rep < pairs; ++rep) {
    // random binary pyramid refined twice from a shared coarse draw
    int m = 1 + static_cast<int>(rng.uniform() * 3);
    int extra = 1 + static_cast<int>(rng.uniform() * 2);
    auto grow = [&](std::vector<double> taus, std::vector<double> vals, int target) {
      while (static_cast<int>(std::log2(taus.size() + 1)) < target) {
        std::vector<double> nt, nv;
        double lt = 0.0, lv = 0.0;
        for (std::size_t g = 0; g <= taus.size(); ++g) {
          double ht = (g == taus.size()) ? 1.0 : taus[g];
          double hv = (g == taus.size()) ? 1.0 : vals[g];
          double v = 0.15 + 0.7 * rng.uniform();
          nt.push_back(0.5 * (lt + ht));
          nv.push_back(lv + v * (hv - lv));
          if (g < taus.size()) {
            nt.push_back(ht);
            nv.push_back(hv);
          }
          lt = ht;
          lv = hv;
        }
        taus = nt;
        vals = nv;
      }
      return QuantileGrid(QuantileLevels(taus), vals);
    };
    QuantileGrid coarse = grow({}, {}, m);
    QuantileGrid fa = grow(coarse.levels.values(), coarse.values, m + extra);
    QuantileGrid fb = grow(coarse.levels.values(), coarse.values, m + extra);
    double gap = std::pow(0.5, m);
    double d = levy_distance(induced_cdf(fa), induced_cdf(fb));
    out << rep << ',' << gap << ',' << d << ',' << d - gap << "\n";
    worst_excess = std::max(worst_excess, d - gap);
  }
  std::cout << "levy-check: " << pairs << " pairs, worst excess over the shared-gap bound = "
            << worst_excess << (worst_excess <= 1e-9 ? " (bound holds)" : " (BOUND VIOLATED)")
            << "\n";
  if (worst_excess > 1e-9) throw numerical_error("levy-check: bound violated");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dependent quantile pyramids: prior simulation, posterior fitting, prediction, "
               "and benchmarks"};
  app.require_subcommand(1);

  CommonArgs common;
  std::string data_path, draws_path;
  std::vector<double> x_star;
  int pairs = 1000;

  auto add_common = [&](CLI::App* sub, bool needs_config = true) {
    if (needs_config) sub->add_option("--config", common.config_path, "JSON run config")->required();
    sub->add_option("--out-dir", common.out_dir, "output directory");
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--threads", common.threads, "worker threads for benchmarks");
  };

  CLI::App* sp = app.add_subcommand("sample-prior", "draw surfaces from the prior");
  add_common(sp);
  CLI::App* fit = app.add_subcommand("fit", "run the posterior sampler on a dataset");
  add_common(fit);
  fit->add_option("--data", data_path, "input CSV (x,y)")->required();
  CLI::App* pred = app.add_subcommand("predict", "predictive quantiles at new covariate values");
  add_common(pred);
  pred->add_option("--data", data_path, "input CSV used for the fit")->required();
  pred->add_option("--draws", draws_path, "draws.jsonl from fit")->required();
  pred->add_option("--x-star", x_star, "new covariate values")->required();
  CLI::App* lin = app.add_subcommand("linearize", "linearized fits from saved draws");
  add_common(lin);
  lin->add_option("--data", data_path, "input CSV used for the fit")->required();
  lin->add_option("--draws", draws_path, "draws.jsonl from fit")->required();
  CLI::App* bench = app.add_subcommand("bench", "simulation study or cyclone pipeline");
  add_common(bench);
  CLI::App* levy = app.add_subcommand("levy-check", "distance bound on refinement pairs");
  add_common(levy, false);
  levy->add_option("--pairs", pairs, "number of random refinement pairs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  try {
    if (sp->parsed()) cmd_sample_prior(common);
    if (fit->parsed()) cmd_fit(common, data_path);
    if (pred->parsed()) cmd_predict(common, data_path, draws_path, x_star);
    if (lin->parsed()) cmd_linearize(common, data_path, draws_path);
    if (bench->parsed()) cmd_bench(common);
    if (levy->parsed()) cmd_levy_check(common.out_dir, pairs, common.seed ? common.seed : 1);
  } catch (const invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const io_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 4;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
