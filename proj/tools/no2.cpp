// Command line front end: synth | exposure | interpolate | fit | predict |
// validate | run. Exit 0 on success, 2 on input errors, 3 on numerical
// failures.

#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "no2/errors.hpp"
#include "no2/fit.hpp"
#include "no2/ingest.hpp"
#include "no2/interp.hpp"
#include "no2/pipeline.hpp"
#include "no2/predict.hpp"
#include "no2/spatial.hpp"
#include "no2/synth.hpp"
#include "no2/traffic.hpp"
#include "no2/validate.hpp"
#include "no2/version.hpp"

namespace fs = std::filesystem;
using namespace no2;

namespace {

std::vector<Site> select_sites(const std::vector<Site>& all,
                               const std::string& split_file, bool keep) {
  if (split_file.empty()) return all;
  auto ids = pipeline::load_split(split_file);
  std::set<std::string> validation(ids.begin(), ids.end());
  std::vector<Site> out;
  for (const auto& s : all)
    if (validation.count(s.site_id) == keep) out.push_back(s);
  if (out.empty())
    throw InputError(split_file + (keep ? ": no validation sites matched"
                                        : ": no learning sites left"));
  return out;
}

void add_synth(CLI::App& app) {
  auto* cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  auto preset = std::make_shared<std::string>("correlated");
  auto seed = std::make_shared<std::uint64_t>(1);
  auto out = std::make_shared<std::string>();
  auto n_learning = std::make_shared<int>(0);
  auto n_validation = std::make_shared<int>(0);
  auto n_roads = std::make_shared<int>(0);
  cmd->add_option("--preset", *preset,
                  "independent (uncorrelated site intercepts) or correlated "
                  "(spatially correlated site intercepts)")
      ->check(CLI::IsMember({"independent", "correlated"}));
  cmd->add_option("--seed", *seed, "RNG seed");
  cmd->add_option("--out", *out, "output directory")->required();
  cmd->add_option("--n-learning", *n_learning, "override learning site count");
  cmd->add_option("--n-validation", *n_validation,
                  "override validation site count");
  cmd->add_option("--n-roads", *n_roads, "override road count");
  cmd->callback([=] {
    synth::Scenario sc = *preset == "independent"
                             ? synth::Scenario::independent_sites()
                             : synth::Scenario::correlated_sites();
    sc.seed = *seed;
    if (*n_learning > 0) sc.n_learning = *n_learning;
    if (*n_validation > 0) sc.n_validation = *n_validation;
    if (*n_roads > 0) sc.n_roads = *n_roads;
    synth::Dataset ds = synth::generate(sc);
    synth::write_dataset(sc, ds, *out);
    std::cout << "synth: " << ds.sites.size() << " sites ("
              << ds.validation_site_ids.size() << " validation), "
              << ds.roads.size() << " roads, " << ds.monitors.size()
              << " monitors -> " << *out << "\n";
  });
}

void add_exposure(CLI::App& app) {
  auto* cmd =
      app.add_subcommand("exposure", "Ring traffic exposure per site");
  auto sites = std::make_shared<std::string>();
  auto roads = std::make_shared<std::string>();
  auto rings = std::make_shared<std::string>("single");
  auto target_len = std::make_shared<double>(50.0);
  auto scale = std::make_shared<double>(1e6);
  auto out = std::make_shared<std::string>(".");
  cmd->add_option("--sites", *sites, "sites CSV")->required();
  cmd->add_option("--roads", *roads, "roads CSV")->required();
  cmd->add_option("--rings", *rings, "single | multi | boundaries in meters");
  cmd->add_option("--target-len", *target_len, "subsegment target length (m)");
  cmd->add_option("--scale", *scale, "exposure divisor");
  cmd->add_option("--out", *out, "output directory");
  cmd->callback([=] {
    pipeline::RunConfig cfg;
    cfg.sites = *sites;
    cfg.roads = *roads;
    cfg.rings = *rings;
    cfg.target_len = *target_len;
    cfg.exposure_scale = *scale;
    auto ring_spec = pipeline::parse_rings(*rings);
    auto site_list = ingest::load_sites(*sites);
    auto road_list = ingest::load_roads(*roads);
    auto exposures = traffic::exposure_matrix(site_list, road_list, ring_spec,
                                              *target_len, *scale);
    fs::create_directories(*out);
    pipeline::write_exposure((fs::path(*out) / "exposure.csv").string(),
                             exposures, pipeline::artifact_meta(cfg));
    pipeline::write_exposure_sidecar(
        (fs::path(*out) / "exposure_meta.json").string(), ring_spec,
        *target_len, *scale, cfg);
    std::cout << "exposure: " << exposures.size() << " sites, "
              << ring_spec.ring_count() << " ring(s) -> " << *out
              << "/exposure.csv\n";
  });
}

void add_interpolate(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "interpolate", "Daily IDW interpolation and period covariates");
  auto monitors = std::make_shared<std::string>();
  auto sites = std::make_shared<std::string>();
  auto power = std::make_shared<double>(1.0);
  auto min_hours = std::make_shared<int>(18);
  auto out = std::make_shared<std::string>(".");
  cmd->add_option("--monitors", *monitors, "monitor readings CSV")->required();
  cmd->add_option("--sites", *sites, "sites CSV")->required();
  cmd->add_option("--power", *power, "inverse distance power");
  cmd->add_option("--min-hours", *min_hours,
                  "hours required for a daily average");
  cmd->add_option("--out", *out, "output directory");
  cmd->callback([=] {
    pipeline::RunConfig cfg;
    cfg.monitors = *monitors;
    cfg.sites = *sites;
    cfg.idw_power = *power;
    cfg.min_hours = *min_hours;
    auto stations = ingest::load_monitors(*monitors);
    auto site_list = ingest::load_sites(*sites);
    std::vector<interp::DailySeries> series;
    for (const auto& st : stations)
      series.push_back(interp::daily_average(st, *min_hours));
    auto daily = pipeline::compute_daily_idw(site_list, series, *power);
    std::vector<interp::PeriodCovariate> covariates;
    for (const auto& site : site_list)
      for (const auto& obs : site.observations)
        covariates.push_back(
            interp::period_covariate(site, obs, series, *power));
    fs::create_directories(*out);
    auto meta = pipeline::artifact_meta(cfg);
    pipeline::write_daily_idw((fs::path(*out) / "daily_idw.csv").string(),
                              daily, meta);
    pipeline::write_period_covariates(
        (fs::path(*out) / "period_covariates.csv").string(), covariates, meta);
    std::cout << "interpolate: " << covariates.size() << " periods over "
              << site_list.size() << " sites -> " << *out << "\n";
  });
}

void add_fit(CLI::App& app) {
  auto* cmd = app.add_subcommand("fit", "Fit a model to learning sites");
  auto sites = std::make_shared<std::string>();
  auto covariates = std::make_shared<std::string>();
  auto exposure = std::make_shared<std::string>();
  auto split = std::make_shared<std::string>();
  auto model = std::make_shared<std::string>("longitudinal");
  auto reml = std::make_shared<bool>(false);
  auto no_traffic = std::make_shared<bool>(false);
  auto chains = std::make_shared<int>(2);
  auto iters = std::make_shared<int>(10000);
  auto burnin = std::make_shared<int>(5000);
  auto thin = std::make_shared<int>(10);
  auto seed = std::make_shared<std::uint64_t>(1);
  auto out = std::make_shared<std::string>(".");
  cmd->add_option("--sites", *sites, "sites CSV")->required();
  cmd->add_option("--covariates", *covariates, "period_covariates.csv")
      ->required();
  cmd->add_option("--exposure", *exposure, "exposure.csv")->required();
  cmd->add_option("--split", *split,
                  "JSON with validation_site_ids to hold out");
  cmd->add_option("--model", *model, "linear | longitudinal | spatial")
      ->check(CLI::IsMember({"linear", "longitudinal", "spatial"}));
  cmd->add_flag("--reml", *reml, "REML variance estimates (longitudinal)");
  cmd->add_flag("--no-traffic", *no_traffic, "drop traffic covariates");
  cmd->add_option("--chains", *chains, "MCMC chains");
  cmd->add_option("--iters", *iters, "MCMC iterations per chain");
  cmd->add_option("--burnin", *burnin, "MCMC burn-in iterations");
  cmd->add_option("--thin", *thin, "intercept draw thinning");
  cmd->add_option("--seed", *seed, "RNG seed");
  cmd->add_option("--out", *out, "output directory");
  cmd->callback([=] {
    pipeline::RunConfig cfg;
    cfg.sites = *sites;
    cfg.split_file = *split;
    cfg.model = *model;
    cfg.reml = *reml;
    cfg.include_traffic = !*no_traffic;
    cfg.chains = *chains;
    cfg.iters = *iters;
    cfg.burnin = *burnin;
    cfg.thin = *thin;
    cfg.seed = *seed;
    auto all = ingest::load_sites(*sites);
    auto learning = select_sites(all, *split, false);
    auto covs = pipeline::read_period_covariates(*covariates);
    auto exps = pipeline::read_exposure(*exposure);
    fit::GroupedDesign design =
        fit::build_design(learning, covs, exps, cfg.include_traffic);
    fs::create_directories(*out);
    if (*model == "linear") {
      auto lf = fit::fit_linear(design);
      pipeline::write_fit_linear(*out, lf, design, cfg);
    } else if (*model == "longitudinal") {
      fit::MixedOptions opts;
      opts.reml = *reml;
      auto mf = fit::fit_longitudinal(design, opts);
      pipeline::write_fit_longitudinal(*out, mf, design, cfg);
    } else {
      spatial::McmcConfig mc;
      mc.chains = *chains;
      mc.iterations = *iters;
      mc.burnin = *burnin;
      mc.thin = *thin;
      mc.seed = *seed;
      auto posterior = spatial::fit_spatial(design, mc);
      pipeline::write_fit_spatial(*out, posterior, design, cfg);
      for (const auto& w : posterior.warnings)
        std::cerr << "warning: " << w << "\n";
    }
    std::cout << "fit: " << *model << " on " << design.n_sites()
              << " sites, " << design.n_rows() << " rows -> " << *out
              << "/fit.json\n";
  });
}

void add_predict(CLI::App& app) {
  auto* cmd = app.add_subcommand("predict", "Predict site concentrations");
  auto fit_path = std::make_shared<std::string>();
  auto sites = std::make_shared<std::string>();
  auto exposure = std::make_shared<std::string>();
  auto daily = std::make_shared<std::string>();
  auto mode = std::make_shared<std::string>("marginal");
  auto split = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>(".");
  cmd->add_option("--fit", *fit_path, "fit.json from the fit step")
      ->required();
  cmd->add_option("--sites", *sites, "sites CSV")->required();
  cmd->add_option("--exposure", *exposure, "exposure.csv")->required();
  cmd->add_option("--daily", *daily, "daily_idw.csv")->required();
  cmd->add_option("--mode", *mode, "marginal | conditional")
      ->check(CLI::IsMember({"marginal", "conditional"}));
  cmd->add_option("--split", *split,
                  "JSON with validation_site_ids to predict (default: all)");
  cmd->add_option("--out", *out, "output directory");
  cmd->callback([=] {
    pipeline::RunConfig cfg;
    cfg.sites = *sites;
    cfg.split_file = *split;
    cfg.predict_mode = *mode;
    auto model = pipeline::load_model(*fit_path);
    auto all = ingest::load_sites(*sites);
    auto targets = select_sites(all, *split, true);
    auto daily_map = pipeline::read_daily_idw(*daily);
    auto exps = pipeline::read_exposure(*exposure);
    const predict::Mode m = *mode == "conditional"
                                ? predict::Mode::conditional
                                : predict::Mode::marginal;
    std::vector<predict::PredictionRecord> daily_records;
    auto periods =
        predict::predict_periods(model, targets, daily_map, exps, m,
                                 &daily_records);
    fs::create_directories(*out);
    auto meta = pipeline::artifact_meta(cfg);
    pipeline::write_daily_predictions(
        (fs::path(*out) / "daily_predictions.csv").string(), daily_records,
        meta);
    pipeline::write_period_predictions(
        (fs::path(*out) / "period_predictions.csv").string(), periods, meta);
    std::cout << "predict: " << periods.size() << " periods over "
              << targets.size() << " sites -> " << *out << "\n";
  });
}

void add_validate(CLI::App& app) {
  auto* cmd = app.add_subcommand(
      "validate", "Calibration regression of observed on predicted");
  auto sites = std::make_shared<std::string>();
  auto predictions = std::make_shared<std::string>();
  auto split = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>(".");
  cmd->add_option("--sites", *sites, "sites CSV")->required();
  cmd->add_option("--predictions", *predictions, "period_predictions.csv")
      ->required();
  cmd->add_option("--split", *split,
                  "JSON with validation_site_ids to score (default: sites "
                  "present in predictions)");
  cmd->add_option("--out", *out, "output directory");
  cmd->callback([=] {
    pipeline::RunConfig cfg;
    cfg.sites = *sites;
    cfg.split_file = *split;
    cfg.model = "external";
    cfg.predict_mode = "external";
    auto all = ingest::load_sites(*sites);
    auto preds = pipeline::read_period_predictions(*predictions);
    std::vector<Site> targets;
    if (split->empty()) {
      std::set<std::string> ids;
      for (const auto& p : preds) ids.insert(p.site_id);
      for (const auto& s : all)
        if (ids.count(s.site_id)) targets.push_back(s);
    } else {
      targets = select_sites(all, *split, true);
    }
    auto report = validate::calibration(targets, preds);
    fs::create_directories(*out);
    pipeline::write_validation((fs::path(*out) / "validation.json").string(),
                               report, cfg);
    std::cout << "validate: n=" << report.n_obs
              << " R2=" << report.predictive_r2 << " RMSE=" << report.rmse
              << " ppb -> " << *out << "/validation.json\n";
  });
}

void add_run(CLI::App& app) {
  auto* cmd = app.add_subcommand("run", "Full pipeline from a config file");
  auto config_path = std::make_shared<std::string>();
  auto sets = std::make_shared<std::vector<std::string>>();
  auto model = std::make_shared<std::string>();
  auto rings = std::make_shared<std::string>();
  auto mode = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto iters = std::make_shared<int>(0);
  auto burnin = std::make_shared<int>(-1);
  auto chains = std::make_shared<int>(0);
  auto thin = std::make_shared<int>(0);
  auto reml = std::make_shared<bool>(false);
  cmd->add_option("--config", *config_path, "key=value run config file");
  cmd->add_option("--set", *sets, "extra key=value override (repeatable)");
  cmd->add_option("--model", *model, "override model");
  cmd->add_option("--rings", *rings, "override ring boundaries");
  cmd->add_option("--mode", *mode, "override predict_mode");
  cmd->add_option("--out", *out, "override output directory");
  cmd->add_option("--seed", *seed, "override seed");
  cmd->add_option("--iters", *iters, "override MCMC iterations");
  cmd->add_option("--burnin", *burnin, "override MCMC burn-in");
  cmd->add_option("--chains", *chains, "override MCMC chains");
  cmd->add_option("--thin", *thin, "override thinning");
  cmd->add_flag("--reml", *reml, "use REML for the longitudinal model");
  cmd->callback([=] {
    pipeline::RunConfig cfg;
    if (!config_path->empty()) cfg = pipeline::parse_config(*config_path);
    for (const auto& kv : *sets) {
      auto pos = kv.find('=');
      if (pos == std::string::npos)
        throw InputError("--set expects key=value, got '" + kv + "'");
      pipeline::set_config_value(cfg, kv.substr(0, pos), kv.substr(pos + 1));
    }
    if (!model->empty()) cfg.model = *model;
    if (!rings->empty()) cfg.rings = *rings;
    if (!mode->empty()) cfg.predict_mode = *mode;
    if (!out->empty()) cfg.out_dir = *out;
    if (cmd->count("--seed")) cfg.seed = *seed;
    if (cmd->count("--iters")) cfg.iters = *iters;
    if (cmd->count("--burnin")) cfg.burnin = *burnin;
    if (cmd->count("--chains")) cfg.chains = *chains;
    if (cmd->count("--thin")) cfg.thin = *thin;
    if (cmd->count("--reml")) cfg.reml = *reml;
    if (cfg.monitors.empty() || cfg.sites.empty() || cfg.roads.empty())
      throw InputError("run needs monitors, sites and roads paths "
                       "(config file or --set)");
    pipeline::run_pipeline(cfg);
    std::cout << "run: " << cfg.model << "/" << cfg.predict_mode
              << " complete -> " << cfg.out_dir << "/validation.json\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{std::string("Traffic-aware NO2 exposure modeling (") +
               kToolName + " " + kToolVersion + ")"};
  app.require_subcommand(1);
  add_synth(app);
  add_exposure(app);
  add_interpolate(app);
  add_fit(app);
  add_predict(app);
  add_validate(app);
  add_run(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
