#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "no2/errors.hpp"
#include "no2/pipeline.hpp"
#include "no2/predict.hpp"
#include "no2/synth.hpp"

using namespace no2;
namespace fs = std::filesystem;

namespace {

synth::Scenario quick_scenario(std::uint64_t seed) {
  synth::Scenario sc = synth::Scenario::correlated_sites();
  sc.seed = seed;
  sc.n_learning = 50;
  sc.n_validation = 12;
  sc.n_roads = 60;
  sc.periods_per_site = 2;
  sc.period_gap_days = 40;
  sc.start_jitter_days = 10;
  sc.monitor_days = 120;
  return sc;
}

std::string make_dataset(const test::TempDir& dir, std::uint64_t seed) {
  auto sc = quick_scenario(seed);
  auto ds = synth::generate(sc);
  synth::write_dataset(sc, ds, dir.path().string());
  return dir.file("run.conf");
}

}  // namespace

TEST_CASE("config parsing, overrides and hashing") {
  test::TempDir tmp("cfg");
  test::spit(tmp.file("run.conf"),
             "# comment\n"
             "monitors = monitors.csv\n"
             "sites = data/sites.csv\n"
             "roads = /abs/roads.csv\n"
             "model = spatial\n"
             "rings = 0,400,2000\n"
             "iters = 400\n"
             "seed = 99\n"
             "reml = true\n"
             "out_dir = out\n");
  auto cfg = pipeline::parse_config(tmp.file("run.conf"));
  CHECK(cfg.monitors == tmp.file("monitors.csv"));
  CHECK(cfg.sites == (tmp.path() / "data/sites.csv").string());
  CHECK(cfg.roads == "/abs/roads.csv");  // absolute paths pass through
  CHECK(cfg.model == "spatial");
  CHECK(cfg.rings == "0,400,2000");
  CHECK(cfg.iters == 400);
  CHECK(cfg.seed == 99);
  CHECK(cfg.reml == true);
  CHECK(cfg.out_dir == tmp.file("out"));
  // untouched keys keep their defaults
  CHECK(cfg.target_len == 50.0);
  CHECK(cfg.thin == 10);

  SUBCASE("unknown keys are rejected with location") {
    test::spit(tmp.file("bad.conf"), "modle = spatial\n");
    CHECK_THROWS_WITH_AS(pipeline::parse_config(tmp.file("bad.conf")),
                         doctest::Contains("modle"), InputError);
  }
  SUBCASE("values must parse") {
    test::spit(tmp.file("bad2.conf"), "iters = soon\n");
    CHECK_THROWS_AS(pipeline::parse_config(tmp.file("bad2.conf")),
                    InputError);
    pipeline::RunConfig c;
    CHECK_THROWS_AS(pipeline::set_config_value(c, "reml", "perhaps"),
                    InputError);
  }

  SUBCASE("hash tracks meaningful fields, not the output directory") {
    auto base = cfg;
    const std::string h = pipeline::config_hash_hex(base);
    CHECK(h.size() == 16);
    auto moved = base;
    moved.out_dir = "/somewhere/else";
    CHECK(pipeline::config_hash_hex(moved) == h);
    auto reseeded = base;
    reseeded.seed = 100;
    CHECK(pipeline::config_hash_hex(reseeded) != h);
    auto remodeled = base;
    remodeled.model = "linear";
    CHECK(pipeline::config_hash_hex(remodeled) != h);
  }
}

TEST_CASE("ring specifications parse") {
  CHECK(pipeline::parse_rings("single").boundaries ==
        std::vector<double>{0, 2000});
  CHECK(pipeline::parse_rings("multi").ring_count() == 5);
  CHECK(pipeline::parse_rings("0,250,500").ring_count() == 2);
  CHECK_THROWS_AS(pipeline::parse_rings("0,500,250"), InputError);
  CHECK_THROWS_AS(pipeline::parse_rings("banana"), InputError);
}

TEST_CASE("artifact files round trip") {
  test::TempDir tmp("art");
  const ingest::Meta meta = {{"tool", "no2 0.1.0"}};

  SUBCASE("exposure") {
    std::vector<traffic::ExposureVector> e = {{"S1", {0.5, 1.25}},
                                              {"S2", {0.0, 3.75}}};
    pipeline::write_exposure(tmp.file("e.csv"), e, meta);
    auto back = pipeline::read_exposure(tmp.file("e.csv"));
    REQUIRE(back.size() == 2);
    CHECK(back[0].site_id == "S1");
    CHECK(back[0].w == std::vector<double>{0.5, 1.25});
    CHECK(back[1].w == std::vector<double>{0.0, 3.75});
  }

  SUBCASE("daily idw") {
    pipeline::DailyIdw d;
    d["S1"][Date::from_ymd(2006, 5, 1)] = 12.75;
    d["S1"][Date::from_ymd(2006, 5, 2)] = 13.5;
    d["S2"][Date::from_ymd(2006, 5, 1)] = 9.0;
    pipeline::write_daily_idw(tmp.file("d.csv"), d, meta);
    auto back = pipeline::read_daily_idw(tmp.file("d.csv"));
    CHECK(back == d);
  }

  SUBCASE("period covariates") {
    std::vector<interp::PeriodCovariate> c(2);
    c[0] = {"S1", Date::from_ymd(2006, 5, 1), Date::from_ymd(2006, 5, 30),
            11.0, std::log(11.0)};
    c[1] = {"S2", Date::from_ymd(2006, 6, 1), Date::from_ymd(2006, 6, 30),
            14.5, std::log(14.5)};
    pipeline::write_period_covariates(tmp.file("c.csv"), c, meta);
    auto back = pipeline::read_period_covariates(tmp.file("c.csv"));
    REQUIRE(back.size() == 2);
    CHECK(back[1].site_id == "S2");
    CHECK(back[1].u_ppb == 14.5);
    CHECK(back[0].x_log == std::log(11.0));
    CHECK(back[0].period_end == Date::from_ymd(2006, 5, 30));
  }

  SUBCASE("period predictions") {
    std::vector<predict::PeriodPrediction> p(1);
    p[0] = {"V1", Date::from_ymd(2006, 7, 1), Date::from_ymd(2006, 7, 30),
            17.25};
    pipeline::write_period_predictions(tmp.file("p.csv"), p, meta);
    auto back = pipeline::read_period_predictions(tmp.file("p.csv"));
    REQUIRE(back.size() == 1);
    CHECK(back[0].site_id == "V1");
    CHECK(back[0].p_ppb == 17.25);
  }
}

TEST_CASE("full longitudinal run produces coherent artifacts") {
  test::TempDir data("pipe_data");
  test::TempDir out("pipe_out");
  auto conf = make_dataset(data, 404);
  auto cfg = pipeline::parse_config(conf);
  cfg.model = "longitudinal";
  cfg.predict_mode = "marginal";
  cfg.out_dir = out.path().string();
  REQUIRE(pipeline::run_pipeline(cfg) == 0);

  for (const char* f :
       {"exposure.csv", "exposure_meta.json", "daily_idw.csv",
        "period_covariates.csv", "fit.json", "daily_predictions.csv",
        "period_predictions.csv", "validation.json", "semivariogram.csv"}) {
    CAPTURE(f);
    CHECK(fs::exists(out.path() / f));
  }

  auto validation = nlohmann::json::parse(test::slurp(out.file("validation.json")));
  CHECK(validation.contains("predictive_r2"));
  CHECK(validation["n_sites"].get<int>() == 12);
  CHECK(validation["n_obs"].get<int>() == 24);
  CHECK(std::isfinite(validation["rmse_ppb"].get<double>()));

  auto fitj = nlohmann::json::parse(test::slurp(out.file("fit.json")));
  CHECK(fitj["model"] == "longitudinal");
  CHECK(fitj["coefficients"].size() == 3);
  CHECK(fitj["blups"].size() == 50);
  CHECK(fitj["_meta"]["config"] == pipeline::config_hash_hex(cfg));

  // predictions cover exactly the validation periods
  auto preds =
      pipeline::read_period_predictions(out.file("period_predictions.csv"));
  CHECK(preds.size() == 24);
  for (const auto& p : preds) CHECK(p.p_ppb > 0);

  // the reloaded model predicts like the in-memory one did
  auto model = pipeline::load_model(out.file("fit.json"));
  CHECK(model.kind == predict::TrainedModel::Kind::longitudinal);
  CHECK(model.theta.size() == 3);
  CHECK(model.blups.size() == 50);

  SUBCASE("rerunning with the same config reproduces fit.json byte for byte") {
    test::TempDir out2("pipe_out2");
    auto cfg2 = cfg;
    cfg2.out_dir = out2.path().string();
    REQUIRE(pipeline::run_pipeline(cfg2) == 0);
    CHECK(test::slurp(out.file("fit.json")) ==
          test::slurp(out2.file("fit.json")));
    CHECK(test::slurp(out.file("validation.json")) ==
          test::slurp(out2.file("validation.json")));
  }
}

TEST_CASE("spatial run writes draws and supports conditional prediction") {
  test::TempDir data("pipe_sp");
  test::TempDir out("pipe_sp_out");
  auto conf = make_dataset(data, 811);
  auto cfg = pipeline::parse_config(conf);
  cfg.model = "spatial";
  cfg.predict_mode = "conditional";
  cfg.chains = 1;
  cfg.iters = 1200;
  cfg.burnin = 400;
  cfg.thin = 10;
  cfg.out_dir = out.path().string();
  REQUIRE(pipeline::run_pipeline(cfg) == 0);

  CHECK(fs::exists(out.path() / "draws.csv"));
  CHECK(fs::exists(out.path() / "b0_draws.csv"));
  auto fitj = nlohmann::json::parse(test::slurp(out.file("fit.json")));
  CHECK(fitj["model"] == "spatial");
  CHECK(fitj["posterior"].contains("phi"));
  CHECK(fitj["posterior"]["x"].contains("q975"));
  CHECK(fitj["sites"]["ids"].size() == 50);

  auto validation =
      nlohmann::json::parse(test::slurp(out.file("validation.json")));
  CHECK(std::isfinite(validation["rmse_ppb"].get<double>()));

  auto model = pipeline::load_model(out.file("fit.json"));
  CHECK(model.kind == predict::TrainedModel::Kind::spatial);
  CHECK(model.b0_draws.size() == 80);  // (1200 - 400) / 10
  CHECK(model.kriging_ready());
  // kriging at a learning site reproduces its posterior mean
  const auto& id = model.site_ids[0];
  const auto loc = model.site_locations[0];
  CHECK(model.site_intercept(id, loc, predict::Mode::conditional) ==
        doctest::Approx(model.b0_means().at(id)).epsilon(1e-9));
}

TEST_CASE("stage failures carry the stage name") {
  test::TempDir data("pipe_err");
  auto conf = make_dataset(data, 99);
  auto cfg = pipeline::parse_config(conf);

  SUBCASE("missing input file") {
    cfg.sites = data.file("nope.csv");
    CHECK_THROWS_WITH_AS(pipeline::run_pipeline(cfg),
                         doctest::Contains("stage load"), InputError);
  }
  SUBCASE("validation site absent from the site file") {
    test::spit(data.file("split.json"),
               "{\"validation_site_ids\": [\"GHOST\"]}");
    cfg.split_file = data.file("split.json");
    CHECK_THROWS_WITH_AS(pipeline::run_pipeline(cfg),
                         doctest::Contains("GHOST"), InputError);
  }
  SUBCASE("linear model cannot predict conditionally") {
    cfg.model = "linear";
    cfg.predict_mode = "conditional";
    CHECK_THROWS_AS(pipeline::run_pipeline(cfg), InputError);
  }
  SUBCASE("unknown model") {
    cfg.model = "quadratic";
    CHECK_THROWS_AS(pipeline::run_pipeline(cfg), InputError);
  }
}

TEST_CASE("in-sample run without a split covers every site") {
  test::TempDir data("pipe_ins");
  test::TempDir out("pipe_ins_out");
  auto conf = make_dataset(data, 17);
  auto cfg = pipeline::parse_config(conf);
  cfg.split_file.clear();
  cfg.model = "linear";
  cfg.predict_mode = "marginal";
  cfg.out_dir = out.path().string();
  REQUIRE(pipeline::run_pipeline(cfg) == 0);
  auto preds =
      pipeline::read_period_predictions(out.file("period_predictions.csv"));
  CHECK(preds.size() == 124);  // (50 + 12) sites x 2 periods
  // linear model: no site effects, no semivariogram artifact
  CHECK(!fs::exists(out.path() / "semivariogram.csv"));
  auto fitj = nlohmann::json::parse(test::slurp(out.file("fit.json")));
  CHECK(fitj["model"] == "linear");
  CHECK(fitj.contains("vif"));
  CHECK(fitj["n_sites"].get<int>() == 62);
}
