#include "no2/synth.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <set>

#include "no2/csv.hpp"
#include "no2/errors.hpp"
#include "no2/ingest.hpp"
#include "no2/interp.hpp"
#include "no2/rng.hpp"
#include "no2/spatial.hpp"
#include "no2/version.hpp"

namespace no2 {
namespace synth {

Scenario Scenario::independent_sites() {
  Scenario sc;
  sc.preset_name = "independent";
  sc.suggested_model = "longitudinal";
  sc.beta0 = -0.5974;
  sc.beta1 = 1.0281;
  sc.gamma = {0.1529};
  sc.sigma_b2 = 0.0402;
  sc.sigma_y2 = 0.0619;
  // Effectively independent intercepts: negligible correlation at any
  // realistic site separation.
  sc.phi_km = 0.01;
  return sc;
}

Scenario Scenario::correlated_sites() {
  Scenario sc;
  sc.preset_name = "correlated";
  sc.suggested_model = "spatial";
  return sc;
}

namespace {

void check_scenario(const Scenario& sc) {
  if (sc.n_learning < 1 || sc.n_validation < 0 || sc.n_monitors < 1)
    throw InputError("scenario counts must be >= 1 (validation >= 0)");
  if (!(sc.region_km > 0)) throw InputError("region extent must be positive");
  if (!(sc.sigma_b2 > 0) || !(sc.sigma_y2 > 0))
    throw InputError("scenario variances must be positive");
  if (!(sc.phi_km > 0)) throw InputError("scenario phi must be positive");
  if (sc.gamma.size() != sc.rings.ring_count())
    throw InputError("scenario has " + std::to_string(sc.gamma.size()) +
                     " gamma values for " +
                     std::to_string(sc.rings.ring_count()) + " rings");
  if (sc.n_roads < 0) throw InputError("n_roads cannot be negative");
  if (sc.periods_per_site < 1) throw InputError("need at least 1 period");
  if (sc.period_days < 1 || sc.period_gap_days < 0 ||
      sc.start_jitter_days < 0)
    throw InputError("invalid observation schedule");
  const int last_day = sc.start_jitter_days +
                       (sc.periods_per_site - 1) *
                           (sc.period_days + sc.period_gap_days) +
                       sc.period_days;
  if (last_day > sc.monitor_days)
    throw InputError("observation schedule needs " + std::to_string(last_day) +
                     " monitor days, scenario has " +
                     std::to_string(sc.monitor_days));
  if (!(sc.exposure_scale > 0) || !(sc.target_len_m > 0))
    throw InputError("exposure settings must be positive");
  if (!(sc.ar1_rho > -1 && sc.ar1_rho < 1))
    throw InputError("ar1_rho must lie in (-1, 1)");
}

std::string padded_id(char prefix, int index, int total) {
  int width = 1;
  for (int v = total; v >= 10; v /= 10) ++width;
  std::string digits = std::to_string(index);
  return prefix + std::string(width - digits.size(), '0') + digits;
}

}  // namespace

Dataset generate(const Scenario& sc) {
  check_scenario(sc);
  Rng root(sc.seed);
  Rng r_loc = root.fork(1);
  Rng r_road = root.fork(2);
  Rng r_mon = root.fork(3);
  Rng r_b0 = root.fork(4);
  Rng r_jit = root.fork(5);
  Rng r_eps = root.fork(6);

  const double extent = sc.region_km * 1000.0;
  Dataset ds;

  std::set<std::pair<double, double>> used;
  auto fresh_point = [&](Rng& rng) {
    while (true) {
      Point p{rng.uniform(0.0, extent), rng.uniform(0.0, extent)};
      if (used.insert({p.x, p.y}).second) return p;
    }
  };

  for (int m = 0; m < sc.n_monitors; ++m) {
    MonitorStation st;
    st.station_id = padded_id('M', m + 1, sc.n_monitors);
    st.location = fresh_point(r_loc);
    ds.monitors.push_back(std::move(st));
  }

  const int n_sites = sc.n_learning + sc.n_validation;
  for (int i = 0; i < n_sites; ++i) {
    Site s;
    s.site_id = padded_id('S', i + 1, n_sites);
    s.location = fresh_point(r_loc);
    ds.sites.push_back(std::move(s));
  }
  for (int i = sc.n_learning; i < n_sites; ++i)
    ds.validation_site_ids.push_back(ds.sites[static_cast<std::size_t>(i)].site_id);

  for (int r = 0; r < sc.n_roads; ++r) {
    RoadSegment seg;
    seg.segment_id = padded_id('R', r + 1, std::max(sc.n_roads, 1));
    Point center{r_road.uniform(0.0, extent), r_road.uniform(0.0, extent)};
    double angle = r_road.uniform(0.0, M_PI);
    double len = std::clamp(r_road.lognormal(sc.len_log_median, sc.len_log_sd),
                            sc.len_min_m, sc.len_max_m);
    double adt = std::round(
        std::min(r_road.lognormal(sc.adt_log_median, sc.adt_log_sd),
                 sc.adt_max));
    double dx = 0.5 * len * std::cos(angle);
    double dy = 0.5 * len * std::sin(angle);
    seg.vertices = {{center.x - dx, center.y - dy},
                    {center.x + dx, center.y + dy}};
    seg.adt = adt;
    ds.roads.push_back(std::move(seg));
  }

  // Monitor series: station offsets, then the shared regional log-AR(1),
  // then hourly noise, in that fixed draw order.
  std::vector<double> offsets;
  for (int m = 0; m < sc.n_monitors; ++m)
    offsets.push_back(r_mon.normal(0.0, sc.station_sd));
  std::vector<double> regional(static_cast<std::size_t>(sc.monitor_days));
  double prev = sc.log_level + r_mon.normal(0.0, sc.regional_sd);
  double innov_sd = sc.regional_sd * std::sqrt(1.0 - sc.ar1_rho * sc.ar1_rho);
  for (int t = 0; t < sc.monitor_days; ++t) {
    regional[static_cast<std::size_t>(t)] = prev;
    prev = sc.log_level + sc.ar1_rho * (prev - sc.log_level) +
           r_mon.normal(0.0, innov_sd);
  }
  for (int m = 0; m < sc.n_monitors; ++m) {
    auto& readings = ds.monitors[static_cast<std::size_t>(m)].readings;
    readings.reserve(static_cast<std::size_t>(sc.monitor_days) * 24);
    for (int t = 0; t < sc.monitor_days; ++t) {
      for (int h = 0; h < 24; ++h) {
        double diurnal =
            sc.diurnal_amp * std::sin(2.0 * M_PI * (h - 6) / 24.0);
        double log_v = regional[static_cast<std::size_t>(t)] +
                       offsets[static_cast<std::size_t>(m)] + diurnal +
                       r_mon.normal(0.0, sc.hourly_sd);
        readings.push_back({DateHour{sc.start_date + t, h}, std::exp(log_v)});
      }
    }
  }

  // Observation periods (dates only; values filled once x and W exist).
  for (auto& site : ds.sites) {
    int jitter = static_cast<int>(
        r_jit.index(static_cast<std::size_t>(sc.start_jitter_days) + 1));
    for (int k = 0; k < sc.periods_per_site; ++k) {
      Date start =
          sc.start_date + jitter + k * (sc.period_days + sc.period_gap_days);
      site.observations.push_back({start, start + (sc.period_days - 1), 1.0});
    }
  }

  // Covariates through the same code paths the pipeline uses.
  std::vector<traffic::ExposureVector> exposures = traffic::exposure_matrix(
      ds.sites, ds.roads, sc.rings, sc.target_len_m, sc.exposure_scale);
  std::vector<interp::DailySeries> series;
  for (const auto& st : ds.monitors)
    series.push_back(interp::daily_average(st, sc.min_hours));

  // True random intercepts, jointly over every site.
  std::vector<Point> locations;
  for (const auto& s : ds.sites) locations.push_back(s.location);
  Eigen::MatrixXd corr = spatial::exp_correlation(
      spatial::distance_matrix_km(locations), sc.phi_km);
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success)
    throw NumericError("intercept correlation matrix not positive definite");
  Eigen::VectorXd z(n_sites);
  for (int i = 0; i < n_sites; ++i) z(i) = r_b0.normal();
  Eigen::VectorXd b0 = std::sqrt(sc.sigma_b2) *
                       (Eigen::MatrixXd(llt.matrixL()) * z);
  for (int i = 0; i < n_sites; ++i)
    ds.b0[ds.sites[static_cast<std::size_t>(i)].site_id] = b0(i);

  const double sigma_y = std::sqrt(sc.sigma_y2);
  for (std::size_t i = 0; i < ds.sites.size(); ++i) {
    auto& site = ds.sites[i];
    const auto& w = exposures[i].w;
    double traffic_term = 0;
    for (std::size_t k = 0; k < w.size(); ++k)
      traffic_term += sc.gamma[k] * w[k];
    for (auto& obs : site.observations) {
      interp::PeriodCovariate cov =
          interp::period_covariate(site, obs, series, sc.idw_power);
      double y = sc.beta0 + b0(static_cast<Eigen::Index>(i)) +
                 sc.beta1 * cov.x_log + traffic_term +
                 r_eps.normal(0.0, sigma_y);
      obs.no2_ppb = std::exp(y);
    }
  }
  return ds;
}

namespace {

std::string ring_config_string(const traffic::RingSpec& rings) {
  if (rings.boundaries == traffic::RingSpec::single_step().boundaries)
    return "single";
  if (rings.boundaries == traffic::RingSpec::multi_step().boundaries)
    return "multi";
  std::string out;
  for (std::size_t i = 0; i < rings.boundaries.size(); ++i) {
    if (i) out += ",";
    out += csv::format_double(rings.boundaries[i]);
  }
  return out;
}

}  // namespace

void write_dataset(const Scenario& sc, const Dataset& ds,
                   const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string tool = std::string(kToolName) + " " + kToolVersion;
  ingest::Meta meta = {{"tool", tool},
                       {"seed", std::to_string(sc.seed)},
                       {"preset", sc.preset_name}};
  ingest::write_monitors((fs::path(out_dir) / "monitors.csv").string(),
                         ds.monitors, meta);
  ingest::write_sites((fs::path(out_dir) / "sites.csv").string(), ds.sites,
                      meta);
  ingest::write_roads((fs::path(out_dir) / "roads.csv").string(), ds.roads,
                      meta);

  nlohmann::json truth;
  truth["_meta"] = {{"tool", tool},
                    {"seed", sc.seed},
                    {"preset", sc.preset_name}};
  nlohmann::json params;
  params["beta0"] = sc.beta0;
  params["beta1"] = sc.beta1;
  params["gamma"] = sc.gamma;
  params["sigma_b2"] = sc.sigma_b2;
  params["sigma_y2"] = sc.sigma_y2;
  params["phi_km"] = sc.phi_km;
  truth["parameters"] = params;
  nlohmann::json design;
  design["n_learning"] = sc.n_learning;
  design["n_validation"] = sc.n_validation;
  design["n_monitors"] = sc.n_monitors;
  design["region_km"] = sc.region_km;
  design["n_roads"] = sc.n_roads;
  design["periods_per_site"] = sc.periods_per_site;
  design["period_days"] = sc.period_days;
  design["period_gap_days"] = sc.period_gap_days;
  design["start_jitter_days"] = sc.start_jitter_days;
  design["monitor_days"] = sc.monitor_days;
  design["start_date"] = sc.start_date.to_string();
  design["rings"] = sc.rings.boundaries;
  design["target_len_m"] = sc.target_len_m;
  design["exposure_scale"] = sc.exposure_scale;
  design["idw_power"] = sc.idw_power;
  design["min_hours"] = sc.min_hours;
  truth["design"] = design;
  truth["validation_site_ids"] = ds.validation_site_ids;
  nlohmann::json b0;
  for (const auto& [id, value] : ds.b0) b0[id] = value;
  truth["b0"] = b0;
  {
    std::ofstream out(fs::path(out_dir) / "truth.json");
    if (!out) throw InputError("cannot write truth.json in " + out_dir);
    out << truth.dump(2) << "\n";
  }

  {
    std::ofstream out(fs::path(out_dir) / "run.conf");
    if (!out) throw InputError("cannot write run.conf in " + out_dir);
    out << "# generated alongside the dataset; paths are relative to this "
           "file\n";
    out << "monitors = monitors.csv\n";
    out << "sites = sites.csv\n";
    out << "roads = roads.csv\n";
    out << "split_file = truth.json\n";
    out << "model = " << sc.suggested_model << "\n";
    out << "rings = " << ring_config_string(sc.rings) << "\n";
    out << "target_len = " << csv::format_double(sc.target_len_m) << "\n";
    out << "exposure_scale = " << csv::format_double(sc.exposure_scale)
        << "\n";
    out << "idw_power = " << csv::format_double(sc.idw_power) << "\n";
    out << "min_hours = " << sc.min_hours << "\n";
    out << "seed = " << sc.seed << "\n";
    out << "predict_mode = "
        << (sc.suggested_model == "spatial" ? "conditional" : "marginal")
        << "\n";
    out << "out_dir = .\n";
  }
}

}  // namespace synth
}  // namespace no2
