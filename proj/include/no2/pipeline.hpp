#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "no2/data.hpp"
#include "no2/fit.hpp"
#include "no2/ingest.hpp"
#include "no2/interp.hpp"
#include "no2/predict.hpp"
#include "no2/spatial.hpp"
#include "no2/traffic.hpp"
#include "no2/validate.hpp"

namespace no2 {
namespace pipeline {

/// Everything a full run needs. Parsed from a key=value config file;
/// individual CLI flags override parsed values.
struct RunConfig {
  std::string monitors;
  std::string sites;
  std::string roads;
  std::string split_file;  // optional JSON holding validation_site_ids

  std::string rings = "single";  // single | multi | comma-separated meters
  double target_len = 50;
  double exposure_scale = 1e6;

  double idw_power = 1;
  int min_hours = 18;

  std::string model = "longitudinal";  // linear | longitudinal | spatial
  bool reml = false;
  bool include_traffic = true;

  int chains = 2;
  int iters = 10000;
  int burnin = 5000;
  int thin = 10;
  std::uint64_t seed = 1;

  std::string predict_mode = "marginal";  // marginal | conditional
  std::string out_dir = ".";
};

/// Parses `key = value` lines ('#' comments, blank lines ignored). Relative
/// paths are resolved against the config file's directory.
RunConfig parse_config(const std::string& path);

/// Applies one key=value override; throws InputError on unknown keys or
/// unparseable values.
void set_config_value(RunConfig& config, const std::string& key,
                      const std::string& value);

/// Canonical serialization (every field, fixed order) used for hashing.
std::string canonical_config(const RunConfig& config);

std::uint64_t fnv1a(std::string_view data);

/// 16-hex-digit FNV-1a hash of the canonical config.
std::string config_hash_hex(const RunConfig& config);

/// "single", "multi", or explicit comma-separated boundaries in meters.
traffic::RingSpec parse_rings(const std::string& spec);

/// Reads validation_site_ids from a JSON file (truth.json works).
std::vector<std::string> load_split(const std::string& path);

/// Metadata stamped on every artifact: tool version, seed, config hash.
ingest::Meta artifact_meta(const RunConfig& config);

// ---- artifact files -------------------------------------------------------

void write_exposure(const std::string& path,
                    const std::vector<traffic::ExposureVector>& exposures,
                    const ingest::Meta& meta);
std::vector<traffic::ExposureVector> read_exposure(const std::string& path);

void write_exposure_sidecar(const std::string& path,
                            const traffic::RingSpec& rings, double target_len,
                            double exposure_scale, const RunConfig& config);

using DailyIdw = std::map<std::string, std::map<Date, double>>;
void write_daily_idw(const std::string& path, const DailyIdw& values,
                     const ingest::Meta& meta);
DailyIdw read_daily_idw(const std::string& path);

void write_period_covariates(
    const std::string& path,
    const std::vector<interp::PeriodCovariate>& covariates,
    const ingest::Meta& meta);
std::vector<interp::PeriodCovariate> read_period_covariates(
    const std::string& path);

/// fit.json for whichever model was fit; the spatial writer also emits
/// draws.csv and b0_draws.csv next to it.
void write_fit_linear(const std::string& dir, const fit::LinearFit& fit,
                      const fit::GroupedDesign& design,
                      const RunConfig& config);
void write_fit_longitudinal(const std::string& dir, const fit::MixedFit& fit,
                            const fit::GroupedDesign& design,
                            const RunConfig& config);
void write_fit_spatial(const std::string& dir,
                       const spatial::SpatialPosterior& posterior,
                       const fit::GroupedDesign& design,
                       const RunConfig& config);

/// Rebuilds a prediction-ready model from fit.json (and, for the spatial
/// model, the b0_draws.csv referenced by it).
predict::TrainedModel load_model(const std::string& fit_json_path);

void write_daily_predictions(
    const std::string& path,
    const std::vector<predict::PredictionRecord>& records,
    const ingest::Meta& meta);

void write_period_predictions(
    const std::string& path,
    const std::vector<predict::PeriodPrediction>& periods,
    const ingest::Meta& meta);
std::vector<predict::PeriodPrediction> read_period_predictions(
    const std::string& path);

void write_validation(const std::string& path,
                      const validate::ValidationReport& report,
                      const RunConfig& config);

void write_semivariogram(const std::string& path,
                         const validate::Semivariogram& sv,
                         const ingest::Meta& meta);

// ---- stages ---------------------------------------------------------------

/// Daily interpolated values for every date covered by each site's
/// observation periods.
DailyIdw compute_daily_idw(const std::vector<Site>& sites,
                           const std::vector<interp::DailySeries>& series,
                           double power);

/// Runs exposure -> interpolate -> fit -> predict -> validate, writing all
/// artifacts into config.out_dir. Errors carry a "stage <name>:" prefix.
/// Returns 0 on success.
int run_pipeline(const RunConfig& config);

}  // namespace pipeline
}  // namespace no2
