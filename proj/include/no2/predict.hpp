#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "no2/data.hpp"
#include "no2/dates.hpp"
#include "no2/fit.hpp"
#include "no2/spatial.hpp"
#include "no2/traffic.hpp"

namespace no2 {
namespace predict {

enum class Mode { marginal, conditional };

struct PredictionRecord {
  std::string site_id;
  Date date;
  double predicted_log = 0;  // log ppb
  double predicted = 0;      // ppb, exp(predicted_log)
};

struct PeriodPrediction {
  std::string site_id;
  Date period_start;
  Date period_end;
  double p_ppb = 0;  // mean of daily `predicted` over the period
};

/// Fitted model in the form prediction needs, whichever estimator produced
/// it. For the spatial model the thinned intercept draws drive conditional
/// (kriging) prediction; call prepare_kriging() after filling them by hand.
struct TrainedModel {
  enum class Kind { linear, longitudinal, spatial };
  Kind kind = Kind::linear;
  std::vector<double> theta;  // intercept, x coefficient, then w coefficients
  std::size_t traffic_dim = 0;

  // Longitudinal: BLUPs per learning site.
  std::map<std::string, double> blups;

  // Spatial: learning-site geometry and thinned posterior draws of b0.
  std::vector<std::string> site_ids;
  std::vector<Point> site_locations;
  std::vector<spatial::B0Draw> b0_draws;
  double sigma_b2 = 0;  // posterior mean, for diagnostics

  static TrainedModel from_linear(const fit::LinearFit& fit);
  static TrainedModel from_longitudinal(const fit::MixedFit& fit);
  static TrainedModel from_spatial(const spatial::SpatialPosterior& posterior);

  /// Precomputes per-draw kriging tables (Sigma(phi)^-1 b0) and posterior
  /// mean intercepts. Idempotent; required before conditional prediction.
  void prepare_kriging();

  bool kriging_ready() const { return !kriging_alpha_.empty() || b0_draws.empty(); }
  const std::map<std::string, double>& b0_means() const { return b0_mean_; }

  /// Random-intercept contribution b* for a site. Linear: 0. Longitudinal:
  /// the site's BLUP when it is a learning site, else 0 (both modes).
  /// Spatial marginal: posterior mean b0 for learning sites, else 0.
  /// Spatial conditional: per-draw kriging mean c(phi)' Sigma(phi)^-1 b0 at
  /// the site's location, averaged over draws (exact b0 at distance 0).
  double site_intercept(const std::string& site_id, const Point& location,
                        Mode mode) const;

 private:
  std::vector<Eigen::VectorXd> kriging_alpha_;  // per draw
  std::map<std::string, double> b0_mean_;
};

/// Single-day prediction: log prediction theta . [1, ln(idw), w] + b*.
PredictionRecord predict_daily(const TrainedModel& model,
                               const std::string& site_id,
                               const Point& location, Date date,
                               double idw_value,
                               const traffic::ExposureVector& exposure,
                               Mode mode);

/// Period predictions for every observation of every site: the natural-scale
/// mean of the daily predictions across the period. `daily_idw` maps
/// site -> date -> interpolated ppb and must cover every period day; a gap
/// raises InputError listing the missing dates. When `daily_out` is given,
/// every daily prediction is appended to it.
std::vector<PeriodPrediction> predict_periods(
    const TrainedModel& model, const std::vector<Site>& sites,
    const std::map<std::string, std::map<Date, double>>& daily_idw,
    const std::vector<traffic::ExposureVector>& exposures, Mode mode,
    std::vector<PredictionRecord>* daily_out = nullptr);

}  // namespace predict
}  // namespace no2
