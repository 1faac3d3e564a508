#pragma once

#include <map>
#include <string>
#include <vector>

#include "no2/data.hpp"
#include "no2/geom.hpp"
#include "no2/predict.hpp"

namespace no2 {
namespace validate {

/// Calibration regression of observed on predicted plus summary accuracy.
struct ValidationReport {
  double alpha0 = 0;
  double alpha1 = 0;
  double se0 = 0, se1 = 0;
  double t0 = 0, t1 = 0;
  double p0 = 0, p1 = 0;
  double predictive_r2 = 0;  // squared Pearson correlation of (Z, P)
  double rmse = 0;           // ppb, sqrt(sum (Z - P)^2 / n_obs)
  std::size_t n_sites = 0;
  std::size_t n_obs = 0;
};

/// Matches observations to period predictions by (site, period start) and
/// regresses observed ppb on predicted ppb. Unmatched keys on either side
/// raise InputError listing them. Needs at least 3 matched pairs.
ValidationReport calibration(
    const std::vector<Site>& sites,
    const std::vector<predict::PeriodPrediction>& predicted);

struct Semivariogram {
  std::vector<double> bin_center_km;
  std::vector<double> semivariance;
  std::vector<std::size_t> pair_count;
  double bin_width_km = 0;
  double max_lag_km = 0;
};

/// Classical estimator gamma(h) = (1 / 2 N_h) sum over pairs in bin h of
/// (v_a - v_b)^2, over pairs with distance <= max_lag. max_lag_km = 0 picks
/// half the maximum inter-site distance. Only bins holding at least one
/// pair are emitted.
Semivariogram semivariogram(const std::vector<Point>& locations,
                            const std::vector<double>& values,
                            double bin_width_km = 2.0, double max_lag_km = 0);

/// Convenience overload keyed by site id; every id must have a value.
Semivariogram semivariogram(const std::vector<std::string>& site_ids,
                            const std::vector<Point>& locations,
                            const std::map<std::string, double>& values,
                            double bin_width_km = 2.0, double max_lag_km = 0);

}  // namespace validate
}  // namespace no2
