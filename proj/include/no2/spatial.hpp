#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "no2/fit.hpp"
#include "no2/geom.hpp"

namespace no2 {
namespace spatial {

/// Pairwise site distances in kilometres.
Eigen::MatrixXd distance_matrix_km(const std::vector<Point>& locations);

/// Exponential correlation exp(-d / phi) over a distance matrix (km).
Eigen::MatrixXd exp_correlation(const Eigen::MatrixXd& dist_km, double phi);

struct McmcConfig {
  int chains = 2;
  int iterations = 10000;
  int burnin = 5000;
  int thin = 10;  // keep every thin-th random-intercept vector after burn-in
  std::uint64_t seed = 1;
  double init_step = 0.5;  // random-walk step on ln(phi)
  double phi_max = 0;      // 0 -> half the maximum inter-site distance (km)

  // Hooks for tests that need parts of the sampler pinned.
  bool fix_phi = false;
  double fixed_phi = 0;
  bool fix_variances = false;
  double fixed_sigma_b2 = 0;
  double fixed_sigma_y2 = 0;
};

struct ParamSummary {
  double mean = 0;
  double sd = 0;
  double q025 = 0;
  double q500 = 0;
  double q975 = 0;
};

/// Mean, sd and 2.5/50/97.5 percentiles of a draw sequence.
ParamSummary summarize(const std::vector<double>& draws);

/// One kept random-intercept vector with the state it was drawn under.
struct B0Draw {
  int chain = 0;
  int iteration = 0;  // absolute within-chain iteration index
  double phi = 0;
  Eigen::VectorXd b0;  // aligned with site_ids
};

struct SpatialPosterior {
  std::vector<std::string> site_ids;
  std::vector<Point> site_locations;
  std::vector<std::string> coef_names;

  // Post-burn-in draws pooled across chains; rows align across parameters.
  Eigen::MatrixXd theta_draws;  // one column per fixed effect
  std::vector<double> sigma_b2_draws;
  std::vector<double> sigma_y2_draws;
  std::vector<double> phi_draws;
  std::vector<B0Draw> b0_draws;

  std::vector<double> acceptance_rate;  // per chain, after burn-in
  std::vector<std::string> warnings;
  double phi_max = 0;

  std::size_t n_draws() const { return sigma_y2_draws.size(); }
  std::vector<double> theta_column(std::size_t j) const;
  ParamSummary theta_summary(std::size_t j) const;
};

/// Gibbs sampler for the random-intercept model with spatially correlated
/// intercepts, b0 ~ N(0, sigma_b^2 exp(-d/phi)). Flat priors on the fixed
/// effects, inverse-gamma(0.01, 0.01) on both variances, uniform (0, phi_max]
/// on the range. phi moves by adaptive random-walk Metropolis on ln(phi);
/// the step adapts only during burn-in. Same seed, same config, same input
/// gives identical draws.
SpatialPosterior fit_spatial(const fit::GroupedDesign& design,
                             const McmcConfig& config);

}  // namespace spatial
}  // namespace no2
