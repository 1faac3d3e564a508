#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "no2/data.hpp"
#include "no2/interp.hpp"
#include "no2/traffic.hpp"

namespace no2 {
namespace fit {

/// One modeling row: log observation, log interpolated covariate, and the
/// traffic exposure covariates for the site.
struct DesignRow {
  std::string site_id;
  double y = 0;            // ln of the observed NO2 (ppb)
  double x = 0;            // ln of the period-averaged interpolated NO2
  std::vector<double> w;   // scaled exposure covariates, one per ring
};

/// Rows grouped by site, with per-site locations for the spatial model.
struct GroupedDesign {
  std::vector<DesignRow> rows;
  std::vector<std::string> site_ids;               // group order
  std::vector<Point> site_locations;               // aligned with site_ids
  std::vector<std::vector<std::size_t>> group_rows;  // row indices per site
  std::size_t traffic_dim = 0;

  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_sites() const { return site_ids.size(); }
  /// Fixed-effect count: intercept + x + traffic covariates.
  std::size_t n_coef() const { return 2 + traffic_dim; }

  /// Dense fixed-effects matrix [1, x, w...] in row order.
  Eigen::MatrixXd matrix() const;
  Eigen::VectorXd response() const;
  /// Coefficient labels: intercept, x, w1..wK.
  std::vector<std::string> coef_names() const;
};

/// Joins site observations with period covariates and exposures.
/// `include_traffic` = false drops the exposure columns (used for the
/// with/without-traffic comparisons). Throws InputError when an observation
/// lacks a matching covariate or exposure.
GroupedDesign build_design(
    const std::vector<Site>& sites,
    const std::vector<interp::PeriodCovariate>& covariates,
    const std::vector<traffic::ExposureVector>& exposures,
    bool include_traffic = true);

/// Ordinary least squares fit of y on [1, x, w...].
struct LinearFit {
  double alpha0 = 0;
  double alpha1 = 0;
  std::vector<double> gamma;
  // aligned with [alpha0, alpha1, gamma...]
  std::vector<double> se, t_value, p_value;
  double r2 = 0;
  double adjusted_r2 = 0;
  double sigma2 = 0;  // residual variance, RSS / (n - p)
  std::size_t n_rows = 0;
  std::size_t df_residual = 0;

  double coef(std::size_t j) const {
    if (j == 0) return alpha0;
    if (j == 1) return alpha1;
    return gamma[j - 2];
  }
};

/// Throws InputError on rank deficiency (naming the dependent columns) or
/// when n <= p.
LinearFit fit_linear(const GroupedDesign& design);

/// Random-intercept model fit by (RE)ML profile likelihood on the variance
/// ratio sigma_b^2 / sigma_Y^2.
struct MixedFit {
  double beta0 = 0;
  double beta1 = 0;
  std::vector<double> gamma;
  std::vector<double> se, t_value, p_value;
  std::vector<long> df;  // between/within denominator df per coefficient
  double sigma_b2 = 0;
  double sigma_y2 = 0;
  double loglik = 0;  // value of the maximized criterion (ML or REML)
  bool reml = false;
  std::map<std::string, double> blups;  // site -> predicted random intercept
  std::size_t n_rows = 0;
  std::size_t n_sites = 0;
};

struct MixedOptions {
  bool reml = false;
  int max_iter = 200;
};

/// Throws InputError for fewer than 2 sites and NumericError when the
/// profile search fails to converge.
MixedFit fit_longitudinal(const GroupedDesign& design,
                          const MixedOptions& options = {});

/// Variance inflation factors for the given covariate columns. Each column
/// is regressed (with intercept) on the others; VIF_j = 1 / (1 - R_j^2).
/// Perfect collinearity yields +infinity.
std::vector<double> vif_columns(const Eigen::MatrixXd& covariates);

/// VIFs for the traffic covariates of a design, regressing each w_k on
/// [x, other w] with intercept. Requires at least 2 covariates total.
std::vector<double> vif(const GroupedDesign& design);

/// Two-sided p-value for a t statistic with `df` degrees of freedom.
double student_t_pvalue(double t, double df);

}  // namespace fit
}  // namespace no2
