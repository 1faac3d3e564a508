#include "no2/fit.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "no2/errors.hpp"

namespace no2 {
namespace fit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ", ";
    out += parts[i];
  }
  return out;
}

}  // namespace

Eigen::MatrixXd GroupedDesign::matrix() const {
  Eigen::MatrixXd x(rows.size(), n_coef());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(i, 0) = 1.0;
    x(i, 1) = rows[i].x;
    for (std::size_t k = 0; k < traffic_dim; ++k) x(i, 2 + k) = rows[i].w[k];
  }
  return x;
}

Eigen::VectorXd GroupedDesign::response() const {
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) y(i) = rows[i].y;
  return y;
}

std::vector<std::string> GroupedDesign::coef_names() const {
  std::vector<std::string> names = {"intercept", "x"};
  for (std::size_t k = 0; k < traffic_dim; ++k)
    names.push_back("w" + std::to_string(k + 1));
  return names;
}

GroupedDesign build_design(
    const std::vector<Site>& sites,
    const std::vector<interp::PeriodCovariate>& covariates,
    const std::vector<traffic::ExposureVector>& exposures,
    bool include_traffic) {
  std::map<std::pair<std::string, Date>, const interp::PeriodCovariate*> cov_index;
  for (const auto& c : covariates) cov_index[{c.site_id, c.period_start}] = &c;
  std::map<std::string, const traffic::ExposureVector*> exp_index;
  std::size_t traffic_dim = 0;
  for (const auto& e : exposures) {
    exp_index[e.site_id] = &e;
    traffic_dim = std::max(traffic_dim, e.w.size());
  }
  if (!include_traffic) traffic_dim = 0;

  GroupedDesign design;
  design.traffic_dim = traffic_dim;
  for (const auto& site : sites) {
    if (site.observations.empty()) continue;
    const traffic::ExposureVector* ev = nullptr;
    if (include_traffic) {
      auto it = exp_index.find(site.site_id);
      if (it == exp_index.end())
        throw InputError("no exposure vector for site " + site.site_id);
      ev = it->second;
      if (ev->w.size() != traffic_dim)
        throw InputError("exposure vector for site " + site.site_id +
                         " has " + std::to_string(ev->w.size()) +
                         " rings, expected " + std::to_string(traffic_dim));
    }
    std::vector<std::size_t> members;
    for (const auto& obs : site.observations) {
      auto it = cov_index.find({site.site_id, obs.period_start});
      if (it == cov_index.end())
        throw InputError("no period covariate for site " + site.site_id +
                         " period starting " + obs.period_start.to_string());
      if (!(obs.no2_ppb > 0))
        throw InputError("non-positive observation at site " + site.site_id);
      DesignRow row;
      row.site_id = site.site_id;
      row.y = std::log(obs.no2_ppb);
      row.x = it->second->x_log;
      if (ev) row.w = ev->w;
      members.push_back(design.rows.size());
      design.rows.push_back(std::move(row));
    }
    design.site_ids.push_back(site.site_id);
    design.site_locations.push_back(site.location);
    design.group_rows.push_back(std::move(members));
  }
  return design;
}

double student_t_pvalue(double t, double df) {
  if (df <= 0) throw InputError("t distribution needs positive df");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

namespace {

// Columns taking part in an exact linear dependency, found by regressing
// each column on the rest.
std::vector<std::string> dependent_columns(const Eigen::MatrixXd& x,
                                           const std::vector<std::string>& names) {
  std::vector<std::string> out;
  const Eigen::Index p = x.cols();
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd others(x.rows(), p - 1);
    Eigen::Index c = 0;
    for (Eigen::Index k = 0; k < p; ++k)
      if (k != j) others.col(c++) = x.col(k);
    Eigen::VectorXd target = x.col(j);
    Eigen::VectorXd beta = others.colPivHouseholderQr().solve(target);
    double rss = (target - others * beta).squaredNorm();
    double scale = target.squaredNorm();
    if (rss <= 1e-10 * std::max(scale, 1.0))
      out.push_back(names[static_cast<std::size_t>(j)]);
  }
  return out;
}

struct OlsResult {
  Eigen::VectorXd coef;
  Eigen::MatrixXd xtx_inv;
  double rss = 0;
  double tss = 0;
};

OlsResult solve_ols(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                    const std::vector<std::string>& names) {
  const Eigen::Index p = x.cols();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < p) {
    auto cols = dependent_columns(x, names);
    throw InputError("design matrix is rank deficient; dependent columns: " +
                     (cols.empty() ? std::string("(numerically collinear)")
                                   : join(cols)));
  }
  OlsResult res;
  res.coef = qr.solve(y);
  Eigen::MatrixXd r = qr.matrixR().topLeftCorner(p, p)
                          .triangularView<Eigen::Upper>();
  Eigen::MatrixXd rinv = r.inverse();
  Eigen::MatrixXd inner = rinv * rinv.transpose();
  res.xtx_inv = qr.colsPermutation() * inner *
                qr.colsPermutation().transpose();
  res.rss = (y - x * res.coef).squaredNorm();
  double mean = y.mean();
  res.tss = (y.array() - mean).square().sum();
  return res;
}

}  // namespace

LinearFit fit_linear(const GroupedDesign& design) {
  const std::size_t n = design.n_rows();
  const std::size_t p = design.n_coef();
  if (n <= p)
    throw InputError("need more than " + std::to_string(p) +
                     " rows to fit, have " + std::to_string(n));

  Eigen::MatrixXd x = design.matrix();
  Eigen::VectorXd y = design.response();
  OlsResult ols = solve_ols(x, y, design.coef_names());

  LinearFit fit;
  fit.n_rows = n;
  fit.df_residual = n - p;
  fit.alpha0 = ols.coef(0);
  fit.alpha1 = ols.coef(1);
  for (std::size_t k = 0; k < design.traffic_dim; ++k)
    fit.gamma.push_back(ols.coef(2 + static_cast<Eigen::Index>(k)));
  fit.sigma2 = ols.rss / static_cast<double>(fit.df_residual);
  if (ols.tss > 0) {
    fit.r2 = 1.0 - ols.rss / ols.tss;
    fit.adjusted_r2 =
        1.0 - (1.0 - fit.r2) * static_cast<double>(n - 1) /
                  static_cast<double>(fit.df_residual);
  } else {
    fit.r2 = 1.0;
    fit.adjusted_r2 = 1.0;
  }
  for (std::size_t j = 0; j < p; ++j) {
    double var = fit.sigma2 * std::max(0.0, ols.xtx_inv(j, j));
    double se = std::sqrt(var);
    double coef = ols.coef(static_cast<Eigen::Index>(j));
    double t = se > 0 ? coef / se : (coef == 0 ? 0.0 : std::copysign(kInf, coef));
    fit.se.push_back(se);
    fit.t_value.push_back(t);
    fit.p_value.push_back(
        student_t_pvalue(t, static_cast<double>(fit.df_residual)));
  }
  return fit;
}

namespace {

// Per-site sufficient statistics for the profile likelihood. With
// V_i = I + lambda J, V_i^-1 = I - c J where c = lambda / (1 + n_i lambda),
// everything reduces to the moments collected here.
struct GroupStats {
  Eigen::MatrixXd xtx;  // X_i' X_i
  Eigen::VectorXd xty;  // X_i' y_i
  Eigen::VectorXd xs;   // column sums of X_i
  double ys = 0;        // sum of y_i
  double yy = 0;        // y_i' y_i
  double n = 0;
};

struct ProfileEval {
  Eigen::VectorXd theta;
  Eigen::MatrixXd xtvx;  // X' V^-1 X at unit sigma_Y^2
  double rss_v = 0;      // weighted residual sum of squares
  double logdet_v = 0;   // sum of ln(1 + n_i lambda)
  double criterion = 0;  // -2 log (restricted) likelihood, profiled
  double sigma2 = 0;     // profiled sigma_Y^2
};

ProfileEval eval_lambda(const std::vector<GroupStats>& groups, double lambda,
                        std::size_t n_total, std::size_t p, bool reml) {
  ProfileEval ev;
  Eigen::MatrixXd xtvx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xtvy = Eigen::VectorXd::Zero(p);
  double logdet = 0;
  for (const auto& g : groups) {
    double c = lambda / (1.0 + g.n * lambda);
    xtvx += g.xtx - c * (g.xs * g.xs.transpose());
    xtvy += g.xty - c * g.xs * g.ys;
    logdet += std::log1p(g.n * lambda);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(xtvx);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("weighted normal equations are singular at lambda=" +
                       std::to_string(lambda));
  Eigen::VectorXd theta = ldlt.solve(xtvy);

  double rss = 0;
  for (const auto& g : groups) {
    double c = lambda / (1.0 + g.n * lambda);
    double quad = g.yy - 2.0 * theta.dot(g.xty) + theta.dot(g.xtx * theta);
    double rsum = g.ys - g.xs.dot(theta);
    rss += quad - c * rsum * rsum;
  }
  rss = std::max(rss, 0.0);

  const double n = static_cast<double>(n_total);
  const double dof = reml ? n - static_cast<double>(p) : n;
  double sigma2 = rss / dof;
  double crit;
  if (sigma2 <= 0) {
    crit = -kInf;  // degenerate exact fit; treat as unbeatable
  } else {
    crit = dof * std::log(2.0 * M_PI * sigma2) + logdet + dof;
    if (reml) {
      // + ln |X' V^-1 X| with the residual variance profiled out.
      double logdet_xtvx = 0;
      Eigen::VectorXd d = ldlt.vectorD();
      for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d(i) <= 0)
          throw NumericError("X'V^-1X not positive definite at lambda=" +
                             std::to_string(lambda));
        logdet_xtvx += std::log(d(i));
      }
      crit += logdet_xtvx;
    }
  }
  ev.theta = std::move(theta);
  ev.xtvx = std::move(xtvx);
  ev.rss_v = rss;
  ev.logdet_v = logdet;
  ev.criterion = crit;
  ev.sigma2 = sigma2;
  return ev;
}

}  // namespace

MixedFit fit_longitudinal(const GroupedDesign& design,
                          const MixedOptions& options) {
  const std::size_t n = design.n_rows();
  const std::size_t p = design.n_coef();
  const std::size_t n_sites = design.n_sites();
  if (n_sites < 2)
    throw InputError("random-intercept fit needs at least 2 sites, have " +
                     std::to_string(n_sites));
  if (n <= p)
    throw InputError("need more than " + std::to_string(p) +
                     " rows to fit, have " + std::to_string(n));

  Eigen::MatrixXd x = design.matrix();
  Eigen::VectorXd y = design.response();
  // Rank check up front so deficiency reports column names, not a numeric
  // failure deep in the profile search.
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < static_cast<Eigen::Index>(p)) {
      auto cols = dependent_columns(x, design.coef_names());
      throw InputError("design matrix is rank deficient; dependent columns: " +
                       (cols.empty() ? std::string("(numerically collinear)")
                                     : join(cols)));
    }
  }

  std::vector<GroupStats> groups;
  groups.reserve(n_sites);
  for (const auto& members : design.group_rows) {
    GroupStats g;
    g.xtx = Eigen::MatrixXd::Zero(p, p);
    g.xty = Eigen::VectorXd::Zero(p);
    g.xs = Eigen::VectorXd::Zero(p);
    for (std::size_t idx : members) {
      Eigen::VectorXd row = x.row(static_cast<Eigen::Index>(idx)).transpose();
      double yi = y(static_cast<Eigen::Index>(idx));
      g.xtx += row * row.transpose();
      g.xty += row * yi;
      g.xs += row;
      g.ys += yi;
      g.yy += yi * yi;
    }
    g.n = static_cast<double>(members.size());
    groups.push_back(std::move(g));
  }

  const bool reml = options.reml;
  auto crit_at = [&](double lambda) {
    return eval_lambda(groups, lambda, n, p, reml).criterion;
  };

  // Coarse profile scan: lambda = 0 plus a log grid, then golden-section
  // refinement around the best grid point.
  std::vector<double> grid = {0.0};
  const int per_decade = 10;
  for (int i = 0; i <= per_decade * 10; ++i)
    grid.push_back(std::pow(10.0, -6.0 + static_cast<double>(i) / per_decade));
  std::size_t best = 0;
  double best_crit = kInf;
  std::vector<double> crits(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    crits[i] = crit_at(grid[i]);
    if (!std::isnan(crits[i]) && crits[i] < best_crit) {
      best_crit = crits[i];
      best = i;
    }
  }
  if (!std::isfinite(best_crit) && best_crit != -kInf)
    throw NumericError("profile likelihood returned no finite value");

  double lo = best > 0 ? grid[best - 1] : 0.0;
  double hi = best + 1 < grid.size() ? grid[best + 1] : grid.back() * 10.0;
  // Golden-section search for the minimum of the criterion on [lo, hi].
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c1 = b - invphi * (b - a);
  double c2 = a + invphi * (b - a);
  double f1 = crit_at(c1), f2 = crit_at(c2);
  int iter = 0;
  while (b - a > 1e-9 * (1.0 + b)) {
    if (++iter > options.max_iter)
      throw NumericError(
          "profile search did not converge after " +
          std::to_string(options.max_iter) + " iterations; interval [" +
          std::to_string(a) + ", " + std::to_string(b) + "], criterion " +
          std::to_string(std::min(f1, f2)));
    if (f1 < f2) {
      b = c2;
      c2 = c1;
      f2 = f1;
      c1 = b - invphi * (b - a);
      f1 = crit_at(c1);
    } else {
      a = c1;
      c1 = c2;
      f1 = f2;
      c2 = a + invphi * (b - a);
      f2 = crit_at(c2);
    }
  }
  double lambda = 0.5 * (a + b);
  if (crit_at(lambda) > best_crit) lambda = grid[best];
  if (crit_at(0.0) <= crit_at(lambda)) lambda = 0.0;

  ProfileEval ev = eval_lambda(groups, lambda, n, p, reml);
  if (!std::isfinite(ev.criterion) || ev.sigma2 < 0)
    throw NumericError("profile likelihood degenerate at the optimum");

  MixedFit fit;
  fit.reml = reml;
  fit.n_rows = n;
  fit.n_sites = n_sites;
  fit.sigma_y2 = ev.sigma2;
  fit.sigma_b2 = lambda * ev.sigma2;
  fit.loglik = -0.5 * ev.criterion;
  fit.beta0 = ev.theta(0);
  fit.beta1 = ev.theta(1);
  for (std::size_t k = 0; k < design.traffic_dim; ++k)
    fit.gamma.push_back(ev.theta(2 + static_cast<Eigen::Index>(k)));

  // BLUP of the random intercept: shrinkage of the mean within-site
  // residual, b_i = lambda * sum(r_i) / (1 + n_i lambda).
  for (std::size_t gidx = 0; gidx < n_sites; ++gidx) {
    const auto& g = groups[gidx];
    double rsum = g.ys - g.xs.dot(ev.theta);
    fit.blups[design.site_ids[gidx]] = lambda * rsum / (1.0 + g.n * lambda);
  }

  // Covariance of the fixed effects: sigma_Y^2 (X' V^-1 X)^-1.
  Eigen::MatrixXd cov = fit.sigma_y2 *
      ev.xtvx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));

  // Denominator df distinguish covariates that vary within site from those
  // constant per site. Site-constant covariates are tested between sites:
  // df = n_sites - (site-constant covariates) - 1. The rest, intercept
  // included, use df = n_rows - n_sites - (within-varying covariates).
  std::vector<bool> within(p, false);
  within[0] = false;  // intercept follows the within pool by convention
  for (std::size_t j = 1; j < p; ++j) {
    for (const auto& members : design.group_rows) {
      double first = x(static_cast<Eigen::Index>(members.front()),
                       static_cast<Eigen::Index>(j));
      for (std::size_t idx : members) {
        if (x(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(j)) !=
            first) {
          within[j] = true;
          break;
        }
      }
      if (within[j]) break;
    }
  }
  long q_within = 0, q_between = 0;
  for (std::size_t j = 1; j < p; ++j) (within[j] ? q_within : q_between)++;
  long df_within = static_cast<long>(n) - static_cast<long>(n_sites) - q_within;
  long df_between = static_cast<long>(n_sites) - q_between - 1;

  for (std::size_t j = 0; j < p; ++j) {
    double se = std::sqrt(std::max(0.0, cov(static_cast<Eigen::Index>(j),
                                            static_cast<Eigen::Index>(j))));
    double coef = ev.theta(static_cast<Eigen::Index>(j));
    double t = se > 0 ? coef / se : (coef == 0 ? 0.0 : std::copysign(kInf, coef));
    long df = (j == 0 || within[j]) ? df_within : df_between;
    fit.se.push_back(se);
    fit.t_value.push_back(t);
    fit.df.push_back(df);
    fit.p_value.push_back(df > 0
                              ? student_t_pvalue(t, static_cast<double>(df))
                              : std::numeric_limits<double>::quiet_NaN());
  }
  return fit;
}

std::vector<double> vif_columns(const Eigen::MatrixXd& covariates) {
  const Eigen::Index n = covariates.rows();
  const Eigen::Index p = covariates.cols();
  if (p < 2) throw InputError("vif needs at least 2 covariate columns");
  if (n < p + 1) throw InputError("vif needs more rows than columns");
  std::vector<double> out;
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::MatrixXd x(n, p);  // intercept + the other columns
    x.col(0).setOnes();
    Eigen::Index c = 1;
    for (Eigen::Index k = 0; k < p; ++k)
      if (k != j) x.col(c++) = covariates.col(k);
    Eigen::VectorXd target = covariates.col(j);
    Eigen::VectorXd beta = x.colPivHouseholderQr().solve(target);
    double rss = (target - x * beta).squaredNorm();
    double tss = (target.array() - target.mean()).square().sum();
    if (tss <= 0) {
      // Constant column: perfectly collinear with the intercept.
      out.push_back(kInf);
      continue;
    }
    double r2 = 1.0 - rss / tss;
    if (r2 >= 1.0 - 1e-12)
      out.push_back(kInf);
    else
      out.push_back(1.0 / (1.0 - r2));
  }
  return out;
}

std::vector<double> vif(const GroupedDesign& design) {
  const std::size_t p = 1 + design.traffic_dim;  // x plus the w columns
  if (p < 2)
    throw InputError("vif needs at least 2 covariates; design has " +
                     std::to_string(p));
  Eigen::MatrixXd cov(design.n_rows(), p);
  for (std::size_t i = 0; i < design.n_rows(); ++i) {
    cov(static_cast<Eigen::Index>(i), 0) = design.rows[i].x;
    for (std::size_t k = 0; k < design.traffic_dim; ++k)
      cov(static_cast<Eigen::Index>(i), 1 + static_cast<Eigen::Index>(k)) =
          design.rows[i].w[k];
  }
  auto all = vif_columns(cov);
  return std::vector<double>(all.begin() + 1, all.end());
}

}  // namespace fit
}  // namespace no2
