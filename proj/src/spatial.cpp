#include "no2/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "no2/errors.hpp"
#include "no2/rng.hpp"

namespace no2 {
namespace spatial {

Eigen::MatrixXd distance_matrix_km(const std::vector<Point>& locations) {
  const std::size_t q = locations.size();
  Eigen::MatrixXd d(q, q);
  for (std::size_t i = 0; i < q; ++i) {
    d(i, i) = 0;
    for (std::size_t j = i + 1; j < q; ++j) {
      double km = distance(locations[i], locations[j]) / 1000.0;
      d(i, j) = km;
      d(j, i) = km;
    }
  }
  return d;
}

Eigen::MatrixXd exp_correlation(const Eigen::MatrixXd& dist_km, double phi) {
  if (!(phi > 0)) throw InputError("correlation range must be positive");
  return (-dist_km.array() / phi).exp().matrix();
}

ParamSummary summarize(const std::vector<double>& draws) {
  if (draws.empty()) throw InputError("cannot summarize an empty draw set");
  ParamSummary s;
  const double n = static_cast<double>(draws.size());
  double mean = 0;
  for (double v : draws) mean += v;
  mean /= n;
  double ss = 0;
  for (double v : draws) ss += (v - mean) * (v - mean);
  s.mean = mean;
  s.sd = draws.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  std::vector<double> sorted = draws;
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double p) {
    // Linear interpolation between order statistics.
    double h = p * (n - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(h));
    std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  };
  s.q025 = quantile(0.025);
  s.q500 = quantile(0.5);
  s.q975 = quantile(0.975);
  return s;
}

std::vector<double> SpatialPosterior::theta_column(std::size_t j) const {
  std::vector<double> out(static_cast<std::size_t>(theta_draws.rows()));
  for (Eigen::Index i = 0; i < theta_draws.rows(); ++i)
    out[static_cast<std::size_t>(i)] = theta_draws(i, static_cast<Eigen::Index>(j));
  return out;
}

ParamSummary SpatialPosterior::theta_summary(std::size_t j) const {
  return summarize(theta_column(j));
}

namespace {

struct ChainState {
  Eigen::VectorXd theta;
  Eigen::VectorXd b0;
  double sigma_b2 = 0;
  double sigma_y2 = 0;
  double phi = 0;
  // Cached decompositions for the current phi.
  Eigen::MatrixXd chol_corr;   // lower Cholesky factor L of exp(-d/phi)
  Eigen::MatrixXd graw;        // L' diag(n_i) L
  double quad = 0;             // b0' Sigma(phi)^-1 b0
  double logdet_half = 0;      // sum ln L_ii
};

// Refreshes the cached factorization after a phi move (or at start).
void refresh_phi_cache(ChainState& st, const Eigen::MatrixXd& dist_km,
                       const Eigen::VectorXd& group_sizes) {
  Eigen::MatrixXd corr = exp_correlation(dist_km, st.phi);
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success)
    throw NumericError("correlation matrix not positive definite at phi=" +
                       std::to_string(st.phi));
  st.chol_corr = llt.matrixL();
  st.graw = st.chol_corr.transpose() * group_sizes.asDiagonal() * st.chol_corr;
  Eigen::VectorXd v = st.chol_corr.triangularView<Eigen::Lower>().solve(st.b0);
  st.quad = v.squaredNorm();
  st.logdet_half = st.chol_corr.diagonal().array().log().sum();
}

}  // namespace

SpatialPosterior fit_spatial(const fit::GroupedDesign& design,
                             const McmcConfig& config) {
  const std::size_t q = design.n_sites();
  const std::size_t n = design.n_rows();
  const std::size_t p = design.n_coef();
  if (q < 2) throw InputError("spatial model needs at least 2 sites");
  if (n <= p) throw InputError("not enough rows for the fixed effects");
  if (config.chains < 1) throw InputError("need at least 1 chain");
  if (config.iterations <= config.burnin)
    throw InputError("iterations must exceed burnin");
  if (config.burnin < 0) throw InputError("burnin cannot be negative");
  if (config.thin < 1) throw InputError("thin must be >= 1");
  if (!(config.init_step > 0)) throw InputError("init_step must be positive");

  const Eigen::MatrixXd dist_km = distance_matrix_km(design.site_locations);
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = i + 1; j < q; ++j)
      if (dist_km(i, j) <= 0)
        throw InputError("sites " + design.site_ids[i] + " and " +
                         design.site_ids[j] +
                         " are collocated; correlation range is not "
                         "identifiable");

  double phi_max = config.phi_max;
  if (phi_max <= 0) phi_max = dist_km.maxCoeff() / 2.0;
  if (!(phi_max > 0)) throw InputError("phi_max must be positive");

  if (config.fix_phi && !(config.fixed_phi > 0 && config.fixed_phi <= phi_max))
    throw InputError("fixed phi must lie in (0, phi_max]");
  if (config.fix_variances &&
      (!(config.fixed_sigma_b2 > 0) || !(config.fixed_sigma_y2 > 0)))
    throw InputError("fixed variances must be positive");

  const Eigen::MatrixXd x = design.matrix();
  const Eigen::VectorXd y = design.response();

  // Fixed pieces reused across iterations.
  const Eigen::MatrixXd xtx = x.transpose() * x;
  Eigen::LLT<Eigen::MatrixXd> xtx_llt(xtx);
  if (xtx_llt.info() != Eigen::Success)
    throw InputError("design matrix is rank deficient");
  Eigen::VectorXd group_sizes(q);
  for (std::size_t g = 0; g < q; ++g)
    group_sizes(static_cast<Eigen::Index>(g)) =
        static_cast<double>(design.group_rows[g].size());

  // Row -> site index map for residual accumulation.
  std::vector<std::size_t> row_site(n);
  for (std::size_t g = 0; g < q; ++g)
    for (std::size_t idx : design.group_rows[g]) row_site[idx] = g;

  // Shared starting point: OLS effects, mean residuals as intercepts.
  Eigen::VectorXd theta0 = xtx_llt.solve(x.transpose() * y);
  Eigen::VectorXd resid0 = y - x * theta0;
  Eigen::VectorXd b0_init = Eigen::VectorXd::Zero(q);
  for (std::size_t i = 0; i < n; ++i)
    b0_init(static_cast<Eigen::Index>(row_site[i])) +=
        resid0(static_cast<Eigen::Index>(i));
  b0_init.array() /= group_sizes.array();
  double sigma_y2_init = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = resid0(static_cast<Eigen::Index>(i)) -
               b0_init(static_cast<Eigen::Index>(row_site[i]));
    sigma_y2_init += r * r;
  }
  sigma_y2_init = std::max(sigma_y2_init / static_cast<double>(n), 1e-8);
  double sigma_b2_init = std::max(
      b0_init.squaredNorm() / static_cast<double>(q), 1e-8);

  const double prior_shape = 0.01, prior_rate = 0.01;
  const int kept_per_chain = config.iterations - config.burnin;
  const std::size_t total_kept =
      static_cast<std::size_t>(kept_per_chain) *
      static_cast<std::size_t>(config.chains);

  SpatialPosterior post;
  post.site_ids = design.site_ids;
  post.site_locations = design.site_locations;
  post.coef_names = design.coef_names();
  post.phi_max = phi_max;
  post.theta_draws.resize(static_cast<Eigen::Index>(total_kept),
                          static_cast<Eigen::Index>(p));
  post.sigma_b2_draws.reserve(total_kept);
  post.sigma_y2_draws.reserve(total_kept);
  post.phi_draws.reserve(total_kept);

  Rng base(config.seed);
  std::size_t kept_row = 0;

  for (int chain = 0; chain < config.chains; ++chain) {
    Rng rng = base.fork(static_cast<std::uint64_t>(chain));

    ChainState st;
    st.theta = theta0;
    st.b0 = b0_init;
    st.sigma_y2 = config.fix_variances ? config.fixed_sigma_y2 : sigma_y2_init;
    st.sigma_b2 = config.fix_variances ? config.fixed_sigma_b2 : sigma_b2_init;
    st.phi = config.fix_phi ? config.fixed_phi : phi_max / 5.0;
    refresh_phi_cache(st, dist_km, group_sizes);

    double ln_step = std::log(config.init_step);
    long proposals = 0;
    long accepted_post = 0;

    for (int iter = 0; iter < config.iterations; ++iter) {
      // Fixed effects given everything else: flat prior, Gaussian draw
      // around the GLS mean with the intercepts subtracted.
      Eigen::VectorXd y_adj = y;
      for (std::size_t i = 0; i < n; ++i)
        y_adj(static_cast<Eigen::Index>(i)) -=
            st.b0(static_cast<Eigen::Index>(row_site[i]));
      Eigen::VectorXd theta_hat = xtx_llt.solve(x.transpose() * y_adj);
      Eigen::VectorXd z(p);
      for (std::size_t j = 0; j < p; ++j)
        z(static_cast<Eigen::Index>(j)) = rng.normal();
      st.theta = theta_hat +
                 std::sqrt(st.sigma_y2) *
                     xtx_llt.matrixU().solve(z);

      // Random intercepts via the whitened parameterization b0 = L u:
      // precision I/sigma_b2 + L'NL/sigma_y2 stays well conditioned at
      // small phi.
      Eigen::VectorXd resid_sum = Eigen::VectorXd::Zero(q);
      {
        Eigen::VectorXd r = y - x * st.theta;
        for (std::size_t i = 0; i < n; ++i)
          resid_sum(static_cast<Eigen::Index>(row_site[i])) +=
              r(static_cast<Eigen::Index>(i));
      }
      Eigen::MatrixXd prec = st.graw / st.sigma_y2;
      prec.diagonal().array() += 1.0 / st.sigma_b2;
      Eigen::LLT<Eigen::MatrixXd> prec_llt(prec);
      if (prec_llt.info() != Eigen::Success)
        throw NumericError("intercept precision not positive definite (chain " +
                           std::to_string(chain) + ", iteration " +
                           std::to_string(iter) + ")");
      Eigen::VectorXd rhs =
          st.chol_corr.transpose() * resid_sum / st.sigma_y2;
      Eigen::VectorXd mu = prec_llt.solve(rhs);
      Eigen::VectorXd zu(q);
      for (std::size_t j = 0; j < q; ++j)
        zu(static_cast<Eigen::Index>(j)) = rng.normal();
      Eigen::VectorXd u = mu + prec_llt.matrixU().solve(zu);
      st.b0 = st.chol_corr.triangularView<Eigen::Lower>() * u;
      st.quad = u.squaredNorm();

      if (!config.fix_variances) {
        // Residual variance.
        double rss = 0;
        Eigen::VectorXd r = y - x * st.theta;
        for (std::size_t i = 0; i < n; ++i) {
          double v = r(static_cast<Eigen::Index>(i)) -
                     st.b0(static_cast<Eigen::Index>(row_site[i]));
          rss += v * v;
        }
        st.sigma_y2 = rng.inv_gamma(prior_shape + 0.5 * static_cast<double>(n),
                                    prior_rate + 0.5 * rss);
        // Intercept variance; the whitened draw already carries the quad form.
        st.sigma_b2 = rng.inv_gamma(prior_shape + 0.5 * static_cast<double>(q),
                                    prior_rate + 0.5 * st.quad);
      }

      if (!config.fix_phi) {
        // Random walk on ln(phi). The +ln(phi) term is the Jacobian of the
        // log transform under the uniform prior on phi.
        ++proposals;
        double step = std::exp(ln_step);
        double phi_prop = st.phi * std::exp(step * rng.normal());
        double log_alpha = -std::numeric_limits<double>::infinity();
        Eigen::MatrixXd chol_prop;
        double quad_prop = 0, logdet_half_prop = 0;
        if (phi_prop <= phi_max && phi_prop > 0 &&
            std::isfinite(phi_prop)) {
          Eigen::MatrixXd corr = exp_correlation(dist_km, phi_prop);
          Eigen::LLT<Eigen::MatrixXd> llt(corr);
          if (llt.info() == Eigen::Success) {
            chol_prop = llt.matrixL();
            Eigen::VectorXd v =
                chol_prop.triangularView<Eigen::Lower>().solve(st.b0);
            quad_prop = v.squaredNorm();
            logdet_half_prop =
                chol_prop.diagonal().array().log().sum();
            double lp_prop = -logdet_half_prop -
                             quad_prop / (2.0 * st.sigma_b2) +
                             std::log(phi_prop);
            double lp_cur = -st.logdet_half - st.quad / (2.0 * st.sigma_b2) +
                            std::log(st.phi);
            log_alpha = lp_prop - lp_cur;
          }
        }
        double alpha = std::min(1.0, std::exp(std::min(log_alpha, 0.0)));
        bool accept = std::log(rng.uniform_pos()) < log_alpha;
        if (accept) {
          st.phi = phi_prop;
          st.chol_corr = std::move(chol_prop);
          st.graw = st.chol_corr.transpose() * group_sizes.asDiagonal() *
                    st.chol_corr;
          st.quad = quad_prop;
          st.logdet_half = logdet_half_prop;
        }
        if (iter < config.burnin) {
          // Robbins-Monro drift toward 35% acceptance, frozen afterwards.
          double k = static_cast<double>(proposals);
          ln_step += (alpha - 0.35) / std::pow(k, 0.7);
          ln_step = std::clamp(ln_step, -10.0, 5.0);
        } else if (accept) {
          ++accepted_post;
        }
      }

      if (!(std::isfinite(st.sigma_b2) && std::isfinite(st.sigma_y2) &&
            std::isfinite(st.phi) && st.b0.allFinite() &&
            st.theta.allFinite()))
        throw NumericError("sampler state became non-finite (chain " +
                           std::to_string(chain) + ", iteration " +
                           std::to_string(iter) + ")");

      if (iter >= config.burnin) {
        post.theta_draws.row(static_cast<Eigen::Index>(kept_row)) =
            st.theta.transpose();
        ++kept_row;
        post.sigma_b2_draws.push_back(st.sigma_b2);
        post.sigma_y2_draws.push_back(st.sigma_y2);
        post.phi_draws.push_back(st.phi);
        if ((iter - config.burnin) % config.thin == 0) {
          B0Draw d;
          d.chain = chain;
          d.iteration = iter;
          d.phi = st.phi;
          d.b0 = st.b0;
          post.b0_draws.push_back(std::move(d));
        }
      }
    }

    double rate = config.fix_phi
                      ? 0.0
                      : static_cast<double>(accepted_post) /
                            static_cast<double>(kept_per_chain);
    post.acceptance_rate.push_back(rate);
    if (!config.fix_phi && (rate < 0.05 || rate > 0.8))
      post.warnings.push_back(
          "chain " + std::to_string(chain) +
          ": range acceptance rate " + std::to_string(rate) +
          " outside [0.05, 0.8]; draws for phi may mix poorly");
  }

  return post;
}

}  // namespace spatial
}  // namespace no2
