#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "helpers.hpp"
#include "no2/errors.hpp"
#include "no2/fit.hpp"
#include "no2/rng.hpp"

using namespace no2;

namespace {

/// Dense maximum-likelihood oracle for the random-intercept model: profiles
/// beta and sigma_y2 on a fine grid over the variance ratio, with explicit
/// per-site covariance blocks. Shares nothing with the library's grouped
/// sufficient-statistics path.
struct DenseMlOracle {
  double loglik = -1e300;
  double lambda = 0;
  double sigma_y2 = 0;
  double sigma_b2 = 0;
  Eigen::VectorXd beta;
};

DenseMlOracle dense_ml(const fit::GroupedDesign& d,
                       const std::vector<double>& lambda_grid) {
  const Eigen::MatrixXd X = d.matrix();
  const Eigen::VectorXd y = d.response();
  const auto n = static_cast<double>(d.n_rows());
  DenseMlOracle best;
  for (double lambda : lambda_grid) {
    Eigen::MatrixXd xtvx =
        Eigen::MatrixXd::Zero(X.cols(), X.cols());
    Eigen::VectorXd xtvy = Eigen::VectorXd::Zero(X.cols());
    double logdet = 0;
    std::vector<Eigen::MatrixXd> vinvs;
    for (const auto& rows : d.group_rows) {
      const auto ni = static_cast<Eigen::Index>(rows.size());
      Eigen::MatrixXd Xi(ni, X.cols());
      Eigen::VectorXd yi(ni);
      for (Eigen::Index r = 0; r < ni; ++r) {
        Xi.row(r) = X.row(static_cast<Eigen::Index>(rows[r]));
        yi(r) = y(static_cast<Eigen::Index>(rows[r]));
      }
      Eigen::MatrixXd V = Eigen::MatrixXd::Identity(ni, ni) +
                          lambda * Eigen::MatrixXd::Ones(ni, ni);
      Eigen::MatrixXd Vinv = V.inverse();
      xtvx += Xi.transpose() * Vinv * Xi;
      xtvy += Xi.transpose() * Vinv * yi;
      logdet += std::log(V.determinant());
      vinvs.push_back(std::move(Vinv));
    }
    const Eigen::VectorXd beta = xtvx.ldlt().solve(xtvy);
    double rss = 0;
    std::size_t g = 0;
    for (const auto& rows : d.group_rows) {
      const auto ni = static_cast<Eigen::Index>(rows.size());
      Eigen::VectorXd ri(ni);
      for (Eigen::Index r = 0; r < ni; ++r) {
        const auto idx = static_cast<Eigen::Index>(rows[r]);
        ri(r) = y(idx) - X.row(idx).dot(beta);
      }
      rss += ri.dot(vinvs[g] * ri);
      ++g;
    }
    const double sigma2 = rss / n;
    if (!(sigma2 > 0)) continue;
    const double crit = n * std::log(2.0 * M_PI * sigma2) + logdet + n;
    const double ll = -0.5 * crit;
    if (ll > best.loglik) {
      best.loglik = ll;
      best.lambda = lambda;
      best.sigma_y2 = sigma2;
      best.sigma_b2 = lambda * sigma2;
      best.beta = beta;
    }
  }
  return best;
}

fit::GroupedDesign random_grouped(Rng& rng, int n_sites, int per_site,
                                  double sigma_b, double sigma_y,
                                  bool site_constant_w) {
  std::vector<std::string> ids;
  std::vector<double> y, x;
  std::vector<std::vector<double>> w;
  for (int s = 0; s < n_sites; ++s) {
    const double b = rng.normal(0.0, sigma_b);
    const double wsite = rng.uniform(0, 2);
    for (int t = 0; t < per_site; ++t) {
      const double xv = rng.normal(2.7, 0.4);
      const double wv = site_constant_w ? wsite : rng.uniform(0, 2);
      ids.push_back("S" + std::to_string(s));
      x.push_back(xv);
      w.push_back({wv});
      y.push_back(-0.6 + 1.03 * xv + 0.15 * wv + b +
                  rng.normal(0.0, sigma_y));
    }
  }
  return test::make_design(ids, y, x, w);
}

}  // namespace

TEST_CASE("ols recovers an exact linear law") {
  std::vector<std::string> ids;
  std::vector<double> y, x;
  for (int i = 0; i < 12; ++i) {
    ids.push_back("S" + std::to_string(i));
    x.push_back(0.3 * i - 1.0);
    y.push_back(1.0 + 2.0 * x.back());
  }
  auto design = test::make_design(ids, y, x);
  auto f = fit::fit_linear(design);
  CHECK(f.alpha0 == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(f.alpha1 == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(f.r2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(f.sigma2 < 1e-18);
  CHECK(f.n_rows == 12);
  CHECK(f.df_residual == 10);
}

TEST_CASE("ols matches the normal-equations oracle with traffic columns") {
  Rng rng(101);
  auto design = random_grouped(rng, 50, 1, 0.0, 0.25, false);
  auto f = fit::fit_linear(design);

  std::vector<std::vector<double>> X;
  std::vector<double> y;
  for (const auto& row : design.rows) {
    X.push_back({1.0, row.x, row.w[0]});
    y.push_back(row.y);
  }
  auto oracle = test::ols_oracle(X, y);
  CHECK(f.alpha0 == doctest::Approx(oracle.coef[0]).epsilon(1e-10));
  CHECK(f.alpha1 == doctest::Approx(oracle.coef[1]).epsilon(1e-10));
  CHECK(f.gamma[0] == doctest::Approx(oracle.coef[2]).epsilon(1e-10));
  for (int j = 0; j < 3; ++j)
    CHECK(f.se[j] == doctest::Approx(oracle.se[j]).epsilon(1e-10));
  CHECK(f.adjusted_r2 == doctest::Approx(oracle.adjusted_r2).epsilon(1e-10));

  // residuals orthogonal to every column
  Eigen::MatrixXd Xm = design.matrix();
  Eigen::VectorXd r = design.response();
  for (Eigen::Index i = 0; i < r.size(); ++i)
    r(i) -= f.alpha0 + f.alpha1 * design.rows[i].x +
            f.gamma[0] * design.rows[i].w[0];
  Eigen::VectorXd xtr = Xm.transpose() * r;
  for (Eigen::Index j = 0; j < xtr.size(); ++j)
    CHECK(std::abs(xtr(j)) < 1e-8);
}

TEST_CASE("five-ring design matches the oracle") {
  Rng rng(77);
  std::vector<std::string> ids;
  std::vector<double> y, x;
  std::vector<std::vector<double>> w;
  for (int i = 0; i < 120; ++i) {
    ids.push_back("S" + std::to_string(i));
    x.push_back(rng.normal(2.7, 0.5));
    std::vector<double> wi(5);
    for (auto& v : wi) v = rng.uniform(0, 3);
    double mean = -0.5 + 1.0 * x.back();
    for (int k = 0; k < 5; ++k) mean += 0.03 * (k + 1) * wi[k];
    w.push_back(wi);
    y.push_back(mean + rng.normal(0, 0.3));
  }
  auto design = test::make_design(ids, y, x, w);
  auto f = fit::fit_linear(design);
  std::vector<std::vector<double>> X;
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::vector<double> row = {1.0, x[i]};
    row.insert(row.end(), w[i].begin(), w[i].end());
    X.push_back(row);
  }
  auto oracle = test::ols_oracle(X, y);
  for (int j = 0; j < 7; ++j) {
    CHECK(f.coef(static_cast<std::size_t>(j)) ==
          doctest::Approx(oracle.coef[static_cast<std::size_t>(j)])
              .epsilon(1e-9));
    CHECK(f.se[static_cast<std::size_t>(j)] ==
          doctest::Approx(oracle.se[static_cast<std::size_t>(j)])
              .epsilon(1e-9));
  }
}

TEST_CASE("rank deficiency raises a named error") {
  std::vector<std::string> ids;
  std::vector<double> y, x;
  std::vector<std::vector<double>> w;
  Rng rng(3);
  for (int i = 0; i < 30; ++i) {
    ids.push_back("S" + std::to_string(i));
    const double xv = rng.normal(0, 1);
    x.push_back(xv);
    w.push_back({xv});  // w1 duplicates x
    y.push_back(rng.normal(0, 1));
  }
  auto design = test::make_design(ids, y, x, w);
  CHECK_THROWS_WITH_AS(fit::fit_linear(design), doctest::Contains("w1"),
                       InputError);
}

TEST_CASE("profile likelihood agrees with the dense grid oracle") {
  Rng rng(2024);
  auto design = random_grouped(rng, 8, 4, 0.35, 0.2, true);

  std::vector<double> coarse;
  for (double l = 0.0; l <= 40.0; l += 0.01) coarse.push_back(l);
  auto oracle = dense_ml(design, coarse);
  // refine around the coarse optimum
  std::vector<double> fine;
  for (double l = std::max(0.0, oracle.lambda - 0.02);
       l <= oracle.lambda + 0.02; l += 1e-5)
    fine.push_back(l);
  oracle = dense_ml(design, fine);

  auto mf = fit::fit_longitudinal(design);
  CHECK(mf.loglik == doctest::Approx(oracle.loglik).epsilon(1e-6));
  CHECK(mf.beta0 == doctest::Approx(oracle.beta(0)).epsilon(1e-4));
  CHECK(mf.beta1 == doctest::Approx(oracle.beta(1)).epsilon(1e-4));
  CHECK(mf.gamma[0] == doctest::Approx(oracle.beta(2)).epsilon(1e-4));
  CHECK(mf.sigma_y2 ==
        doctest::Approx(oracle.sigma_y2).epsilon(1e-3).scale(1e-4));
  CHECK(mf.sigma_b2 ==
        doctest::Approx(oracle.sigma_b2).epsilon(1e-3).scale(1e-4));

  // the profiled optimum cannot be worse than no random intercept
  auto zero = dense_ml(design, {0.0});
  CHECK(mf.loglik >= zero.loglik - 1e-9);
}

TEST_CASE("zero intercept variance collapses to ordinary least squares") {
  Rng rng(404);
  auto design = random_grouped(rng, 60, 4, 0.0, 0.3, true);
  auto mf = fit::fit_longitudinal(design);
  auto lf = fit::fit_linear(design);
  CHECK(mf.sigma_b2 < 1e-3);
  CHECK(mf.beta0 == doctest::Approx(lf.alpha0).epsilon(1e-4).scale(1e-3));
  CHECK(mf.beta1 == doctest::Approx(lf.alpha1).epsilon(1e-4).scale(1e-3));
  CHECK(mf.gamma[0] == doctest::Approx(lf.gamma[0]).epsilon(1e-4).scale(1e-3));
}

TEST_CASE("blups shrink site means toward zero") {
  Rng rng(909);
  auto design = random_grouped(rng, 30, 4, 0.4, 0.25, true);
  auto mf = fit::fit_longitudinal(design);
  REQUIRE(mf.blups.size() == 30);

  // raw mean residual per site, using the fitted fixed effects
  std::map<std::string, std::pair<double, int>> acc;
  for (const auto& row : design.rows) {
    const double fitted =
        mf.beta0 + mf.beta1 * row.x + mf.gamma[0] * row.w[0];
    acc[row.site_id].first += row.y - fitted;
    acc[row.site_id].second += 1;
  }
  const double lambda = mf.sigma_b2 / mf.sigma_y2;
  for (const auto& [id, blup] : mf.blups) {
    const auto [sum, cnt] = acc[id];
    const double mean = sum / cnt;
    const double expected = lambda * sum / (1.0 + cnt * lambda);
    CHECK(blup == doctest::Approx(expected).epsilon(1e-8).scale(1e-8));
    CHECK(std::abs(blup) <= std::abs(mean) + 1e-12);
  }
}

TEST_CASE("denominator degrees of freedom split within and between") {
  Rng rng(61);
  auto design = random_grouped(rng, 266, 4, 0.2, 0.25, true);
  auto mf = fit::fit_longitudinal(design);
  REQUIRE(mf.df.size() == 3);
  CHECK(mf.df[0] == 797);  // intercept: 1064 - 266 - 1
  CHECK(mf.df[1] == 797);  // x varies within sites
  CHECK(mf.df[2] == 264);  // w constant within each site: 266 - 1 - 1
  CHECK(mf.p_value[1] < 1e-6);
}

TEST_CASE("variance inflation factors") {
  // orthogonal covariates: VIF 1
  const int n = 400;
  Eigen::MatrixXd C(n, 2);
  for (int i = 0; i < n; ++i) {
    C(i, 0) = (i % 2 == 0) ? 1.0 : -1.0;
    C(i, 1) = (i % 4 < 2) ? 1.0 : -1.0;
  }
  auto v = fit::vif_columns(C);
  CHECK(v[0] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(v[1] == doctest::Approx(1.0).epsilon(1e-10));

  // exact sample correlation 0.8 -> VIF 1 / (1 - 0.64)
  Rng rng(12);
  Eigen::VectorXd u(n), w(n);
  for (int i = 0; i < n; ++i) {
    u(i) = rng.normal();
    w(i) = rng.normal();
  }
  u.array() -= u.mean();
  w.array() -= w.mean();
  w -= (w.dot(u) / u.squaredNorm()) * u;  // exact orthogonalization
  u /= u.norm();
  w /= w.norm();
  Eigen::MatrixXd C2(n, 2);
  C2.col(0) = u;
  C2.col(1) = 0.8 * u + 0.6 * w;
  auto v2 = fit::vif_columns(C2);
  CHECK(v2[0] == doctest::Approx(1.0 / 0.36).epsilon(1e-4));
  CHECK(v2[1] == doctest::Approx(2.7778).epsilon(1e-3));

  // perfect collinearity yields the +infinity sentinel
  Eigen::MatrixXd C3(n, 2);
  C3.col(0) = u;
  C3.col(1) = 2.0 * u;
  auto v3 = fit::vif_columns(C3);
  CHECK(std::isinf(v3[0]));
  CHECK(std::isinf(v3[1]));
}

TEST_CASE("t distribution p-values") {
  CHECK(fit::student_t_pvalue(0.0, 797) == doctest::Approx(1.0));
  CHECK(fit::student_t_pvalue(1.9647, 797) ==
        doctest::Approx(0.05).epsilon(1e-2));
  CHECK(fit::student_t_pvalue(-1.9647, 797) ==
        doctest::Approx(fit::student_t_pvalue(1.9647, 797)).epsilon(1e-12));
  CHECK(fit::student_t_pvalue(50.0, 100) < 1e-10);
  CHECK_THROWS_AS(fit::student_t_pvalue(1.0, 0.0), InputError);
}

TEST_CASE("degenerate designs are rejected") {
  // more coefficients than rows
  std::vector<std::string> ids = {"A", "B"};
  std::vector<double> y = {1.0, 2.0}, x = {0.5, 1.5};
  auto tiny = test::make_design(ids, y, x);
  CHECK_THROWS_AS(fit::fit_linear(tiny), InputError);

  // mixed model with a single site
  std::vector<std::string> one = {"A", "A", "A", "A"};
  std::vector<double> y4 = {1, 2, 3, 4}, x4 = {0.1, 0.2, 0.3, 0.4};
  auto single = test::make_design(one, y4, x4);
  CHECK_THROWS_AS(fit::fit_longitudinal(single), InputError);
}
