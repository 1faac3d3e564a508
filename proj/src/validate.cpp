#include "no2/validate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "no2/errors.hpp"
#include "no2/fit.hpp"

namespace no2 {
namespace validate {

namespace {

std::string list_keys(const std::vector<std::string>& keys) {
  std::string out;
  std::size_t shown = std::min<std::size_t>(keys.size(), 10);
  for (std::size_t i = 0; i < shown; ++i) out += " " + keys[i];
  if (keys.size() > shown)
    out += " (and " + std::to_string(keys.size() - shown) + " more)";
  return out;
}

}  // namespace

ValidationReport calibration(
    const std::vector<Site>& sites,
    const std::vector<predict::PeriodPrediction>& predicted) {
  std::map<std::pair<std::string, Date>, double> pred;
  for (const auto& p : predicted) {
    auto key = std::make_pair(p.site_id, p.period_start);
    if (!pred.emplace(key, p.p_ppb).second)
      throw InputError("duplicate prediction for site " + p.site_id +
                       " period " + p.period_start.to_string());
  }

  std::vector<double> z, p;
  std::set<std::string> matched_sites;
  std::vector<std::string> unmatched;
  std::set<std::pair<std::string, Date>> observed_keys;
  for (const auto& site : sites) {
    for (const auto& obs : site.observations) {
      auto key = std::make_pair(site.site_id, obs.period_start);
      observed_keys.insert(key);
      auto it = pred.find(key);
      if (it == pred.end()) {
        unmatched.push_back(site.site_id + "/" + obs.period_start.to_string());
        continue;
      }
      z.push_back(obs.no2_ppb);
      p.push_back(it->second);
      matched_sites.insert(site.site_id);
    }
  }
  for (const auto& [key, value] : pred) {
    (void)value;
    if (!observed_keys.count(key))
      unmatched.push_back(key.first + "/" + key.second.to_string());
  }
  if (!unmatched.empty())
    throw InputError("observations and predictions do not match; unmatched "
                     "keys:" + list_keys(unmatched));
  const std::size_t n = z.size();
  if (n < 3)
    throw InputError("calibration needs at least 3 matched pairs, have " +
                     std::to_string(n));

  double mz = 0, mp = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mz += z[i];
    mp += p[i];
  }
  mz /= static_cast<double>(n);
  mp /= static_cast<double>(n);
  double spp = 0, spz = 0, szz = 0;
  for (std::size_t i = 0; i < n; ++i) {
    spp += (p[i] - mp) * (p[i] - mp);
    spz += (p[i] - mp) * (z[i] - mz);
    szz += (z[i] - mz) * (z[i] - mz);
  }
  if (spp <= 0)
    throw InputError("predictions are constant; calibration slope undefined");

  ValidationReport rep;
  rep.n_obs = n;
  rep.n_sites = matched_sites.size();
  rep.alpha1 = spz / spp;
  rep.alpha0 = mz - rep.alpha1 * mp;
  double rss = 0, sse = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = z[i] - rep.alpha0 - rep.alpha1 * p[i];
    rss += r * r;
    double e = z[i] - p[i];
    sse += e * e;
  }
  double df = static_cast<double>(n - 2);
  double s2 = rss / df;
  rep.se1 = std::sqrt(s2 / spp);
  rep.se0 = std::sqrt(s2 * (1.0 / static_cast<double>(n) + mp * mp / spp));
  rep.t0 = rep.se0 > 0 ? rep.alpha0 / rep.se0 : 0;
  rep.t1 = rep.se1 > 0 ? rep.alpha1 / rep.se1 : 0;
  rep.p0 = fit::student_t_pvalue(rep.t0, df);
  rep.p1 = fit::student_t_pvalue(rep.t1, df);
  rep.predictive_r2 = szz > 0 ? (spz * spz) / (spp * szz) : 1.0;
  rep.rmse = std::sqrt(sse / static_cast<double>(n));
  return rep;
}

Semivariogram semivariogram(const std::vector<Point>& locations,
                            const std::vector<double>& values,
                            double bin_width_km, double max_lag_km) {
  if (locations.size() != values.size())
    throw InputError("semivariogram needs one value per location");
  if (locations.size() < 2)
    throw InputError("semivariogram needs at least 2 sites");
  if (!(bin_width_km > 0)) throw InputError("bin width must be positive");

  const std::size_t q = locations.size();
  double max_d = 0;
  for (std::size_t i = 0; i < q; ++i)
    for (std::size_t j = i + 1; j < q; ++j)
      max_d = std::max(max_d, distance(locations[i], locations[j]) / 1000.0);
  double max_lag = max_lag_km > 0 ? max_lag_km : max_d / 2.0;
  if (!(max_lag > 0)) throw InputError("all sites are collocated");

  const std::size_t n_bins =
      static_cast<std::size_t>(std::ceil(max_lag / bin_width_km));
  std::vector<double> acc(n_bins, 0.0);
  std::vector<std::size_t> count(n_bins, 0);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = i + 1; j < q; ++j) {
      double d = distance(locations[i], locations[j]) / 1000.0;
      if (d > max_lag) continue;
      std::size_t bin = std::min(
          static_cast<std::size_t>(d / bin_width_km), n_bins - 1);
      double diff = values[i] - values[j];
      acc[bin] += diff * diff;
      count[bin] += 1;
    }
  }

  Semivariogram sv;
  sv.bin_width_km = bin_width_km;
  sv.max_lag_km = max_lag;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    sv.bin_center_km.push_back((static_cast<double>(b) + 0.5) * bin_width_km);
    sv.semivariance.push_back(acc[b] / (2.0 * static_cast<double>(count[b])));
    sv.pair_count.push_back(count[b]);
  }
  return sv;
}

Semivariogram semivariogram(const std::vector<std::string>& site_ids,
                            const std::vector<Point>& locations,
                            const std::map<std::string, double>& values,
                            double bin_width_km, double max_lag_km) {
  if (site_ids.size() != locations.size())
    throw InputError("site id and location lists differ in length");
  std::vector<double> v;
  v.reserve(site_ids.size());
  for (const auto& id : site_ids) {
    auto it = values.find(id);
    if (it == values.end())
      throw InputError("no intercept value for site " + id);
    v.push_back(it->second);
  }
  return semivariogram(locations, v, bin_width_km, max_lag_km);
}

}  // namespace validate
}  // namespace no2
