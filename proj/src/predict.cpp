#include "no2/predict.hpp"

#include <cmath>

#include "no2/errors.hpp"

namespace no2 {
namespace predict {

TrainedModel TrainedModel::from_linear(const fit::LinearFit& fit) {
  TrainedModel m;
  m.kind = Kind::linear;
  m.theta.push_back(fit.alpha0);
  m.theta.push_back(fit.alpha1);
  m.theta.insert(m.theta.end(), fit.gamma.begin(), fit.gamma.end());
  m.traffic_dim = fit.gamma.size();
  return m;
}

TrainedModel TrainedModel::from_longitudinal(const fit::MixedFit& fit) {
  TrainedModel m;
  m.kind = Kind::longitudinal;
  m.theta.push_back(fit.beta0);
  m.theta.push_back(fit.beta1);
  m.theta.insert(m.theta.end(), fit.gamma.begin(), fit.gamma.end());
  m.traffic_dim = fit.gamma.size();
  m.blups = fit.blups;
  return m;
}

TrainedModel TrainedModel::from_spatial(const spatial::SpatialPosterior& posterior) {
  TrainedModel m;
  m.kind = Kind::spatial;
  const std::size_t p = static_cast<std::size_t>(posterior.theta_draws.cols());
  for (std::size_t j = 0; j < p; ++j)
    m.theta.push_back(posterior.theta_summary(j).mean);
  m.traffic_dim = p - 2;
  m.site_ids = posterior.site_ids;
  m.site_locations = posterior.site_locations;
  m.b0_draws = posterior.b0_draws;
  m.sigma_b2 = spatial::summarize(posterior.sigma_b2_draws).mean;
  m.prepare_kriging();
  return m;
}

void TrainedModel::prepare_kriging() {
  if (b0_draws.empty() || !kriging_alpha_.empty()) return;
  if (site_locations.size() != site_ids.size())
    throw InputError("spatial model has " + std::to_string(site_ids.size()) +
                     " site ids but " + std::to_string(site_locations.size()) +
                     " locations");
  const Eigen::MatrixXd dist = spatial::distance_matrix_km(site_locations);
  kriging_alpha_.reserve(b0_draws.size());
  Eigen::VectorXd mean_acc = Eigen::VectorXd::Zero(
      static_cast<Eigen::Index>(site_ids.size()));
  for (const auto& draw : b0_draws) {
    if (draw.b0.size() != static_cast<Eigen::Index>(site_ids.size()))
      throw InputError("intercept draw length does not match site count");
    Eigen::MatrixXd corr = spatial::exp_correlation(dist, draw.phi);
    Eigen::LLT<Eigen::MatrixXd> llt(corr);
    if (llt.info() != Eigen::Success)
      throw NumericError("correlation matrix not positive definite at phi=" +
                         std::to_string(draw.phi));
    kriging_alpha_.push_back(llt.solve(draw.b0));
    mean_acc += draw.b0;
  }
  mean_acc /= static_cast<double>(b0_draws.size());
  for (std::size_t i = 0; i < site_ids.size(); ++i)
    b0_mean_[site_ids[i]] = mean_acc(static_cast<Eigen::Index>(i));
}

double TrainedModel::site_intercept(const std::string& site_id,
                                    const Point& location, Mode mode) const {
  switch (kind) {
    case Kind::linear:
      return 0.0;
    case Kind::longitudinal: {
      // Conditional mean under independent intercepts: the BLUP for a
      // learning site, zero for a new one, in either mode.
      auto it = blups.find(site_id);
      return it == blups.end() ? 0.0 : it->second;
    }
    case Kind::spatial:
      break;
  }
  if (mode == Mode::marginal) {
    auto it = b0_mean_.find(site_id);
    return it == b0_mean_.end() ? 0.0 : it->second;
  }
  if (b0_draws.empty())
    throw InputError("conditional prediction needs the intercept draws of a "
                     "spatial fit; none are loaded");
  if (kriging_alpha_.empty())
    throw InputError("conditional prediction before prepare_kriging()");
  // Kriging conditional mean per draw, averaged; the draw's own phi builds
  // the correlation vector, so range uncertainty propagates.
  const std::size_t q = site_ids.size();
  Eigen::VectorXd d_km(static_cast<Eigen::Index>(q));
  for (std::size_t i = 0; i < q; ++i)
    d_km(static_cast<Eigen::Index>(i)) =
        distance(location, site_locations[i]) / 1000.0;
  double acc = 0;
  for (std::size_t s = 0; s < b0_draws.size(); ++s) {
    Eigen::VectorXd c = (-d_km.array() / b0_draws[s].phi).exp();
    acc += c.dot(kriging_alpha_[s]);
  }
  return acc / static_cast<double>(b0_draws.size());
}

namespace {

double log_prediction(const TrainedModel& model, double b_star,
                      double idw_value,
                      const traffic::ExposureVector& exposure) {
  if (!(idw_value > 0))
    throw InputError("interpolated value must be positive to take its log");
  if (exposure.w.size() != model.traffic_dim)
    throw InputError("exposure vector has " +
                     std::to_string(exposure.w.size()) +
                     " rings but the model was fit with " +
                     std::to_string(model.traffic_dim));
  double log_p = model.theta[0] + b_star + model.theta[1] * std::log(idw_value);
  for (std::size_t k = 0; k < model.traffic_dim; ++k)
    log_p += model.theta[2 + k] * exposure.w[k];
  if (!std::isfinite(log_p))
    throw NumericError("non-finite prediction for site " + exposure.site_id);
  return log_p;
}

}  // namespace

PredictionRecord predict_daily(const TrainedModel& model,
                               const std::string& site_id,
                               const Point& location, Date date,
                               double idw_value,
                               const traffic::ExposureVector& exposure,
                               Mode mode) {
  PredictionRecord rec;
  rec.site_id = site_id;
  rec.date = date;
  double b_star = model.site_intercept(site_id, location, mode);
  rec.predicted_log = log_prediction(model, b_star, idw_value, exposure);
  rec.predicted = std::exp(rec.predicted_log);
  return rec;
}

std::vector<PeriodPrediction> predict_periods(
    const TrainedModel& model, const std::vector<Site>& sites,
    const std::map<std::string, std::map<Date, double>>& daily_idw,
    const std::vector<traffic::ExposureVector>& exposures, Mode mode,
    std::vector<PredictionRecord>* daily_out) {
  std::map<std::string, const traffic::ExposureVector*> exp_index;
  for (const auto& e : exposures) exp_index[e.site_id] = &e;
  traffic::ExposureVector no_exposure;  // zero-ring vector for traffic_dim 0

  std::vector<PeriodPrediction> out;
  for (const auto& site : sites) {
    const traffic::ExposureVector* ev = &no_exposure;
    if (model.traffic_dim > 0) {
      auto it = exp_index.find(site.site_id);
      if (it == exp_index.end())
        throw InputError("no exposure vector for site " + site.site_id);
      ev = it->second;
    }
    auto series_it = daily_idw.find(site.site_id);
    const std::map<Date, double>* series =
        series_it == daily_idw.end() ? nullptr : &series_it->second;
    const double b_star = model.site_intercept(site.site_id, site.location, mode);

    for (const auto& obs : site.observations) {
      double sum = 0;
      int n_days = 0;
      std::vector<Date> missing;
      for (Date d = obs.period_start; d <= obs.period_end; d = d + 1) {
        const double* v = nullptr;
        if (series) {
          auto vit = series->find(d);
          if (vit != series->end()) v = &vit->second;
        }
        if (!v) {
          missing.push_back(d);
          continue;
        }
        double log_p = log_prediction(model, b_star, *v, *ev);
        double p = std::exp(log_p);
        if (daily_out)
          daily_out->push_back({site.site_id, d, log_p, p});
        sum += p;
        ++n_days;
      }
      if (!missing.empty()) {
        std::string msg = "site " + site.site_id + " period " +
                          obs.period_start.to_string() + ".." +
                          obs.period_end.to_string() + " lacks daily values for";
        std::size_t shown = std::min<std::size_t>(missing.size(), 10);
        for (std::size_t i = 0; i < shown; ++i)
          msg += " " + missing[i].to_string();
        if (missing.size() > shown)
          msg += " (and " + std::to_string(missing.size() - shown) + " more)";
        throw InputError(msg);
      }
      out.push_back({site.site_id, obs.period_start, obs.period_end,
                     sum / static_cast<double>(n_days)});
    }
  }
  return out;
}

}  // namespace predict
}  // namespace no2
