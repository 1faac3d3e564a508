#include "no2/interp.hpp"

#include <cmath>

#include "no2/errors.hpp"

namespace no2 {
namespace interp {

namespace {
constexpr double kCollocatedEps = 1e-6;  // meters
}

DailySeries daily_average(const MonitorStation& station, int min_hours,
                          std::size_t* omitted_days) {
  DailySeries out;
  out.location = station.location;

  std::map<Date, std::pair<double, int>> acc;  // date -> (sum, count)
  for (const auto& r : station.readings) {
    auto& slot = acc[r.time.date];
    slot.first += r.no2_ppb;
    slot.second += 1;
  }
  std::size_t omitted = 0;
  for (const auto& [date, sc] : acc) {
    if (sc.second >= min_hours)
      out.values[date] = sc.first / sc.second;
    else
      ++omitted;
  }
  if (omitted_days) *omitted_days = omitted;
  return out;
}

bool coverable(const std::vector<DailySeries>& stations, Date date) {
  for (const auto& st : stations)
    if (st.values.count(date)) return true;
  return false;
}

double idw(Point location, const std::vector<DailySeries>& stations, Date date,
           double power) {
  double wsum = 0, vsum = 0;
  bool any = false;
  for (const auto& st : stations) {
    const auto it = st.values.find(date);
    if (it == st.values.end()) continue;
    any = true;
    const double d = distance(location, st.location);
    if (d < kCollocatedEps) return it->second;
    const double w = power == 1.0 ? 1.0 / d : 1.0 / std::pow(d, power);
    wsum += w;
    vsum += w * it->second;
  }
  if (!any)
    throw InputError("no monitor covers " + date.to_string() +
                     "; day cannot be interpolated");
  return vsum / wsum;
}

PeriodCovariate period_covariate(const Site& site, const Observation& obs,
                                 const std::vector<DailySeries>& stations,
                                 double power) {
  std::string missing;
  std::size_t n_missing = 0;
  for (Date d = obs.period_start; d <= obs.period_end; d = d + 1) {
    if (!coverable(stations, d)) {
      ++n_missing;
      if (n_missing <= 10) {
        if (!missing.empty()) missing += ", ";
        missing += d.to_string();
      }
    }
  }
  if (n_missing > 0) {
    if (n_missing > 10)
      missing += ", ... (" + std::to_string(n_missing) + " days total)";
    throw InputError("site '" + site.site_id + "' period " +
                     obs.period_start.to_string() + ".." +
                     obs.period_end.to_string() +
                     " has uncoverable days: " + missing);
  }

  double sum = 0;
  int n = 0;
  for (Date d = obs.period_start; d <= obs.period_end; d = d + 1) {
    sum += idw(site.location, stations, d, power);
    ++n;
  }
  PeriodCovariate pc;
  pc.site_id = site.site_id;
  pc.period_start = obs.period_start;
  pc.period_end = obs.period_end;
  pc.u_ppb = sum / n;
  pc.x_log = std::log(pc.u_ppb);
  return pc;
}

}  // namespace interp
}  // namespace no2
