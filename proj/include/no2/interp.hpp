#pragma once

#include <map>
#include <string>
#include <vector>

#include "no2/data.hpp"

namespace no2 {
namespace interp {

/// Daily NO2 series at a fixed location.
struct DailySeries {
  Point location;
  std::map<Date, double> values;  // ppb, positive
};

/// Period-averaged interpolated NO2 at a site, with its log transform.
struct PeriodCovariate {
  std::string site_id;
  Date period_start;
  Date period_end;
  double u_ppb = 0;   // mean of daily interpolated values over the period
  double x_log = 0;   // ln(u_ppb)
};

/// Arithmetic daily means of the hourly series. A date is emitted only when
/// at least `min_hours` hourly values are present; sparser days are omitted
/// (the omission count is returned through `omitted_days` when given).
DailySeries daily_average(const MonitorStation& station, int min_hours = 18,
                          std::size_t* omitted_days = nullptr);

/// True when at least one station has a value on `date`.
bool coverable(const std::vector<DailySeries>& stations, Date date);

/// Inverse-distance-weighted interpolation at a location for one date.
/// Weights are 1/d^power over stations having that date; a station closer
/// than 1e-6 m returns its value directly. Throws InputError when no
/// station covers the date.
double idw(Point location, const std::vector<DailySeries>& stations, Date date,
           double power = 1.0);

/// Mean of daily idw values over the observation period, plus its log.
/// Throws InputError listing the missing dates when any day in the period
/// is uncoverable.
PeriodCovariate period_covariate(const Site& site, const Observation& obs,
                                 const std::vector<DailySeries>& stations,
                                 double power = 1.0);

}  // namespace interp
}  // namespace no2
