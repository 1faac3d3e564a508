#pragma once

#include <string>
#include <vector>

#include "no2/dates.hpp"
#include "no2/geom.hpp"

namespace no2 {

/// One hourly NO2 reading at a monitor station.
struct HourlyReading {
  DateHour time;
  double no2_ppb = 0;  // strictly positive

  bool operator==(const HourlyReading&) const = default;
};

/// Regulatory monitor with an hourly NO2 series.
struct MonitorStation {
  std::string station_id;
  Point location;
  std::vector<HourlyReading> readings;  // sorted by time, unique per hour

  bool operator==(const MonitorStation&) const = default;
};

/// One period-averaged NO2 observation at a study site.
struct Observation {
  Date period_start;
  Date period_end;  // inclusive
  double no2_ppb = 0;

  bool operator==(const Observation&) const = default;
};

/// Study site with period-averaged observations.
struct Site {
  std::string site_id;
  Point location;
  std::vector<Observation> observations;  // sorted, non-overlapping periods

  bool operator==(const Site&) const = default;
};

/// Road polyline carrying average daily traffic.
struct RoadSegment {
  std::string segment_id;
  std::vector<Point> vertices;  // >= 2, positive total length
  double adt = 0;               // vehicles/day, >= 0

  double length() const { return polyline_length(vertices); }

  bool operator==(const RoadSegment&) const = default;
};

}  // namespace no2
