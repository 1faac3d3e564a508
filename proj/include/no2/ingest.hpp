#pragma once

#include <string>
#include <utility>
#include <vector>

#include "no2/data.hpp"

namespace no2 {
namespace ingest {

using Meta = std::vector<std::pair<std::string, std::string>>;

// CSV schemas (UTF-8, header row required, '.' decimal point):
//   monitors.csv: station_id,x_m,y_m,timestamp_iso8601_hour,no2_ppb
//   sites.csv:    site_id,x_m,y_m,period_start,period_end,no2_ppb
//   roads.csv:    segment_id,adt,wkt_linestring
// Lines starting with '#' are metadata comments and are skipped.

/// Loads monitor stations; readings come back sorted by time.
/// Throws InputError naming the offending line on malformed rows,
/// non-positive values, or duplicate (station, hour) keys.
std::vector<MonitorStation> load_monitors(const std::string& path);

/// Loads study sites; observations come back sorted by period start.
/// Additionally rejects overlapping observation periods within a site.
std::vector<Site> load_sites(const std::string& path);

/// Loads road segments. Zero-ADT segments are retained.
std::vector<RoadSegment> load_roads(const std::string& path);

void write_monitors(const std::string& path,
                    const std::vector<MonitorStation>& stations,
                    const Meta& meta = {});
void write_sites(const std::string& path, const std::vector<Site>& sites,
                 const Meta& meta = {});
void write_roads(const std::string& path,
                 const std::vector<RoadSegment>& roads, const Meta& meta = {});

}  // namespace ingest
}  // namespace no2
