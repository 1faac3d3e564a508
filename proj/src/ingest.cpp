#include "no2/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "no2/csv.hpp"

namespace no2 {
namespace ingest {

namespace {

constexpr const char* kMonitorHeader =
    "station_id,x_m,y_m,timestamp_iso8601_hour,no2_ppb";
constexpr const char* kSiteHeader =
    "site_id,x_m,y_m,period_start,period_end,no2_ppb";
constexpr const char* kRoadHeader = "segment_id,adt,wkt_linestring";

double parse_finite(std::string_view field, const std::string& where) {
  const double v = csv::parse_double(field, where);
  if (!std::isfinite(v)) throw InputError(where + ": non-finite value");
  return v;
}

void check_location(Point got, Point expected, const std::string& id,
                    const std::string& where) {
  if (got.x != expected.x || got.y != expected.y)
    throw InputError(where + ": inconsistent coordinates for '" + id + "'");
}

std::vector<Point> parse_wkt_linestring(std::string_view wkt,
                                        const std::string& where) {
  std::string_view s = csv::trim(wkt);
  if (!s.empty() && s.front() == '"' && s.back() == '"' && s.size() >= 2)
    s = csv::trim(s.substr(1, s.size() - 2));
  constexpr std::string_view kTag = "LINESTRING";
  if (s.substr(0, kTag.size()) != kTag)
    throw InputError(where + ": expected LINESTRING geometry");
  s = csv::trim(s.substr(kTag.size()));
  if (s.size() < 2 || s.front() != '(' || s.back() != ')')
    throw InputError(where + ": malformed LINESTRING '" + std::string(wkt) +
                     "'");
  s = s.substr(1, s.size() - 2);

  std::vector<Point> pts;
  for (std::string_view pair : csv::split(s, ',')) {
    pair = csv::trim(pair);
    const std::size_t sp = pair.find(' ');
    if (sp == std::string_view::npos)
      throw InputError(where + ": malformed coordinate pair '" +
                       std::string(pair) + "'");
    Point p;
    p.x = parse_finite(csv::trim(pair.substr(0, sp)), where);
    p.y = parse_finite(csv::trim(pair.substr(sp + 1)), where);
    pts.push_back(p);
  }
  if (pts.size() < 2)
    throw InputError(where + ": LINESTRING needs at least 2 vertices");
  return pts;
}

}  // namespace

std::vector<MonitorStation> load_monitors(const std::string& path) {
  csv::LineReader in(path);
  std::string line;
  if (!in.next(line)) throw InputError(path + ": empty file");
  csv::expect_header(line, kMonitorHeader, in.where());

  std::vector<MonitorStation> stations;
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_map<std::string, std::set<std::int64_t>> seen_hours;

  while (in.next(line)) {
    const auto f = csv::split(line, ',');
    if (f.size() != 5)
      throw InputError(in.where() + ": expected 5 fields, got " +
                       std::to_string(f.size()));
    const std::string id(f[0]);
    if (id.empty()) throw InputError(in.where() + ": empty station_id");
    Point loc{parse_finite(f[1], in.where()), parse_finite(f[2], in.where())};
    DateHour t;
    try {
      t = DateHour::parse(f[3]);
    } catch (const InputError& e) {
      throw InputError(in.where() + ": " + e.what());
    }
    const double v = parse_finite(f[4], in.where());
    if (v <= 0)
      throw InputError(in.where() + ": non-positive no2_ppb (" +
                       std::string(f[4]) + ")");

    auto [it, inserted] = index.emplace(id, stations.size());
    if (inserted) stations.push_back(MonitorStation{id, loc, {}});
    MonitorStation& st = stations[it->second];
    if (!inserted) check_location(loc, st.location, id, in.where());
    if (!seen_hours[id].insert(t.serial_hours()).second)
      throw InputError(in.where() + ": duplicate reading for station '" + id +
                       "' at " + t.to_string());
    st.readings.push_back(HourlyReading{t, v});
  }

  for (auto& st : stations)
    std::sort(st.readings.begin(), st.readings.end(),
              [](const HourlyReading& a, const HourlyReading& b) {
                return a.time < b.time;
              });
  return stations;
}

std::vector<Site> load_sites(const std::string& path) {
  csv::LineReader in(path);
  std::string line;
  if (!in.next(line)) throw InputError(path + ": empty file");
  csv::expect_header(line, kSiteHeader, in.where());

  std::vector<Site> sites;
  std::unordered_map<std::string, std::size_t> index;

  while (in.next(line)) {
    const auto f = csv::split(line, ',');
    if (f.size() != 6)
      throw InputError(in.where() + ": expected 6 fields, got " +
                       std::to_string(f.size()));
    const std::string id(f[0]);
    if (id.empty()) throw InputError(in.where() + ": empty site_id");
    Point loc{parse_finite(f[1], in.where()), parse_finite(f[2], in.where())};
    Observation obs;
    try {
      obs.period_start = Date::parse(f[3]);
      obs.period_end = Date::parse(f[4]);
    } catch (const InputError& e) {
      throw InputError(in.where() + ": " + e.what());
    }
    if (obs.period_end < obs.period_start)
      throw InputError(in.where() + ": period_end precedes period_start");
    obs.no2_ppb = parse_finite(f[5], in.where());
    if (obs.no2_ppb <= 0)
      throw InputError(in.where() + ": non-positive no2_ppb (" +
                       std::string(f[5]) + ")");

    auto [it, inserted] = index.emplace(id, sites.size());
    if (inserted) sites.push_back(Site{id, loc, {}});
    Site& site = sites[it->second];
    if (!inserted) check_location(loc, site.location, id, in.where());
    site.observations.push_back(obs);
  }

  for (auto& site : sites) {
    std::sort(site.observations.begin(), site.observations.end(),
              [](const Observation& a, const Observation& b) {
                return a.period_start < b.period_start;
              });
    for (std::size_t i = 1; i < site.observations.size(); ++i) {
      const auto& prev = site.observations[i - 1];
      const auto& cur = site.observations[i];
      if (cur.period_start <= prev.period_end)
        throw InputError(path + ": site '" + site.site_id +
                         "' has overlapping observation periods (" +
                         prev.period_start.to_string() + ".." +
                         prev.period_end.to_string() + " and " +
                         cur.period_start.to_string() + ".." +
                         cur.period_end.to_string() + ")");
    }
  }
  return sites;
}

std::vector<RoadSegment> load_roads(const std::string& path) {
  csv::LineReader in(path);
  std::string line;
  if (!in.next(line)) throw InputError(path + ": empty file");
  csv::expect_header(line, kRoadHeader, in.where());

  std::vector<RoadSegment> roads;
  while (in.next(line)) {
    // WKT contains commas; split into exactly 3 fields.
    const auto f = csv::split(line, ',', 3);
    if (f.size() != 3 || f[2].empty())
      throw InputError(in.where() + ": expected 3 fields");
    RoadSegment seg;
    seg.segment_id = std::string(f[0]);
    if (seg.segment_id.empty())
      throw InputError(in.where() + ": empty segment_id");
    seg.adt = parse_finite(f[1], in.where());
    if (seg.adt < 0) throw InputError(in.where() + ": negative ADT");
    seg.vertices = parse_wkt_linestring(f[2], in.where());
    if (!(polyline_length(seg.vertices) > 0))
      throw InputError(in.where() + ": degenerate polyline (zero length)");
    roads.push_back(std::move(seg));
  }
  return roads;
}

void write_monitors(const std::string& path,
                    const std::vector<MonitorStation>& stations,
                    const Meta& meta) {
  csv::Writer out(path, meta);
  out.line(kMonitorHeader);
  for (const auto& st : stations)
    for (const auto& r : st.readings)
      out.line(st.station_id + "," + csv::format_double(st.location.x) + "," +
               csv::format_double(st.location.y) + "," + r.time.to_string() +
               "," + csv::format_double(r.no2_ppb));
}

void write_sites(const std::string& path, const std::vector<Site>& sites,
                 const Meta& meta) {
  csv::Writer out(path, meta);
  out.line(kSiteHeader);
  for (const auto& s : sites)
    for (const auto& o : s.observations)
      out.line(s.site_id + "," + csv::format_double(s.location.x) + "," +
               csv::format_double(s.location.y) + "," +
               o.period_start.to_string() + "," + o.period_end.to_string() +
               "," + csv::format_double(o.no2_ppb));
}

void write_roads(const std::string& path, const std::vector<RoadSegment>& roads,
                 const Meta& meta) {
  csv::Writer out(path, meta);
  out.line(kRoadHeader);
  for (const auto& r : roads) {
    std::string wkt = "LINESTRING (";
    for (std::size_t i = 0; i < r.vertices.size(); ++i) {
      if (i) wkt += ", ";
      wkt += csv::format_double(r.vertices[i].x) + " " +
             csv::format_double(r.vertices[i].y);
    }
    wkt += ")";
    out.line(r.segment_id + "," + csv::format_double(r.adt) + "," + wkt);
  }
}

}  // namespace ingest
}  // namespace no2
