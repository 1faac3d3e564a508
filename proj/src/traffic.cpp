#include "no2/traffic.hpp"

#include <algorithm>
#include <cmath>

#include "no2/errors.hpp"

namespace no2 {
namespace traffic {

RingSpec RingSpec::single_step() { return RingSpec{{0.0, 2000.0}}; }

RingSpec RingSpec::multi_step() {
  return RingSpec{{0.0, 400.0, 800.0, 1200.0, 1600.0, 2000.0}};
}

RingSpec RingSpec::custom(std::vector<double> boundaries) {
  if (boundaries.size() < 2)
    throw InputError("ring spec needs at least one band (two boundaries)");
  if (boundaries.front() != 0.0)
    throw InputError("ring spec must start at distance 0");
  for (std::size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i] > boundaries[i - 1]))
      throw InputError("ring boundaries must be strictly ascending");
  return RingSpec{std::move(boundaries)};
}

std::vector<SubSegment> subdivide(const RoadSegment& segment,
                                  double target_len) {
  if (!(target_len > 0)) throw InputError("target_len must be positive");
  const double total = segment.length();
  const int n = std::max(1, static_cast<int>(std::ceil(total / target_len)));
  const double piece = total / n;

  std::vector<SubSegment> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SubSegment ss;
    ss.midpoint = point_at_arclength(segment.vertices, (i + 0.5) * piece);
    ss.length = piece;
    ss.adt = segment.adt;
    ss.parent_id = segment.segment_id;
    out.push_back(std::move(ss));
  }
  return out;
}

ExposureVector exposure(const Site& site,
                        const std::vector<SubSegment>& subsegments,
                        const RingSpec& rings) {
  const auto& bounds = rings.boundaries;
  ExposureVector ev;
  ev.site_id = site.site_id;
  ev.w.assign(rings.ring_count(), 0.0);

  for (const auto& ss : subsegments) {
    const double d = distance(ss.midpoint, site.location);
    if (d > bounds.back()) continue;
    // first boundary >= d; ties go to the inner ring, d = 0 to ring 1
    const auto it = std::lower_bound(bounds.begin() + 1, bounds.end(), d);
    const std::size_t k = static_cast<std::size_t>(it - bounds.begin()) - 1;
    ev.w[k] += ss.adt * ss.length;
  }
  return ev;
}

std::vector<ExposureVector> exposure_matrix(
    const std::vector<Site>& sites, const std::vector<RoadSegment>& segments,
    const RingSpec& rings, double target_len, double exposure_scale) {
  if (!(exposure_scale > 0))
    throw InputError("exposure_scale must be positive");

  std::vector<SubSegment> pieces;
  for (const auto& seg : segments) {
    auto sub = subdivide(seg, target_len);
    pieces.insert(pieces.end(), std::make_move_iterator(sub.begin()),
                  std::make_move_iterator(sub.end()));
  }

  std::vector<ExposureVector> out;
  out.reserve(sites.size());
  for (const auto& site : sites) {
    ExposureVector ev = exposure(site, pieces, rings);
    for (double& v : ev.w) v /= exposure_scale;
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace traffic
}  // namespace no2
