#pragma once

#include <string>
#include <vector>

#include "no2/data.hpp"

namespace no2 {
namespace traffic {

/// Short road piece used as the atom of traffic exposure.
struct SubSegment {
  Point midpoint;
  double length = 0;  // meters
  double adt = 0;     // vehicles/day, inherited from the parent segment
  std::string parent_id;
};

/// Distance rings for the step dispersion function. `boundaries` holds
/// 0 = D_0 < D_1 < ... < D_K in meters; sources beyond D_K contribute 0.
struct RingSpec {
  std::vector<double> boundaries;

  std::size_t ring_count() const { return boundaries.size() - 1; }
  double outer_radius() const { return boundaries.back(); }

  /// One band out to 2000 m.
  static RingSpec single_step();
  /// Bands at 400/800/1200/1600/2000 m.
  static RingSpec multi_step();
  /// Validates monotonicity and D_0 = 0; throws InputError.
  static RingSpec custom(std::vector<double> boundaries);
};

/// Per-site traffic covariates W_k = sum of adt * length over subsegments
/// whose midpoint falls in ring k (vehicle-meters/day, possibly rescaled).
struct ExposureVector {
  std::string site_id;
  std::vector<double> w;
};

/// Splits a segment into ceil(L / target_len) pieces of equal arc length.
std::vector<SubSegment> subdivide(const RoadSegment& segment,
                                  double target_len = 50.0);

/// Ring sums for one site. Membership uses the midpoint distance d with
/// D_{k-1} < d <= D_k; d = 0 falls in ring 1; d > D_K contributes nothing.
ExposureVector exposure(const Site& site,
                        const std::vector<SubSegment>& subsegments,
                        const RingSpec& rings);

/// Subdivides once, then computes per-site exposures, dividing every entry
/// by `exposure_scale`. Output order follows `sites`.
std::vector<ExposureVector> exposure_matrix(
    const std::vector<Site>& sites, const std::vector<RoadSegment>& segments,
    const RingSpec& rings, double target_len = 50.0,
    double exposure_scale = 1e6);

}  // namespace traffic
}  // namespace no2
