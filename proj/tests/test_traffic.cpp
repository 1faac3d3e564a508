#include <doctest.h>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "no2/errors.hpp"
#include "no2/geom.hpp"
#include "no2/rng.hpp"
#include "no2/traffic.hpp"

using namespace no2;

namespace {

RoadSegment straight(const std::string& id, double adt, Point a, Point b) {
  RoadSegment r;
  r.segment_id = id;
  r.adt = adt;
  r.vertices = {a, b};
  return r;
}

Site site_at(const std::string& id, double x, double y) {
  return Site{id, {x, y}, {}};
}

/// Direct oracle: subdivide, then accumulate adt * length per ring by the
/// written definition, without the library's lower_bound band lookup.
std::vector<double> exposure_oracle(const Site& site,
                                    const std::vector<RoadSegment>& roads,
                                    const traffic::RingSpec& rings,
                                    double target_len, double scale) {
  std::vector<double> w(rings.ring_count(), 0.0);
  for (const auto& road : roads) {
    for (const auto& ss : traffic::subdivide(road, target_len)) {
      const double d = distance(ss.midpoint, site.location);
      for (std::size_t k = 0; k + 1 < rings.boundaries.size(); ++k) {
        const bool inner_ok = k == 0 ? d >= rings.boundaries[0]
                                     : d > rings.boundaries[k];
        if (inner_ok && d <= rings.boundaries[k + 1]) {
          w[k] += ss.adt * ss.length;
          break;
        }
      }
    }
  }
  for (double& v : w) v /= scale;
  return w;
}

std::vector<RoadSegment> random_scene(Rng& rng, int n_roads) {
  std::vector<RoadSegment> roads;
  for (int i = 0; i < n_roads; ++i) {
    const Point a{rng.uniform(-3000, 3000), rng.uniform(-3000, 3000)};
    const double angle = rng.uniform(0, 2 * M_PI);
    const double len = rng.uniform(20, 2500);
    const Point b{a.x + len * std::cos(angle), a.y + len * std::sin(angle)};
    roads.push_back(straight("R" + std::to_string(i),
                             std::floor(rng.uniform(0, 184000)), a, b));
  }
  return roads;
}

}  // namespace

TEST_CASE("subdivision into near-target pieces") {
  auto r120 = straight("A", 100, {0, 0}, {120, 0});
  auto parts = traffic::subdivide(r120, 50.0);
  REQUIRE(parts.size() == 3);
  for (const auto& p : parts) {
    CHECK(p.length == doctest::Approx(40.0).epsilon(1e-12));
    CHECK(p.adt == 100);
    CHECK(p.parent_id == "A");
  }
  CHECK(parts[0].midpoint.x == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(parts[2].midpoint.x == doctest::Approx(100.0).epsilon(1e-12));

  auto r740 = straight("B", 100, {0, 0}, {740, 0});
  auto parts740 = traffic::subdivide(r740, 50.0);
  REQUIRE(parts740.size() == 15);
  double sum = 0;
  for (const auto& p : parts740) {
    CHECK(p.length == doctest::Approx(740.0 / 15.0).epsilon(1e-12));
    sum += p.length;
  }
  CHECK(sum == doctest::Approx(740.0).epsilon(1e-9));

  // shorter than target: one piece, full length
  auto r30 = straight("C", 100, {0, 0}, {0, 30});
  CHECK(traffic::subdivide(r30, 50.0).size() == 1);

  CHECK_THROWS_AS(traffic::subdivide(r30, 0.0), InputError);
}

TEST_CASE("subdivision length totals match the polyline") {
  Rng rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    RoadSegment r;
    r.segment_id = "P";
    r.adt = 10;
    Point p{0, 0};
    r.vertices.push_back(p);
    const int nv = 2 + static_cast<int>(rng.index(4));
    for (int v = 1; v < nv; ++v) {
      p = {p.x + rng.uniform(-800, 800), p.y + rng.uniform(-800, 800)};
      r.vertices.push_back(p);
    }
    if (!(polyline_length(r.vertices) > 0)) continue;
    auto parts = traffic::subdivide(r, 50.0);
    double sum = 0;
    for (const auto& q : parts) sum += q.length;
    CHECK(sum == doctest::Approx(r.length()).epsilon(1e-9));
  }
}

TEST_CASE("single subsegment contribution is adt times length over scale") {
  auto road = straight("A", 1000, {0, 100}, {50, 100});
  auto site = site_at("S", 25, 0);  // ~103 m from the midpoint
  auto w = traffic::exposure_matrix({site}, {road},
                                     traffic::RingSpec::single_step(), 50.0,
                                     1.0);
  REQUIRE(w.size() == 1);
  REQUIRE(w[0].w.size() == 1);
  CHECK(w[0].w[0] == 50000.0);

  auto scaled = traffic::exposure_matrix({site}, {road},
                                          traffic::RingSpec::single_step(),
                                          50.0, 1e6);
  CHECK(scaled[0].w[0] == doctest::Approx(0.05).epsilon(1e-12));
}

TEST_CASE("band membership: ties to the inner ring, beyond outer dropped") {
  const auto rings = traffic::RingSpec::multi_step();
  // midpoints at exactly 400 and at 2000.5 from the site
  auto r1 = straight("A", 100, {400, -25}, {400, 25});   // midpoint (400, 0)
  auto r2 = straight("B", 100, {2000.5, -25}, {2000.5, 25});
  auto site = site_at("S", 0, 0);
  auto w = traffic::exposure_matrix({site}, {r1, r2}, rings, 50.0, 1.0);
  REQUIRE(w[0].w.size() == 5);
  CHECK(w[0].w[0] == 100.0 * 50.0);  // distance 400 lands in (0, 400]
  CHECK(w[0].w[1] == 0.0);
  CHECK(w[0].w[4] == 0.0);  // 2000.5 exceeds the outer boundary
}

TEST_CASE("exposure matches the brute-force oracle") {
  Rng rng(99);
  for (int rep = 0; rep < 10; ++rep) {
    auto roads = random_scene(rng, 40);
    auto site = site_at("S", rng.uniform(-500, 500), rng.uniform(-500, 500));
    const traffic::RingSpec specs[] = {traffic::RingSpec::single_step(),
                                       traffic::RingSpec::multi_step()};
    for (const auto& rings : specs) {
      auto lib = traffic::exposure_matrix({site}, roads, rings, 50.0, 1e6);
      auto oracle = exposure_oracle(site, roads, rings, 50.0, 1e6);
      REQUIRE(lib[0].w.size() == oracle.size());
      for (std::size_t k = 0; k < oracle.size(); ++k)
        CHECK(lib[0].w[k] ==
              doctest::Approx(oracle[k]).epsilon(1e-12).scale(1.0));
    }
  }
}

TEST_CASE("ring partition adds up to the single band") {
  Rng rng(5);
  auto roads = random_scene(rng, 60);
  auto site = site_at("S", 0, 0);
  auto single = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::single_step(), 50.0, 1e6);
  auto multi = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::multi_step(), 50.0, 1e6);
  double sum = 0;
  for (double v : multi[0].w) sum += v;
  CHECK(sum == doctest::Approx(single[0].w[0]).epsilon(1e-12));
}

TEST_CASE("translation invariance") {
  Rng rng(17);
  auto roads = random_scene(rng, 30);
  auto site = site_at("S", 120, -40);
  auto base = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::multi_step(), 50.0, 1e6);

  const double dx = 5000, dy = -3000;
  for (auto& r : roads)
    for (auto& v : r.vertices) {
      v.x += dx;
      v.y += dy;
    }
  auto moved_site = site_at("S", 120 + dx, -40 + dy);
  auto moved = traffic::exposure_matrix(
      {moved_site}, roads, traffic::RingSpec::multi_step(), 50.0, 1e6);
  for (std::size_t k = 0; k < base[0].w.size(); ++k)
    CHECK(moved[0].w[k] ==
          doctest::Approx(base[0].w[k]).epsilon(1e-9).scale(0.01));
}

TEST_CASE("larger capture radius never reduces exposure") {
  Rng rng(23);
  auto roads = random_scene(rng, 50);
  auto site = site_at("S", 0, 0);
  auto near = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::custom({0, 1000}), 50.0, 1e6);
  auto far = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::custom({0, 2000}), 50.0, 1e6);
  CHECK(far[0].w[0] >= near[0].w[0]);
}

TEST_CASE("refining the subdivision barely moves the exposure") {
  Rng rng(31);
  auto roads = random_scene(rng, 80);
  auto site = site_at("S", 0, 0);
  auto coarse = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::single_step(), 50.0, 1e6);
  auto fine = traffic::exposure_matrix(
      {site}, roads, traffic::RingSpec::single_step(), 10.0, 1e6);
  REQUIRE(coarse[0].w[0] > 0);
  CHECK(std::abs(fine[0].w[0] - coarse[0].w[0]) / coarse[0].w[0] < 0.05);
}

TEST_CASE("ring spec validation") {
  CHECK_THROWS_AS(traffic::RingSpec::custom({0}), InputError);
  CHECK_THROWS_AS(traffic::RingSpec::custom({100, 200}), InputError);
  CHECK_THROWS_AS(traffic::RingSpec::custom({0, 300, 200}), InputError);
  CHECK_THROWS_AS(traffic::RingSpec::custom({0, 300, 300}), InputError);
  CHECK(traffic::RingSpec::custom({0, 250, 750}).ring_count() == 2);
  CHECK(traffic::RingSpec::single_step().outer_radius() == 2000.0);
}
