#include "doctest.h"

#include <cmath>
#include <numbers>

#include "panodepth/random.hpp"
#include "panodepth/scenegen.hpp"
#include "panodepth/sgm.hpp"

using namespace pano;

namespace {

RigConfig rig_wh(int w, int h, double baseline = 0.26) {
  RigConfig r;
  r.width = w;
  r.height = h;
  r.baseline = baseline;
  return r;
}

Image noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(rng.uniform());
  return img;
}

// One disparity level per image row.
SgmParams row_step_params(const RigConfig& rig, int levels) {
  SgmParams p;
  p.num_disp = levels;
  p.max_disparity = (levels - 1) * rig.fov_h / rig.height;
  return p;
}

CostVolume random_volume(int w, int h, int d, std::uint64_t seed) {
  CostVolume v(w, h, d, 0.01);
  Rng rng(seed);
  for (Eigen::Index i = 0; i < v.costs.size(); ++i)
    v.costs.data()[i] = static_cast<float>(rng.uniform_int(0, 30));
  return v;
}

Image roll(const Image& img, int k) { return roll_columns(img, k); }

}  // namespace

TEST_CASE("matching cost identities") {
  const RigConfig rig = rig_wh(32, 24);
  const Image img = noise_image(24, 32, 1);
  for (CostKind kind : {CostKind::census, CostKind::sad}) {
    SgmParams p = row_step_params(rig, 5);
    p.cost = kind;
    const CostVolume v = matching_cost(img, img, p, rig);
    CHECK(v.num_disp == 5);
    CHECK(v.step == doctest::Approx(rig.fov_h / rig.height));
    for (int y = 0; y < rig.height; ++y)
      for (int x = 0; x < rig.width; ++x) CHECK(v(y, x, 0) == 0.f);
    // Candidates above the top row get the sentinel instead of wrapping.
    CHECK(v(0, 3, 2) == p.sentinel_cost());
    CHECK(v(1, 3, 2) == p.sentinel_cost());
    CHECK(v(2, 3, 2) != p.sentinel_cost());
    CHECK((v.costs >= 0).all());
  }
}

TEST_CASE("matching cost finds a known row shift") {
  const RigConfig rig = rig_wh(40, 32);
  const Image top = noise_image(32, 40, 2);
  const int k = 3;
  Image bottom(32, 40);
  for (int y = 0; y < 32; ++y) bottom.row(y) = top.row(std::min(31, y + k));
  for (CostKind kind : {CostKind::census, CostKind::sad}) {
    SgmParams p = row_step_params(rig, 8);
    p.cost = kind;
    const CostVolume v = matching_cost(top, bottom, p, rig);
    int hits = 0, total = 0;
    for (int y = 10; y < 24; ++y)
      for (int x = 0; x < 40; ++x) {
        int best = 0;
        for (int d = 1; d < v.num_disp; ++d)
          if (v(y, x, d) < v(y, x, best)) best = d;
        hits += v(y, x, k) == v(y, x, best);  // census can tie
        ++total;
      }
    CHECK(hits == total);
  }
}

TEST_CASE("matching cost rejects bad shapes") {
  const RigConfig rig = rig_wh(16, 16);
  CHECK_THROWS_AS(matching_cost(noise_image(16, 16, 1), noise_image(15, 16, 1), SgmParams{}, rig),
                  DataError);
}

TEST_CASE("aggregation with zero penalties scales the cost") {
  const CostVolume v = random_volume(9, 7, 6, 3);
  for (int paths : {4, 8}) {
    SgmParams p;
    p.p1 = p.p2 = 0.f;
    p.num_paths = paths;
    const CostVolume a = aggregate(v, p);
    CHECK((a.costs == static_cast<float>(paths) * v.costs).all());
  }
}

TEST_CASE("vertical path matches a hand-computed recurrence") {
  CostVolume v(1, 3, 2, 0.01);
  v(0, 0, 0) = 1;
  v(0, 0, 1) = 3;
  v(1, 0, 0) = 4;
  v(1, 0, 1) = 0;
  v(2, 0, 0) = 2;
  v(2, 0, 1) = 2;
  SgmParams p;
  p.p1 = 1;
  p.p2 = 5;
  const CostVolume a = aggregate_path(v, p, 1, 0);
  CHECK(a(0, 0, 0) == 1);
  CHECK(a(0, 0, 1) == 3);
  CHECK(a(1, 0, 0) == 4);
  CHECK(a(1, 0, 1) == 1);
  CHECK(a(2, 0, 0) == 3);
  CHECK(a(2, 0, 1) == 2);
}

TEST_CASE("uniform volume aggregates uniformly") {
  CostVolume v(6, 5, 4, 0.01);
  v.costs.setConstant(3.f);
  const CostVolume a = aggregate(v, SgmParams{});
  for (Eigen::Index i = 0; i < a.costs.rows(); ++i)
    CHECK((a.costs.row(i) == a.costs(i, 0)).all());
}

TEST_CASE("horizontal aggregation does not depend on the seam") {
  const CostVolume v = random_volume(24, 6, 7, 4);
  auto rolled = [](const CostVolume& c, int k) {
    CostVolume r = c;
    for (int y = 0; y < c.height; ++y)
      for (int x = 0; x < c.width; ++x) r.pixel(y, (x + k) % c.width) = c.pixel(y, x);
    return r;
  };
  const SgmParams p;
  for (int k : {1, 13}) {
    CHECK((rolled(aggregate_path(v, p, 0, 1), k).costs ==
           aggregate_path(rolled(v, k), p, 0, 1).costs).all());
    CHECK((rolled(aggregate(v, p), k).costs == aggregate(rolled(v, k), p).costs).all());
  }
  // Duplicated level columns give tied cycles around the ring.
  CostVolume d = v;
  for (Eigen::Index i = 0; i < d.costs.rows(); ++i) d.costs(i, 3) = d.costs(i, 2);
  CHECK((rolled(aggregate(d, p), 7).costs == aggregate(rolled(d, 7), p).costs).all());
}

TEST_CASE("least rotation handles periodic rows") {
  CostVolume v(12, 1, 3, 0.01);
  for (int x = 0; x < 12; ++x)
    for (int d = 0; d < 3; ++d) v(0, x, d) = static_cast<float>((x % 4) + d);
  const CostVolume a = aggregate_path(v, SgmParams{}, 0, 1);
  for (int x = 0; x < 12; ++x) CHECK((a.pixel(0, x) == a.pixel(0, x % 4)).all());
}

TEST_CASE("winner take all") {
  SgmParams p;
  CostVolume v(1, 1, 8, 0.01);
  v.costs.setConstant(10.f);
  v(0, 0, 3) = 0.f;
  CHECK(wta_disparity(v, p)(0, 0) == doctest::Approx(0.03));

  CHECK(parabola_offset(4, 1, 4) == 0.0);
  CHECK(parabola_offset(4, 1, 2) == doctest::Approx(0.25));
  CHECK(parabola_offset(2, 1, 4) == doctest::Approx(-0.25));

  SUBCASE("ambiguous minimum fails the uniqueness test") {
    CostVolume amb(1, 1, 8, 0.01);
    amb.costs.setConstant(10.f);
    amb(0, 0, 1) = 1.f;
    amb(0, 0, 6) = 1.f;
    CHECK(wta_disparity(amb, p)(0, 0) == 0.f);
  }
}

TEST_CASE("median refinement") {
  SgmParams p;
  Image c = Image::Constant(6, 8, 0.2f);
  CHECK((refine(c, p) == c).all());
  Image salt = c;
  salt(3, 4) = 0.9f;
  CHECK((refine(salt, p) == c).all());
  Image none = Image::Zero(6, 8);
  CHECK((refine(none, p) == 0.f).all());
}

TEST_CASE("sgm on identical views returns near-zero disparity") {
  const RigConfig rig = rig_wh(64, 32, 0.0);
  const StereoSample s = render_stereo_sample(generate_scene(5), rig);
  RigConfig sgm_rig = rig;
  sgm_rig.baseline = 0.26;
  SgmParams p;
  const SgmResult r = sgm_depth(s.top_rgb, s.bottom_rgb, sgm_rig, p);
  const double step = p.resolved_max_disparity(sgm_rig) / (p.num_disp - 1);
  CHECK(r.disparity.plane().maxCoeff() <= step + 1e-6);
  CHECK((r.disparity.plane() >= 0).all());
}

TEST_CASE("sgm on uncorrelated noise is mostly invalid") {
  // At low resolution the 64 levels span only a few rows, so the test needs
  // the full raster.
  const RigConfig rig = rig_wh(512, 256);
  const Panorama a = Panorama::from_image(PanoramaKind::gray, noise_image(256, 512, 7));
  const Panorama b = Panorama::from_image(PanoramaKind::gray, noise_image(256, 512, 8));
  const SgmResult r = sgm_depth(a, b, rig);
  const double invalid = (r.disparity.plane() <= 0).cast<double>().mean();
  CHECK(invalid >= 0.2);
}

TEST_CASE("sgm commutes with horizontal rotation") {
  const RigConfig rig = rig_wh(64, 32);
  const StereoSample s = render_stereo_sample(generate_scene(12), rig);
  auto rolled = [](const Panorama& p, int k) {
    Panorama q = p;
    for (auto& plane : q.planes) plane = roll(plane, k);
    return q;
  };
  const int k = rig.width / 4;
  const SgmResult a = sgm_depth(s.top_rgb, s.bottom_rgb, rig);
  const SgmResult b = sgm_depth(rolled(s.top_rgb, k), rolled(s.bottom_rgb, k), rig);
  const Image expect = roll(a.disparity.plane(), k);
  const Image& got = b.disparity.plane();
  CHECK((expect.middleRows(2, 28) - got.middleRows(2, 28)).abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("sgm output range and shape errors") {
  const RigConfig rig = rig_wh(64, 32);
  const StereoSample s = render_stereo_sample(generate_scene(21), rig);
  SgmParams p;
  const SgmResult r = sgm_depth(s.top_rgb, s.bottom_rgb, rig, p);
  CHECK((r.disparity.plane() >= 0).all());
  CHECK(r.disparity.plane().maxCoeff() <= p.resolved_max_disparity(rig) + 1e-6);
  // Pole rows have no depth, so only one direction holds.
  CHECK(((r.depth.plane() <= 0) || (r.disparity.plane() > 0)).all());
  Panorama small(PanoramaKind::rgb, 32, 32);
  CHECK_THROWS_AS(sgm_depth(s.top_rgb, small, rig, p), DataError);

  SgmParams bad;
  bad.p1 = 100;
  bad.p2 = 10;
  CHECK_THROWS_AS(bad.validate(rig), std::invalid_argument);
  bad = SgmParams{};
  bad.census_window = 4;
  CHECK_THROWS_AS(bad.validate(rig), std::invalid_argument);
}
