#include "doctest.h"

#include <cmath>

#include "panodepth/losses.hpp"
#include "panodepth/random.hpp"
#include "panodepth/scenegen.hpp"
#include "panodepth/trainer.hpp"

using namespace pano;

namespace {

RigConfig rig_wh(int w, int h, double baseline = 0.26) {
  RigConfig r;
  r.width = w;
  r.height = h;
  r.baseline = baseline;
  return r;
}

Tensord random_tensor(const Tensord::Shape& s, std::uint64_t seed, double lo = 0, double hi = 1) {
  Rng rng(seed);
  Tensord t(s);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()(i) = rng.uniform(lo, hi);
  return t;
}

DisparityPyramid<double> constant_pyramid(int h, int w, double v) {
  DisparityPyramid<double> p;
  for (int i = 0; i < 4; ++i) p[i] = Tensord({1, 1, h >> (3 - i), w >> (3 - i)}, v);
  return p;
}

DisparityPyramid<float> gt_pyramid(const Tensorf& gt) {
  DisparityPyramid<float> p;
  for (int i = 0; i < 4; ++i) p[i] = downsample_area(gt, 1 << (3 - i), true);
  return p;
}

}  // namespace

TEST_CASE("smooth l1 branches") {
  const Tensord gt({1, 1, 1, 1}, 1.0);
  CHECK(smooth_l1(Tensord({1, 1, 1, 1}, 1.5), gt).value == doctest::Approx(0.25));
  CHECK(smooth_l1(Tensord({1, 1, 1, 1}, 3.0), gt).value == doctest::Approx(2.0));
  CHECK(smooth_l1(Tensord({1, 1, 1, 1}, 2.0), gt).value == doctest::Approx(1.0));
  CHECK(smooth_l1(Tensord({1, 1, 1, 1}, 0.0), gt).value == doctest::Approx(1.0));

  Tensord g2({1, 1, 1, 2});
  g2.data() << 1.0, 0.0;  // second pixel invalid
  Tensord p2({1, 1, 1, 2});
  p2.data() << 1.5, 9.0;
  const auto l = smooth_l1(p2, g2);
  CHECK(l.value == doctest::Approx(0.25));
  CHECK(l.grad.data()(1) == 0.0);
  CHECK_THROWS_AS(smooth_l1(p2, Tensord({1, 1, 1, 2}, 0.0)), DomainError);
}

TEST_CASE("multiscale supervised weights") {
  const int h = 16, w = 32;
  const Tensord gt({1, 1, h, w}, 0.125);
  const auto exact = constant_pyramid(h, w, 0.125);
  CHECK(multiscale_supervised(exact, gt).breakdown.total == 0.0);
  for (int i = 0; i < 4; ++i) {
    auto preds = exact;
    preds[i].data() += 2.0;
    const auto loss = multiscale_supervised(preds, gt).breakdown;
    CHECK(loss.total == doctest::Approx(2.0 * kScaleWeights[i]));
    CHECK(loss.recombined() == doctest::Approx(loss.total).epsilon(1e-6));
  }
  CHECK(kScaleWeights[0] == 1.0 / 64);
  CHECK(kScaleWeights[1] == 1.0 / 16);
  CHECK(kScaleWeights[2] == 1.0 / 4);
  CHECK(kScaleWeights[3] == 1.0);
}

TEST_CASE("multiscale loss is linear in the per-scale errors") {
  const Tensord gt = random_tensor({1, 1, 16, 32}, 3, 0.05, 0.3);
  DisparityPyramid<double> preds;
  for (int i = 0; i < 4; ++i) preds[i] = random_tensor({1, 1, 2 << i, 4 << i}, 10 + i, 0.0, 0.5);
  const auto a = multiscale_supervised(preds, gt).breakdown;
  double sum = 0;
  for (int i = 0; i < 4; ++i) {
    CHECK(a.data_term[i] >= 0);
    sum += kScaleWeights[i] * a.data_term[i];
  }
  CHECK(a.total == doctest::Approx(sum).epsilon(1e-12));
}

TEST_CASE("vertical warp identities") {
  const RigConfig rig = rig_wh(8, 6);
  const Tensord src = random_tensor({1, 3, 6, 8}, 4);
  const Tensord zero({1, 1, 6, 8}, 0.0);
  CHECK((warp_vertical(src, zero, rig).data() == src.data()).all());

  const Tensord one_row({1, 1, 6, 8}, rig.fov_h / rig.height);
  const Tensord out = warp_vertical(src, one_row, rig);
  for (int c = 0; c < 3; ++c)
    for (int y = 1; y < 6; ++y)
      for (int x = 0; x < 8; ++x) CHECK(out(0, c, y, x) == doctest::Approx(src(0, c, y - 1, x)));
  // Rows sampled above the image clamp to the edge.
  for (int x = 0; x < 8; ++x) CHECK(out(0, 0, 0, x) == src(0, 0, 0, x));

  CHECK_THROWS_AS(warp_vertical(src, Tensord({1, 1, 6, 8}, -0.1), rig), DomainError);
}

TEST_CASE("reconstruction loss") {
  const RigConfig rig = rig_wh(32, 16);
  const Tensord v = random_tensor({1, 3, 16, 32}, 5);
  CHECK(reconstruction_loss(v, v, Tensord({1, 1, 16, 32}, 0.0), rig).value == 0.0);

  const RigConfig big = rig_wh(128, 64);
  const Tensord a = random_tensor({1, 3, 64, 128}, 6), b = random_tensor({1, 3, 64, 128}, 7);
  const double l = reconstruction_loss(a, b, Tensord({1, 1, 64, 128}, 0.0), big).value;
  CHECK(std::abs(l - 1.0 / 3.0) < 0.05);
}

TEST_CASE("ground-truth disparity reconstructs the top view") {
  const RigConfig rig = rig_wh(128, 64);
  double total = 0;
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    const StereoSample s = render_stereo_sample(generate_scene(seed), rig);
    const double l = reconstruction_loss(to_tensor(s.top_rgb), to_tensor(s.bottom_rgb),
                                         to_tensor(s.gt_disparity), rig)
                         .value;
    INFO("seed " << seed << " loss " << l);
    CHECK(l < 0.05);
    total += l;
  }
  // Wrong disparity is clearly worse.
  const StereoSample s = render_stereo_sample(generate_scene(11), rig);
  const double flat = reconstruction_loss(to_tensor(s.top_rgb), to_tensor(s.bottom_rgb),
                                          Tensorf({1, 1, 64, 128}, 0.f), rig)
                          .value;
  CHECK(flat > total / 3);
}

TEST_CASE("smoothness loss") {
  const Tensord rgb = random_tensor({1, 3, 8, 16}, 8);
  CHECK(smoothness_loss(Tensord({1, 1, 8, 16}, 0.2), rgb).value == 0.0);

  Tensord step({1, 1, 8, 16}, 0.1);
  Tensord edge({1, 3, 8, 16}, 0.2), flat({1, 3, 8, 16}, 0.2);
  for (int y = 4; y < 8; ++y)
    for (int x = 0; x < 16; ++x) {
      step(0, 0, y, x) = 0.3;
      for (int c = 0; c < 3; ++c) edge(0, c, y, x) = 0.9;
    }
  const double on_edge = smoothness_loss(step, edge).value;
  const double on_flat = smoothness_loss(step, flat).value;
  CHECK(on_edge > 0);
  CHECK(on_edge < on_flat);
}

TEST_CASE("unsupervised loss") {
  const RigConfig rig = rig_wh(128, 64);
  const StereoSample s = render_stereo_sample(generate_scene(11), rig);
  const Tensorf top = to_tensor(s.top_rgb), bottom = to_tensor(s.bottom_rgb);
  const auto preds = gt_pyramid(to_tensor(s.gt_disparity));

  const auto full = unsupervised_loss(preds, top, bottom, rig, 1.0).breakdown;
  for (int i = 0; i < 4; ++i) {
    CHECK(full.data_term[i] < 0.05);
    CHECK(full.smooth_term[i] >= 0);
  }
  CHECK(full.recombined() == doctest::Approx(full.total).epsilon(1e-6));

  const auto pure = unsupervised_loss(preds, top, bottom, rig, 0.0).breakdown;
  double rect = 0;
  for (int i = 0; i < 4; ++i) rect += kScaleWeights[i] * pure.data_term[i];
  CHECK(pure.total == doctest::Approx(rect).epsilon(1e-12));
  CHECK(full.total > pure.total);

  const RigConfig flat_rig = rig_wh(64, 32, 0.0);
  const StereoSample z = render_stereo_sample(generate_scene(4), flat_rig);
  DisparityPyramid<float> zeros;
  for (int i = 0; i < 4; ++i) zeros[i] = Tensorf({1, 1, 4 << i, 8 << i}, 0.f);
  CHECK(unsupervised_loss(zeros, to_tensor(z.top_rgb), to_tensor(z.bottom_rgb), flat_rig, 1.0)
            .breakdown.total == 0.0);
}

TEST_CASE("area downsampling") {
  Tensord t({1, 1, 2, 2});
  t.data() << 1, 2, 3, 0;
  CHECK(downsample_area(t, 2).data()(0) == doctest::Approx(1.5));
  CHECK(downsample_area(t, 2, true).data()(0) == doctest::Approx(2.0));
}
