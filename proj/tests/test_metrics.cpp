#include "doctest.h"

#include <cmath>

#include "panodepth/errors.hpp"
#include "panodepth/metrics.hpp"
#include "panodepth/random.hpp"

using namespace pano;

namespace {

struct Naive {
  double abs_rel = 0, sq_rel = 0, rmse = 0, rmse_log = 0, a1 = 0, a2 = 0, a3 = 0;
  long n = 0;
};

// Straight per-pixel loops over plain vectors.
Naive naive_metrics(const std::vector<double>& p, const std::vector<double>& g, double cap) {
  Naive r;
  double se = 0, sle = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(g[i] > 0 && g[i] <= cap && p[i] > 0 && p[i] <= cap)) continue;
    r.n += 1;
    const double diff = p[i] - g[i];
    r.abs_rel += std::fabs(diff) / g[i];
    r.sq_rel += diff * diff / g[i];
    se += diff * diff;
    const double ld = std::log(p[i]) - std::log(g[i]);
    sle += ld * ld;
    const double ratio = p[i] > g[i] ? p[i] / g[i] : g[i] / p[i];
    if (ratio < 1.25) r.a1 += 1;
    if (ratio < 1.25 * 1.25) r.a2 += 1;
    if (ratio < 1.25 * 1.25 * 1.25) r.a3 += 1;
  }
  r.abs_rel /= r.n;
  r.sq_rel /= r.n;
  r.rmse = std::sqrt(se / r.n);
  r.rmse_log = std::sqrt(sle / r.n);
  r.a1 /= r.n;
  r.a2 /= r.n;
  r.a3 /= r.n;
  return r;
}

Image filled(int h, int w, float v) { return Image::Constant(h, w, v); }

}  // namespace

TEST_CASE("identity gives a perfect report") {
  Image g(2, 3);
  g << 1, 2, 3, 4, 5, 6;
  const MetricsReport r = compute_metrics(g, g);
  CHECK(r.abs_rel == 0);
  CHECK(r.sq_rel == 0);
  CHECK(r.rmse == 0);
  CHECK(r.rmse_log == 0);
  CHECK(r.acc_1 == 1);
  CHECK(r.acc_2 == 1);
  CHECK(r.acc_3 == 1);
  CHECK(r.valid_pixel_count == 6);
}

TEST_CASE("single pixel arithmetic") {
  const MetricsReport r = compute_metrics(filled(1, 1, 2), filled(1, 1, 1));
  CHECK(r.abs_rel == doctest::Approx(1));
  CHECK(r.sq_rel == doctest::Approx(1));
  CHECK(r.rmse == doctest::Approx(1));
  CHECK(r.rmse_log == doctest::Approx(std::log(2.0)));
  CHECK(r.acc_1 == 0);
  CHECK(r.acc_2 == 0);
  CHECK(r.acc_3 == 0);
}

TEST_CASE("ratio exactly 1.25 fails the strict threshold") {
  const MetricsReport r = compute_metrics(filled(4, 4, 5), filled(4, 4, 4));
  CHECK(r.abs_rel == doctest::Approx(0.25));
  CHECK(r.acc_1 == 0);
  CHECK(r.acc_2 == 1);
  CHECK(r.acc_3 == 1);
  // The ratio is symmetric: underestimating by the same factor also fails.
  const MetricsReport under = compute_metrics(filled(4, 4, 4), filled(4, 4, 5));
  CHECK(under.acc_1 == 0);
  CHECK(compute_metrics(filled(4, 4, 4.5f), filled(4, 4, 4)).acc_1 == 1);
}

TEST_CASE("valid mask") {
  Image g(1, 4), p(1, 4);
  g << 25, 2, 3, 4;
  p << 1, 0, 3, 21;
  const Mask m = valid_mask(g, p, 20.0);
  CHECK_FALSE(m(0, 0));
  CHECK_FALSE(m(0, 1));
  CHECK(m(0, 2));
  CHECK_FALSE(m(0, 3));
  CHECK(valid_mask(filled(2, 2, 20), filled(2, 2, 0.1f)).all());
  CHECK_THROWS_AS(compute_metrics(filled(2, 2, 0), filled(2, 2, 1)), DataError);
}

TEST_CASE("matches a naive reference on random maps") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    Image p(16, 32), g(16, 32);
    std::vector<double> pv, gv;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      float gi = static_cast<float>(rng.uniform(0.2, 24.0));
      float pi = static_cast<float>(gi * rng.uniform(0.4, 2.2));
      if (rng.uniform() < 0.05) gi = 0.f;
      if (rng.uniform() < 0.05) pi = 0.f;
      p.data()[i] = pi;
      g.data()[i] = gi;
      pv.push_back(pi);
      gv.push_back(gi);
    }
    const MetricsReport r = compute_metrics(p, g, 20.0);
    const Naive n = naive_metrics(pv, gv, 20.0);
    CHECK(r.valid_pixel_count == n.n);
    CHECK(std::abs(r.abs_rel - n.abs_rel) <= 1e-6);
    CHECK(std::abs(r.sq_rel - n.sq_rel) <= 1e-6);
    CHECK(std::abs(r.rmse - n.rmse) <= 1e-6);
    CHECK(std::abs(r.rmse_log - n.rmse_log) <= 1e-6);
    CHECK(std::abs(r.acc_1 - n.a1) <= 1e-6);
    CHECK(std::abs(r.acc_2 - n.a2) <= 1e-6);
    CHECK(std::abs(r.acc_3 - n.a3) <= 1e-6);
    CHECK(r.acc_1 <= r.acc_2);
    CHECK(r.acc_2 <= r.acc_3);
    // rmse bounds the mean absolute error.
    double mae = 0;
    long cnt = 0;
    for (std::size_t i = 0; i < pv.size(); ++i)
      if (gv[i] > 0 && gv[i] <= 20 && pv[i] > 0 && pv[i] <= 20) {
        mae += std::fabs(pv[i] - gv[i]);
        ++cnt;
      }
    CHECK(r.rmse >= mae / cnt - 1e-9);
  }
}

TEST_CASE("report formatting") {
  const MetricsReport r = compute_metrics(filled(2, 2, 2), filled(2, 2, 2));
  const std::string t = r.table();
  const auto abs_pos = t.find("abs_rel"), sq_pos = t.find("sq_rel"), rmse_pos = t.find("rmse ");
  CHECK(abs_pos < sq_pos);
  CHECK(sq_pos < rmse_pos);
  CHECK(r.to_text().find("abs_rel=") != std::string::npos);
}
