#include "panodepth/sgm.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "panodepth/errors.hpp"

namespace pano {
namespace {

using CensusImage =
    Eigen::Array<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline int wrap(int x, int w) { return ((x % w) + w) % w; }
inline int clamp_row(int y, int h) { return std::clamp(y, 0, h - 1); }

// Bilinear vertical sample at a continuous row, clamped to the image.
inline float sample_row(const Image& img, double row, int x) {
  const int h = static_cast<int>(img.rows());
  row = std::clamp(row, 0.0, static_cast<double>(h - 1));
  const int y0 = static_cast<int>(std::floor(row));
  const int y1 = std::min(y0 + 1, h - 1);
  const float a = static_cast<float>(row - y0);
  return (1.f - a) * img(y0, x) + a * img(y1, x);
}

// Box sum with horizontal wrap and vertical clamp.
Image box_sum(const Image& img, int window) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int r = window / 2;
  Image rows(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.f;
      for (int j = -r; j <= r; ++j) s += img(y, wrap(x + j, w));
      rows(y, x) = s;
    }
  Image out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float s = 0.f;
      for (int i = -r; i <= r; ++i) s += rows(clamp_row(y + i, h), x);
      out(y, x) = s;
    }
  return out;
}

inline void path_step(const float* cost, const float* prev_norm, float* out_l, int nd,
                      float p1, float p2) {
  for (int d = 0; d < nd; ++d) {
    float m = std::min(prev_norm[d], p2);
    if (d > 0) m = std::min(m, prev_norm[d - 1] + p1);
    if (d + 1 < nd) m = std::min(m, prev_norm[d + 1] + p1);
    out_l[d] = cost[d] + m;
  }
}

constexpr int kMaxRowLaps = 64;

// Lexicographic order of two pixels' cost vectors.
int compare_levels(const float* a, const float* b, int nd) {
  for (int d = 0; d < nd; ++d)
    if (a[d] != b[d]) return a[d] < b[d] ? -1 : 1;
  return 0;
}

// Start column of the lexicographically least rotation of row y, taking each
// pixel's cost vector as one symbol (Booth's algorithm).
int least_rotation(const CostVolume& v, int y) {
  const int w = v.width, n = 2 * w;
  auto sym = [&](int i) { return v.levels(y, i % w); };
  std::vector<int> f(n, -1);
  int k = 0;
  for (int j = 1; j < n; ++j) {
    int i = f[j - k - 1];
    int c;
    while (i != -1 && (c = compare_levels(sym(j), sym(k + i + 1), v.num_disp)) != 0) {
      if (c < 0) k = j - i - 1;
      i = f[i];
    }
    if (i == -1 && (c = compare_levels(sym(j), sym(k), v.num_disp)) != 0) {
      if (c < 0) k = j;
      f[j - k] = -1;
    } else {
      f[j - k] = i + 1;
    }
  }
  return k % w;
}

inline void normalize(const float* l, float* norm, int nd) {
  const float mn = *std::min_element(l, l + nd);
  for (int d = 0; d < nd; ++d) norm[d] = l[d] - mn;
}

}  // namespace

void SgmParams::validate(const RigConfig& rig) const {
  if (census_window < 1 || census_window % 2 == 0 || census_window > 7)
    throw std::invalid_argument("sgm: census window must be odd and <= 7");
  if (sad_window < 1 || sad_window % 2 == 0)
    throw std::invalid_argument("sgm: SAD window must be odd");
  if (!(p1 > 0.f && p1 < p2) && !(p1 == 0.f && p2 == 0.f))
    throw std::invalid_argument("sgm: penalties must satisfy 0 < p1 < p2 (or both 0)");
  if (num_paths != 4 && num_paths != 8)
    throw std::invalid_argument("sgm: num_paths must be 4 or 8");
  if (num_disp < 2) throw std::invalid_argument("sgm: num_disp must be >= 2");
  if (!(uniqueness > 0.0 && uniqueness <= 1.0))
    throw std::invalid_argument("sgm: uniqueness ratio must lie in (0, 1]");
  if (median_window < 1 || median_window % 2 == 0)
    throw std::invalid_argument("sgm: median window must be odd");
  if (max_disparity > rig.fov_h / 4 + 1e-12)
    throw std::invalid_argument("sgm: max_disparity must not exceed fov_h / 4");
}

double SgmParams::resolved_max_disparity(const RigConfig& rig) const {
  if (max_disparity > 0.0) return max_disparity;
  double m = std::min(rig.fov_h / 4, rig.baseline / min_expected_depth);
  // A zero baseline still gets a search range so identical views match at 0.
  if (!(m > 0.0)) m = 8.0 * rig.fov_h / rig.height;
  return m;
}

float SgmParams::sentinel_cost() const {
  const float raw_max = cost == CostKind::census
                            ? static_cast<float>(census_window * census_window - 1)
                            : static_cast<float>(sad_window * sad_window);
  return 4.f * raw_max;
}

CostVolume::CostVolume(int w, int h, int d, double step_rad)
    : width(w), height(h), num_disp(d), step(step_rad),
      costs(static_cast<Eigen::Index>(w) * h, d) {
  costs.setZero();
}

void CostVolume::validate() const {
  if (width < 1 || height < 1 || num_disp < 2)
    throw std::invalid_argument("cost volume: bad dimensions");
  if (costs.rows() != static_cast<Eigen::Index>(width) * height || costs.cols() != num_disp)
    throw std::invalid_argument("cost volume: storage does not match dimensions");
  if (costs.size() && costs.minCoeff() < 0.f)
    throw std::invalid_argument("cost volume: negative cost");
}

CensusImage census_transform(const Image& img, int window) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  const int r = window / 2;
  CensusImage out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const float c = img(y, x);
      std::uint64_t bits = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          if (i == 0 && j == 0) continue;
          bits = (bits << 1) | (img(clamp_row(y + i, h), wrap(x + j, w)) < c ? 1u : 0u);
        }
      out(y, x) = bits;
    }
  return out;
}

CostVolume matching_cost(const Image& top, const Image& bottom, const SgmParams& params,
                         const RigConfig& rig) {
  if (top.rows() != bottom.rows() || top.cols() != bottom.cols())
    throw DataError("matching_cost: top and bottom differ in shape");
  if (top.rows() != rig.height || top.cols() != rig.width)
    throw DataError("matching_cost: image size does not match the rig");
  params.validate(rig);
  const int window = params.cost == CostKind::census ? params.census_window : params.sad_window;
  if (window > top.rows() || window > top.cols())
    throw DataError("matching_cost: window larger than image");

  const int h = static_cast<int>(top.rows()), w = static_cast<int>(top.cols());
  const int nd = params.num_disp;
  const double step = params.resolved_max_disparity(rig) / (nd - 1);
  const double rows_per_rad = rig.rows_per_radian();
  const float sentinel = params.sentinel_cost();
  CostVolume vol(w, h, nd, step);

  if (params.cost == CostKind::census) {
    const CensusImage ct = census_transform(top, params.census_window);
    const CensusImage cb = census_transform(bottom, params.census_window);
    for (int d = 0; d < nd; ++d) {
      const double shift = d * step * rows_per_rad;
      for (int y = 0; y < h; ++y) {
        const long yb = std::lround(y - shift);
        for (int x = 0; x < w; ++x)
          vol(y, x, d) = yb < 0 ? sentinel
                                : static_cast<float>(std::popcount(ct(y, x) ^ cb(yb, x)));
      }
    }
    return vol;
  }

  Image diff(h, w);
  for (int d = 0; d < nd; ++d) {
    const double shift = d * step * rows_per_rad;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        diff(y, x) = std::abs(top(y, x) - sample_row(bottom, y - shift, x));
    const Image sums = box_sum(diff, params.sad_window);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) vol(y, x, d) = y - shift < 0.0 ? sentinel : sums(y, x);
  }
  return vol;
}

CostVolume aggregate_path(const CostVolume& volume, const SgmParams& params, int dy,
                          int dx) {
  volume.validate();
  if (std::abs(dy) > 1 || std::abs(dx) > 1 || (dy == 0 && dx == 0))
    throw std::invalid_argument("aggregate_path: direction components must be in {-1, 0, 1}");
  const int h = volume.height, w = volume.width, nd = volume.num_disp;
  const float p1 = params.p1, p2 = params.p2;
  CostVolume path(w, h, nd, volume.step);
  std::vector<float> norm(nd);
  if (dy == 0) {
    // Cyclic row pass. Each row starts at its least rotation, so the seam
    // moves with the content. Laps repeat until the normalized state at the
    // seam comes back unchanged, so the recorded lap is the periodic solution.
    std::vector<float> start(nd);
    for (int y = 0; y < h; ++y) {
      const int seam = least_rotation(volume, y);
      path.pixel(y, seam) = volume.pixel(y, seam);
      for (int lap = 0; lap < kMaxRowLaps; ++lap) {
        normalize(path.levels(y, seam), start.data(), nd);
        int x = seam;
        for (int k = 0; k < w; ++k) {
          const int px = x;
          x = wrap(x + dx, w);
          normalize(path.levels(y, px), norm.data(), nd);
          path_step(volume.levels(y, x), norm.data(), path.levels(y, x), nd, p1, p2);
        }
        normalize(path.levels(y, seam), norm.data(), nd);
        if (lap > 0 && std::equal(start.begin(), start.end(), norm.begin())) break;
      }
    }
    return path;
  }
  const int y_first = dy > 0 ? 0 : h - 1;
  for (int x = 0; x < w; ++x) path.pixel(y_first, x) = volume.pixel(y_first, x);
  for (int y = y_first + dy; y >= 0 && y < h; y += dy)
    for (int x = 0; x < w; ++x) {
      normalize(path.levels(y - dy, wrap(x - dx, w)), norm.data(), nd);
      path_step(volume.levels(y, x), norm.data(), path.levels(y, x), nd, p1, p2);
    }
  return path;
}

CostVolume aggregate(const CostVolume& volume, const SgmParams& params) {
  volume.validate();
  static constexpr int kDirections[8][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0},
                                            {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  CostVolume total(volume.width, volume.height, volume.num_disp, volume.step);
  for (int p = 0; p < params.num_paths; ++p)
    total.costs += aggregate_path(volume, params, kDirections[p][0], kDirections[p][1]).costs;
  return total;
}

double parabola_offset(double c_prev, double c_mid, double c_next) {
  const double denom = 2.0 * (c_prev + c_next - 2.0 * c_mid);
  if (!(denom > 0.0)) return 0.0;
  return std::clamp((c_prev - c_next) / denom, -0.5, 0.5);
}

Image wta_disparity(const CostVolume& agg, const SgmParams& params) {
  agg.validate();
  const int nd = agg.num_disp;
  Image out = Image::Zero(agg.height, agg.width);
  for (int y = 0; y < agg.height; ++y)
    for (int x = 0; x < agg.width; ++x) {
      const float* c = agg.levels(y, x);
      const int best = static_cast<int>(std::min_element(c, c + nd) - c);
      float second = std::numeric_limits<float>::infinity();
      for (int d = 0; d < nd; ++d)
        if (std::abs(d - best) > 1) second = std::min(second, c[d]);
      if (std::isfinite(second) &&
          !(c[best] < static_cast<float>(params.uniqueness) * second))
        continue;
      double level = best;
      if (best > 0 && best < nd - 1) level += parabola_offset(c[best - 1], c[best], c[best + 1]);
      out(y, x) = static_cast<float>(level * agg.step);
    }
  return out;
}

Image refine(const Image& disparity, const SgmParams& params) {
  const int h = static_cast<int>(disparity.rows()), w = static_cast<int>(disparity.cols());
  const int r = params.median_window / 2;
  Image out = Image::Zero(h, w);
  std::vector<float> vals;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!(disparity(y, x) > 0.f)) continue;
      vals.clear();
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const float v = disparity(clamp_row(y + i, h), wrap(x + j, w));
          if (v > 0.f) vals.push_back(v);
        }
      const auto mid = vals.begin() + static_cast<std::ptrdiff_t>((vals.size() - 1) / 2);
      std::nth_element(vals.begin(), mid, vals.end());
      out(y, x) = *mid;
    }
  return out;
}

SgmResult sgm_depth(const Panorama& top, const Panorama& bottom, const RigConfig& rig,
                    const SgmParams& params) {
  if (!top.same_shape(bottom) || top.channels() != bottom.channels())
    throw DataError("sgm: top and bottom panoramas differ in shape");
  if (top.width() != rig.width || top.height() != rig.height)
    throw DataError("sgm: panorama size does not match the rig");
  const CostVolume cost = matching_cost(to_gray(top), to_gray(bottom), params, rig);
  const Image disp = refine(wta_disparity(aggregate(cost, params), params), params);
  const AngleMatrix angles = angle_matrix(rig);
  return {Panorama::from_image(PanoramaKind::disparity, disp),
          Panorama::from_image(PanoramaKind::depth, disparity_map_to_depth(disp, angles, rig))};
}

}  // namespace pano
