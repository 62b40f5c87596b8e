#pragma once

// Semi-Global Matching along longitude columns of a vertically displaced
// equirectangular pair. Disparity levels are angular: level d compares the
// top pixel at latitude lat with the bottom pixel at lat - d * step.

#include <Eigen/Core>

#include "panodepth/geometry.hpp"
#include "panodepth/image.hpp"

namespace pano {

enum class CostKind { census, sad };

struct SgmParams {
  CostKind cost = CostKind::census;
  int census_window = 5;
  int sad_window = 5;
  float p1 = 8.f;
  float p2 = 96.f;
  int num_paths = 8;
  // Radians; <= 0 selects baseline / min_expected_depth capped at fov_h / 4.
  double max_disparity = 0.0;
  double min_expected_depth = 0.5;
  int num_disp = 64;
  double uniqueness = 0.95;
  int median_window = 3;

  // Throws std::invalid_argument.
  void validate(const RigConfig& rig) const;
  double resolved_max_disparity(const RigConfig& rig) const;
  float sentinel_cost() const;
};

// Matching costs, one row of `num_disp` levels per pixel (row index y*W + x).
struct CostVolume {
  int width = 0;
  int height = 0;
  int num_disp = 0;
  double step = 0.0;  // radians per level
  Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> costs;

  CostVolume() = default;
  CostVolume(int w, int h, int d, double step_rad);

  float& operator()(int y, int x, int d) {
    return costs(static_cast<Eigen::Index>(y) * width + x, d);
  }
  float operator()(int y, int x, int d) const {
    return costs(static_cast<Eigen::Index>(y) * width + x, d);
  }
  float* levels(int y, int x) { return &(*this)(y, x, 0); }
  const float* levels(int y, int x) const {
    return costs.data() + (static_cast<Eigen::Index>(y) * width + x) * num_disp;
  }
  auto pixel(int y, int x) { return costs.row(static_cast<Eigen::Index>(y) * width + x); }
  auto pixel(int y, int x) const {
    return costs.row(static_cast<Eigen::Index>(y) * width + x);
  }

  void validate() const;
};

// Census descriptors (bit set where neighbor < center) with horizontal wrap
// and vertical clamp. Windows up to 7x7.
Eigen::Array<std::uint64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> census_transform(
    const Image& img, int window);

CostVolume matching_cost(const Image& top, const Image& bottom, const SgmParams& params,
                         const RigConfig& rig);

// Sum over paths of the SGM recurrence
//   L(p,d) = C(p,d) + min(L'(d), L'(d-1)+p1, L'(d+1)+p1, p2),
// where L' is the predecessor's path cost minus its minimum.
CostVolume aggregate(const CostVolume& volume, const SgmParams& params);

// A single path with direction (dy, dx) in rows/columns per step. Paths with
// dy == 0 wrap around the row, starting at the row's least rotation and
// repeating laps until the state is periodic; others start from the plain
// cost at the first row they visit.
CostVolume aggregate_path(const CostVolume& volume, const SgmParams& params, int dy, int dx);

// Winner-take-all with parabolic sub-level refinement and the uniqueness
// test. Returns radians; invalid pixels are 0.
Image wta_disparity(const CostVolume& agg, const SgmParams& params);

// Sub-level offset of the parabola through (d-1, d, d+1); 0 when degenerate.
double parabola_offset(double c_prev, double c_mid, double c_next);

// Median over valid neighbors (horizontal wrap, vertical clamp).
Image refine(const Image& disparity, const SgmParams& params);

struct SgmResult {
  Panorama disparity;
  Panorama depth;
};

SgmResult sgm_depth(const Panorama& top, const Panorama& bottom, const RigConfig& rig,
                    const SgmParams& params = {});

}  // namespace pano
