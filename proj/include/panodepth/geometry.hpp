#pragma once

// Equirectangular pixel <-> sphere mapping and the disparity/depth relation
// for a vertically displaced camera pair.
//
// Conventions: x grows with longitude, y grows downward with latitude, so the
// top image row sits at -fov_h/2. The second camera of a rig is displaced by
// `baseline` along +y (down); a scene point therefore appears at a smaller
// latitude in the lower camera and angular disparity is lat_top - lat_bottom.

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "panodepth/errors.hpp"

namespace pano {

struct RigConfig {
  double baseline = 0.26;  // meters
  int width = 128;
  int height = 64;
  double fov_w = 2.0 * std::numbers::pi;
  double fov_h = std::numbers::pi;

  // Throws std::invalid_argument. A zero baseline is accepted: it describes
  // the degenerate rig where both cameras coincide.
  void validate() const;

  // Copy of this rig with a different raster size (same field of view).
  RigConfig resized(int w, int h) const;

  double rows_per_radian() const { return height / fov_h; }
};

// Invalid depth/disparity marker; consumers treat values <= 0 as invalid.
inline constexpr double kInvalidDepth = 0.0;
inline constexpr double kDisparityEpsilon = 1e-6;

// (longitude, latitude) in radians from continuous pixel coordinates, using
// the raw linear map (no half-pixel centering).
template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> pixel_to_lonlat(Scalar x, Scalar y,
                                            const RigConfig& rig) {
  if (!(x >= 0 && x <= rig.width && y >= 0 && y <= rig.height))
    throw DomainError("pixel_to_lonlat: pixel outside [0, width] x [0, height]");
  const Scalar fw = static_cast<Scalar>(rig.fov_w);
  const Scalar fh = static_cast<Scalar>(rig.fov_h);
  return {x * fw / Scalar(rig.width) - fw / 2,
          y * fh / Scalar(rig.height) - fh / 2};
}

template <typename Scalar>
Eigen::Matrix<Scalar, 2, 1> lonlat_to_pixel(Scalar lon, Scalar lat,
                                            const RigConfig& rig) {
  const Scalar fw = static_cast<Scalar>(rig.fov_w);
  const Scalar fh = static_cast<Scalar>(rig.fov_h);
  if (!(std::abs(lon) <= fw / 2 && std::abs(lat) <= fh / 2))
    throw DomainError("lonlat_to_pixel: angle outside the field of view");
  return {(lon + fw / 2) * Scalar(rig.width) / fw,
          (lat + fh / 2) * Scalar(rig.height) / fh};
}

template <typename Scalar>
Scalar angular_disparity(Scalar lat_a, Scalar lat_b) {
  return std::abs(lat_a - lat_b);
}

// depth = baseline * cos(lat) / disparity. Disparities below `eps` map to
// the invalid sentinel instead of infinity.
template <typename Scalar>
Scalar disparity_to_depth(Scalar disparity, Scalar cos_lat,
                          const RigConfig& rig,
                          Scalar eps = Scalar(kDisparityEpsilon)) {
  if (!(disparity >= eps)) return Scalar(kInvalidDepth);
  return Scalar(rig.baseline) * cos_lat / disparity;
}

template <typename Scalar>
Scalar depth_to_disparity(Scalar depth, Scalar cos_lat, const RigConfig& rig) {
  if (!(depth > 0)) throw DomainError("depth_to_disparity: depth must be > 0");
  return Scalar(rig.baseline) * cos_lat / depth;
}

// Per-pixel cos(latitude) factor. Rows sample latitude inclusively from
// -fov_h/2 (row 0) to +fov_h/2 (row h-1), so with an odd height the middle
// row is exactly 1. Cosines below 1e-12 (the poles) are stored as exactly 0.
struct AngleMatrix {
  Eigen::ArrayXXd values;     // height x width
  Eigen::ArrayXd longitudes;  // per column, raw pixel map
  Eigen::ArrayXd latitudes;   // per row

  int height() const { return static_cast<int>(values.rows()); }
  int width() const { return static_cast<int>(values.cols()); }
  double cos_lat(int row) const { return values(row, 0); }
};

AngleMatrix angle_matrix(const RigConfig& rig);

// Map-level conversions. Invalid entries (<= 0) stay invalid.
template <typename Derived>
auto disparity_map_to_depth(const Eigen::ArrayBase<Derived>& disparity,
                            const AngleMatrix& angles, const RigConfig& rig) {
  using Scalar = typename Derived::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      disparity.rows(), disparity.cols());
  for (Eigen::Index y = 0; y < disparity.rows(); ++y) {
    const auto c = static_cast<Scalar>(angles.values(y, 0));
    for (Eigen::Index x = 0; x < disparity.cols(); ++x)
      out(y, x) = disparity_to_depth<Scalar>(disparity(y, x), c, rig);
  }
  return out;
}

template <typename Derived>
auto depth_map_to_disparity(const Eigen::ArrayBase<Derived>& depth,
                            const AngleMatrix& angles, const RigConfig& rig) {
  using Scalar = typename Derived::Scalar;
  Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      depth.rows(), depth.cols());
  for (Eigen::Index y = 0; y < depth.rows(); ++y) {
    const auto c = static_cast<Scalar>(angles.values(y, 0));
    for (Eigen::Index x = 0; x < depth.cols(); ++x)
      out(y, x) = depth(y, x) > 0
                      ? depth_to_disparity<Scalar>(depth(y, x), c, rig)
                      : Scalar(0);
  }
  return out;
}

}  // namespace pano
