#include "panodepth/geometry.hpp"

#include <stdexcept>

namespace pano {

void RigConfig::validate() const {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  if (!(baseline >= 0.0) || !std::isfinite(baseline))
    throw std::invalid_argument("rig: baseline must be finite and >= 0");
  if (width < 2 || height < 2)
    throw std::invalid_argument("rig: width and height must be >= 2");
  if (!(fov_w > 0.0 && fov_w <= kTwoPi + 1e-12))
    throw std::invalid_argument("rig: fov_w must lie in (0, 2pi]");
  if (!(fov_h > 0.0 && fov_h <= std::numbers::pi + 1e-12))
    throw std::invalid_argument("rig: fov_h must lie in (0, pi]");
}

RigConfig RigConfig::resized(int w, int h) const {
  RigConfig r = *this;
  r.width = w;
  r.height = h;
  return r;
}

AngleMatrix angle_matrix(const RigConfig& rig) {
  rig.validate();
  AngleMatrix m;
  m.latitudes.resize(rig.height);
  m.longitudes.resize(rig.width);
  const double row_step = rig.fov_h / (rig.height - 1);
  for (int y = 0; y < rig.height; ++y) {
    // Pin the mirrored row to the exact negated latitude so the matrix is
    // bit-exactly equator-symmetric.
    const int mirror = rig.height - 1 - y;
    m.latitudes(y) = mirror < y ? -m.latitudes(mirror)
                                : -rig.fov_h / 2 + y * row_step;
  }
  if (rig.height % 2 == 1) m.latitudes(rig.height / 2) = 0.0;
  for (int x = 0; x < rig.width; ++x)
    m.longitudes(x) = x * rig.fov_w / rig.width - rig.fov_w / 2;

  m.values.resize(rig.height, rig.width);
  for (int y = 0; y < rig.height; ++y) {
    double c = std::cos(m.latitudes(y));
    if (c < 1e-12) c = 0.0;
    m.values.row(y).setConstant(c);
  }
  return m;
}

}  // namespace pano
