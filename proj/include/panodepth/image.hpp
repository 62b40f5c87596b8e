#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace pano {

// Row-major single-channel raster, indexed (row, column).
using Image = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class PanoramaKind { rgb, gray, depth, disparity };

std::string_view to_string(PanoramaKind kind);

// Equirectangular raster stored as one Image plane per channel. Color and
// gray values live in [0, 1]; depth is meters and disparity radians, with
// 0 meaning invalid for both.
struct Panorama {
  PanoramaKind kind = PanoramaKind::gray;
  std::vector<Image> planes;

  Panorama() = default;
  Panorama(PanoramaKind k, int width, int height);
  static Panorama from_image(PanoramaKind k, Image plane);

  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int channels() const { return static_cast<int>(planes.size()); }
  bool same_shape(const Panorama& other) const {
    return width() == other.width() && height() == other.height();
  }

  Image& plane(int c = 0) { return planes[c]; }
  const Image& plane(int c = 0) const { return planes[c]; }

  // Throws DataError when the channel count or value range breaks the
  // invariants of `kind`.
  void validate() const;
};

// Fixed luma weights (0.299, 0.587, 0.114); gray input passes through.
Image to_gray(const Panorama& pano);

// Mean over factor x factor blocks. With `valid_only`, entries <= 0 are
// ignored and a block with no valid entry yields 0.
Image area_downsample(const Image& img, int factor, bool valid_only = false);

// Cyclic horizontal rotation: out(y, x) = img(y, x - shift mod W).
Image roll_columns(const Image& img, int shift);

}  // namespace pano
