#include "panodepth/image.hpp"

#include <cmath>
#include <stdexcept>

#include "panodepth/errors.hpp"

namespace pano {

std::string_view to_string(PanoramaKind kind) {
  switch (kind) {
    case PanoramaKind::rgb: return "rgb";
    case PanoramaKind::gray: return "gray";
    case PanoramaKind::depth: return "depth";
    case PanoramaKind::disparity: return "disparity";
  }
  return "unknown";
}

Panorama::Panorama(PanoramaKind k, int width, int height) : kind(k) {
  const int c = k == PanoramaKind::rgb ? 3 : 1;
  planes.assign(c, Image::Zero(height, width));
}

Panorama Panorama::from_image(PanoramaKind k, Image plane) {
  Panorama p;
  p.kind = k;
  p.planes.push_back(std::move(plane));
  return p;
}

void Panorama::validate() const {
  const int expected = kind == PanoramaKind::rgb ? 3 : 1;
  if (channels() != expected)
    throw DataError(std::string("panorama: ") + std::string(to_string(kind)) +
                    " needs " + std::to_string(expected) + " channel(s)");
  for (const auto& p : planes) {
    if (p.rows() != height() || p.cols() != width())
      throw DataError("panorama: channel planes differ in size");
    if (!p.isFinite().all()) throw DataError("panorama: non-finite value");
    switch (kind) {
      case PanoramaKind::rgb:
      case PanoramaKind::gray:
        if (p.size() && (p.minCoeff() < 0.f || p.maxCoeff() > 1.f))
          throw DataError("panorama: intensity outside [0, 1]");
        break;
      case PanoramaKind::depth:
      case PanoramaKind::disparity:
        if (p.size() && p.minCoeff() < 0.f)
          throw DataError("panorama: negative depth/disparity");
        break;
    }
  }
}

Image to_gray(const Panorama& pano) {
  if (pano.channels() == 1) return pano.plane(0);
  if (pano.channels() != 3) throw DataError("to_gray: expected 1 or 3 channels");
  return 0.299f * pano.plane(0) + 0.587f * pano.plane(1) + 0.114f * pano.plane(2);
}

Image area_downsample(const Image& img, int factor, bool valid_only) {
  if (factor < 1 || img.rows() % factor || img.cols() % factor)
    throw std::invalid_argument("area_downsample: size not divisible by factor");
  if (factor == 1) return img;
  const Eigen::Index h = img.rows() / factor, w = img.cols() / factor;
  Image out(h, w);
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      const auto block = img.block(y * factor, x * factor, factor, factor);
      if (!valid_only) {
        out(y, x) = block.mean();
        continue;
      }
      double sum = 0.0;
      int n = 0;
      for (Eigen::Index i = 0; i < factor; ++i)
        for (Eigen::Index j = 0; j < factor; ++j)
          if (block(i, j) > 0.f) {
            sum += block(i, j);
            ++n;
          }
      out(y, x) = n ? static_cast<float>(sum / n) : 0.f;
    }
  }
  return out;
}

Image roll_columns(const Image& img, int shift) {
  const Eigen::Index w = img.cols();
  Image out(img.rows(), w);
  for (Eigen::Index x = 0; x < w; ++x) {
    const Eigen::Index src = ((x - shift) % w + w) % w;
    out.col(x) = img.col(src);
  }
  return out;
}

}  // namespace pano
