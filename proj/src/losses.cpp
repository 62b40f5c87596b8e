#include "panodepth/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pano {
namespace {

template <typename Scalar>
void require_same(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                                " vs " + shape_string(b.shape()));
}

template <typename Scalar>
void require_aligned(const Tensor<Scalar>& image, const Tensor<Scalar>& disparity,
                     const char* what) {
  if (disparity.c() != 1 || image.n() != disparity.n() || image.h() != disparity.h() ||
      image.w() != disparity.w())
    throw std::invalid_argument(std::string(what) + ": disparity " +
                                shape_string(disparity.shape()) + " not aligned with " +
                                shape_string(image.shape()));
}

double sign(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

double LossBreakdown::recombined() const {
  double t = 0.0;
  for (int i = 0; i < 4; ++i) t += kScaleWeights[i] * (data_term[i] + lambda_smooth * smooth_term[i]);
  return t;
}

template <typename Scalar>
Tensor<Scalar> downsample_area(const Tensor<Scalar>& t, int factor, bool valid_only) {
  if (factor < 1 || t.h() % factor || t.w() % factor)
    throw std::invalid_argument("downsample_area: factor must divide the tensor size");
  if (factor == 1) return t;
  const int h = t.h() / factor, w = t.w() / factor;
  Tensor<Scalar> out({t.n(), t.c(), h, w});
  for (int n = 0; n < t.n(); ++n)
    for (int c = 0; c < t.c(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double sum = 0.0;
          int count = 0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx) {
              const double v = t(n, c, y * factor + dy, x * factor + dx);
              if (valid_only && !(v > 0)) continue;
              sum += v;
              ++count;
            }
          out(n, c, y, x) = count ? static_cast<Scalar>(sum / count) : Scalar(0);
        }
  return out;
}

template <typename Scalar>
LossValue<Scalar> smooth_l1(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt) {
  require_same(pred, gt, "smooth_l1");
  LossValue<Scalar> out{0.0, Tensor<Scalar>(pred.shape())};
  double sum = 0.0;
  Eigen::Index valid = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!(gt.data()(i) > 0)) continue;
    ++valid;
    const double diff = static_cast<double>(pred.data()(i)) - gt.data()(i);
    const double delta = std::abs(diff);
    sum += delta <= 1.0 ? delta * delta : delta;
  }
  if (valid == 0) throw DomainError("smooth_l1: no valid ground-truth pixels");
  out.value = sum / static_cast<double>(valid);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    if (!(gt.data()(i) > 0)) continue;
    const double diff = static_cast<double>(pred.data()(i)) - gt.data()(i);
    const double d = std::abs(diff) <= 1.0 ? 2.0 * diff : sign(diff);
    out.grad.data()(i) = static_cast<Scalar>(d / static_cast<double>(valid));
  }
  return out;
}

template <typename Scalar>
PyramidLoss<Scalar> multiscale_supervised(const DisparityPyramid<Scalar>& preds,
                                          const Tensor<Scalar>& gt) {
  PyramidLoss<Scalar> out;
  for (int i = 0; i < 4; ++i) {
    const int factor = 1 << (3 - i);
    if (preds[i].n() != gt.n() || preds[i].c() != 1 || preds[i].h() * factor != gt.h() ||
        preds[i].w() * factor != gt.w())
      throw std::invalid_argument("multiscale_supervised: scale " + std::to_string(i) +
                                  " prediction " + shape_string(preds[i].shape()) +
                                  " does not match ground truth " + shape_string(gt.shape()));
    auto term = smooth_l1(preds[i], downsample_area(gt, factor, true));
    out.breakdown.data_term[i] = term.value;
    out.breakdown.per_scale[i] = kScaleWeights[i] * term.value;
    out.breakdown.total += out.breakdown.per_scale[i];
    term.grad.data() *= static_cast<Scalar>(kScaleWeights[i]);
    out.grads[i] = std::move(term.grad);
  }
  return out;
}

namespace {

struct Tap {
  int y0, y1;
  double a;  // weight of y1
};

inline Tap tap(int y, double d, double rows_per_radian, int h) {
  const double ys = y - d * rows_per_radian;
  const double f = std::floor(ys);
  const int y0 = static_cast<int>(f);
  return {std::clamp(y0, 0, h - 1), std::clamp(y0 + 1, 0, h - 1), ys - f};
}

template <typename Scalar>
void check_disparity(const Tensor<Scalar>& disparity) {
  for (Eigen::Index i = 0; i < disparity.size(); ++i)
    if (!(disparity.data()(i) >= 0))
      throw DomainError("warp_vertical: disparity must be finite and >= 0");
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> warp_vertical(const Tensor<Scalar>& source, const Tensor<Scalar>& disparity,
                             const RigConfig& rig) {
  require_aligned(source, disparity, "warp_vertical");
  check_disparity(disparity);
  const int h = source.h(), w = source.w();
  const double rpr = h / rig.fov_h;
  Tensor<Scalar> out(source.shape());
  for (int n = 0; n < source.n(); ++n)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Tap t = tap(y, disparity(n, 0, y, x), rpr, h);
        for (int c = 0; c < source.c(); ++c) {
          if (t.a == 0.0 || t.y0 == t.y1) {
            out(n, c, y, x) = source(n, c, t.y0, x);
            continue;
          }
          out(n, c, y, x) = static_cast<Scalar>((1.0 - t.a) * source(n, c, t.y0, x) +
                                                t.a * source(n, c, t.y1, x));
        }
      }
  return out;
}

template <typename Scalar>
WarpGrads<Scalar> warp_vertical_backward(const Tensor<Scalar>& source,
                                         const Tensor<Scalar>& disparity, const RigConfig& rig,
                                         const Tensor<Scalar>& grad_out) {
  require_aligned(source, disparity, "warp_vertical_backward");
  require_same(source, grad_out, "warp_vertical_backward");
  const int h = source.h(), w = source.w();
  const double rpr = h / rig.fov_h;
  WarpGrads<Scalar> g{Tensor<Scalar>(source.shape()), Tensor<Scalar>(disparity.shape())};
  for (int n = 0; n < source.n(); ++n)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const Tap t = tap(y, disparity(n, 0, y, x), rpr, h);
        double gd = 0.0;
        for (int c = 0; c < source.c(); ++c) {
          const double go = grad_out(n, c, y, x);
          if (t.y0 == t.y1) {
            g.source(n, c, t.y0, x) += static_cast<Scalar>(go);
          } else {
            g.source(n, c, t.y0, x) += static_cast<Scalar>((1.0 - t.a) * go);
            g.source(n, c, t.y1, x) += static_cast<Scalar>(t.a * go);
          }
          // d ys / d d = -rows_per_radian
          gd -= go * (static_cast<double>(source(n, c, t.y1, x)) - source(n, c, t.y0, x)) * rpr;
        }
        g.disparity(n, 0, y, x) = static_cast<Scalar>(gd);
      }
  return g;
}

template <typename Scalar>
ReconstructionLoss<Scalar> reconstruction_loss(const Tensor<Scalar>& target,
                                               const Tensor<Scalar>& source,
                                               const Tensor<Scalar>& disparity,
                                               const RigConfig& rig) {
  require_same(target, source, "reconstruction_loss");
  const Tensor<Scalar> warped = warp_vertical(source, disparity, rig);
  const double count = static_cast<double>(target.size());
  ReconstructionLoss<Scalar> out;
  Tensor<Scalar> g(target.shape());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double diff = static_cast<double>(warped.data()(i)) - target.data()(i);
    sum += std::abs(diff);
    g.data()(i) = static_cast<Scalar>(sign(diff) / count);
  }
  out.value = sum / count;
  auto wg = warp_vertical_backward(source, disparity, rig, g);
  out.grad_disparity = std::move(wg.disparity);
  out.grad_source = std::move(wg.source);
  return out;
}

template <typename Scalar>
LossValue<Scalar> smoothness_loss(const Tensor<Scalar>& disparity, const Tensor<Scalar>& rgb) {
  require_aligned(rgb, disparity, "smoothness_loss");
  const int h = disparity.h(), w = disparity.w(), ch = rgb.c();
  const double count = static_cast<double>(disparity.size());
  LossValue<Scalar> out{0.0, Tensor<Scalar>(disparity.shape())};
  double sum = 0.0;
  for (int n = 0; n < disparity.n(); ++n)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int xr = (x + 1) % w;
        const double d = disparity(n, 0, y, x);
        double ix = 0.0;
        for (int c = 0; c < ch; ++c) ix += std::abs(double(rgb(n, c, y, xr)) - rgb(n, c, y, x));
        const double wx = std::exp(-ix / ch);
        const double dx = disparity(n, 0, y, xr) - d;
        sum += std::abs(dx) * wx;
        const double gx = sign(dx) * wx / count;
        out.grad(n, 0, y, xr) += static_cast<Scalar>(gx);
        out.grad(n, 0, y, x) -= static_cast<Scalar>(gx);
        if (y + 1 == h) continue;
        double iy = 0.0;
        for (int c = 0; c < ch; ++c) iy += std::abs(double(rgb(n, c, y + 1, x)) - rgb(n, c, y, x));
        const double wy = std::exp(-iy / ch);
        const double dy = disparity(n, 0, y + 1, x) - d;
        sum += std::abs(dy) * wy;
        const double gy = sign(dy) * wy / count;
        out.grad(n, 0, y + 1, x) += static_cast<Scalar>(gy);
        out.grad(n, 0, y, x) -= static_cast<Scalar>(gy);
      }
  out.value = sum / count;
  return out;
}

template <typename Scalar>
PyramidLoss<Scalar> unsupervised_loss(const DisparityPyramid<Scalar>& preds,
                                      const Tensor<Scalar>& top, const Tensor<Scalar>& bottom,
                                      const RigConfig& rig, double lambda_smooth) {
  require_same(top, bottom, "unsupervised_loss");
  PyramidLoss<Scalar> out;
  out.breakdown.lambda_smooth = lambda_smooth;
  for (int i = 0; i < 4; ++i) {
    const int factor = 1 << (3 - i);
    if (preds[i].n() != top.n() || preds[i].c() != 1 || preds[i].h() * factor != top.h() ||
        preds[i].w() * factor != top.w())
      throw std::invalid_argument("unsupervised_loss: scale " + std::to_string(i) +
                                  " prediction " + shape_string(preds[i].shape()) +
                                  " does not match views " + shape_string(top.shape()));
    const Tensor<Scalar> t = downsample_area(top, factor);
    const Tensor<Scalar> b = downsample_area(bottom, factor);
    auto rect = reconstruction_loss(t, b, preds[i], rig);
    auto smooth = smoothness_loss(preds[i], t);
    out.breakdown.data_term[i] = rect.value;
    out.breakdown.smooth_term[i] = smooth.value;
    out.breakdown.per_scale[i] = kScaleWeights[i] * (rect.value + lambda_smooth * smooth.value);
    out.breakdown.total += out.breakdown.per_scale[i];
    Tensor<Scalar> g = std::move(rect.grad_disparity);
    g.data() += static_cast<Scalar>(lambda_smooth) * smooth.grad.data();
    g.data() *= static_cast<Scalar>(kScaleWeights[i]);
    out.grads[i] = std::move(g);
  }
  return out;
}

#define PANO_INSTANTIATE(S)                                                                      \
  template Tensor<S> downsample_area(const Tensor<S>&, int, bool);                               \
  template LossValue<S> smooth_l1(const Tensor<S>&, const Tensor<S>&);                           \
  template PyramidLoss<S> multiscale_supervised(const DisparityPyramid<S>&, const Tensor<S>&);   \
  template Tensor<S> warp_vertical(const Tensor<S>&, const Tensor<S>&, const RigConfig&);        \
  template WarpGrads<S> warp_vertical_backward(const Tensor<S>&, const Tensor<S>&,               \
                                               const RigConfig&, const Tensor<S>&);              \
  template ReconstructionLoss<S> reconstruction_loss(const Tensor<S>&, const Tensor<S>&,         \
                                                     const Tensor<S>&, const RigConfig&);        \
  template LossValue<S> smoothness_loss(const Tensor<S>&, const Tensor<S>&);                     \
  template PyramidLoss<S> unsupervised_loss(const DisparityPyramid<S>&, const Tensor<S>&,        \
                                            const Tensor<S>&, const RigConfig&, double);

PANO_INSTANTIATE(float)
PANO_INSTANTIATE(double)

}  // namespace pano
