#pragma once

// Training objectives. Every loss returns its value together with the
// gradient w.r.t. the predicted disparity, so the trainer can feed
// PadeNet::backward directly.

#include <array>
#include <vector>

#include "panodepth/geometry.hpp"
#include "panodepth/padenet.hpp"
#include "panodepth/tensor.hpp"

namespace pano {

// Weight of output scale i (0 = coarsest): 1/64, 1/16, 1/4, 1.
inline constexpr std::array<double, 4> kScaleWeights = {1.0 / 64, 1.0 / 16, 1.0 / 4, 1.0};

template <typename Scalar>
struct LossValue {
  double value = 0.0;
  Tensor<Scalar> grad;  // d value / d prediction
};

struct LossBreakdown {
  double total = 0.0;
  std::array<double, 4> per_scale{};  // weighted contribution of each scale
  // smooth_l1 (supervised) or reconstruction (unsupervised), unweighted.
  std::array<double, 4> data_term{};
  std::array<double, 4> smooth_term{};  // unsupervised only
  double lambda_smooth = 0.0;

  // Sum over scales of weight * (data + lambda * smooth).
  double recombined() const;
};

template <typename Scalar>
struct PyramidLoss {
  LossBreakdown breakdown;
  DisparityPyramid<Scalar> grads;
};

// Area average over factor x factor blocks. With `valid_only`, only values
// > 0 contribute and blocks without any become 0.
template <typename Scalar>
Tensor<Scalar> downsample_area(const Tensor<Scalar>& t, int factor, bool valid_only = false);

// Mean over pixels with gt > 0 of delta^2 (delta <= 1) or delta (delta > 1).
// Throws DomainError when no pixel is valid.
template <typename Scalar>
LossValue<Scalar> smooth_l1(const Tensor<Scalar>& pred, const Tensor<Scalar>& gt);

// `gt` is full-resolution disparity (N, 1, H, W).
template <typename Scalar>
PyramidLoss<Scalar> multiscale_supervised(const DisparityPyramid<Scalar>& preds,
                                          const Tensor<Scalar>& gt);

// Samples `source` (N, C, H, W) at row y - d(y, x) * H / fov_h with linear
// interpolation between rows; rows outside the image clamp to the edge.
// This reconstructs the top view from the bottom view of a rig. The row
// scale follows the tensor height, so coarser pyramid levels reuse `rig`.
template <typename Scalar>
Tensor<Scalar> warp_vertical(const Tensor<Scalar>& source, const Tensor<Scalar>& disparity,
                             const RigConfig& rig);

template <typename Scalar>
struct WarpGrads {
  Tensor<Scalar> source, disparity;
};

template <typename Scalar>
WarpGrads<Scalar> warp_vertical_backward(const Tensor<Scalar>& source,
                                         const Tensor<Scalar>& disparity, const RigConfig& rig,
                                         const Tensor<Scalar>& grad_out);

template <typename Scalar>
struct ReconstructionLoss {
  double value = 0.0;
  Tensor<Scalar> grad_disparity, grad_source;
};

// Mean |target - warp_vertical(source, disparity)|.
template <typename Scalar>
ReconstructionLoss<Scalar> reconstruction_loss(const Tensor<Scalar>& target,
                                               const Tensor<Scalar>& source,
                                               const Tensor<Scalar>& disparity,
                                               const RigConfig& rig);

// Edge-aware smoothness: mean over pixels of |dx d| exp(-|dx I|) +
// |dy d| exp(-|dy I|), image gradients averaged over channels. Horizontal
// differences wrap; the last row has no vertical term.
template <typename Scalar>
LossValue<Scalar> smoothness_loss(const Tensor<Scalar>& disparity, const Tensor<Scalar>& rgb);

template <typename Scalar>
PyramidLoss<Scalar> unsupervised_loss(const DisparityPyramid<Scalar>& preds,
                                      const Tensor<Scalar>& top, const Tensor<Scalar>& bottom,
                                      const RigConfig& rig, double lambda_smooth);

}  // namespace pano
