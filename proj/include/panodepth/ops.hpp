#pragma once

// Differentiable kernels used by the network. Every forward function has a
// matching *_backward that maps the gradient of a scalar loss w.r.t. the
// output to gradients w.r.t. the inputs (and parameters). Horizontal
// indexing is cyclic everywhere: panoramas wrap in longitude.

#include <cstdint>
#include <vector>

#include "panodepth/tensor.hpp"

namespace pano::ops {

struct ConvSpec {
  int stride = 1;
  int dilation_h = 1;  // horizontal (longitude) dilation
  int dilation_v = 1;  // vertical (latitude) dilation
};

// weight (Cout, Cin, K, K) with K odd, bias (1, Cout, 1, 1). Padding is
// dilation*(K-1)/2 on each side: circular horizontally, zero vertically.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const ConvSpec& spec = {});

template <typename Scalar>
struct ConvGrads {
  Tensor<Scalar> input, weight, bias;
};

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, const ConvSpec& spec = {});

// Output spatial size for the padding rules above.
std::array<int, 2> conv_output_size(int h, int w, int kernel, const ConvSpec& spec);

// 2x2 max pooling, stride 2. `argmax` holds, per output element, the flat
// input index that won (first occurrence on ties).
template <typename Scalar>
struct MaxPoolResult {
  Tensor<Scalar> output;
  std::vector<std::int64_t> argmax;
};

template <typename Scalar>
MaxPoolResult<Scalar> maxpool2(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Tensor<Scalar>& grad_out,
                                 const std::vector<std::int64_t>& argmax,
                                 const typename Tensor<Scalar>::Shape& input_shape);

// Bilinear upsampling by an integer factor (align_corners = false);
// horizontal neighbors wrap, vertical ones clamp.
template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& input, int factor);

template <typename Scalar>
Tensor<Scalar> bilinear_upsample_backward(const Tensor<Scalar>& grad_out, int factor,
                                          const typename Tensor<Scalar>::Shape& input_shape);

// (N, C, H, W) -> (N, C, 1, 1)
template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& input);

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& grad_out,
                                        const typename Tensor<Scalar>::Shape& input_shape);

// input (N, I, 1, 1), weight (O, I, 1, 1), bias (1, O, 1, 1) -> (N, O, 1, 1)
template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                               const Tensor<Scalar>& bias);

template <typename Scalar>
ConvGrads<Scalar> fully_connected_backward(const Tensor<Scalar>& input,
                                           const Tensor<Scalar>& weight,
                                           const Tensor<Scalar>& grad_out);

// (N, C, 1, 1) -> (N, C, H, W)
template <typename Scalar>
Tensor<Scalar> tile_spatial(const Tensor<Scalar>& vec, int h, int w);

template <typename Scalar>
Tensor<Scalar> tile_spatial_backward(const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x);

// Uses the forward input; the subgradient at 0 is 0.
template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x);

// Uses the forward output.
template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_out);

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts);

template <typename Scalar>
std::vector<Tensor<Scalar>> concat_channels_backward(const Tensor<Scalar>& grad_out,
                                                     const std::vector<int>& channel_counts);

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b);

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor);

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar value);

// Cyclic horizontal rotation of every plane: out(.., x) = in(.., x - shift).
template <typename Scalar>
Tensor<Scalar> roll_width(const Tensor<Scalar>& x, int shift);

}  // namespace pano::ops
