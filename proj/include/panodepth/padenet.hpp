#pragma once

// Toy-scale panoramic depth network: a VGG-style encoder (feature
// extraction), a scene understanding block (global pooling branch, 1x1
// pixel branch, anisotropic atrous branches), and a bilinear upsampling
// decoder with concatenated skips that predicts angular disparity at four
// scales.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "panodepth/io.hpp"
#include "panodepth/ops.hpp"
#include "panodepth/tensor.hpp"

namespace pano {

struct PadeNetConfig {
  int input_height = 64;
  int input_width = 128;
  std::vector<int> encoder_channels = {16, 32, 64, 128};
  // (horizontal, vertical) dilation per atrous branch.
  std::vector<std::array<int, 2>> aspp_dilations = {{2, 1}, {4, 2}, {8, 2}};
  int su_channels = 128;
  double d_max = 0.5;  // radians

  // Throws std::invalid_argument.
  void validate() const;
  // Channels of each scene-understanding branch before fusion.
  int branch_channels() const { return std::max(1, su_channels / 2); }

  std::vector<std::pair<std::string, std::string>> to_meta() const;
  static PadeNetConfig from_meta(const Checkpoint& ckpt);
};

// Disparity maps from coarsest (H/8) to full resolution.
template <typename Scalar>
using DisparityPyramid = std::array<Tensor<Scalar>, 4>;

// Convolution layer as indices into the parameter list.
struct ConvLayerRef {
  std::size_t weight = 0, bias = 0;
  ops::ConvSpec spec;
};

template <typename Scalar>
class PadeNet {
 public:
  using ConvLayer = ConvLayerRef;

  struct SceneCache {
    Tensor<Scalar> input;
    Tensor<Scalar> pooled, fc_pre;
    std::vector<Tensor<Scalar>> branch_pre;  // pixel + atrous branches
    Tensor<Scalar> concat, fuse_pre;
  };

  struct Cache {
    std::array<Tensor<Scalar>, 4> enc_in, enc_pre_a, enc_act_a, enc_pre_b, skips;
    std::array<std::vector<std::int64_t>, 4> pool_argmax;
    SceneCache scene;
    Tensor<Scalar> scene_out;
    std::array<Tensor<Scalar>, 4> dec_concat, dec_pre, dec_act;
    DisparityPyramid<Scalar> head_sig;  // sigmoid outputs
  };

  PadeNet() = default;
  static PadeNet build(const PadeNetConfig& config, std::uint64_t seed);

  const PadeNetConfig& config() const { return config_; }
  const std::vector<std::string>& parameter_names() const { return names_; }
  std::vector<Tensor<Scalar>>& parameter_tensors() { return params_; }
  const std::vector<Tensor<Scalar>>& parameter_tensors() const { return params_; }
  std::vector<Tensor<Scalar>*> parameters();
  Tensor<Scalar>& parameter(const std::string& name);
  std::size_t parameter_count() const;
  void zero_grad();

  // rgb is (N, 3, H, W) in [0, 1]. Throws DataError on a shape mismatch and
  // NumericError if an output is not finite.
  DisparityPyramid<Scalar> forward(const Tensor<Scalar>& rgb, Cache* cache = nullptr) const;

  // Accumulates parameter gradients for d loss / d outputs; returns the
  // gradient w.r.t. the input image.
  Tensor<Scalar> backward(const Cache& cache, const DisparityPyramid<Scalar>& grad_outputs);

  Tensor<Scalar> scene_understanding(const Tensor<Scalar>& features,
                                     SceneCache* cache = nullptr) const;
  Tensor<Scalar> scene_understanding_backward(const SceneCache& cache,
                                              const Tensor<Scalar>& grad_out);

  Checkpoint to_checkpoint(TrainingPhase phase) const;
  static PadeNet from_checkpoint(const Checkpoint& ckpt);
  // Copies every tensor of `ckpt` into this model; names and shapes must
  // match exactly.
  void load_parameters(const Checkpoint& ckpt);

  template <typename Other>
  PadeNet<Other> cast() const {
    PadeNet<Other> out;
    out.config_ = config_;
    out.names_ = names_;
    out.encoder_ = encoder_;
    out.su_fc_ = su_fc_;
    out.su_branches_ = su_branches_;
    out.su_fuse_ = su_fuse_;
    out.decoder_ = decoder_;
    out.heads_ = heads_;
    for (const auto& p : params_) {
      out.params_.push_back(p.template cast<Other>());
      out.params_.back().set_requires_grad(true);
    }
    return out;
  }

 private:
  template <typename>
  friend class PadeNet;

  std::size_t add_parameter(const std::string& name, const typename Tensor<Scalar>::Shape& shape);
  ConvLayer add_conv(const std::string& name, int cin, int cout, int k, ops::ConvSpec spec = {});
  Tensor<Scalar> run_conv(const ConvLayer& layer, const Tensor<Scalar>& x) const;
  Tensor<Scalar> run_conv_backward(const ConvLayer& layer, const Tensor<Scalar>& x,
                                   const Tensor<Scalar>& grad_out);

  PadeNetConfig config_;
  std::vector<std::string> names_;
  std::vector<Tensor<Scalar>> params_;
  std::array<std::array<ConvLayer, 2>, 4> encoder_{};
  ConvLayer su_fc_;                     // weight (bw, C, 1, 1)
  std::vector<ConvLayer> su_branches_;  // pixel 1x1 first, then atrous
  ConvLayer su_fuse_;
  std::array<ConvLayer, 4> decoder_{};
  std::array<ConvLayer, 4> heads_{};
};

extern template class PadeNet<float>;
extern template class PadeNet<double>;

}  // namespace pano
