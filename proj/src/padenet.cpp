#include "panodepth/padenet.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>
#include <stdexcept>

#include "panodepth/errors.hpp"
#include "panodepth/random.hpp"

namespace pano {
namespace {

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<int> split_ints(const std::string& s, char sep) {
  std::vector<int> out;
  std::istringstream in(s);
  std::string item;
  while (std::getline(in, item, sep)) out.push_back(std::stoi(item));
  return out;
}

const std::string& require_meta(const Checkpoint& ckpt, const std::string& key) {
  const std::string* v = ckpt.find_meta(key);
  if (!v) throw DataError("checkpoint: missing meta '" + key + "'");
  return *v;
}

}  // namespace

void PadeNetConfig::validate() const {
  if (encoder_channels.size() != 4)
    throw std::invalid_argument("padenet: encoder channel plan must have four stages");
  for (int c : encoder_channels)
    if (c < 1) throw std::invalid_argument("padenet: channel counts must be positive");
  if (input_height < 16 || input_width < 16 || input_height % 16 || input_width % 16)
    throw std::invalid_argument("padenet: input height and width must be divisible by 16");
  if (aspp_dilations.size() != 3)
    throw std::invalid_argument("padenet: exactly three atrous branches are required");
  std::set<int> horizontal, vertical;
  for (const auto& [dh, dv] : aspp_dilations) {
    if (dh < 1 || dv < 1) throw std::invalid_argument("padenet: dilation rates must be >= 1");
    horizontal.insert(dh);
    vertical.insert(dv);
  }
  if (horizontal.size() != 3 || vertical.size() != 2)
    throw std::invalid_argument(
        "padenet: atrous branches need three distinct horizontal and two distinct vertical rates");
  if (su_channels < 1) throw std::invalid_argument("padenet: su_channels must be positive");
  if (!(d_max > 0.0)) throw std::invalid_argument("padenet: d_max must be > 0");
}

std::vector<std::pair<std::string, std::string>> PadeNetConfig::to_meta() const {
  std::string aspp;
  for (std::size_t i = 0; i < aspp_dilations.size(); ++i)
    aspp += (i ? "," : "") + std::to_string(aspp_dilations[i][0]) + "x" +
            std::to_string(aspp_dilations[i][1]);
  char dmax[40];
  std::snprintf(dmax, sizeof dmax, "%.17g", d_max);
  return {{"input_height", std::to_string(input_height)},
          {"input_width", std::to_string(input_width)},
          {"encoder_channels", join_ints(encoder_channels)},
          {"aspp_dilations", aspp},
          {"su_channels", std::to_string(su_channels)},
          {"d_max", dmax}};
}

PadeNetConfig PadeNetConfig::from_meta(const Checkpoint& ckpt) {
  PadeNetConfig c;
  try {
    c.input_height = std::stoi(require_meta(ckpt, "input_height"));
    c.input_width = std::stoi(require_meta(ckpt, "input_width"));
    c.encoder_channels = split_ints(require_meta(ckpt, "encoder_channels"), ',');
    c.aspp_dilations.clear();
    std::istringstream in(require_meta(ckpt, "aspp_dilations"));
    std::string item;
    while (std::getline(in, item, ',')) {
      const auto v = split_ints(item, 'x');
      if (v.size() != 2) throw std::invalid_argument(item);
      c.aspp_dilations.push_back({v[0], v[1]});
    }
    c.su_channels = std::stoi(require_meta(ckpt, "su_channels"));
    c.d_max = std::stod(require_meta(ckpt, "d_max"));
  } catch (const std::logic_error& e) {
    throw DataError(std::string("checkpoint: malformed network meta: ") + e.what());
  }
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

template <typename Scalar>
std::size_t PadeNet<Scalar>::add_parameter(const std::string& name,
                                           const typename Tensor<Scalar>::Shape& shape) {
  names_.push_back(name);
  params_.emplace_back(shape);
  params_.back().set_requires_grad(true);
  return params_.size() - 1;
}

template <typename Scalar>
typename PadeNet<Scalar>::ConvLayer PadeNet<Scalar>::add_conv(const std::string& name, int cin,
                                                              int cout, int k,
                                                              ops::ConvSpec spec) {
  ConvLayer l;
  l.weight = add_parameter(name + ".weight", {cout, cin, k, k});
  l.bias = add_parameter(name + ".bias", {1, cout, 1, 1});
  l.spec = spec;
  return l;
}

template <typename Scalar>
PadeNet<Scalar> PadeNet<Scalar>::build(const PadeNetConfig& config, std::uint64_t seed) {
  config.validate();
  PadeNet net;
  net.config_ = config;
  const auto& ch = config.encoder_channels;
  int cin = 3;
  for (int s = 0; s < 4; ++s) {
    const std::string stage = "encoder" + std::to_string(s);
    net.encoder_[s][0] = net.add_conv(stage + ".conv0", cin, ch[s], 3);
    net.encoder_[s][1] = net.add_conv(stage + ".conv1", ch[s], ch[s], 3);
    cin = ch[s];
  }
  const int bw = config.branch_channels();
  net.su_fc_ = net.add_conv("scene.global_fc", ch[3], bw, 1);
  net.su_branches_.push_back(net.add_conv("scene.pixel", ch[3], bw, 1));
  for (std::size_t b = 0; b < config.aspp_dilations.size(); ++b) {
    ops::ConvSpec spec;
    spec.dilation_h = config.aspp_dilations[b][0];
    spec.dilation_v = config.aspp_dilations[b][1];
    net.su_branches_.push_back(net.add_conv("scene.atrous" + std::to_string(b), ch[3], bw, 3, spec));
  }
  net.su_fuse_ = net.add_conv("scene.fuse", bw * 5, config.su_channels, 1);
  int cx = config.su_channels;
  for (int j = 0; j < 4; ++j) {
    const int level = 3 - j;
    const std::string stage = "decoder" + std::to_string(j);
    net.decoder_[j] = net.add_conv(stage + ".conv", cx + ch[level], ch[level], 3);
    net.heads_[j] = net.add_conv(stage + ".head", ch[level], 1, 3);
    cx = ch[level];
  }

  // Fan-in scaled uniform (He) weights drawn in double, zero biases.
  Rng rng(seed);
  for (std::size_t i = 0; i < net.params_.size(); ++i) {
    auto& p = net.params_[i];
    if (net.names_[i].ends_with(".bias")) continue;
    const int fan_in = p.c() * p.h() * p.w();
    const double bound = std::sqrt(6.0 / fan_in);
    for (Eigen::Index k = 0; k < p.size(); ++k)
      p.data()(k) = static_cast<Scalar>(rng.uniform(-bound, bound));
  }
  return net;
}

template <typename Scalar>
std::vector<Tensor<Scalar>*> PadeNet<Scalar>::parameters() {
  std::vector<Tensor<Scalar>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename Scalar>
Tensor<Scalar>& PadeNet<Scalar>::parameter(const std::string& name) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return params_[i];
  throw std::out_of_range("padenet: no parameter '" + name + "'");
}

template <typename Scalar>
std::size_t PadeNet<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.size());
  return n;
}

template <typename Scalar>
void PadeNet<Scalar>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename Scalar>
Tensor<Scalar> PadeNet<Scalar>::run_conv(const ConvLayer& layer, const Tensor<Scalar>& x) const {
  return ops::conv2d(x, params_[layer.weight], params_[layer.bias], layer.spec);
}

template <typename Scalar>
Tensor<Scalar> PadeNet<Scalar>::run_conv_backward(const ConvLayer& layer, const Tensor<Scalar>& x,
                                                  const Tensor<Scalar>& grad_out) {
  auto g = ops::conv2d_backward(x, params_[layer.weight], grad_out, layer.spec);
  params_[layer.weight].grad() += g.weight.data();
  params_[layer.bias].grad() += g.bias.data();
  return std::move(g.input);
}

template <typename Scalar>
Tensor<Scalar> PadeNet<Scalar>::scene_understanding(const Tensor<Scalar>& features,
                                                    SceneCache* cache) const {
  const auto& fc = params_[su_fc_.weight];
  if (features.c() != fc.c())
    throw std::invalid_argument("scene_understanding: expected " + std::to_string(fc.c()) +
                                " channels, got " + shape_string(features.shape()));
  SceneCache local;
  SceneCache& c = cache ? *cache : local;
  c.input = features;
  c.pooled = ops::global_avg_pool(features);
  c.fc_pre = ops::fully_connected(c.pooled, fc, params_[su_fc_.bias]);
  const Tensor<Scalar> global =
      ops::tile_spatial(ops::relu(c.fc_pre), features.h(), features.w());
  c.branch_pre.clear();
  std::vector<Tensor<Scalar>> branches;
  for (const auto& layer : su_branches_) {
    c.branch_pre.push_back(run_conv(layer, features));
    branches.push_back(ops::relu(c.branch_pre.back()));
  }
  std::vector<const Tensor<Scalar>*> parts{&global};
  for (const auto& b : branches) parts.push_back(&b);
  c.concat = ops::concat_channels(parts);
  c.fuse_pre = run_conv(su_fuse_, c.concat);
  return ops::relu(c.fuse_pre);
}

template <typename Scalar>
Tensor<Scalar> PadeNet<Scalar>::scene_understanding_backward(const SceneCache& c,
                                                             const Tensor<Scalar>& grad_out) {
  const Tensor<Scalar> g_fuse = ops::relu_backward(c.fuse_pre, grad_out);
  const Tensor<Scalar> g_concat = run_conv_backward(su_fuse_, c.concat, g_fuse);
  const int bw = config_.branch_channels();
  const auto g_parts =
      ops::concat_channels_backward(g_concat, std::vector<int>(su_branches_.size() + 1, bw));

  const Tensor<Scalar> g_global = ops::relu_backward(c.fc_pre, ops::tile_spatial_backward(g_parts[0]));
  auto fc_grads = ops::fully_connected_backward(c.pooled, params_[su_fc_.weight], g_global);
  params_[su_fc_.weight].grad() += fc_grads.weight.data();
  params_[su_fc_.bias].grad() += fc_grads.bias.data();
  Tensor<Scalar> g_in = ops::global_avg_pool_backward(fc_grads.input, c.input.shape());
  for (std::size_t b = 0; b < su_branches_.size(); ++b) {
    const Tensor<Scalar> g_pre = ops::relu_backward(c.branch_pre[b], g_parts[b + 1]);
    g_in.data() += run_conv_backward(su_branches_[b], c.input, g_pre).data();
  }
  return g_in;
}

template <typename Scalar>
DisparityPyramid<Scalar> PadeNet<Scalar>::forward(const Tensor<Scalar>& rgb, Cache* cache) const {
  if (rgb.c() != 3 || rgb.h() != config_.input_height || rgb.w() != config_.input_width ||
      rgb.n() < 1)
    throw DataError("padenet: expected input (N, 3, " + std::to_string(config_.input_height) +
                    ", " + std::to_string(config_.input_width) + "), got " +
                    shape_string(rgb.shape()));
  Cache local;
  Cache& c = cache ? *cache : local;
  Tensor<Scalar> x = rgb;
  for (int s = 0; s < 4; ++s) {
    c.enc_in[s] = x;
    c.enc_pre_a[s] = run_conv(encoder_[s][0], x);
    c.enc_act_a[s] = ops::relu(c.enc_pre_a[s]);
    c.enc_pre_b[s] = run_conv(encoder_[s][1], c.enc_act_a[s]);
    c.skips[s] = ops::relu(c.enc_pre_b[s]);
    auto pooled = ops::maxpool2(c.skips[s]);
    c.pool_argmax[s] = std::move(pooled.argmax);
    x = std::move(pooled.output);
  }
  c.scene_out = scene_understanding(x, &c.scene);
  x = c.scene_out;
  const auto scale = static_cast<Scalar>(config_.d_max);
  DisparityPyramid<Scalar> out;
  for (int j = 0; j < 4; ++j) {
    const int level = 3 - j;
    const Tensor<Scalar> up = ops::bilinear_upsample(x, 2);
    c.dec_concat[j] = ops::concat_channels<Scalar>({&up, &c.skips[level]});
    c.dec_pre[j] = run_conv(decoder_[j], c.dec_concat[j]);
    c.dec_act[j] = ops::relu(c.dec_pre[j]);
    c.head_sig[j] = ops::sigmoid(run_conv(heads_[j], c.dec_act[j]));
    out[j] = ops::scale(c.head_sig[j], scale);
    out[j].check_finite("padenet forward");
    x = c.dec_act[j];
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> PadeNet<Scalar>::backward(const Cache& c, const DisparityPyramid<Scalar>& grad_outputs) {
  const auto scale = static_cast<Scalar>(config_.d_max);
  const auto& ch = config_.encoder_channels;
  std::array<Tensor<Scalar>, 4> g_skip;
  Tensor<Scalar> g_x;  // gradient w.r.t. dec_act[j] flowing from stage j + 1
  for (int j = 3; j >= 0; --j) {
    const int level = 3 - j;
    const Tensor<Scalar> g_head =
        ops::sigmoid_backward(c.head_sig[j], ops::scale(grad_outputs[j], scale));
    Tensor<Scalar> g_act = run_conv_backward(heads_[j], c.dec_act[j], g_head);
    if (j < 3) g_act.data() += g_x.data();
    const Tensor<Scalar> g_pre = ops::relu_backward(c.dec_pre[j], g_act);
    const Tensor<Scalar> g_cat = run_conv_backward(decoder_[j], c.dec_concat[j], g_pre);
    const int c_up = c.dec_concat[j].c() - ch[level];
    auto parts = ops::concat_channels_backward(g_cat, {c_up, ch[level]});
    g_skip[level] = std::move(parts[1]);
    const auto& src_shape = j == 0 ? c.scene_out.shape() : c.dec_act[j - 1].shape();
    g_x = ops::bilinear_upsample_backward(parts[0], 2, src_shape);
  }
  Tensor<Scalar> g = scene_understanding_backward(c.scene, g_x);
  for (int s = 3; s >= 0; --s) {
    Tensor<Scalar> g_out = ops::maxpool2_backward(g, c.pool_argmax[s], c.skips[s].shape());
    g_out.data() += g_skip[s].data();
    const Tensor<Scalar> g_pre_b = ops::relu_backward(c.enc_pre_b[s], g_out);
    const Tensor<Scalar> g_act_a = run_conv_backward(encoder_[s][1], c.enc_act_a[s], g_pre_b);
    const Tensor<Scalar> g_pre_a = ops::relu_backward(c.enc_pre_a[s], g_act_a);
    g = run_conv_backward(encoder_[s][0], c.enc_in[s], g_pre_a);
  }
  return g;
}

template <typename Scalar>
Checkpoint PadeNet<Scalar>::to_checkpoint(TrainingPhase phase) const {
  Checkpoint ck;
  ck.phase = phase;
  ck.meta = config_.to_meta();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& p = params_[i];
    NamedTensor t;
    t.name = names_[i];
    t.shape = {p.n(), p.c(), p.h(), p.w()};
    t.values.resize(static_cast<std::size_t>(p.size()));
    for (Eigen::Index k = 0; k < p.size(); ++k) t.values[k] = static_cast<float>(p.data()(k));
    ck.tensors.push_back(std::move(t));
  }
  return ck;
}

template <typename Scalar>
void PadeNet<Scalar>::load_parameters(const Checkpoint& ckpt) {
  for (const auto& t : ckpt.tensors) {
    std::size_t i = 0;
    while (i < names_.size() && names_[i] != t.name) ++i;
    if (i == names_.size()) throw DataError("checkpoint: unknown tensor '" + t.name + "'");
    const auto& p = params_[i];
    if (t.shape != std::vector<int>{p.n(), p.c(), p.h(), p.w()})
      throw DataError("checkpoint: tensor '" + t.name + "' has shape mismatch");
  }
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const NamedTensor* t = ckpt.find_tensor(names_[i]);
    if (!t) throw DataError("checkpoint: missing tensor '" + names_[i] + "'");
    for (Eigen::Index k = 0; k < params_[i].size(); ++k)
      params_[i].data()(k) = static_cast<Scalar>(t->values[static_cast<std::size_t>(k)]);
  }
}

template <typename Scalar>
PadeNet<Scalar> PadeNet<Scalar>::from_checkpoint(const Checkpoint& ckpt) {
  PadeNet net = build(PadeNetConfig::from_meta(ckpt), 0);
  net.load_parameters(ckpt);
  return net;
}

template class PadeNet<float>;
template class PadeNet<double>;

}  // namespace pano
