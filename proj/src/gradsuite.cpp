#include "panodepth/gradsuite.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "panodepth/losses.hpp"
#include "panodepth/ops.hpp"
#include "panodepth/padenet.hpp"
#include "panodepth/random.hpp"

namespace pano {
namespace {

template <typename S>
using Inputs = std::vector<Tensor<S>>;

// Every generated value is representable in float, so float and double
// instances of a problem evaluate at the same point.
template <typename S>
S as_float(double v) {
  return static_cast<S>(static_cast<float>(v));
}

template <typename S>
Tensor<S> round_to_float(const Tensor<S>& t) {
  return t.template cast<float>().template cast<S>();
}

template <typename S>
PadeNet<S> tiny_network(std::uint64_t seed);

template <typename S>
Tensor<S> random_tensor(Rng& rng, const typename Tensor<S>::Shape& shape, double lo, double hi) {
  Tensor<S> t(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()(i) = as_float<S>(rng.uniform(lo, hi));
  return t;
}

// Values whose magnitude is at least `gap`, so small perturbations never
// cross the kink at zero.
template <typename S>
Tensor<S> away_from_zero(Rng& rng, const typename Tensor<S>::Shape& shape, double gap, double hi) {
  Tensor<S> t(shape);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    const double m = rng.uniform(gap, hi);
    t.data()(i) = as_float<S>(rng.uniform() < 0.5 ? -m : m);
  }
  return t;
}

// Distinct values spaced by `step`, shuffled.
template <typename S>
Tensor<S> distinct_values(Rng& rng, const typename Tensor<S>::Shape& shape, double base,
                          double step) {
  Tensor<S> t(shape);
  std::vector<int> order(static_cast<std::size_t>(t.size()));
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, int(i) - 1))]);
  for (Eigen::Index i = 0; i < t.size(); ++i)
    t.data()(i) = as_float<S>(base + step * order[static_cast<std::size_t>(i)]);
  return t;
}

template <typename S>
double dot(const Tensor<S>& a, const Tensor<S>& b) {
  return (a.data().template cast<double>() * b.data().template cast<double>()).sum();
}

template <typename S>
Tensor<double> scalar(double v) {
  return Tensor<double>({1, 1, 1, 1}, v);
}

// f(inputs) = <forward(inputs), R> for a fixed random R.
template <typename S>
DifferentiableFn<S> projected(
    std::function<Tensor<S>(const Inputs<S>&)> forward,
    std::function<Inputs<S>(const Inputs<S>&, const Tensor<S>&)> backward, Tensor<S> r) {
  return [=](const Inputs<S>& in, bool need_grads) {
    Evaluation<S> e;
    const Tensor<S> out = forward(in);
    e.value = scalar<S>(dot(out, r));
    if (need_grads) e.grads = backward(in, r);
    return e;
  };
}

template <typename S>
Tensor<S> random_like_output(Rng& rng, const std::function<Tensor<S>(const Inputs<S>&)>& forward,
                             const Inputs<S>& in) {
  return random_tensor<S>(rng, forward(in).shape(), -1.0, 1.0);
}

template <typename S>
struct Problem {
  DifferentiableFn<S> fn;
  Inputs<S> inputs;
};

template <typename S>
Problem<S> make_projected(Rng& rng, std::function<Tensor<S>(const Inputs<S>&)> fwd,
                          std::function<Inputs<S>(const Inputs<S>&, const Tensor<S>&)> bwd,
                          Inputs<S> inputs) {
  Tensor<S> r = random_like_output<S>(rng, fwd, inputs);
  return {projected<S>(std::move(fwd), std::move(bwd), std::move(r)), std::move(inputs)};
}

template <typename S>
Problem<S> conv_problem(Rng& rng, ops::ConvSpec spec, int k) {
  Inputs<S> in{random_tensor<S>(rng, {2, 3, 6, 7}, -1, 1),
               random_tensor<S>(rng, {4, 3, k, k}, -1, 1),
               random_tensor<S>(rng, {1, 4, 1, 1}, -1, 1)};
  return make_projected<S>(
      rng, [spec](const Inputs<S>& x) { return ops::conv2d(x[0], x[1], x[2], spec); },
      [spec](const Inputs<S>& x, const Tensor<S>& g) {
        auto r = ops::conv2d_backward(x[0], x[1], g, spec);
        return Inputs<S>{r.input, r.weight, r.bias};
      },
      std::move(in));
}

// Rows of disparity whose sample position falls strictly between pixel rows.
template <typename S>
Tensor<S> fractional_disparity(Rng& rng, const typename Tensor<S>::Shape& shape,
                               const RigConfig& rig, double max_rows) {
  Tensor<S> d(shape);
  const double rpr = shape[2] / rig.fov_h;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double rows = std::floor(rng.uniform(0.0, max_rows)) + rng.uniform(0.2, 0.8);
    d.data()(i) = as_float<S>(rows / rpr);
  }
  return d;
}

PadeNetConfig tiny_config() {
  PadeNetConfig c;
  c.input_height = 16;
  c.input_width = 32;
  c.encoder_channels = {4, 8, 8, 8};
  c.su_channels = 8;
  c.d_max = 0.5;
  return c;
}

template <typename S>
PadeNet<S> tiny_network(std::uint64_t seed) {
  return PadeNet<float>::build(tiny_config(), seed).template cast<S>();
}

// The whole network as a function of (rgb, parameters...). `head` maps the
// output pyramid to a scalar loss and its gradients.
template <typename S>
Problem<S> network_problem(
    Rng& rng, std::function<std::pair<double, DisparityPyramid<S>>(const DisparityPyramid<S>&)> head,
    const Tensor<S>& rgb, std::uint64_t seed) {
  auto net = std::make_shared<PadeNet<S>>(tiny_network<S>(seed));
  (void)rng;
  Inputs<S> in{rgb};
  for (const auto& p : net->parameter_tensors()) in.push_back(Tensor<S>(p.shape(), p.data()));
  auto fn = [net, head](const Inputs<S>& x, bool need_grads) {
    auto& params = net->parameter_tensors();
    for (std::size_t k = 0; k < params.size(); ++k) params[k].data() = x[k + 1].data();
    typename PadeNet<S>::Cache cache;
    const auto out = net->forward(x[0], need_grads ? &cache : nullptr);
    auto [value, grads] = head(out);
    Evaluation<S> e;
    e.value = scalar<S>(value);
    if (need_grads) {
      net->zero_grad();
      e.grads.push_back(net->backward(cache, grads));
      for (const auto& p : params) e.grads.push_back(Tensor<S>(p.shape(), p.grad()));
    }
    return e;
  };
  return {fn, std::move(in)};
}

template <typename S>
Problem<S> make_problem(const std::string& op, Rng& rng) {
  const RigConfig rig;
  if (op == "conv2d") return conv_problem<S>(rng, {}, 3);
  if (op == "conv2d_dilated") {
    ops::ConvSpec spec;
    spec.dilation_h = 4;
    spec.dilation_v = 2;
    return conv_problem<S>(rng, spec, 3);
  }
  if (op == "conv2d_strided") {
    ops::ConvSpec spec;
    spec.stride = 2;
    return conv_problem<S>(rng, spec, 3);
  }
  if (op == "conv2d_1x1") return conv_problem<S>(rng, {}, 1);
  if (op == "maxpool2") {
    Inputs<S> in{distinct_values<S>(rng, {2, 2, 6, 8}, -1.0, 0.01)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::maxpool2(x[0]).output; },
        [](const Inputs<S>& x, const Tensor<S>& g) {
          const auto r = ops::maxpool2(x[0]);
          return Inputs<S>{ops::maxpool2_backward(g, r.argmax, x[0].shape())};
        },
        std::move(in));
  }
  if (op == "bilinear_upsample") {
    Inputs<S> in{random_tensor<S>(rng, {2, 2, 3, 5}, -1, 1)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::bilinear_upsample(x[0], 2); },
        [](const Inputs<S>& x, const Tensor<S>& g) {
          return Inputs<S>{ops::bilinear_upsample_backward(g, 2, x[0].shape())};
        },
        std::move(in));
  }
  if (op == "global_avg_pool") {
    Inputs<S> in{random_tensor<S>(rng, {2, 3, 4, 5}, -1, 1)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::global_avg_pool(x[0]); },
        [](const Inputs<S>& x, const Tensor<S>& g) {
          return Inputs<S>{ops::global_avg_pool_backward(g, x[0].shape())};
        },
        std::move(in));
  }
  if (op == "fully_connected") {
    Inputs<S> in{random_tensor<S>(rng, {2, 5, 1, 1}, -1, 1),
                 random_tensor<S>(rng, {3, 5, 1, 1}, -1, 1),
                 random_tensor<S>(rng, {1, 3, 1, 1}, -1, 1)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::fully_connected(x[0], x[1], x[2]); },
        [](const Inputs<S>& x, const Tensor<S>& g) {
          auto r = ops::fully_connected_backward(x[0], x[1], g);
          return Inputs<S>{r.input, r.weight, r.bias};
        },
        std::move(in));
  }
  if (op == "tile_spatial") {
    Inputs<S> in{random_tensor<S>(rng, {2, 3, 1, 1}, -1, 1)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::tile_spatial(x[0], 3, 4); },
        [](const Inputs<S>&, const Tensor<S>& g) {
          return Inputs<S>{ops::tile_spatial_backward(g)};
        },
        std::move(in));
  }
  if (op == "relu") {
    Inputs<S> in{away_from_zero<S>(rng, {2, 3, 4, 5}, 0.05, 1.0)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::relu(x[0]); },
        [](const Inputs<S>& x, const Tensor<S>& g) {
          return Inputs<S>{ops::relu_backward(x[0], g)};
        },
        std::move(in));
  }
  if (op == "sigmoid") {
    Inputs<S> in{random_tensor<S>(rng, {2, 3, 4, 5}, -3, 3)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::sigmoid(x[0]); },
        [](const Inputs<S>& x, const Tensor<S>& g) {
          return Inputs<S>{ops::sigmoid_backward(ops::sigmoid(x[0]), g)};
        },
        std::move(in));
  }
  if (op == "concat_channels") {
    Inputs<S> in{random_tensor<S>(rng, {2, 2, 3, 4}, -1, 1),
                 random_tensor<S>(rng, {2, 3, 3, 4}, -1, 1)};
    return make_projected<S>(
        rng, [](const Inputs<S>& x) { return ops::concat_channels<S>({&x[0], &x[1]}); },
        [](const Inputs<S>&, const Tensor<S>& g) {
          return ops::concat_channels_backward(g, {2, 3});
        },
        std::move(in));
  }
  if (op == "warp_vertical") {
    Inputs<S> in{random_tensor<S>(rng, {2, 3, 8, 6}, 0, 1),
                 fractional_disparity<S>(rng, {2, 1, 8, 6}, rig, 3.0)};
    return make_projected<S>(
        rng, [rig](const Inputs<S>& x) { return warp_vertical(x[0], x[1], rig); },
        [rig](const Inputs<S>& x, const Tensor<S>& g) {
          auto r = warp_vertical_backward(x[0], x[1], rig, g);
          return Inputs<S>{r.source, r.disparity};
        },
        std::move(in));
  }
  if (op == "smooth_l1") {
    // Differences kept away from the kinks at 0 and 1.
    Tensor<S> gt = random_tensor<S>(rng, {2, 1, 6, 8}, 0.5, 3.0);
    Tensor<S> pred(gt.shape());
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
      if (i % 7 == 3) gt.data()(i) = 0;  // invalid pixel
      const double m = rng.uniform() < 0.5 ? rng.uniform(0.1, 0.8) : rng.uniform(1.2, 2.0);
      pred.data()(i) = as_float<S>(gt.data()(i) + (rng.uniform() < 0.5 ? -m : m));
    }
    auto fn = [gt](const Inputs<S>& x, bool need_grads) {
      auto r = smooth_l1(x[0], gt);
      Evaluation<S> e;
      e.value = scalar<S>(r.value);
      if (need_grads) e.grads = {r.grad};
      return e;
    };
    return {fn, {pred}};
  }
  if (op == "reconstruction_loss") {
    // Target sits at a fixed offset from the warped source so that the
    // absolute value never flips sign under perturbation.
    Tensor<S> source = random_tensor<S>(rng, {2, 3, 8, 6}, 0, 1);
    Tensor<S> disp = fractional_disparity<S>(rng, {2, 1, 8, 6}, rig, 3.0);
    Tensor<S> target = warp_vertical(source, disp, rig);
    const Tensor<S> offset = away_from_zero<S>(rng, target.shape(), 0.2, 0.4);
    target.data() += offset.data();
    auto fn = [target, rig](const Inputs<S>& x, bool need_grads) {
      auto r = reconstruction_loss(target, x[0], x[1], rig);
      Evaluation<S> e;
      e.value = scalar<S>(r.value);
      if (need_grads) e.grads = {r.grad_source, r.grad_disparity};
      return e;
    };
    return {fn, {source, disp}};
  }
  if (op == "smoothness_loss") {
    const Tensor<S> rgb = random_tensor<S>(rng, {2, 3, 6, 8}, 0, 1);
    Tensor<S> disp = distinct_values<S>(rng, {2, 1, 6, 8}, 0.05, 0.01);
    auto fn = [rgb](const Inputs<S>& x, bool need_grads) {
      auto r = smoothness_loss(x[0], rgb);
      Evaluation<S> e;
      e.value = scalar<S>(r.value);
      if (need_grads) e.grads = {r.grad};
      return e;
    };
    return {fn, {disp}};
  }
  if (op == "multiscale_supervised") {
    const Tensor<S> gt = random_tensor<S>(rng, {1, 1, 16, 32}, 0.05, 0.4);
    Inputs<S> preds;
    for (int i = 0; i < 4; ++i) {
      Tensor<double> p = downsample_area(gt.template cast<double>(), 1 << (3 - i), true);
      const Tensor<S> off = away_from_zero<S>(rng, p.shape(), 0.05, 0.3);
      p.data() += off.data().template cast<double>();
      preds.push_back(round_to_float(p).template cast<S>());
    }
    auto fn = [gt](const Inputs<S>& x, bool need_grads) {
      const DisparityPyramid<S> p{x[0], x[1], x[2], x[3]};
      auto r = multiscale_supervised(p, gt);
      Evaluation<S> e;
      e.value = scalar<S>(r.breakdown.total);
      if (need_grads) e.grads = Inputs<S>(r.grads.begin(), r.grads.end());
      return e;
    };
    return {fn, preds};
  }
  if (op == "unsupervised_loss") {
    // Per-scale disparities with fractional row offsets and distinct values;
    // the top view is the warped bottom view plus a fixed offset at full
    // resolution, which keeps the photometric residuals away from zero there.
    const Tensor<S> bottom = random_tensor<S>(rng, {1, 3, 16, 32}, 0, 1);
    Inputs<S> preds;
    for (int i = 0; i < 4; ++i) {
      const int f = 1 << (3 - i);
      Tensor<S> d = fractional_disparity<S>(rng, {1, 1, 16 / f, 32 / f}, rig, 1.0);
      for (Eigen::Index k = 0; k < d.size(); ++k)
        d.data()(k) = as_float<S>(d.data()(k) + 1e-4 * static_cast<double>(k));
      preds.push_back(d);
    }
    Tensor<S> top = warp_vertical(bottom, preds[3], rig);
    const Tensor<S> off = away_from_zero<S>(rng, top.shape(), 0.3, 0.5);
    top.data() += off.data();
    auto fn = [top, bottom, rig](const Inputs<S>& x, bool need_grads) {
      const DisparityPyramid<S> p{x[0], x[1], x[2], x[3]};
      auto r = unsupervised_loss(p, top, bottom, rig, 1.0);
      Evaluation<S> e;
      e.value = scalar<S>(r.breakdown.total);
      if (need_grads) e.grads = Inputs<S>(r.grads.begin(), r.grads.end());
      return e;
    };
    return {fn, preds};
  }
  if (op == "scene_understanding") {
    auto net = std::make_shared<PadeNet<S>>(tiny_network<S>(rng.next_u64()));
    const Tensor<S> feats = random_tensor<S>(rng, {2, 8, 2, 4}, 0, 1);
    const Tensor<S> r = random_tensor<S>(rng, {2, 8, 2, 4}, -1, 1);
    auto fn = [net, r](const Inputs<S>& x, bool need_grads) {
      typename PadeNet<S>::SceneCache cache;
      const Tensor<S> out = net->scene_understanding(x[0], &cache);
      Evaluation<S> e;
      e.value = scalar<S>(dot(out, r));
      if (need_grads) e.grads = {net->scene_understanding_backward(cache, r)};
      return e;
    };
    return {fn, {feats}};
  }
  if (op == "padenet") {
    const Tensor<S> rgb = random_tensor<S>(rng, {1, 3, 16, 32}, 0, 1);
    DisparityPyramid<S> r;
    for (int i = 0; i < 4; ++i) {
      const int f = 1 << (3 - i);
      r[i] = random_tensor<S>(rng, {1, 1, 16 / f, 32 / f}, -1, 1);
    }
    auto head = [r](const DisparityPyramid<S>& out) {
      double v = 0;
      for (int i = 0; i < 4; ++i) v += dot(out[i], r[i]);
      return std::make_pair(v, r);
    };
    return network_problem<S>(rng, head, rgb, rng.next_u64());
  }
  if (op == "padenet_supervised") {
    const Tensor<S> rgb = random_tensor<S>(rng, {1, 3, 16, 32}, 0, 1);
    const Tensor<S> gt = random_tensor<S>(rng, {1, 1, 16, 32}, 0.05, 0.45);
    auto head = [gt](const DisparityPyramid<S>& out) {
      auto l = multiscale_supervised(out, gt);
      return std::make_pair(l.breakdown.total, l.grads);
    };
    return network_problem<S>(rng, head, rgb, rng.next_u64());
  }
  throw std::invalid_argument("gradcheck: unknown op '" + op + "'");
}

template <typename S>
DifferentiableFn<S> with_fault(DifferentiableFn<S> fn, bool inject) {
  if (!inject) return fn;
  return [inner = std::move(fn)](const Inputs<S>& x, bool need_grads) {
    Evaluation<S> e = inner(x, need_grads);
    for (auto& g : e.grads) g.data() = -g.data();
    return e;
  };
}

std::uint64_t problem_seed(const std::string& op, std::uint64_t seed) {
  const auto& names = gradcheck_op_names();
  const auto slot = static_cast<std::uint64_t>(std::find(names.begin(), names.end(), op) - names.begin());
  return mix_seed(seed + slot);
}

}  // namespace

OpCheckResult run_gradcheck(const std::string& op, const GradSuiteOptions& o) {
  OpCheckResult r;
  r.op = op;
  Rng rng_ref(problem_seed(op, o.seed));
  Problem<double> reference = make_problem<double>(op, rng_ref);
  if (o.double_precision) {
    r.report = grad_check_against<double>(with_fault(reference.fn, o.inject_fault), reference.fn,
                                          reference.inputs, o.eps);
  } else {
    Rng rng(problem_seed(op, o.seed));
    Problem<float> p = make_problem<float>(op, rng);
    for (std::size_t k = 0; k < p.inputs.size(); ++k)
      if (!(p.inputs[k].data().template cast<double>() == reference.inputs[k].data()).all())
        throw std::logic_error("gradcheck: float and double problems differ for " + op);
    r.report = grad_check_against<float>(with_fault(p.fn, o.inject_fault), reference.fn, p.inputs,
                                         o.eps);
  }
  r.passed = r.report.max_relative_error < o.tolerance;
  return r;
}

const std::vector<std::string>& gradcheck_op_names() {
  static const std::vector<std::string> names = {
      "conv2d",          "conv2d_dilated",      "conv2d_strided",        "conv2d_1x1",
      "maxpool2",        "bilinear_upsample",   "global_avg_pool",       "fully_connected",
      "tile_spatial",    "relu",                "sigmoid",               "concat_channels",
      "warp_vertical",   "smooth_l1",           "reconstruction_loss",   "smoothness_loss",
      "multiscale_supervised", "unsupervised_loss", "scene_understanding", "padenet",
      "padenet_supervised"};
  return names;
}

}  // namespace pano
