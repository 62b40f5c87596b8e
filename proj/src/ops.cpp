#include "panodepth/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pano {

std::string shape_string(const std::array<int, 4>& s) {
  return "(" + std::to_string(s[0]) + ", " + std::to_string(s[1]) + ", " +
         std::to_string(s[2]) + ", " + std::to_string(s[3]) + ")";
}

namespace ops {
namespace {

inline int wrap(int x, int w) { return ((x % w) + w) % w; }

[[noreturn]] void shape_error(const std::string& op, const std::string& detail) {
  throw std::invalid_argument(op + ": " + detail);
}

struct ConvGeometry {
  int cin, cout, k, h, w, oh, ow, pad_v, pad_h;
};

template <typename Scalar>
ConvGeometry conv_geometry(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                           const ConvSpec& spec) {
  if (spec.stride < 1) shape_error("conv2d", "stride must be >= 1");
  if (spec.dilation_h < 1 || spec.dilation_v < 1) shape_error("conv2d", "dilation must be >= 1");
  const int k = weight.h();
  if (k != weight.w() || k % 2 == 0) shape_error("conv2d", "kernel must be square and odd");
  if (weight.c() != input.c())
    shape_error("conv2d", "input has " + std::to_string(input.c()) + " channels, weight expects " +
                              std::to_string(weight.c()));
  const auto [oh, ow] = conv_output_size(input.h(), input.w(), k, spec);
  if (oh < 1 || ow < 1) shape_error("conv2d", "input too small for kernel");
  return {input.c(), weight.n(), k, input.h(), input.w(), oh, ow,
          spec.dilation_v * (k - 1) / 2, spec.dilation_h * (k - 1) / 2};
}

// Column matrix (Cin*K*K, OH*OW) for batch item n.
template <typename Scalar>
void im2col(const Tensor<Scalar>& input, int n, const ConvGeometry& g, const ConvSpec& spec,
            typename Tensor<Scalar>::Matrix& col) {
  col.resize(static_cast<Eigen::Index>(g.cin) * g.k * g.k,
             static_cast<Eigen::Index>(g.oh) * g.ow);
  for (int ci = 0; ci < g.cin; ++ci) {
    const Scalar* src = input.plane(n, ci);
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        Scalar* dst = col.row((ci * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * spec.stride - g.pad_v + ky * spec.dilation_v;
          Scalar* row = dst + static_cast<std::ptrdiff_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(row, row + g.ow, Scalar(0));
            continue;
          }
          const Scalar* line = src + static_cast<std::ptrdiff_t>(iy) * g.w;
          const int base = kx * spec.dilation_h - g.pad_h;
          if (spec.stride == 1 && g.ow == g.w) {
            // Cyclic shift of one input row: two contiguous pieces.
            const int s = wrap(base, g.w);
            std::copy(line + s, line + g.w, row);
            std::copy(line, line + s, row + (g.w - s));
            continue;
          }
          for (int ox = 0; ox < g.ow; ++ox) row[ox] = line[wrap(ox * spec.stride + base, g.w)];
        }
      }
  }
}

template <typename Scalar>
void col2im_add(const typename Tensor<Scalar>::Matrix& col, int n, const ConvGeometry& g,
                const ConvSpec& spec, Tensor<Scalar>& grad_in) {
  for (int ci = 0; ci < g.cin; ++ci) {
    Scalar* dst = grad_in.plane(n, ci);
    for (int ky = 0; ky < g.k; ++ky)
      for (int kx = 0; kx < g.k; ++kx) {
        const Scalar* src = col.row((ci * g.k + ky) * g.k + kx).data();
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * spec.stride - g.pad_v + ky * spec.dilation_v;
          if (iy < 0 || iy >= g.h) continue;
          Scalar* line = dst + static_cast<std::ptrdiff_t>(iy) * g.w;
          const Scalar* row = src + static_cast<std::ptrdiff_t>(oy) * g.ow;
          const int base = kx * spec.dilation_h - g.pad_h;
          if (spec.stride == 1 && g.ow == g.w) {
            const int s = wrap(base, g.w);
            for (int i = 0; i < g.w - s; ++i) line[s + i] += row[i];
            for (int i = 0; i < s; ++i) line[i] += row[g.w - s + i];
            continue;
          }
          for (int ox = 0; ox < g.ow; ++ox) line[wrap(ox * spec.stride + base, g.w)] += row[ox];
        }
      }
  }
}

// Source coordinates for align_corners = false upsampling along one axis.
struct Tap {
  int i0, i1;
  double a;  // weight of i1
};

Tap upsample_tap(int o, int factor, int size, bool cyclic) {
  double src = (o + 0.5) / factor - 0.5;
  if (cyclic) {
    const int i0 = static_cast<int>(std::floor(src));
    return {wrap(i0, size), wrap(i0 + 1, size), src - i0};
  }
  if (src < 0) src = 0;
  const int i0 = std::min(static_cast<int>(std::floor(src)), size - 1);
  const int i1 = std::min(i0 + 1, size - 1);
  return {i0, i1, src - i0};
}

}  // namespace

std::array<int, 2> conv_output_size(int h, int w, int kernel, const ConvSpec& spec) {
  const int pv = spec.dilation_v * (kernel - 1) / 2;
  const int ph = spec.dilation_h * (kernel - 1) / 2;
  return {(h + 2 * pv - spec.dilation_v * (kernel - 1) - 1) / spec.stride + 1,
          (w + 2 * ph - spec.dilation_h * (kernel - 1) - 1) / spec.stride + 1};
}

template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                      const Tensor<Scalar>& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, weight, spec);
  if (bias.size() != g.cout) shape_error("conv2d", "bias size does not match output channels");
  using Matrix = typename Tensor<Scalar>::Matrix;
  Tensor<Scalar> out({input.n(), g.cout, g.oh, g.ow});
  const Eigen::Map<const Matrix> wmat(weight.data().data(), g.cout,
                                      static_cast<Eigen::Index>(g.cin) * g.k * g.k);
  Matrix col;
  for (int n = 0; n < input.n(); ++n) {
    auto o = out.item(n);
    if (g.k == 1 && spec.stride == 1) {
      o.noalias() = wmat * input.item(n);
    } else {
      im2col(input, n, g, spec, col);
      o.noalias() = wmat * col;
    }
    o.colwise() += bias.data().matrix();
  }
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> conv2d_backward(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                                  const Tensor<Scalar>& grad_out, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input, weight, spec);
  if (grad_out.shape() != typename Tensor<Scalar>::Shape{input.n(), g.cout, g.oh, g.ow})
    shape_error("conv2d_backward", "grad_out shape " + shape_string(grad_out.shape()));
  using Matrix = typename Tensor<Scalar>::Matrix;
  ConvGrads<Scalar> grads{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weight.shape()),
                          Tensor<Scalar>({1, g.cout, 1, 1})};
  const Eigen::Index kk = static_cast<Eigen::Index>(g.cin) * g.k * g.k;
  const Eigen::Map<const Matrix> wmat(weight.data().data(), g.cout, kk);
  Eigen::Map<Matrix> gw(grads.weight.data().data(), g.cout, kk);
  Matrix col, gcol;
  const bool pointwise = g.k == 1 && spec.stride == 1;
  for (int n = 0; n < input.n(); ++n) {
    const auto go = grad_out.item(n);
    grads.bias.data().matrix() += go.rowwise().sum();
    if (pointwise) {
      gw.noalias() += go * input.item(n).transpose();
      grads.input.item(n).noalias() += wmat.transpose() * go;
      continue;
    }
    im2col(input, n, g, spec, col);
    gw.noalias() += go * col.transpose();
    gcol.noalias() = wmat.transpose() * go;
    col2im_add(gcol, n, g, spec, grads.input);
  }
  return grads;
}

template <typename Scalar>
MaxPoolResult<Scalar> maxpool2(const Tensor<Scalar>& input) {
  if (input.h() % 2 || input.w() % 2)
    shape_error("maxpool2", "spatial dimensions must be even, got " + shape_string(input.shape()));
  MaxPoolResult<Scalar> r{Tensor<Scalar>({input.n(), input.c(), input.h() / 2, input.w() / 2}),
                          {}};
  r.argmax.resize(static_cast<std::size_t>(r.output.size()));
  std::size_t o = 0;
  for (int n = 0; n < input.n(); ++n)
    for (int c = 0; c < input.c(); ++c)
      for (int y = 0; y < r.output.h(); ++y)
        for (int x = 0; x < r.output.w(); ++x, ++o) {
          Eigen::Index best = input.index(n, c, 2 * y, 2 * x);
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const Eigen::Index i = input.index(n, c, 2 * y + dy, 2 * x + dx);
              if (input.data()(i) > input.data()(best)) best = i;
            }
          r.argmax[o] = best;
          r.output.data()(static_cast<Eigen::Index>(o)) = input.data()(best);
        }
  return r;
}

template <typename Scalar>
Tensor<Scalar> maxpool2_backward(const Tensor<Scalar>& grad_out,
                                 const std::vector<std::int64_t>& argmax,
                                 const typename Tensor<Scalar>::Shape& input_shape) {
  if (static_cast<std::size_t>(grad_out.size()) != argmax.size())
    shape_error("maxpool2_backward", "argmax does not match grad_out");
  Tensor<Scalar> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i)
    g.data()(argmax[i]) += grad_out.data()(static_cast<Eigen::Index>(i));
  return g;
}

template <typename Scalar>
Tensor<Scalar> bilinear_upsample(const Tensor<Scalar>& input, int factor) {
  if (factor < 2) shape_error("bilinear_upsample", "factor must be >= 2");
  const int oh = input.h() * factor, ow = input.w() * factor;
  Tensor<Scalar> out({input.n(), input.c(), oh, ow});
  std::vector<Tap> tx(ow), ty(oh);
  for (int x = 0; x < ow; ++x) tx[x] = upsample_tap(x, factor, input.w(), true);
  for (int y = 0; y < oh; ++y) ty[y] = upsample_tap(y, factor, input.h(), false);
  for (int n = 0; n < input.n(); ++n)
    for (int c = 0; c < input.c(); ++c) {
      const Scalar* src = input.plane(n, c);
      Scalar* dst = out.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        const Scalar* r0 = src + static_cast<std::ptrdiff_t>(ty[y].i0) * input.w();
        const Scalar* r1 = src + static_cast<std::ptrdiff_t>(ty[y].i1) * input.w();
        const auto ay = static_cast<Scalar>(ty[y].a);
        for (int x = 0; x < ow; ++x) {
          const auto ax = static_cast<Scalar>(tx[x].a);
          const Scalar top = (1 - ax) * r0[tx[x].i0] + ax * r0[tx[x].i1];
          const Scalar bot = (1 - ax) * r1[tx[x].i0] + ax * r1[tx[x].i1];
          dst[static_cast<std::ptrdiff_t>(y) * ow + x] = (1 - ay) * top + ay * bot;
        }
      }
    }
  return out;
}

template <typename Scalar>
Tensor<Scalar> bilinear_upsample_backward(const Tensor<Scalar>& grad_out, int factor,
                                          const typename Tensor<Scalar>::Shape& input_shape) {
  const int ih = input_shape[2], iw = input_shape[3];
  if (grad_out.h() != ih * factor || grad_out.w() != iw * factor)
    shape_error("bilinear_upsample_backward", "grad_out shape " + shape_string(grad_out.shape()));
  Tensor<Scalar> g(input_shape);
  const int oh = grad_out.h(), ow = grad_out.w();
  std::vector<Tap> tx(ow), ty(oh);
  for (int x = 0; x < ow; ++x) tx[x] = upsample_tap(x, factor, iw, true);
  for (int y = 0; y < oh; ++y) ty[y] = upsample_tap(y, factor, ih, false);
  for (int n = 0; n < grad_out.n(); ++n)
    for (int c = 0; c < grad_out.c(); ++c) {
      const Scalar* src = grad_out.plane(n, c);
      Scalar* dst = g.plane(n, c);
      for (int y = 0; y < oh; ++y) {
        Scalar* r0 = dst + static_cast<std::ptrdiff_t>(ty[y].i0) * iw;
        Scalar* r1 = dst + static_cast<std::ptrdiff_t>(ty[y].i1) * iw;
        const auto ay = static_cast<Scalar>(ty[y].a);
        for (int x = 0; x < ow; ++x) {
          const Scalar v = src[static_cast<std::ptrdiff_t>(y) * ow + x];
          const auto ax = static_cast<Scalar>(tx[x].a);
          r0[tx[x].i0] += (1 - ay) * (1 - ax) * v;
          r0[tx[x].i1] += (1 - ay) * ax * v;
          r1[tx[x].i0] += ay * (1 - ax) * v;
          r1[tx[x].i1] += ay * ax * v;
        }
      }
    }
  return g;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool(const Tensor<Scalar>& input) {
  Tensor<Scalar> out({input.n(), input.c(), 1, 1});
  for (int n = 0; n < input.n(); ++n) out.item(n) = input.item(n).rowwise().mean();
  return out;
}

template <typename Scalar>
Tensor<Scalar> global_avg_pool_backward(const Tensor<Scalar>& grad_out,
                                        const typename Tensor<Scalar>::Shape& input_shape) {
  Tensor<Scalar> g(input_shape);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(g.plane_size());
  for (int n = 0; n < g.n(); ++n)
    g.item(n).colwise() = grad_out.item(n).col(0) * inv;
  return g;
}

template <typename Scalar>
Tensor<Scalar> fully_connected(const Tensor<Scalar>& input, const Tensor<Scalar>& weight,
                               const Tensor<Scalar>& bias) {
  if (input.h() != 1 || input.w() != 1) shape_error("fully_connected", "input must be (N, I, 1, 1)");
  if (weight.c() != input.c() || weight.h() != 1 || weight.w() != 1)
    shape_error("fully_connected", "weight must be (O, I, 1, 1) with I = " +
                                       std::to_string(input.c()));
  if (bias.size() != weight.n()) shape_error("fully_connected", "bias size mismatch");
  using Matrix = typename Tensor<Scalar>::Matrix;
  const Eigen::Map<const Matrix> x(input.data().data(), input.n(), input.c());
  const Eigen::Map<const Matrix> wm(weight.data().data(), weight.n(), weight.c());
  Tensor<Scalar> out({input.n(), weight.n(), 1, 1});
  Eigen::Map<Matrix> y(out.data().data(), input.n(), weight.n());
  y.noalias() = x * wm.transpose();
  y.rowwise() += bias.data().matrix().transpose();
  return out;
}

template <typename Scalar>
ConvGrads<Scalar> fully_connected_backward(const Tensor<Scalar>& input,
                                           const Tensor<Scalar>& weight,
                                           const Tensor<Scalar>& grad_out) {
  if (grad_out.n() != input.n() || grad_out.c() != weight.n())
    shape_error("fully_connected_backward", "grad_out shape " + shape_string(grad_out.shape()));
  using Matrix = typename Tensor<Scalar>::Matrix;
  ConvGrads<Scalar> g{Tensor<Scalar>(input.shape()), Tensor<Scalar>(weight.shape()),
                      Tensor<Scalar>({1, weight.n(), 1, 1})};
  const Eigen::Map<const Matrix> x(input.data().data(), input.n(), input.c());
  const Eigen::Map<const Matrix> wm(weight.data().data(), weight.n(), weight.c());
  const Eigen::Map<const Matrix> gy(grad_out.data().data(), input.n(), weight.n());
  Eigen::Map<Matrix>(g.input.data().data(), input.n(), input.c()).noalias() = gy * wm;
  Eigen::Map<Matrix>(g.weight.data().data(), weight.n(), weight.c()).noalias() =
      gy.transpose() * x;
  g.bias.data().matrix() = gy.colwise().sum().transpose();
  return g;
}

template <typename Scalar>
Tensor<Scalar> tile_spatial(const Tensor<Scalar>& vec, int h, int w) {
  if (vec.h() != 1 || vec.w() != 1) shape_error("tile_spatial", "input must be (N, C, 1, 1)");
  Tensor<Scalar> out({vec.n(), vec.c(), h, w});
  for (int n = 0; n < vec.n(); ++n) out.item(n).colwise() = vec.item(n).col(0);
  return out;
}

template <typename Scalar>
Tensor<Scalar> tile_spatial_backward(const Tensor<Scalar>& grad_out) {
  Tensor<Scalar> g({grad_out.n(), grad_out.c(), 1, 1});
  for (int n = 0; n < grad_out.n(); ++n) g.item(n) = grad_out.item(n).rowwise().sum();
  return g;
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), x.data().max(Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> relu_backward(const Tensor<Scalar>& x, const Tensor<Scalar>& grad_out) {
  return Tensor<Scalar>(x.shape(),
                        (x.data() > Scalar(0)).select(grad_out.data(), Scalar(0)));
}

template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
  return Tensor<Scalar>(x.shape(), Scalar(1) / (Scalar(1) + (-x.data()).exp()));
}

template <typename Scalar>
Tensor<Scalar> sigmoid_backward(const Tensor<Scalar>& y, const Tensor<Scalar>& grad_out) {
  return Tensor<Scalar>(y.shape(), grad_out.data() * y.data() * (Scalar(1) - y.data()));
}

template <typename Scalar>
Tensor<Scalar> concat_channels(const std::vector<const Tensor<Scalar>*>& parts) {
  if (parts.empty()) shape_error("concat_channels", "no inputs");
  const auto& first = *parts.front();
  int channels = 0;
  for (const auto* p : parts) {
    if (p->n() != first.n() || p->h() != first.h() || p->w() != first.w())
      shape_error("concat_channels", "spatial/batch mismatch: " + shape_string(p->shape()) +
                                         " vs " + shape_string(first.shape()));
    channels += p->c();
  }
  Tensor<Scalar> out({first.n(), channels, first.h(), first.w()});
  for (int n = 0; n < first.n(); ++n) {
    int c0 = 0;
    for (const auto* p : parts) {
      out.item(n).middleRows(c0, p->c()) = p->item(n);
      c0 += p->c();
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Tensor<Scalar>> concat_channels_backward(const Tensor<Scalar>& grad_out,
                                                     const std::vector<int>& channel_counts) {
  std::vector<Tensor<Scalar>> grads;
  int c0 = 0;
  for (int c : channel_counts) {
    Tensor<Scalar> g({grad_out.n(), c, grad_out.h(), grad_out.w()});
    for (int n = 0; n < grad_out.n(); ++n) g.item(n) = grad_out.item(n).middleRows(c0, c);
    grads.push_back(std::move(g));
    c0 += c;
  }
  if (c0 != grad_out.c()) shape_error("concat_channels_backward", "channel counts do not sum up");
  return grads;
}

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (!a.same_shape(b))
    shape_error("add", shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  return Tensor<Scalar>(a.shape(), a.data() + b.data());
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& x, Scalar factor) {
  return Tensor<Scalar>(x.shape(), x.data() * factor);
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& x, Scalar value) {
  return Tensor<Scalar>(x.shape(), x.data() + value);
}

template <typename Scalar>
Tensor<Scalar> roll_width(const Tensor<Scalar>& x, int shift) {
  Tensor<Scalar> out(x.shape());
  const int w = x.w();
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int y = 0; y < x.h(); ++y)
        for (int i = 0; i < w; ++i) out(n, c, y, i) = x(n, c, y, wrap(i - shift, w));
  return out;
}

#define PANO_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,            \
                            const ConvSpec&);                                                \
  template ConvGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                        const ConvSpec&);                                    \
  template MaxPoolResult<T> maxpool2(const Tensor<T>&);                                      \
  template Tensor<T> maxpool2_backward(const Tensor<T>&, const std::vector<std::int64_t>&,    \
                                       const Tensor<T>::Shape&);                             \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int);                               \
  template Tensor<T> bilinear_upsample_backward(const Tensor<T>&, int,                       \
                                                const Tensor<T>::Shape&);                    \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                      \
  template Tensor<T> global_avg_pool_backward(const Tensor<T>&, const Tensor<T>::Shape&);    \
  template Tensor<T> fully_connected(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);  \
  template ConvGrads<T> fully_connected_backward(const Tensor<T>&, const Tensor<T>&,         \
                                                 const Tensor<T>&);                          \
  template Tensor<T> tile_spatial(const Tensor<T>&, int, int);                               \
  template Tensor<T> tile_spatial_backward(const Tensor<T>&);                                \
  template Tensor<T> relu(const Tensor<T>&);                                                 \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                      \
  template Tensor<T> sigmoid(const Tensor<T>&);                                              \
  template Tensor<T> sigmoid_backward(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                  \
  template std::vector<Tensor<T>> concat_channels_backward(const Tensor<T>&,                 \
                                                           const std::vector<int>&);         \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                        \
  template Tensor<T> roll_width(const Tensor<T>&, int);

PANO_INSTANTIATE_OPS(float)
PANO_INSTANTIATE_OPS(double)

#undef PANO_INSTANTIATE_OPS

}  // namespace ops
}  // namespace pano
