#include "doctest.h"

#include <cmath>

#include "panodepth/adam.hpp"
#include "panodepth/gradcheck.hpp"
#include "panodepth/gradsuite.hpp"
#include "panodepth/ops.hpp"
#include "panodepth/random.hpp"

using namespace pano;

namespace {

Tensord random_tensor(const Tensord::Shape& s, Rng& rng, double lo = -1, double hi = 1) {
  Tensord t(s);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()(i) = rng.uniform(lo, hi);
  return t;
}

Tensord roll(const Tensord& t, int k) { return ops::roll_width(t, k); }

bool is_network_check(const std::string& op) {
  return op == "padenet" || op == "padenet_supervised";
}

}  // namespace

TEST_CASE("conv2d forward semantics") {
  Rng rng(1);
  const Tensord x = random_tensor({2, 3, 5, 6}, rng);
  SUBCASE("1x1 kernel with weight 2 doubles the input") {
    Tensord w({1, 1, 1, 1}, 2.0), b({1, 1, 1, 1}, 0.0);
    const Tensord one = random_tensor({1, 1, 4, 5}, rng);
    const Tensord y = ops::conv2d(one, w, b);
    CHECK((y.data() == 2.0 * one.data()).all());
  }
  SUBCASE("averaging kernel: horizontal wrap, vertical zero padding") {
    Tensord c({1, 1, 4, 6}, 3.0);
    Tensord w({1, 1, 3, 3}, 1.0 / 9.0), b({1, 1, 1, 1}, 0.0);
    const Tensord y = ops::conv2d(c, w, b);
    for (int x0 = 0; x0 < 6; ++x0) {
      CHECK(y(0, 0, 1, x0) == doctest::Approx(3.0));
      CHECK(y(0, 0, 2, x0) == doctest::Approx(3.0));
      CHECK(y(0, 0, 0, x0) == doctest::Approx(2.0));
      CHECK(y(0, 0, 3, x0) == doctest::Approx(2.0));
    }
  }
  SUBCASE("output size arithmetic") {
    ops::ConvSpec s;
    s.stride = 2;
    CHECK(ops::conv_output_size(8, 16, 3, s) == std::array<int, 2>{4, 8});
    CHECK(ops::conv_output_size(8, 16, 3, {}) == std::array<int, 2>{8, 16});
  }
  SUBCASE("rotation equivariance, plain and dilated") {
    for (ops::ConvSpec spec : {ops::ConvSpec{1, 1, 1}, ops::ConvSpec{1, 4, 2}}) {
      const Tensord w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({1, 4, 1, 1}, rng);
      const Tensord y1 = roll(ops::conv2d(x, w, b, spec), 2);
      const Tensord y2 = ops::conv2d(roll(x, 2), w, b, spec);
      CHECK((y1.data() - y2.data()).abs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("shape errors") {
    const Tensord w = random_tensor({4, 2, 3, 3}, rng), b({1, 4, 1, 1});
    CHECK_THROWS(ops::conv2d(x, w, b));
    ops::ConvSpec bad;
    bad.dilation_v = 0;
    const Tensord w3 = random_tensor({4, 3, 3, 3}, rng);
    CHECK_THROWS(ops::conv2d(x, w3, b, bad));
  }
}

TEST_CASE("maxpool2") {
  Tensord t({1, 1, 2, 2});
  t.data() << 1, 2, 3, 4;
  const auto r = ops::maxpool2(t);
  CHECK(r.output.data()(0) == 4);
  Tensord c({1, 2, 4, 4}, 1.5);
  const auto rc = ops::maxpool2(c);
  CHECK((rc.output.data() == 1.5).all());
  const Tensord g = ops::maxpool2_backward(Tensord(rc.output.shape(), 1.0), rc.argmax, c.shape());
  for (int ch = 0; ch < 2; ++ch)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x)
        CHECK(g(0, ch, y, x) == ((y % 2 == 0 && x % 2 == 0) ? 1.0 : 0.0));
  CHECK_THROWS(ops::maxpool2(Tensord({1, 1, 3, 4})));
}

TEST_CASE("bilinear upsample") {
  Tensord c({1, 2, 3, 4}, 0.7);
  const Tensord u = ops::bilinear_upsample(c, 2);
  CHECK(u.h() == 6);
  CHECK(u.w() == 8);
  for (Eigen::Index i = 0; i < u.size(); ++i) CHECK(u.data()(i) == doctest::Approx(0.7));

  Tensord row({1, 1, 1, 2});
  row.data() << 0.0, 1.0;
  const Tensord r = ops::bilinear_upsample(row, 2);
  // Output column 0 sits at source x = -0.25: between the last and first
  // columns, with weight 0.25 on the last one.
  CHECK(r(0, 0, 0, 0) == doctest::Approx(0.25));
  CHECK(r(0, 0, 0, 1) == doctest::Approx(0.25));
  CHECK(r(0, 0, 0, 2) == doctest::Approx(0.75));
  CHECK(r(0, 0, 0, 3) == doctest::Approx(0.75));
}

TEST_CASE("pooling, fully connected and tiling") {
  Rng rng(2);
  Tensord c({2, 3, 4, 5}, 2.5);
  const Tensord g = ops::global_avg_pool(c);
  CHECK((g.data() == 2.5).all());
  const Tensord v = random_tensor({2, 3, 1, 1}, rng);
  const Tensord back = ops::global_avg_pool(ops::tile_spatial(v, 4, 6));
  CHECK((back.data() - v.data()).abs().maxCoeff() < 1e-15);

  const Tensord w = random_tensor({2, 3, 1, 1}, rng), b = random_tensor({1, 2, 1, 1}, rng);
  const Tensord y = ops::fully_connected(v, w, b);
  CHECK(y(1, 1, 0, 0) ==
        doctest::Approx(w(1, 0, 0, 0) * v(1, 0, 0, 0) + w(1, 1, 0, 0) * v(1, 1, 0, 0) +
                        w(1, 2, 0, 0) * v(1, 2, 0, 0) + b(0, 1, 0, 0)));
  CHECK_THROWS(ops::fully_connected(v, random_tensor({2, 4, 1, 1}, rng), b));
}

TEST_CASE("elementwise ops") {
  Tensord x({1, 1, 1, 3});
  x.data() << -1, 0, 2;
  const Tensord r = ops::relu(x);
  CHECK(r.data()(0) == 0);
  CHECK(r.data()(1) == 0);
  CHECK(r.data()(2) == 2);
  const Tensord gr = ops::relu_backward(x, Tensord(x.shape(), 1.0));
  CHECK(gr.data()(1) == 0.0);
  Tensord z({1, 1, 1, 1}, 0.0);
  CHECK(ops::sigmoid(z).data()(0) == 0.5);

  Tensord a({1, 2, 2, 2}, 1.0), b({1, 1, 2, 2}, 2.0);
  const Tensord cat = ops::concat_channels<double>({&a, &b});
  CHECK(cat.c() == 3);
  CHECK(cat(0, 2, 1, 1) == 2.0);
  const auto parts = ops::concat_channels_backward(cat, {2, 1});
  CHECK((parts[1].data() == 2.0).all());
  CHECK_THROWS(ops::concat_channels<double>({&a, &x}));
  CHECK_THROWS(ops::add(a, b));
  CHECK((ops::add(a, a).data() == 2.0).all());
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensord p({1, 1, 1, 3}, 0.5);
    p.set_requires_grad(true);
    Adam<double> adam;
    adam.step({&p}, 1e-3);
    CHECK((p.data() == 0.5).all());
  }
  SUBCASE("first step moves by lr * g / (|g| + eps)") {
    const double g = 0.3, lr = 1e-3;
    Tensord p({1, 1, 1, 1}, 1.0);
    p.set_requires_grad(true);
    p.grad()(0) = g;
    Adam<double> adam;
    adam.step({&p}, lr);
    CHECK(1.0 - p.data()(0) == doctest::Approx(lr * g / (std::sqrt(g * g) + 1e-8)).epsilon(1e-12));
  }
  SUBCASE("bitwise reproducible trajectories") {
    auto run = [] {
      Tensorf p({1, 1, 2, 2}, 0.1f);
      p.set_requires_grad(true);
      Adam<float> adam;
      for (int t = 0; t < 20; ++t) {
        p.grad() = p.data() * 2.0f - 0.3f;
        adam.step({&p}, 1e-2);
      }
      return p;
    };
    CHECK((run().data() == run().data()).all());
  }
  SUBCASE("non-finite gradient is rejected") {
    Tensord p({1, 1, 1, 1}, 1.0);
    p.set_requires_grad(true);
    p.grad()(0) = std::nan("");
    Adam<double> adam;
    CHECK_THROWS_AS(adam.step({&p}, 1e-3), NumericError);
  }
}

TEST_CASE("grad_check harness") {
  DifferentiableFn<double> square = [](const std::vector<Tensord>& in, bool need) {
    Evaluation<double> e;
    e.value = Tensord({1, 1, 1, 1}, in[0].data().square().sum());
    if (need) e.grads = {Tensord(in[0].shape(), 2.0 * in[0].data())};
    return e;
  };
  Tensord x({1, 1, 1, 2});
  x.data() << 1, 2;
  const Evaluation<double> e = square({x}, true);
  CHECK(e.grads[0].data()(0) == 2.0);
  CHECK(e.grads[0].data()(1) == 4.0);
  CHECK(grad_check(square, {x}).max_relative_error < 1e-6);

  DifferentiableFn<double> flipped = [&](const std::vector<Tensord>& in, bool need) {
    auto r = square(in, need);
    if (need) r.grads[0].data() *= -1.0;
    return r;
  };
  CHECK(grad_check(flipped, {x}).max_relative_error > 0.99);

  DifferentiableFn<double> vector_out = [](const std::vector<Tensord>& in, bool) {
    Evaluation<double> e;
    e.value = in[0];
    e.grads = {in[0]};
    return e;
  };
  CHECK_THROWS_AS(grad_check(vector_out, {x}), std::invalid_argument);
}

TEST_CASE("every op passes the gradient check in float32 over five seeds") {
  for (const auto& op : gradcheck_op_names()) {
    if (is_network_check(op)) continue;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      GradSuiteOptions o;
      o.seed = seed;
      const OpCheckResult r = run_gradcheck(op, o);
      INFO(op << " seed " << seed << " err " << r.report.max_relative_error);
      CHECK(r.passed);
      CHECK(r.report.max_relative_error < 1e-3);
    }
  }
}

TEST_CASE("every op passes the gradient check in double precision") {
  for (const auto& op : gradcheck_op_names()) {
    if (is_network_check(op)) continue;
    GradSuiteOptions o;
    o.double_precision = true;
    const OpCheckResult r = run_gradcheck(op, o);
    INFO(op << " err " << r.report.max_relative_error);
    // conv sums are large enough that central-difference round-off shows
    CHECK(r.report.max_relative_error < 1e-5);
  }
}

TEST_CASE("an injected fault is detected") {
  GradSuiteOptions o;
  o.inject_fault = true;
  for (const char* op : {"conv2d", "warp_vertical", "smoothness_loss"}) {
    const OpCheckResult r = run_gradcheck(op, o);
    CHECK_FALSE(r.passed);
    CHECK(r.report.max_relative_error > 0.99);
  }
  CHECK_THROWS_AS(run_gradcheck("no_such_op"), std::invalid_argument);
}
