#include "doctest.h"

#include "panodepth/ops.hpp"
#include "panodepth/padenet.hpp"
#include "panodepth/random.hpp"

using namespace pano;

namespace {

// Parameter count written out layer by layer, without the network code.
long expected_parameters(int in_ch, std::array<int, 4> ch, int su) {
  auto conv = [](long cin, long cout, long k) { return cin * cout * k * k + cout; };
  long n = 0;
  long cin = in_ch;
  for (int c : ch) {
    n += conv(cin, c, 3) + conv(c, c, 3);
    cin = c;
  }
  const long bw = su / 2;
  n += conv(ch[3], bw, 1);           // global branch
  n += conv(ch[3], bw, 1);           // pixel branch
  n += 3 * conv(ch[3], bw, 3);       // atrous branches
  n += conv(5 * bw, su, 1);          // fusion
  long cx = su;
  for (int j = 0; j < 4; ++j) {
    const long skip = ch[3 - j];
    n += conv(cx + skip, skip, 3) + conv(skip, 1, 3);
    cx = skip;
  }
  return n;
}

Tensorf random_rgb(int n, int h, int w, std::uint64_t seed) {
  Tensorf t({n, 3, h, w});
  Rng rng(seed);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()(i) = static_cast<float>(rng.uniform());
  return t;
}

PadeNetConfig tiny() {
  PadeNetConfig c;
  c.input_height = 16;
  c.input_width = 32;
  c.encoder_channels = {4, 8, 8, 8};
  c.su_channels = 8;
  return c;
}

}  // namespace

TEST_CASE("parameter count follows the config") {
  const PadeNetConfig def;
  const auto net = PadeNet<float>::build(def, 1);
  CHECK(static_cast<long>(net.parameter_count()) == expected_parameters(3, {16, 32, 64, 128}, 128));
  CHECK(expected_parameters(3, {16, 32, 64, 128}, 128) == 1014964);
  const auto small = PadeNet<float>::build(tiny(), 1);
  CHECK(static_cast<long>(small.parameter_count()) == expected_parameters(3, {4, 8, 8, 8}, 8));
}

TEST_CASE("build is deterministic and initializes biases to zero") {
  const auto a = PadeNet<float>::build(tiny(), 9), b = PadeNet<float>::build(tiny(), 9);
  const auto c = PadeNet<float>::build(tiny(), 10);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.parameter_tensors().size(); ++i) {
    CHECK((a.parameter_tensors()[i].data() == b.parameter_tensors()[i].data()).all());
    any_diff |= !(a.parameter_tensors()[i].data() == c.parameter_tensors()[i].data()).all();
    if (a.parameter_names()[i].ends_with(".bias"))
      CHECK((a.parameter_tensors()[i].data() == 0.f).all());
  }
  CHECK(any_diff);
}

TEST_CASE("config validation") {
  PadeNetConfig c;
  c.input_height = 60;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  CHECK_THROWS_AS(PadeNet<float>::build(c, 1), std::invalid_argument);
  c = PadeNetConfig{};
  c.aspp_dilations = {{2, 1}, {2, 2}, {8, 2}};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PadeNetConfig{};
  c.aspp_dilations = {{2, 1}, {4, 1}, {8, 1}};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = PadeNetConfig{};
  c.encoder_channels = {16, 32, 64};
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("forward shapes and output range") {
  const PadeNetConfig cfg;
  const auto net = PadeNet<float>::build(cfg, 2);
  const auto out = net.forward(random_rgb(2, 64, 128, 3));
  const int hs[4] = {8, 16, 32, 64}, ws[4] = {16, 32, 64, 128};
  for (int i = 0; i < 4; ++i) {
    CHECK(out[i].n() == 2);
    CHECK(out[i].c() == 1);
    CHECK(out[i].h() == hs[i]);
    CHECK(out[i].w() == ws[i]);
    CHECK(out[i].data().minCoeff() > 0.f);
    CHECK(out[i].data().maxCoeff() < static_cast<float>(cfg.d_max));
  }
  CHECK_THROWS_AS(net.forward(random_rgb(1, 32, 128, 3)), DataError);
}

TEST_CASE("scene understanding block") {
  const PadeNetConfig cfg;
  const auto net = PadeNet<float>::build(cfg, 4);
  Tensorf feat({1, 128, 4, 8}, 0.3f);
  typename PadeNet<float>::SceneCache cache;
  const Tensorf out = net.scene_understanding(feat, &cache);
  CHECK(out.shape() == Tensorf::Shape{1, 128, 4, 8});
  // The tiled global branch occupies the first channels of the concat.
  const int bw = cfg.branch_channels();
  for (int c = 0; c < bw; ++c) {
    const float v = cache.concat(0, c, 0, 0);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 8; ++x) CHECK(cache.concat(0, c, y, x) == v);
  }
}

TEST_CASE("inference commutes with horizontal rotation") {
  const auto net = PadeNet<float>::build(PadeNetConfig{}, 5);
  const Tensorf rgb = random_rgb(1, 64, 128, 6);
  const int k = 32;
  const Tensorf a = ops::roll_width(net.forward(rgb)[3], k);
  const Tensorf b = net.forward(ops::roll_width(rgb, k))[3];
  CHECK((a.data() - b.data()).abs().maxCoeff() <= 1e-5f);
}

TEST_CASE("checkpoint restores the model") {
  const auto net = PadeNet<float>::build(tiny(), 7);
  const Checkpoint ckpt = net.to_checkpoint(TrainingPhase::supervised);
  const auto back = PadeNet<float>::from_checkpoint(ckpt);
  CHECK(back.config().input_width == 32);
  CHECK(back.config().encoder_channels == std::vector<int>{4, 8, 8, 8});
  const Tensorf rgb = random_rgb(1, 16, 32, 8);
  CHECK((net.forward(rgb)[3].data() == back.forward(rgb)[3].data()).all());
  CHECK(back.parameter_names() == net.parameter_names());
}
