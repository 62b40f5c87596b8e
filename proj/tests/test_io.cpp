#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <string>

#include "panodepth/errors.hpp"
#include "panodepth/io.hpp"
#include "panodepth/padenet.hpp"
#include "panodepth/random.hpp"

using namespace pano;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("panodepth_test_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Panorama random_rgb(int w, int h, std::uint64_t seed) {
  Panorama p(PanoramaKind::rgb, w, h);
  Rng rng(seed);
  for (auto& plane : p.planes)
    for (Eigen::Index i = 0; i < plane.size(); ++i)
      plane.data()[i] = static_cast<float>(rng.uniform_int(0, 255)) / 255.f;
  return p;
}

}  // namespace

TEST_CASE("ppm decode of a single red pixel") {
  auto bytes = bytes_of("P6\n1 1\n255\n");
  bytes.insert(bytes.end(), {255, 0, 0});
  const Panorama p = decode_ppm(bytes);
  REQUIRE(p.channels() == 3);
  CHECK(p.width() == 1);
  CHECK(p.plane(0)(0, 0) == 1.0f);
  CHECK(p.plane(1)(0, 0) == 0.0f);
  CHECK(p.plane(2)(0, 0) == 0.0f);
}

TEST_CASE("ppm errors") {
  auto truncated = bytes_of("P6\n2 1\n255\n");
  truncated.insert(truncated.end(), {1, 2, 3, 4});
  try {
    decode_ppm(truncated);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("6") != std::string::npos);
    CHECK(msg.find("4") != std::string::npos);
  }
  CHECK_THROWS_AS(decode_ppm(bytes_of("P3\n1 1\n255\n")), ParseError);
  auto deep = bytes_of("P6\n1 1\n65535\n");
  deep.resize(deep.size() + 6, 0);
  CHECK_THROWS_AS(decode_ppm(deep), ParseError);
}

TEST_CASE("ppm round trip is byte identical") {
  const Panorama p = random_rgb(17, 9, 3);
  const auto bytes = encode_ppm(p);
  const Panorama q = decode_ppm(bytes);
  CHECK(encode_ppm(q) == bytes);
  for (int c = 0; c < 3; ++c) CHECK((p.plane(c) == q.plane(c)).all());

  const fs::path dir = temp_dir("ppm");
  write_ppm(p, dir / "a.ppm");
  write_ppm(read_ppm(dir / "a.ppm"), dir / "b.ppm");
  CHECK(read_bytes(dir / "a.ppm") == read_bytes(dir / "b.ppm"));
}

TEST_CASE("pfm round trip and conventions") {
  Image img(1, 2);
  img << 0.5f, 20.0f;
  const Panorama p = Panorama::from_image(PanoramaKind::depth, img);
  const Panorama q = decode_pfm(encode_pfm(p));
  CHECK((q.plane() == img).all());

  SUBCASE("rows are stored bottom to top") {
    Image two(2, 1);
    two << 1.0f, 2.0f;
    const auto bytes = encode_pfm(Panorama::from_image(PanoramaKind::depth, two));
    float first = 0;
    std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
    CHECK(first == 2.0f);
  }
  SUBCASE("negative scale reads little endian, positive big endian") {
    auto le = bytes_of("Pf\n1 1\n-1.0\n");
    const float v = 3.25f;
    std::uint8_t raw[4];
    std::memcpy(raw, &v, 4);
    le.insert(le.end(), raw, raw + 4);
    CHECK(decode_pfm(le).plane()(0, 0) == 3.25f);
    auto be = bytes_of("Pf\n1 1\n1.0\n");
    be.insert(be.end(), {raw[3], raw[2], raw[1], raw[0]});
    CHECK(decode_pfm(be).plane()(0, 0) == 3.25f);
  }
  SUBCASE("errors") {
    Image bad(1, 2);
    bad << 1.0f, std::nanf("");
    CHECK_THROWS_AS(encode_pfm(Panorama::from_image(PanoramaKind::depth, bad)), DataError);
    auto color = bytes_of("PF\n1 1\n-1.0\n");
    color.resize(color.size() + 12, 0);
    CHECK_THROWS_AS(decode_pfm(color), ParseError);
  }
}

TEST_CASE("checkpoint round trip") {
  PadeNetConfig cfg;
  cfg.input_height = 16;
  cfg.input_width = 32;
  cfg.encoder_channels = {4, 8, 8, 8};
  cfg.su_channels = 8;
  const auto net = PadeNet<float>::build(cfg, 3);
  Checkpoint ckpt = net.to_checkpoint(TrainingPhase::unsupervised);
  const auto bytes = encode_checkpoint(ckpt);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.phase == TrainingPhase::unsupervised);
  REQUIRE(back.tensors.size() == ckpt.tensors.size());
  for (std::size_t i = 0; i < ckpt.tensors.size(); ++i) {
    CHECK(back.tensors[i].name == ckpt.tensors[i].name);
    CHECK(back.tensors[i].shape == ckpt.tensors[i].shape);
    CHECK(std::memcmp(back.tensors[i].values.data(), ckpt.tensors[i].values.data(),
                      ckpt.tensors[i].values.size() * 4) == 0);
  }
  CHECK(encode_checkpoint(back) == bytes);

  const fs::path dir = temp_dir("ckpt");
  save_checkpoint(ckpt, dir / "a.ckpt");
  save_checkpoint(load_checkpoint(dir / "a.ckpt"), dir / "b.ckpt");
  CHECK(read_bytes(dir / "a.ckpt") == read_bytes(dir / "b.ckpt"));

  auto cut = bytes;
  cut.resize(cut.size() - 4);
  CHECK_THROWS_AS(decode_checkpoint(cut), DataError);

  std::string text(bytes.begin(), bytes.end());
  text.replace(text.find("version 1"), 9, "version 2");
  CHECK_THROWS_AS(decode_checkpoint(bytes_of(text)), DataError);

  Checkpoint renamed = ckpt;
  renamed.tensors[0].name = "no.such.tensor";
  auto model = net;
  CHECK_THROWS_AS(model.load_parameters(renamed), DataError);
}

TEST_CASE("run config") {
  const RunConfig d = parse_config_text("");
  CHECK(d.learning_rate == 1e-4);
  CHECK(d.batch_size == 2);
  CHECK(d.epochs == 20);
  CHECK(d.lambda_smooth == 1.0);
  CHECK(d.depth_cap == 20.0);

  const RunConfig o = parse_config_text("# comment\nlambda_smooth = 0.5  # inline\n");
  CHECK(o.lambda_smooth == 0.5);
  CHECK(o.learning_rate == 1e-4);

  try {
    parse_config_text("\nlerning_rate = 1\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 2);
  }
  CHECK_THROWS_AS(parse_config_text("epochs = many"), ParseError);
  CHECK_THROWS_AS(parse_config_text("batch_size"), ParseError);
  CHECK_THROWS_AS(parse_config("/nonexistent/run.cfg"), DataError);
}
