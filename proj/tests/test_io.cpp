#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "dggan/checkpoint.hpp"
#include "dggan/data.hpp"
#include "dggan/hashing.hpp"

using namespace dggan;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("dggan_test_io_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  checkpoint::TensorMap m;
  std::mt19937 rng(1);
  std::normal_distribution<float> nd;
  tensor::Tensor<float> a({2, 3, 1, 5});
  for (auto& v : a.vec()) v = nd(rng);
  m["g/stage0/layer0/weight"] = a;
  m["scalar"] = tensor::Tensor<float>({1}, {-0.0f});
  m["nan"] = tensor::Tensor<float>({2}, {std::nanf(""), INFINITY});
  const auto bytes = checkpoint::encode(m);
  const auto back = checkpoint::decode(bytes);
  REQUIRE(back.size() == 3);
  CHECK(back.at("g/stage0/layer0/weight") == a);
  CHECK(std::signbit(back.at("scalar")[0]));
  CHECK(std::isnan(back.at("nan")[0]));
  CHECK(checkpoint::encode(back) == bytes);

  // Header layout.
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "DGCK");
  CHECK(bytes[4] == 1);
  CHECK(bytes[8] == 3);

  const auto dir = scratch("ckpt");
  checkpoint::save(dir / "w.dgck", m);
  CHECK(checkpoint::encode(checkpoint::load(dir / "w.dgck")) == bytes);
  CHECK_FALSE(fs::exists(dir / "w.dgck.tmp"));
  fs::remove_all(dir);
}

TEST_CASE("checkpoint format errors") {
  checkpoint::TensorMap m;
  m["x"] = tensor::Tensor<float>({3}, {1, 2, 3});
  auto bytes = checkpoint::encode(m);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(checkpoint::decode(bad), FormatError);
  auto trunc = bytes;
  trunc.pop_back();
  CHECK_THROWS_AS(checkpoint::decode(trunc), FormatError);
  auto trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS(checkpoint::decode(trailing), FormatError);
  auto version = bytes;
  version[4] = 2;
  CHECK_THROWS_AS(checkpoint::decode(version), FormatError);
  CHECK_THROWS_AS(checkpoint::decode({}), FormatError);
  CHECK_THROWS_AS(checkpoint::load("/nonexistent/dir/x.dgck"), IoError);
}

TEST_CASE("pnm round trip") {
  const auto dir = scratch("pnm");
  fs::create_directories(dir);
  data::Image rgb{4, 2, 3, {}};
  for (int i = 0; i < 24; ++i) rgb.pixels.push_back(static_cast<std::uint8_t>(i * 10));
  data::write_pnm(dir / "a.ppm", rgb);
  auto back = data::read_pnm(dir / "a.ppm");
  CHECK(back.width == 4);
  CHECK(back.height == 2);
  CHECK(back.channels == 3);
  CHECK(back.pixels == rgb.pixels);

  data::Image gray{3, 3, 1, std::vector<std::uint8_t>(9, 200)};
  data::write_pnm(dir / "b.pgm", gray);
  CHECK(data::read_pnm(dir / "b.pgm").pixels == gray.pixels);

  {
    std::ofstream f(dir / "c.ppm", std::ios::binary);
    f << "P3\n1 1\n255\n0 0 0\n";
  }
  CHECK_THROWS_AS(data::read_pnm(dir / "c.ppm"), FormatError);
  CHECK_THROWS_AS(data::read_pnm(dir / "missing.ppm"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("synthesis is deterministic and written byte-identically") {
  for (auto fam : {data::Family::gaussian_blobs, data::Family::rects, data::Family::rings}) {
    data::SynthSpec s{fam, 6, 16, 9, false};
    const auto a = data::synthesize(s), b = data::synthesize(s);
    REQUIRE(a.size() == 6);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].pixels == b[i].pixels);
    s.seed = 10;
    CHECK(data::synthesize(s)[0].pixels != a[0].pixels);
  }
  CHECK(data::family_from_string("gaussian-blobs") == data::Family::gaussian_blobs);
  CHECK_THROWS_AS(data::family_from_string("mnist"), ContractError);

  const auto d1 = scratch("synth1"), d2 = scratch("synth2");
  data::SynthSpec s{data::Family::rings, 3, 8, 4, true};
  data::write_images(d1, data::synthesize(s));
  data::write_images(d2, data::synthesize(s));
  for (const char* f : {"img_00000.pgm", "img_00001.pgm", "img_00002.pgm"}) {
    CHECK(checkpoint::read_file(d1 / f) == checkpoint::read_file(d2 / f));
  }
  const auto empty = scratch("synth_empty");
  data::write_images(empty, data::synthesize({data::Family::rects, 0, 8, 1, false}));
  CHECK(fs::is_directory(empty));
  CHECK(fs::is_empty(empty));
  for (const auto& d : {d1, d2, empty}) fs::remove_all(d);
}

TEST_CASE("blob centroids follow the sampling distribution") {
  // Centres are uniform on [R/4, 3R/4] per axis: mean R/2, variance R^2/48.
  const int R = 32, N = 10000;
  const auto imgs = data::synthesize({data::Family::gaussian_blobs, N, R, 2024, true});
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  for (const auto& im : imgs) {
    double m = 0, mx = 0, my = 0;
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x) {
        const double v = im.pixels[static_cast<std::size_t>(y) * R + x];
        m += v;
        mx += v * (x + 0.5);
        my += v * (y + 0.5);
      }
    const double cx = mx / m, cy = my / m;
    sx += cx;
    sy += cy;
    sxx += cx * cx;
    syy += cy * cy;
  }
  const double mean_x = sx / N, mean_y = sy / N;
  const double var_x = sxx / N - mean_x * mean_x, var_y = syy / N - mean_y * mean_y;
  const double var = R * R / 48.0;
  const double se = std::sqrt(var / N);
  CHECK(std::abs(mean_x - R / 2.0) < 4 * se);
  CHECK(std::abs(mean_y - R / 2.0) < 4 * se);
  // Edge clipping pulls centroids slightly inward, so allow a small shrink.
  CHECK(var_x == doctest::Approx(var).epsilon(0.08));
  CHECK(var_y == doctest::Approx(var).epsilon(0.08));
}

TEST_CASE("dataset view") {
  const auto imgs = data::synthesize({data::Family::gaussian_blobs, 5, 16, 3, false});
  const auto ds = data::Dataset::from_images(imgs);
  CHECK(ds.size() == 5);
  CHECK(ds.resolution() == 16);
  for (float v : ds.images().vec()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  // Byte mapping is lossless.
  for (int b = 0; b < 256; ++b) CHECK(data::to_byte(data::from_byte(static_cast<std::uint8_t>(b))) == b);
  CHECK(data::to_byte(5.0f) == 255);
  CHECK(data::to_byte(-5.0f) == 0);
  const auto img = data::to_image(ds.images(), 2);
  CHECK(img.pixels == imgs[2].pixels);

  const auto half = ds.resampled(8);
  CHECK(half.resolution() == 8);
  CHECK(half.size() == 5);
  double a = 0, b = 0;
  for (float v : ds.images().vec()) a += v;
  for (float v : half.images().vec()) b += v;
  CHECK(b * 4 == doctest::Approx(a).epsilon(1e-5));
  CHECK_THROWS_AS(ds.resampled(32), ContractError);
  CHECK(ds.slice(1, 2).shape() == tensor::Shape{2, 3, 16, 16});
  CHECK_THROWS_AS(ds.slice(4, 2), ContractError);
  auto g = ds.gather({4, 0});
  CHECK(g.shape()[0] == 2);
  CHECK(g[0] == ds.images()[static_cast<std::size_t>(4) * 3 * 16 * 16]);
  CHECK(ds.hash() == data::Dataset::from_images(imgs).hash());
  CHECK(ds.hash() != half.hash());

  const auto dir = scratch("load");
  data::write_images(dir, imgs);
  CHECK(data::Dataset::load_dir(dir).images() == ds.images());
  fs::remove_all(dir);
  CHECK_THROWS_AS(data::Dataset::load_dir(dir), IoError);

  // Grayscale images broadcast to three channels.
  const auto gray = data::synthesize({data::Family::rings, 2, 8, 1, true});
  const auto gd = data::Dataset::from_images(gray);
  CHECK(gd.images()[0] == gd.images()[64]);
}
