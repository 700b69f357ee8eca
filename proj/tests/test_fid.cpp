#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "dggan/fid.hpp"

using namespace dggan;
using namespace dggan::fid;

namespace {

Eigen::MatrixXd random_spd(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Eigen::MatrixXd x(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) x(i, j) = nd(rng);
  Eigen::MatrixXd s = x * x.transpose() / n + 0.01 * Eigen::MatrixXd::Identity(n, n);
  return 0.5 * (s + s.transpose());
}

// Independent square root through the symmetric eigendecomposition.
Eigen::MatrixXd eig_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Direct formula: Tr (Sa Sb)^(1/2) is the sum of square roots of the
// eigenvalues of the (non-symmetric) product.
double fd_oracle(const GaussianStats& a, const GaussianStats& b) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(a.cov * b.cov);
  double tr = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) tr += std::sqrt(std::max(0.0, es.eigenvalues()(i).real()));
  return (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2 * tr;
}

GaussianStats random_stats(int f, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  GaussianStats s;
  s.mean = Eigen::VectorXd(f);
  for (int i = 0; i < f; ++i) s.mean(i) = nd(rng);
  s.cov = random_spd(f, rng);
  s.n = 100;
  return s;
}

data::Dataset blobs(int n, int r, std::uint64_t seed) {
  return data::Dataset::from_images(data::synthesize({data::Family::gaussian_blobs, n, r, seed, false}));
}

}  // namespace

TEST_CASE("moment statistics") {
  SUBCASE("identical samples have zero covariance") {
    Eigen::MatrixXd x(5, 3);
    for (int i = 0; i < 5; ++i) x.row(i) << 1.0, -2.0, 0.5;
    auto s = moments(x);
    CHECK(s.cov.isZero(0.0));
    CHECK(s.mean(1) == -2.0);
    CHECK(s.n == 5);
  }
  SUBCASE("two samples") {
    Eigen::MatrixXd x(2, 3);
    x << 1, 2, 3, 5, -1, 0;
    auto s = moments(x);
    const Eigen::VectorXd d = (x.row(0) - x.row(1)).transpose();
    CHECK((s.mean - Eigen::Vector3d(3, 0.5, 1.5)).norm() < 1e-15);
    CHECK((s.cov - d * d.transpose() / 2).norm() < 1e-14);
  }
  SUBCASE("two-pass oracle") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> nd(3.0, 2.0);
    Eigen::MatrixXd x(300, 6);
    for (int i = 0; i < 300; ++i)
      for (int j = 0; j < 6; ++j) x(i, j) = nd(rng) * (j + 1);
    auto s = moments(x);
    for (int a = 0; a < 6; ++a) {
      double m = 0;
      for (int i = 0; i < 300; ++i) m += x(i, a);
      m /= 300;
      CHECK(std::abs(s.mean(a) - m) < 1e-6);
      for (int b = 0; b < 6; ++b) {
        double mb = 0;
        for (int i = 0; i < 300; ++i) mb += x(i, b);
        mb /= 300;
        double c = 0;
        for (int i = 0; i < 300; ++i) c += (x(i, a) - m) * (x(i, b) - mb);
        CHECK(std::abs(s.cov(a, b) - c / 299) < 1e-6);
      }
    }
    CHECK((s.cov - s.cov.transpose()).norm() == 0.0);
  }
  CHECK_THROWS_AS(moments(Eigen::MatrixXd(1, 4)), ContractError);
  FeatureExtractor fx(1);
  CHECK_THROWS_AS(extract_stats(tensor::Tensor<float>({1, 3, 8, 8}), fx), ContractError);
}

TEST_CASE("matrix_sqrt") {
  CHECK((matrix_sqrt(Eigen::MatrixXd::Identity(4, 4)) - Eigen::MatrixXd::Identity(4, 4)).norm() < 1e-12);
  Eigen::MatrixXd d = Eigen::Vector2d(4, 9).asDiagonal();
  CHECK((matrix_sqrt(d) - Eigen::MatrixXd(Eigen::Vector2d(2, 3).asDiagonal())).norm() < 1e-12);
  CHECK(matrix_sqrt(Eigen::MatrixXd::Zero(3, 3)).isZero(0.0));

  std::mt19937_64 rng(8);
  for (int t = 0; t < 10; ++t) {
    const auto s = random_spd(8, rng);
    const auto r = matrix_sqrt(s);
    CHECK((r - eig_sqrt(s)).norm() < 1e-5);
    CHECK((r * r - s).norm() < 1e-5 * s.norm());
  }
  // Rank-deficient covariance.
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 3);
  const Eigen::MatrixXd low = x * x.transpose();
  CHECK((matrix_sqrt(low) * matrix_sqrt(low) - low).norm() < 1e-5 * low.norm());

  CHECK_THROWS_AS(matrix_sqrt(Eigen::MatrixXd(2, 3)), ShapeError);
  Eigen::MatrixXd indef = Eigen::Vector2d(1, -1).asDiagonal();
  CHECK_THROWS_AS(matrix_sqrt(indef), NumericError);
}

TEST_CASE("frechet_distance") {
  std::mt19937_64 rng(21);
  const auto a = random_stats(10, rng);
  const auto b = random_stats(10, rng);
  CHECK(frechet_distance(a, a) == 0.0);
  CHECK(frechet_distance(a, b) == frechet_distance(b, a));
  CHECK(frechet_distance(a, b) == doctest::Approx(fd_oracle(a, b)).epsilon(1e-8));

  GaussianStats one{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0), 10};
  GaussianStats four{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0), 10};
  CHECK(std::abs(frechet_distance(one, four) - 1.0) < 1e-12);

  // Same covariance, shifted mean: distance is the squared shift.
  auto c = a;
  c.mean(0) += 3.0;
  CHECK(frechet_distance(a, c) == doctest::Approx(9.0).epsilon(1e-8));

  const auto small = random_stats(4, rng);
  CHECK_THROWS_AS(frechet_distance(a, small), ShapeError);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_stats(6, rng), y = random_stats(6, rng);
    CHECK(frechet_distance(x, y) >= 0.0);
  }
}

TEST_CASE("normalized scores") {
  BaselineTable t;
  t.set(8, 12.0);
  t.set(16, 4.0);
  CHECK(normalized_fid(6.0, 8, t) == 0.5);
  CHECK(normalized_fid(4.0, 16, t) == 1.0);
  CHECK_THROWS_AS(normalized_fid(1.0, 32, t), ContractError);
  CHECK_THROWS_AS(t.set(32, 0.0), NumericError);
  CHECK(BaselineTable::from_json(t.to_json()).entries() == t.entries());

  // Raw scores only compare within one resolution.
  CHECK(RawFid(1.0, 8) < RawFid(2.0, 8));
  CHECK_THROWS_AS((void)(RawFid(1.0, 8) < RawFid(2.0, 16)), ContractError);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 50);
  std::vector<RawFid> raw;
  for (int i = 0; i < 30; ++i) raw.emplace_back(u(rng), 8);
  for (std::size_t i = 0; i < raw.size(); ++i)
    for (std::size_t j = 0; j < raw.size(); ++j) {
      CHECK((raw[i] < raw[j]) == (normalized_fid(raw[i], t) < normalized_fid(raw[j], t)));
    }
}

TEST_CASE("feature extractor") {
  FeatureExtractor a(5), b(5), c(6);
  const auto ds = blobs(8, 16, 1);
  const auto fa = a.features(ds.images());
  CHECK(fa.rows() == 8);
  CHECK(fa.cols() == kFeatureDim);
  CHECK(fa == b.features(ds.images()));
  CHECK(fa != c.features(ds.images()));
  CHECK(fa.allFinite());
  // Any supported resolution maps into the same space.
  CHECK(a.features(blobs(3, 8, 2).images()).cols() == kFeatureDim);
  CHECK(a.features(blobs(3, 64, 2).images()).allFinite());
  CHECK_THROWS_AS(a.features(tensor::Tensor<float>({2, 1, 8, 8})), ShapeError);
}

TEST_CASE("evaluation against the real-vs-real noise floor") {
  const int n = 512;
  const auto ds = blobs(3 * n, 16, 77);
  FeatureExtractor fx(11);
  RealStats real(ds, fx, n);
  const auto& ref = real.at(16);

  // Floor: distances between disjoint real halves of the same size.
  const auto held_a = ds.slice(n, n);
  const auto held_b = ds.slice(2 * n, n);
  const double floor = frechet_distance(extract_stats(held_a, fx), extract_stats(held_b, fx));
  const double replay = evaluate_images(held_b, fx, ref).value();
  MESSAGE("noise floor " << floor << ", replay " << replay);
  CHECK(replay < 1.5 * floor);

  tensor::Tensor<float> constant({n, 3, 16, 16}, 0.1f);
  const double flat = evaluate_images(constant, fx, ref).value();
  MESSAGE("constant generator " << flat);
  CHECK(flat > 20 * floor);

  tensor::Tensor<float> bad({4, 3, 16, 16});
  bad[3] = NAN;
  CHECK(std::isinf(evaluate_images(bad, fx, ref).value()));

  const auto pair = arch::base_pair({8, 8, 4});
  const auto ws = arch::instantiate(pair, 3);
  const auto e1 = evaluate_candidate(ws.g, pair, fx, real.at(8), 64, 9);
  const auto e2 = evaluate_candidate(ws.g, pair, fx, real.at(8), 64, 9);
  CHECK(e1 == e2);
  CHECK(e1.resolution() == 8);
  CHECK(e1.finite());
}

TEST_CASE("real statistics cache") {
  const auto dir = std::filesystem::temp_directory_path() / "dggan_test_fid_cache";
  std::filesystem::remove_all(dir);
  const auto ds = blobs(40, 16, 5);
  FeatureExtractor fx(2);
  RealStats first(ds, fx, 32, dir);
  const auto s1 = first.at(8);
  CHECK(std::filesystem::exists(first.cache_path(8)));
  RealStats second(ds, fx, 32, dir);
  const auto s2 = second.at(8);
  CHECK(s1.mean == s2.mean);
  CHECK(s1.cov == s2.cov);
  CHECK(s2.n == 32);
  CHECK(s1.cov == s1.cov.transpose());
  RealStats other(ds, FeatureExtractor(3), 32, dir);
  CHECK(other.cache_path(8) != first.cache_path(8));
  std::filesystem::remove_all(dir);
}
