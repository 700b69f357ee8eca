#include <cmath>
#include <random>

#include "doctest.h"
#include "dggan/fid.hpp"
#include "dggan/trainer.hpp"
#include "gradcheck.hpp"

using namespace dggan;
using namespace dggan::train;
using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

namespace {

arch::ArchPair tiny_pair() { return arch::base_pair({4, 3, 2}); }

data::Dataset blob_dataset(int n, int r, std::uint64_t seed) {
  return data::Dataset::from_images(data::synthesize({data::Family::gaussian_blobs, n, r, seed, false}));
}

std::vector<std::string> names(const arch::WeightSet& ws) {
  std::vector<std::string> out;
  for (const auto& [n, t] : ws) out.push_back(n);
  return out;
}

std::vector<Tensor<double>> as_double(const arch::WeightSet& ws) {
  std::vector<Tensor<double>> out;
  for (const auto& [n, t] : ws) out.push_back(t.cast<double>());
  return out;
}

arch::ParamVars<double> vars_from(const std::vector<std::string>& names, const std::vector<Var<double>>& vars) {
  arch::ParamVars<double> p;
  for (std::size_t i = 0; i < names.size(); ++i) p.emplace(names[i], vars[i]);
  return p;
}

}  // namespace

TEST_CASE("fade_in_alpha") {
  CHECK(fade_in_alpha(0, 100) == 0.0);
  CHECK(fade_in_alpha(100, 100) == 1.0);
  CHECK(fade_in_alpha(50, 100) == 0.5);
  CHECK(fade_in_alpha(500, 100) == 1.0);
  CHECK(fade_in_alpha(7, 0) == 1.0);
  CHECK_THROWS_AS(fade_in_alpha(-1, 10), ContractError);
}

TEST_CASE("critic loss examples") {
  const std::vector<double> r{0.3, -1.0, 2.0}, f{0.3, -1.0, 2.0}, ones{1, 1, 1}, zeros{0, 0, 0};
  CHECK(wgan_gp_d_loss(r, f, ones, 10.0) == 0.0);
  const std::vector<double> c{4, 4, 4};
  CHECK(wgan_gp_d_loss(c, c, zeros, 10.0) == 10.0);
  CHECK_THROWS_AS(wgan_gp_d_loss({}, {}, {}, 10.0), ContractError);
  CHECK(wgan_gp_d_loss(std::vector<double>{1, 3}, std::vector<double>{0, 0}, std::vector<double>{2, 0}, 1.0) ==
        doctest::Approx(-2.0 + 1.0));
}

TEST_CASE("constant critic network gives the penalty weight") {
  const auto pair = tiny_pair();
  auto ws = arch::instantiate(pair, 1);
  for (auto& [n, t] : ws.d)
    for (auto& v : t.vec()) v = 0.0f;
  ws.d.at("d/dense/bias")[0] = 2.5f;
  Tape<double> tape;
  auto dp = arch::bind(tape, ws.d, true);
  std::mt19937_64 rng(3);
  auto real = tape.constant(testing::random_tensor({3, 3, 4, 4}, rng));
  auto fake = tape.constant(testing::random_tensor({3, 3, 4, 4}, rng));
  auto xh = tape.leaf(testing::random_tensor({3, 3, 4, 4}, rng), true);
  auto norms = critic_grad_norms(pair.d, dp, xh, 1.0);
  for (double v : norms.value().vec()) CHECK(v < 1e-5);
  auto loss = wgan_gp_d_loss(arch::discriminator_forward(pair.d, dp, real, 1.0),
                             arch::discriminator_forward(pair.d, dp, fake, 1.0), norms, 10.0);
  CHECK(loss.value().item() == doctest::Approx(10.0).epsilon(1e-5));
}

TEST_CASE("linear critic closed form") {
  // D(x) = sum(x) per sample: the input gradient is all ones, so every
  // gradient norm is sqrt(dim).
  Tape<double> tape;
  std::mt19937_64 rng(5);
  const tensor::Shape shape{4, 3, 2, 2};
  auto real = tape.constant(testing::random_tensor(shape, rng));
  auto fake = tape.constant(testing::random_tensor(shape, rng));
  auto xh = tape.leaf(testing::random_tensor(shape, rng), true);
  auto d = [](Var<double> x) { return tensor::sum_per_sample(x); };
  auto g = tensor::input_gradient(tensor::sum(d(xh)), xh);
  auto norms = tensor::pow(tensor::sum_per_sample(tensor::square(g)), 0.5);
  for (double v : norms.value().vec()) CHECK(v == doctest::Approx(std::sqrt(12.0)));
  const double lambda = 10.0;
  auto loss = wgan_gp_d_loss(d(real), d(fake), norms, lambda);
  double mr = 0, mf = 0;
  for (int i = 0; i < 4; ++i) {
    mr += d(real).value()[static_cast<std::size_t>(i)] / 4;
    mf += d(fake).value()[static_cast<std::size_t>(i)] / 4;
  }
  const double expect = mf - mr + lambda * (std::sqrt(12.0) - 1) * (std::sqrt(12.0) - 1);
  CHECK(loss.value().item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("generator loss examples") {
  CHECK(wgan_g_loss(std::vector<double>{2.5, 2.5, 2.5}) == -2.5);
  CHECK(wgan_g_loss(std::vector<double>{1, -1}) == 0.0);
  CHECK_THROWS_AS(wgan_g_loss(std::vector<double>{}), ContractError);
  Tape<float> tape;
  auto v = tape.constant(Tensor<float>({2, 1}, {3, 5}));
  CHECK(wgan_g_loss(v).value().item() == -4.0f);
}

TEST_CASE("generator loss gradient matches finite differences") {
  const auto pair = tiny_pair();
  const auto ws = arch::instantiate(pair, 17);
  const auto gnames = names(ws.g);
  std::mt19937_64 rng(2);
  const auto z = testing::random_tensor({2, pair.g.latent_dim}, rng);
  const testing::ScalarFn f = [&](Tape<double>& tape, const std::vector<Var<double>>& in) {
    auto gp = vars_from(gnames, in);
    auto dp = arch::bind(tape, ws.d, false);
    auto fake = arch::generator_forward(pair.g, gp, tape.constant(z), 1.0);
    return wgan_g_loss(arch::discriminator_forward(pair.d, dp, fake, 1.0));
  };
  CHECK(testing::max_rel_error(f, as_double(ws.g)) < 1e-4);
}

TEST_CASE("gradient penalty is symmetric under swapping real and fake") {
  std::mt19937_64 rng(9);
  const auto real = testing::random_tensor({5, 3, 4, 4}, rng);
  const auto fake = testing::random_tensor({5, 3, 4, 4}, rng);
  const std::vector<double> u{0.0, 0.25, 0.5, 0.75, 1.0};
  std::vector<double> v(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) v[i] = 1.0 - u[i];
  const auto a = interpolate<double>(real, fake, u);
  const auto b = interpolate<double>(fake, real, v);
  CHECK(a == b);
  const auto pair = tiny_pair();
  const auto ws = arch::instantiate(pair, 4);
  Tape<double> tape;
  auto dp = arch::bind(tape, ws.d, false);
  auto na = critic_grad_norms(pair.d, dp, tape.leaf(a, true), 1.0);
  auto nb = critic_grad_norms(pair.d, dp, tape.leaf(b, true), 1.0);
  CHECK(na.value() == nb.value());
  CHECK_THROWS_AS(interpolate<double>(real, fake, std::vector<double>{0.5}), ShapeError);
}

TEST_CASE("critic steps decrease the critic loss on separable data") {
  // Real images are bright blobs; the frozen generator's output is not. A
  // critic trained alone must drive its loss down.
  const auto pair = arch::base_pair({8, 8, 8});
  auto ws = arch::instantiate(pair, 6);
  const auto ds = blob_dataset(64, 8, 2);
  const auto fake = fid::generate_images(ws.g, pair.g, 16, 3);
  std::map<std::string, tensor::AdamState<float>> st;
  const tensor::AdamConfig adam{1e-3, 0.0, 0.99, 1e-8};
  std::vector<double> losses;
  std::mt19937_64 rng(1);
  for (int step = 0; step < 60; ++step) {
    Tape<float> tape;
    auto dp = arch::bind(tape, ws.d, true);
    std::vector<float> u(16);
    std::uniform_real_distribution<float> uni(0, 1);
    for (auto& x : u) x = uni(rng);
    const auto real = ds.slice(step % 4 * 16, 16);
    auto xh = tape.leaf(interpolate<float>(real, fake, u), true);
    auto loss = wgan_gp_d_loss(arch::discriminator_forward(pair.d, dp, tape.constant(real), 1.0f),
                               arch::discriminator_forward(pair.d, dp, tape.constant(fake), 1.0f),
                               critic_grad_norms(pair.d, dp, xh, 1.0f), 10.0f);
    losses.push_back(loss.value().item());
    tape.backward(loss);
    for (auto& [n, t] : ws.d) tensor::adam_step(t, tape.leaf_grad(dp.at(n)), st[n], adam);
  }
  // Moving averages over windows of 10 never go up.
  double prev = INFINITY;
  for (std::size_t w = 0; w + 10 <= losses.size(); w += 10) {
    double m = 0;
    for (std::size_t i = w; i < w + 10; ++i) m += losses[i] / 10;
    CHECK(m < prev);
    prev = m;
  }
  CHECK(losses.back() < losses.front());
}

TEST_CASE("fade-in continuity on a frozen generator") {
  arch::ActionSpace space;
  space.filter_counts = {4, 8};
  space.target_resolution = 16;
  const auto parent = arch::base_pair({8, 8, 8});
  const auto child = arch::apply_action(parent, arch::GrowthAction::grow_both(), space);
  auto ws = arch::instantiate(child, 12);
  std::mt19937_64 rng(4);
  Tensor<float> z({4, 8});
  std::normal_distribution<float> nd;
  for (auto& v : z.vec()) v = nd(rng);
  auto out = [&](double a) {
    Tape<double> tape;
    auto p = arch::bind(tape, ws.g, false);
    return arch::generator_forward(child.g, p, tape.constant(z.cast<double>()), a).value();
  };
  const auto base = out(0.0);
  double prev = 0;
  std::vector<double> drift;
  for (double a : {1e-4, 1e-3, 1e-2, 0.1, 0.25, 0.5, 0.75, 1.0}) {
    double d = 0;
    const auto o = out(a);
    for (std::size_t i = 0; i < o.size(); ++i) d = std::max(d, std::abs(o[i] - base[i]));
    CHECK(d >= prev);
    prev = d;
    drift.push_back(d);
  }
  // O(alpha): the drift per unit alpha stays bounded near zero.
  CHECK(drift[0] / 1e-4 == doctest::Approx(drift[1] / 1e-3).epsilon(0.05));
  CHECK(drift[0] / 1e-4 < 2.0 * 2.0);
}

TEST_CASE("train_candidate basics") {
  const auto pair = arch::base_pair({8, 8, 4});
  const auto ws = arch::instantiate(pair, 1);
  const auto ds = blob_dataset(32, 16, 4);
  TrainConfig cfg;
  cfg.batch_size = 4;

  SUBCASE("zero iterations") {
    cfg.iters = 0;
    auto r = train_candidate(pair, ws, ds, cfg, 1, "c");
    CHECK(r.weights.g == ws.g);
    CHECK(r.weights.d == ws.d);
    CHECK(r.stats.losses.empty());
    CHECK_FALSE(r.stats.diverged);
  }
  SUBCASE("deterministic in the seed") {
    cfg.iters = 120;
    auto a = train_candidate(pair, ws, ds, cfg, 7, "c");
    auto b = train_candidate(pair, ws, ds, cfg, 7, "c");
    auto c = train_candidate(pair, ws, ds, cfg, 8, "c");
    CHECK(a.weights.g == b.weights.g);
    CHECK(a.weights.d == b.weights.d);
    CHECK(a.weights.g != c.weights.g);
    CHECK(a.weights.g != ws.g);
    REQUIRE(a.stats.losses.size() == 2);
    CHECK(a.stats.losses[1].iter == 100);
    CHECK(a.stats.candidate_id == "c");
    const auto j = nlohmann::json::parse(a.stats.to_json().dump());
    const auto back = TrainStats::from_json(j);
    CHECK(back.losses.size() == 2);
    CHECK(back.losses[1].d_loss == a.stats.losses[1].d_loss);
    CHECK(j.contains("wallclock_s"));
    CHECK(j.contains("diverged"));
  }
  SUBCASE("weight clipping") {
    cfg.iters = 20;
    cfg.loss_kind = LossKind::wgan_clip;
    auto r = train_candidate(pair, ws, ds, cfg, 7);
    for (const auto& [n, t] : r.weights.d)
      for (float v : t.vec()) CHECK(std::abs(v) <= 0.01f);
  }
  SUBCASE("non-finite data marks divergence instead of throwing") {
    Tensor<float> bad = ds.images();
    bad[0] = NAN;
    for (std::size_t i = 0; i < bad.size(); ++i) bad[i] = NAN;
    cfg.iters = 50;
    auto r = train_candidate(pair, ws, data::Dataset(bad), cfg, 7);
    CHECK(r.stats.diverged);
    CHECK(r.stats.losses.size() == 1);
    const auto j = r.stats.to_json();
    CHECK(j["losses"][0]["d_loss"].is_null());
  }
  SUBCASE("config validation") {
    cfg.fade_in_fraction = 0;
    CHECK_THROWS_AS(train_candidate(pair, ws, ds, cfg, 1), ContractError);
    cfg.fade_in_fraction = 0.5;
    cfg.iters = -1;
    CHECK_THROWS_AS(train_candidate(pair, ws, ds, cfg, 1), ContractError);
    cfg.iters = 1;
    CHECK_THROWS_AS(train_candidate(pair, ws, blob_dataset(4, 4, 1), cfg, 1), ContractError);
  }
}

TEST_CASE("two thousand iterations improve a single-mode dataset five-fold") {
  // Every training image is the same blob.
  const auto one = data::synthesize({data::Family::gaussian_blobs, 1, 8, 31, false});
  const data::Dataset ds = data::Dataset::from_images(std::vector<data::Image>(64, one[0]));
  const auto pair = arch::base_pair({8, 16, 8});
  const auto ws = arch::instantiate(pair, 2);
  fid::FeatureExtractor fx(3);
  fid::RealStats real(ds, fx, 64);
  TrainConfig cfg;
  cfg.iters = 2000;
  const double before = fid::evaluate_candidate(ws.g, pair, fx, real.at(8), 256, 5).value();
  auto r = train_candidate(pair, ws, ds, cfg, 11);
  const double after = fid::evaluate_candidate(r.weights.g, pair, fx, real.at(8), 256, 5).value();
  MESSAGE("untrained FD " << before << ", trained FD " << after << ", ratio " << before / after);
  CHECK_FALSE(r.stats.diverged);
  CHECK(before / after >= 5.0);
}
