#include <algorithm>
#include <random>
#include <set>

#include "doctest.h"
#include "dggan/arch.hpp"
#include "dggan/networks.hpp"

using namespace dggan;
using namespace dggan::arch;
using tensor::Tape;
using tensor::Tensor;

namespace {

ActionSpace small_space(int target = 32) {
  ActionSpace s;
  s.filter_counts = {4, 8};
  s.target_resolution = target;
  return s;
}

ArchPair small_base() { return base_pair({8, 16, 8}); }

Tensor<float> gen_out(const ArchPair& pair, const WeightSet& g, float alpha, std::uint64_t seed,
                      Probe<float>* probe = nullptr) {
  Tape<float> tape;
  auto p = bind(tape, g, false);
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  Tensor<float> z({3, pair.g.latent_dim});
  for (auto& v : z.vec()) v = nd(rng);
  return generator_forward(pair.g, p, tape.constant(z), alpha, probe).value();
}

Tensor<float> images(int n, int r, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1, 1);
  Tensor<float> x({n, kImageChannels, r, r});
  for (auto& v : x.vec()) v = u(rng);
  return x;
}

Tensor<float> disc_out(const ArchPair& pair, const WeightSet& d, const Tensor<float>& x, float alpha,
                       Probe<float>* probe = nullptr) {
  Tape<float> tape;
  auto p = bind(tape, d, false);
  return discriminator_forward(pair.d, p, tape.constant(x), alpha, probe).value();
}

Tensor<float> downsample(const Tensor<float>& x) {
  Tape<float> tape;
  return tensor::downsample2x(tape.constant(x)).value();
}

Tensor<float> upsample(const Tensor<float>& x) {
  Tape<float> tape;
  return tensor::upsample2x(tape.constant(x)).value();
}

// Trains nothing; just perturbs every weight so inherited values are
// distinguishable from a fresh init.
PairWeights perturbed(const ArchPair& pair, std::uint64_t seed) {
  auto ws = instantiate(pair, seed);
  std::mt19937_64 rng(seed ^ 0x5555);
  std::normal_distribution<float> nd(0, 0.01f);
  for (auto* set : {&ws.g, &ws.d})
    for (auto& [name, t] : *set)
      for (auto& v : t.vec()) v += nd(rng);
  return ws;
}

}  // namespace

TEST_CASE("action enumeration") {
  const ArchPair base = base_pair({});
  auto acts = enumerate_actions(base, 32);
  CHECK(acts.size() == 25);
  std::set<std::string> codes;
  for (const auto& a : acts) codes.insert(a.code());
  CHECK(codes.size() == 25);

  ActionSpace space;
  space.target_resolution = 8;
  CHECK(enumerate_actions(base, space).size() == 24);
  CHECK(enumerate_actions(base, 8).size() == 24);

  std::set<std::pair<int, int>> gs, ds;
  for (const auto& a : acts) {
    if (a.kind == GrowthAction::Kind::grow_g) gs.insert({a.filter_size, a.n_filters});
    if (a.kind == GrowthAction::Kind::grow_d) ds.insert({a.filter_size, a.n_filters});
  }
  CHECK(gs == ds);
  CHECK(gs.size() == 12);
}

TEST_CASE("action codes round trip") {
  for (const auto& a : enumerate_actions(base_pair({}), 32)) CHECK(GrowthAction::parse(a.code()) == a);
  CHECK_THROWS_AS(GrowthAction::parse("X3x4"), FormatError);
  CHECK_THROWS_AS(GrowthAction::parse("G3x"), FormatError);
  CHECK_THROWS_AS(GrowthAction::parse("G3y5"), FormatError);
}

TEST_CASE("apply_action examples") {
  const ActionSpace space;
  const ArchPair base = base_pair({});
  const ArchPair before = base;

  SUBCASE("grow_both adds a stage to both networks") {
    auto c = apply_action(base, GrowthAction::grow_both(), space);
    CHECK(c.num_stages() == 2);
    CHECK(c.d.stages.size() == 2);
    CHECK(c.resolution() == 16);
    CHECK(c.g.fading());
    CHECK(c.d.fading());
    CHECK(c.g.stages[1].convs.front().n_filters == 64);
  }
  SUBCASE("grow_g touches only G") {
    auto c = apply_action(base, GrowthAction::grow_g(3, 256), space);
    CHECK(c.g.stages[0].convs.size() == 3);
    CHECK(c.d == base.d);
    const auto& convs = c.g.stages[0].convs;
    CHECK(convs[convs.size() - 2].n_filters == 256);
    CHECK(convs.back().role == LayerRole::base);
  }
  SUBCASE("grow_d inserts after the first conv") {
    auto c = apply_action(base, GrowthAction::grow_d(7, 32), space);
    CHECK(c.g == base.g);
    CHECK(c.d.stages[0].convs.size() == 3);
    CHECK(c.d.stages[0].convs[1].filter_size == 7);
    CHECK(c.d.stages[0].convs[1].role == LayerRole::grown);
  }
  SUBCASE("repeated grow_g appends before the anchor") {
    auto c = apply_action(base, GrowthAction::grow_g(3, 32), space);
    c = apply_action(c, GrowthAction::grow_g(7, 64), space);
    const auto& convs = c.g.stages[0].convs;
    REQUIRE(convs.size() == 4);
    CHECK(convs[2].n_filters == 64);
    CHECK(convs[1].n_filters == 32);
    CHECK(convs[3].id == 1);
  }
  SUBCASE("grow_both beyond the target") {
    ActionSpace at8;
    at8.target_resolution = 8;
    CHECK_THROWS_AS(apply_action(base, GrowthAction::grow_both(), at8), ContractError);
  }
  SUBCASE("actions outside the space") {
    CHECK_THROWS_AS(apply_action(base, GrowthAction::grow_g(5, 32), space), ContractError);
    CHECK_THROWS_AS(apply_action(base, GrowthAction::grow_d(3, 100), space), ContractError);
  }
  CHECK(base == before);
}

TEST_CASE("growth sequence from the overview figure") {
  const ActionSpace space;
  ArchPair p = base_pair({});
  p = apply_action(p, GrowthAction::grow_d(3, 64), space);
  p = apply_action(p, GrowthAction::grow_both(), space);
  p = apply_action(p, GrowthAction::grow_g(7, 128), space);
  CHECK_NOTHROW(validate(p));
  CHECK(p.g.stages.size() == p.d.stages.size());
  CHECK(p.g.stages[1].convs.size() == 3);
  CHECK(p.d.stages[1].convs.size() == 2);
  CHECK(p.d.stages[0].convs.size() == 3);
  CHECK(p.g.stages[0].convs.size() == 2);
  CHECK_FALSE(p.g.fading());
}

TEST_CASE("param_count") {
  ArchPair p = base_pair({8, 128, 64});
  // dense 128 -> 64*8*8, conv 3x3 64->64 twice, to_rgb 1x1 64->3
  CHECK(param_count(p.g) == 64LL * 64 * (128 + 1) + 2 * 64LL * (9 * 64 + 1) + 3LL * (64 + 1));
  p = apply_action(p, GrowthAction::grow_g(3, 128), ActionSpace{});
  // The grown layer is 3x3 with 64 inputs and 128 filters.
  const auto s2 = conv_shapes(p.g);
  auto it = std::find_if(s2.begin(), s2.end(), [](const ConvShape& c) { return c.name == "g/stage0/layer2"; });
  REQUIRE(it != s2.end());
  CHECK(it->c_out * (it->k * it->k * it->c_in + 1) == 73856);
  // from_rgb of a 32-wide D: 1x1, 3 inputs.
  ArchPair q = base_pair({8, 16, 32});
  auto ds = conv_shapes(q.d);
  CHECK(ds.front().name == "d/stage0/from_rgb");
  CHECK(ds.front().c_out * (ds.front().k * ds.front().k * ds.front().c_in + 1) == 128);
}

TEST_CASE("param_count equals instantiated element count along growth paths") {
  const ActionSpace space = small_space();
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 6; ++trial) {
    ArchPair p = small_base();
    std::int64_t prev_g = param_count(p.g), prev_d = param_count(p.d);
    for (int step = 0; step < 5; ++step) {
      auto acts = enumerate_actions(p, space);
      const auto a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
      ArchPair c = apply_action(p, a, space);
      CHECK_NOTHROW(validate(c));
      CHECK(c.g.resolution() == c.d.resolution());
      const auto ws = instantiate(c, 5);
      CHECK(element_count(ws.g) == param_count(c.g));
      CHECK(element_count(ws.d) == param_count(c.d));
      const std::int64_t total = param_count(c.g) + param_count(c.d);
      CHECK(total > prev_g + prev_d);
      if (a.kind != GrowthAction::Kind::grow_d) CHECK(param_count(c.g) > prev_g);
      if (a.kind != GrowthAction::Kind::grow_g) CHECK(param_count(c.d) > prev_d);
      prev_g = param_count(c.g);
      prev_d = param_count(c.d);
      p = c;
    }
  }
}

TEST_CASE("g2d_ratio") {
  ArchPair p = base_pair({});
  // Mirrored conv stacks: the only differences are the rgb and dense layers.
  const double expect = static_cast<double>(param_count(p.g)) / static_cast<double>(param_count(p.d));
  CHECK(g2d_ratio(p) == doctest::Approx(expect));
  // Extreme imbalance is reported as is.
  const ActionSpace space;
  for (int i = 0; i < 4; ++i) p = apply_action(p, GrowthAction::grow_g(7, 1024), space);
  CHECK(g2d_ratio(p) > 64.0);
  ArchPair q = base_pair({});
  for (int i = 0; i < 4; ++i) q = apply_action(q, GrowthAction::grow_d(7, 1024), space);
  CHECK(g2d_ratio(q) < 1.0);
}

TEST_CASE("instantiate determinism and forward shapes") {
  const ActionSpace space = small_space();
  ArchPair p = small_base();
  p = apply_action(p, GrowthAction::grow_both(), space);
  p = apply_action(p, GrowthAction::grow_g(7, 8), space);
  p = apply_action(p, GrowthAction::grow_d(3, 4), space);
  const auto a = instantiate(p, 42), b = instantiate(p, 42), c = instantiate(p, 43);
  CHECK(a.g == b.g);
  CHECK(a.d == b.d);
  CHECK(a.g.at("g/dense/weight") != c.g.at("g/dense/weight"));
  CHECK(a.d.at("d/stage1/layer0/weight") != c.d.at("d/stage1/layer0/weight"));

  auto img = gen_out(p, a.g, 1.0f, 7);
  CHECK(img.shape() == tensor::Shape{3, 3, 16, 16});
  for (float v : img.vec()) CHECK(std::abs(v) < 1.0f);
  auto score = disc_out(p, a.d, img, 1.0f);
  CHECK(score.shape() == tensor::Shape{3, 1});
  for (float v : score.vec()) CHECK(std::isfinite(v));
}

TEST_CASE("inherit_weights: identity growth leaves outputs unchanged") {
  const ArchPair p = small_base();
  const auto parent = perturbed(p, 3);
  auto child = instantiate(p, 99);
  inherit_weights(p, child, p, parent);
  CHECK(gen_out(p, child.g, 1.0f, 5) == gen_out(p, parent.g, 1.0f, 5));
  const auto x = images(2, 8, 1);
  CHECK(disc_out(p, child.d, x, 1.0f) == disc_out(p, parent.d, x, 1.0f));
}

TEST_CASE("inherit_weights: grow_d copies every unchanged layer") {
  const ActionSpace space = small_space();
  const ArchPair p = apply_action(small_base(), GrowthAction::grow_g(3, 4), space);
  const auto parent = perturbed(p, 3);
  const ArchPair c = apply_action(p, GrowthAction::grow_d(3, 4), space);
  auto child = instantiate(c, 100);
  const auto fresh = child;
  inherit_weights(c, child, p, parent);
  CHECK(child.g == parent.g);
  for (const auto& [name, t] : parent.d) {
    const auto& ct = child.d.at(name);
    if (ct.shape() == t.shape()) CHECK_MESSAGE(ct == t, name);
  }
  // The grown layer stays fresh.
  CHECK(child.d.at("d/stage0/layer2/weight") == fresh.d.at("d/stage0/layer2/weight"));
  // Probe: D activations up to the insertion point match the parent's.
  const auto x = images(2, 8, 4);
  Probe<float> pp, cp;
  disc_out(p, parent.d, x, 1.0f, &pp);
  disc_out(c, child.d, x, 1.0f, &cp);
  CHECK(cp.at("d/stage0/from_rgb") == pp.at("d/stage0/from_rgb"));
  CHECK(cp.at("d/stage0/layer0") == pp.at("d/stage0/layer0"));
}

TEST_CASE("inherit_weights: grow_g into a 128-channel stage keeps the overlapping slice") {
  const ActionSpace space;
  const ArchPair p = base_pair({8, 16, 128});
  const auto parent = perturbed(p, 8);
  const ArchPair c = apply_action(p, GrowthAction::grow_g(3, 256), space);
  auto child = instantiate(c, 77);
  const auto fresh = child;
  inherit_weights(c, child, p, parent);

  const auto& pw = parent.g.at("g/stage0/layer1/weight");
  const auto& cw = child.g.at("g/stage0/layer1/weight");
  const auto& fw = fresh.g.at("g/stage0/layer1/weight");
  REQUIRE(pw.shape() == tensor::Shape{128, 128, 3, 3});
  REQUIRE(cw.shape() == tensor::Shape{128, 256, 3, 3});
  bool head_ok = true, tail_ok = true;
  for (int o = 0; o < 128; ++o)
    for (int i = 0; i < 256; ++i)
      for (int k = 0; k < 9; ++k) {
        const std::size_t ci = (static_cast<std::size_t>(o) * 256 + i) * 9 + k;
        if (i < 128) {
          head_ok &= cw[ci] == pw[(static_cast<std::size_t>(o) * 128 + i) * 9 + k];
        } else {
          tail_ok &= cw[ci] == fw[ci];
        }
      }
  CHECK(head_ok);
  CHECK(tail_ok);
  CHECK(child.g.at("g/stage0/layer1/bias") == parent.g.at("g/stage0/layer1/bias"));
  CHECK(child.g.at("g/stage0/layer0/weight") == parent.g.at("g/stage0/layer0/weight"));
  CHECK(child.g.at("g/stage0/layer2/weight") == fresh.g.at("g/stage0/layer2/weight"));
  CHECK(child.d == parent.d);
}

TEST_CASE("inherit_weights: grow_both preserves the low-resolution path") {
  const ActionSpace space = small_space();
  const ArchPair p = small_base();
  const auto parent = perturbed(p, 21);
  const ArchPair c = apply_action(p, GrowthAction::grow_both(), space);
  auto child = instantiate(c, 22);
  inherit_weights(c, child, p, parent);
  for (const auto& [name, t] : parent.g) CHECK_MESSAGE(child.g.at(name) == t, name);
  for (const auto& [name, t] : parent.d) CHECK_MESSAGE(child.d.at(name) == t, name);

  Probe<float> pp, cp;
  const auto low = gen_out(p, parent.g, 1.0f, 9, &pp);
  const auto out0 = gen_out(c, child.g, 0.0f, 9, &cp);
  CHECK(out0 == upsample(low));
  CHECK(cp.at("g/stage0/layer1") == pp.at("g/stage0/layer1"));

  const auto x = images(2, 16, 3);
  CHECK(disc_out(c, child.d, x, 0.0f) == disc_out(p, parent.d, downsample(x), 1.0f));
}

TEST_CASE("derive_action") {
  const ActionSpace space = small_space();
  const ArchPair p = small_base();
  for (const auto& a : enumerate_actions(p, space)) {
    auto got = derive_action(p, apply_action(p, a, space));
    REQUIRE(got.has_value());
    CHECK(*got == a);
  }
  CHECK_FALSE(derive_action(p, p).has_value());
  ArchPair two = apply_action(apply_action(p, GrowthAction::grow_g(3, 4), space), GrowthAction::grow_d(3, 4), space);
  CHECK_THROWS_AS(derive_action(p, two), ContractError);
  auto ws = instantiate(two, 1);
  CHECK_THROWS_AS(inherit_weights(two, ws, p, instantiate(p, 1)), ContractError);
  ArchPair wider = p;
  wider.g.stages[0].convs[0].n_filters = 4;
  CHECK_THROWS_AS(derive_action(p, wider), ContractError);
}

TEST_CASE("validate rejects broken pairs") {
  ArchPair p = small_base();
  CHECK_NOTHROW(validate(p));
  ArchPair q = p;
  q.d.stages.push_back(q.d.stages[0]);
  CHECK_THROWS_AS(validate(q), ContractError);
  q = p;
  q.g.stages[0].rgb.n_filters = 1;
  CHECK_THROWS_AS(validate(q), ContractError);
  CHECK_THROWS_AS(base_pair({10, 16, 8}), ContractError);
  CHECK_THROWS_AS(base_pair({2, 16, 8}), ContractError);
}

TEST_CASE("arch json round trip") {
  const ActionSpace space = small_space();
  ArchPair p = small_base();
  p = apply_action(p, GrowthAction::grow_d(7, 8), space);
  p = apply_action(p, GrowthAction::grow_both(), space);
  p = apply_action(p, GrowthAction::grow_g(3, 4), space);
  const auto j = to_json(p);
  CHECK(arch_from_json(nlohmann::json::parse(j.dump())) == p);
  auto bad = j;
  bad["g"]["stages"][0]["layers"][0]["role"] = "weird";
  CHECK_THROWS_AS(arch_from_json(bad), FormatError);
  CHECK_THROWS_AS(arch_from_json(nlohmann::json::object()), FormatError);
}
