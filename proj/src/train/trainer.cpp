#include "dggan/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "dggan/errors.hpp"

namespace dggan::train {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

std::string to_string(LossKind k) { return k == LossKind::wgan_gp ? "wgan_gp" : "wgan_clip"; }

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "wgan_gp") return LossKind::wgan_gp;
  if (s == "wgan_clip") return LossKind::wgan_clip;
  throw ContractError("loss_kind must be wgan_gp or wgan_clip, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (iters < 0) throw ContractError("iters must be >= 0");
  if (batch_size <= 0) throw ContractError("batch_size must be positive");
  if (!(lr > 0)) throw ContractError("lr must be positive");
  if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) throw ContractError("betas must lie in [0, 1)");
  if (lambda_gp < 0) throw ContractError("lambda_gp must be >= 0");
  if (n_critic <= 0) throw ContractError("n_critic must be positive");
  if (!(fade_in_fraction > 0 && fade_in_fraction <= 1)) throw ContractError("fade_in_fraction must lie in (0, 1]");
  if (!(clip > 0)) throw ContractError("clip must be positive");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iters", iters},       {"batch_size", batch_size},
          {"lr", lr},             {"beta1", beta1},
          {"beta2", beta2},       {"lambda_gp", lambda_gp},
          {"n_critic", n_critic}, {"fade_in_fraction", fade_in_fraction},
          {"loss_kind", train::to_string(loss_kind)}, {"clip", clip}};
}

double fade_in_alpha(long iter, long fade_iters) {
  if (iter < 0) throw ContractError("iteration must be >= 0");
  if (fade_iters <= 0) return 1.0;
  return std::min(1.0, static_cast<double>(iter) / static_cast<double>(fade_iters));
}

double wgan_gp_d_loss(std::span<const double> d_real, std::span<const double> d_fake,
                      std::span<const double> grad_norms, double lambda_gp) {
  if (d_real.empty() || d_fake.empty() || grad_norms.empty()) throw ContractError("empty batch");
  double r = 0, f = 0, pen = 0;
  for (double v : d_real) r += v;
  for (double v : d_fake) f += v;
  for (double g : grad_norms) pen += (g - 1) * (g - 1);
  return f / static_cast<double>(d_fake.size()) - r / static_cast<double>(d_real.size()) +
         lambda_gp * pen / static_cast<double>(grad_norms.size());
}

double wgan_g_loss(std::span<const double> d_fake) {
  if (d_fake.empty()) throw ContractError("empty batch");
  double f = 0;
  for (double v : d_fake) f += v;
  return -f / static_cast<double>(d_fake.size());
}

namespace {

template <typename T>
Var<T> flat(Var<T> v) {
  if (v.value().size() == 0) throw ContractError("empty batch");
  return tensor::reshape(v, {static_cast<int>(v.value().size())});
}

}  // namespace

template <typename T>
Var<T> wgan_gp_d_loss(Var<T> d_real, Var<T> d_fake, Var<T> grad_norms, T lambda_gp) {
  auto w = tensor::sub(tensor::mean(flat(d_fake)), tensor::mean(flat(d_real)));
  auto pen = tensor::mean(tensor::square(tensor::add_scalar(flat(grad_norms), T(-1))));
  return tensor::add(w, tensor::scale(pen, lambda_gp));
}

template <typename T>
Var<T> wgan_g_loss(Var<T> d_fake) {
  return tensor::scale(tensor::mean(flat(d_fake)), T(-1));
}

template <typename T>
Var<T> critic_grad_norms(const arch::NetworkSpec& d, const arch::ParamVars<T>& params, Var<T> x_hat, T alpha) {
  auto out = arch::discriminator_forward(d, params, x_hat, alpha);
  auto g = tensor::input_gradient(tensor::sum(out), x_hat);
  // The tiny floor keeps the square root differentiable at a zero gradient.
  return tensor::pow(tensor::add_scalar(tensor::sum_per_sample(tensor::square(g)), T(1e-12)), T(0.5));
}

template <typename T>
Tensor<T> interpolate(const Tensor<T>& real, const Tensor<T>& fake, std::span<const T> u) {
  if (real.shape() != fake.shape()) throw ShapeError("interpolate: real and fake shapes differ");
  const int n = real.dim(0);
  if (static_cast<int>(u.size()) != n) throw ShapeError("interpolate: one u per sample");
  Tensor<T> out(real.shape());
  const std::size_t per = real.size() / static_cast<std::size_t>(n);
  for (int i = 0; i < n; ++i) {
    const T a = u[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < per; ++j) {
      const std::size_t k = static_cast<std::size_t>(i) * per + j;
      out[k] = a * real[k] + (T(1) - a) * fake[k];
    }
  }
  return out;
}

template Var<float> wgan_gp_d_loss(Var<float>, Var<float>, Var<float>, float);
template Var<double> wgan_gp_d_loss(Var<double>, Var<double>, Var<double>, double);
template Var<float> wgan_g_loss(Var<float>);
template Var<double> wgan_g_loss(Var<double>);
template Var<float> critic_grad_norms(const arch::NetworkSpec&, const arch::ParamVars<float>&, Var<float>, float);
template Var<double> critic_grad_norms(const arch::NetworkSpec&, const arch::ParamVars<double>&, Var<double>, double);
template Tensor<float> interpolate(const Tensor<float>&, const Tensor<float>&, std::span<const float>);
template Tensor<double> interpolate(const Tensor<double>&, const Tensor<double>&, std::span<const double>);

// ---- stats ------------------------------------------------------------------

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double num_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::json TrainStats::to_json() const {
  nlohmann::json l = nlohmann::json::array();
  for (const auto& p : losses) l.push_back({{"iter", p.iter}, {"d_loss", num(p.d_loss)}, {"g_loss", num(p.g_loss)}});
  return {{"candidate_id", candidate_id}, {"losses", l}, {"diverged", diverged}, {"wallclock_s", wallclock_s}};
}

TrainStats TrainStats::from_json(const nlohmann::json& j) {
  TrainStats s;
  s.candidate_id = j.at("candidate_id").get<std::string>();
  for (const auto& p : j.at("losses")) {
    s.losses.push_back({p.at("iter").get<long>(), num_from(p.at("d_loss")), num_from(p.at("g_loss"))});
  }
  s.diverged = j.at("diverged").get<bool>();
  s.wallclock_s = j.at("wallclock_s").get<double>();
  return s;
}

// ---- training loop ----------------------------------------------------------

namespace {

struct Batch {
  Tensor<float> real;
  Tensor<float> z;
  std::vector<float> u;
};

class Sampler {
 public:
  Sampler(const data::Dataset& ds, int batch, int latent, std::uint64_t seed)
      : ds_(ds), batch_(batch), latent_(latent), rng_(seed) {}

  Batch next() {
    std::uniform_int_distribution<int> pick(0, ds_.size() - 1);
    std::vector<int> idx(static_cast<std::size_t>(batch_));
    for (auto& i : idx) i = pick(rng_);
    Batch b{ds_.gather(idx), latents(), {}};
    std::uniform_real_distribution<float> uni(0.0f, 1.0f);
    b.u.resize(static_cast<std::size_t>(batch_));
    for (auto& v : b.u) v = uni(rng_);
    return b;
  }

  Tensor<float> latents() {
    std::normal_distribution<float> nd(0.0f, 1.0f);
    Tensor<float> z({batch_, latent_});
    for (auto& v : z.vec()) v = nd(rng_);
    return z;
  }

 private:
  const data::Dataset& ds_;
  int batch_;
  int latent_;
  std::mt19937_64 rng_;
};

using States = std::map<std::string, tensor::AdamState<float>>;

void apply_grads(Tape<float>& tape, const arch::ParamVars<float>& vars, arch::WeightSet& ws, States& states,
                 const tensor::AdamConfig& adam) {
  for (auto& [name, t] : ws) tensor::adam_step(t, tape.leaf_grad(vars.at(name)), states[name], adam);
}

Tensor<float> generate(const arch::NetworkSpec& g, const arch::WeightSet& ws, const Tensor<float>& z, float alpha) {
  Tape<float> tape;
  auto p = arch::bind(tape, ws, false);
  return arch::generator_forward(g, p, tape.constant(z), alpha).value();
}

double critic_step(const arch::ArchPair& pair, arch::PairWeights& w, const Batch& b, float alpha,
                   const TrainConfig& cfg, States& states, const tensor::AdamConfig& adam) {
  const Tensor<float> fake = generate(pair.g, w.g, b.z, alpha);
  Tape<float> tape;
  auto dp = arch::bind(tape, w.d, true);
  auto d_real = arch::discriminator_forward(pair.d, dp, tape.constant(b.real), alpha);
  auto d_fake = arch::discriminator_forward(pair.d, dp, tape.constant(fake), alpha);
  Var<float> loss;
  if (cfg.loss_kind == LossKind::wgan_gp) {
    auto x_hat = tape.leaf(interpolate<float>(b.real, fake, b.u), true);
    auto norms = critic_grad_norms(pair.d, dp, x_hat, alpha);
    loss = wgan_gp_d_loss(d_real, d_fake, norms, static_cast<float>(cfg.lambda_gp));
  } else {
    loss = tensor::sub(tensor::mean(flat(d_fake)), tensor::mean(flat(d_real)));
  }
  const double value = loss.value().item();
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  apply_grads(tape, dp, w.d, states, adam);
  if (cfg.loss_kind == LossKind::wgan_clip) {
    const float c = static_cast<float>(cfg.clip);
    for (auto& [name, t] : w.d)
      for (auto& v : t.vec()) v = std::clamp(v, -c, c);
  }
  return value;
}

double generator_step(const arch::ArchPair& pair, arch::PairWeights& w, const Tensor<float>& z, float alpha,
                      States& states, const tensor::AdamConfig& adam) {
  Tape<float> tape;
  auto gp = arch::bind(tape, w.g, true);
  auto dp = arch::bind(tape, w.d, false);
  auto fake = arch::generator_forward(pair.g, gp, tape.constant(z), alpha);
  auto loss = wgan_g_loss(arch::discriminator_forward(pair.d, dp, fake, alpha));
  const double value = loss.value().item();
  if (!std::isfinite(value)) return value;
  tape.backward(loss);
  apply_grads(tape, gp, w.g, states, adam);
  return value;
}

bool all_finite(const arch::WeightSet& ws) {
  for (const auto& [name, t] : ws)
    for (float v : t.vec())
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TrainResult train_candidate(const arch::ArchPair& pair, const arch::PairWeights& weights,
                            const data::Dataset& dataset, const TrainConfig& cfg, std::uint64_t seed,
                            const std::string& candidate_id) {
  cfg.validate();
  arch::validate(pair);
  TrainResult res{weights, {}};
  res.stats.candidate_id = candidate_id;
  if (cfg.iters == 0) return res;

  const auto t0 = std::chrono::steady_clock::now();
  if (dataset.size() == 0) throw ContractError("training needs a non-empty dataset");
  if (dataset.resolution() < pair.resolution()) {
    throw ContractError("dataset resolution " + std::to_string(dataset.resolution()) + " is below the pair's " +
                        std::to_string(pair.resolution()));
  }
  const data::Dataset ds = dataset.resampled(pair.resolution());

  Sampler sampler(ds, cfg.batch_size, pair.g.latent_dim, seed);
  const tensor::AdamConfig adam{cfg.lr, cfg.beta1, cfg.beta2, 1e-8};
  States g_states, d_states;
  const bool fading = pair.g.fading();
  const long fade_iters = fading ? std::lround(cfg.fade_in_fraction * static_cast<double>(cfg.iters)) : 0;

  for (long it = 0; it < cfg.iters; ++it) {
    const float alpha = fading ? static_cast<float>(fade_in_alpha(it, fade_iters)) : 1.0f;
    double d_loss = 0;
    for (int c = 0; c < cfg.n_critic && std::isfinite(d_loss); ++c) {
      d_loss = critic_step(pair, res.weights, sampler.next(), alpha, cfg, d_states, adam);
    }
    const double g_loss = std::isfinite(d_loss)
                              ? generator_step(pair, res.weights, sampler.latents(), alpha, g_states, adam)
                              : std::numeric_limits<double>::quiet_NaN();
    const bool bad = !std::isfinite(d_loss) || !std::isfinite(g_loss);
    if (it % kLossSampleEvery == 0 || bad) res.stats.losses.push_back({it, d_loss, g_loss});
    if (bad || !all_finite(res.weights.g) || !all_finite(res.weights.d)) {
      res.stats.diverged = true;
      break;
    }
  }
  res.stats.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace dggan::train
