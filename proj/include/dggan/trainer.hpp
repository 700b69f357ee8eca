#pragma once

// WGAN-GP training of one candidate pair.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dggan/arch.hpp"
#include "dggan/data.hpp"
#include "dggan/networks.hpp"
#include "dggan/tensor.hpp"
#include "json.hpp"

namespace dggan::train {

enum class LossKind { wgan_gp, wgan_clip };

std::string to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
  long iters = 2000;
  int batch_size = 16;
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double lambda_gp = 10.0;
  int n_critic = 1;
  double fade_in_fraction = 0.5;
  LossKind loss_kind = LossKind::wgan_gp;
  double clip = 0.01;  // wgan_clip only

  void validate() const;
  nlohmann::json to_json() const;
};

// min(iter / fade_iters, 1); 1 when fade_iters == 0.
double fade_in_alpha(long iter, long fade_iters);

// mean(d_fake) - mean(d_real) + lambda * mean((grad_norms - 1)^2)
double wgan_gp_d_loss(std::span<const double> d_real, std::span<const double> d_fake,
                      std::span<const double> grad_norms, double lambda_gp);
double wgan_g_loss(std::span<const double> d_fake);

// Differentiable forms; inputs are [N] or [N,1].
template <typename T>
tensor::Var<T> wgan_gp_d_loss(tensor::Var<T> d_real, tensor::Var<T> d_fake, tensor::Var<T> grad_norms, T lambda_gp);
template <typename T>
tensor::Var<T> wgan_g_loss(tensor::Var<T> d_fake);

// Per-sample ||dD/dx||_2 at x_hat, recorded so it can be differentiated again.
template <typename T>
tensor::Var<T> critic_grad_norms(const arch::NetworkSpec& d, const arch::ParamVars<T>& params, tensor::Var<T> x_hat,
                                 T alpha);

// x_hat = u * real + (1 - u) * fake, one u per sample.
template <typename T>
tensor::Tensor<T> interpolate(const tensor::Tensor<T>& real, const tensor::Tensor<T>& fake, std::span<const T> u);

struct LossPoint {
  long iter = 0;
  double d_loss = 0;
  double g_loss = 0;
};

struct TrainStats {
  std::string candidate_id;
  std::vector<LossPoint> losses;  // every 100 iterations
  bool diverged = false;
  double wallclock_s = 0;

  nlohmann::json to_json() const;
  static TrainStats from_json(const nlohmann::json& j);
};

struct TrainResult {
  arch::PairWeights weights;
  TrainStats stats;
};

inline constexpr long kLossSampleEvery = 100;

// Alternates n_critic critic steps with one generator step. Fading stages
// ramp alpha over the first fade_in_fraction * iters iterations. A non-finite
// loss stops training and marks the result diverged.
TrainResult train_candidate(const arch::ArchPair& pair, const arch::PairWeights& weights,
                            const data::Dataset& dataset, const TrainConfig& cfg, std::uint64_t seed,
                            const std::string& candidate_id = "");

}  // namespace dggan::train
