#pragma once

// Central finite-difference oracle used by the gradient tests. It only ever
// evaluates the forward function on fresh tapes, so it is independent of the
// reverse-mode path it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "dggan/tensor.hpp"

namespace dggan::testing {

using tensor::Tape;
using tensor::Tensor;
using tensor::Var;

using ScalarFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline Tensor<double> random_tensor(const tensor::Shape& shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  Tensor<double> t(shape);
  for (auto& v : t.vec()) v = nd(rng);
  return t;
}

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, false));
  return f(tape, vars).value().item();
}

inline std::vector<Tensor<double>> numeric_grads(const ScalarFn& f, const std::vector<Tensor<double>>& inputs,
                                                 double h = 1e-5) {
  std::vector<Tensor<double>> out;
  auto work = inputs;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    Tensor<double> g(inputs[a].shape());
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double orig = work[a][i];
      work[a][i] = orig + h;
      const double fp = eval_scalar(f, work);
      work[a][i] = orig - h;
      const double fm = eval_scalar(f, work);
      work[a][i] = orig;
      g[i] = (fp - fm) / (2 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<Tensor<double>> analytic_grads(const ScalarFn& f, const std::vector<Tensor<double>>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> vars;
  for (const auto& t : inputs) vars.push_back(tape.leaf(t, true));
  tape.backward(f(tape, vars));
  std::vector<Tensor<double>> out;
  for (const auto& v : vars) out.push_back(tape.leaf_grad(v));
  return out;
}

// ||a - b|| / max(||a||, ||b||), with an absolute floor for all-zero gradients.
inline double rel_error(const Tensor<double>& a, const Tensor<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
  return std::sqrt(diff) / denom;
}

inline double max_rel_error(const ScalarFn& f, const std::vector<Tensor<double>>& inputs, double h = 1e-5) {
  const auto an = analytic_grads(f, inputs);
  const auto nu = numeric_grads(f, inputs, h);
  double worst = 0;
  for (std::size_t i = 0; i < an.size(); ++i) worst = std::max(worst, rel_error(an[i], nu[i]));
  return worst;
}

}  // namespace dggan::testing
