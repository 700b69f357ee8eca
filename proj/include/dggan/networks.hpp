#pragma once

// Forward passes for the generator and discriminator described by a
// NetworkSpec. Templated on the scalar so gradient checks can run in fp64.

#include <map>
#include <string>

#include "dggan/arch.hpp"
#include "dggan/tensor.hpp"

namespace dggan::arch {

template <typename T>
using ParamVars = std::map<std::string, tensor::Var<T>>;

// Activations keyed by layer name ("g/dense", "g/stage0/layer1", "d/stage0/from_rgb", ...).
template <typename T>
using Probe = std::map<std::string, tensor::Tensor<T>>;

// Puts every tensor of `ws` on the tape as a leaf.
template <typename T>
ParamVars<T> bind(tensor::Tape<T>& tape, const WeightSet& ws, bool requires_grad);

// z [N, latent] -> images [N, 3, R, R] in (-1, 1). `alpha` weights the new
// resolution path when the final stage is fading in.
template <typename T>
tensor::Var<T> generator_forward(const NetworkSpec& g, const ParamVars<T>& params, tensor::Var<T> z, T alpha,
                                 Probe<T>* probe = nullptr);

// images [N, 3, R, R] -> scores [N, 1]
template <typename T>
tensor::Var<T> discriminator_forward(const NetworkSpec& d, const ParamVars<T>& params, tensor::Var<T> x, T alpha,
                                     Probe<T>* probe = nullptr);

}  // namespace dggan::arch
