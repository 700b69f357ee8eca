#include "dggan/networks.hpp"

namespace dggan::arch {

using tensor::Var;

namespace {

template <typename T>
Var<T> param(const ParamVars<T>& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractError("missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
Var<T> conv_layer(const ParamVars<T>& p, const std::string& name, Var<T> x, int k) {
  return tensor::conv2d(x, param(p, name + "/weight"), param(p, name + "/bias"), k / 2);
}

template <typename T>
void record(Probe<T>* probe, const std::string& name, Var<T> v) {
  if (probe) (*probe)[name] = v.value();
}

std::string stage_prefix(const char* net, int s) { return std::string(net) + "/stage" + std::to_string(s); }

}  // namespace

template <typename T>
ParamVars<T> bind(tensor::Tape<T>& tape, const WeightSet& ws, bool requires_grad) {
  ParamVars<T> out;
  for (const auto& [name, t] : ws) {
    if constexpr (std::is_same_v<T, float>) {
      out.emplace(name, tape.leaf(t, requires_grad));
    } else {
      out.emplace(name, tape.leaf(t.template cast<T>(), requires_grad));
    }
  }
  return out;
}

template <typename T>
Var<T> generator_forward(const NetworkSpec& g, const ParamVars<T>& p, Var<T> z, T alpha, Probe<T>* probe) {
  if (z.shape().size() != 2 || z.shape()[1] != g.latent_dim) {
    throw ShapeError("generator input must be [N," + std::to_string(g.latent_dim) + "], got " +
                     tensor::shape_str(z.shape()));
  }
  const int n = z.shape()[0];
  auto h = tensor::linear_dense(z, param(p, std::string("g/dense/weight")), param(p, std::string("g/dense/bias")));
  h = tensor::reshape(h, {n, g.base_channels, g.d0, g.d0});
  h = tensor::pixelnorm(tensor::leaky_relu(h));
  record(probe, "g/dense", h);

  const int S = static_cast<int>(g.stages.size());
  std::optional<Var<T>> prev_stage_out;
  for (int s = 0; s < S; ++s) {
    const Stage& st = g.stages[static_cast<std::size_t>(s)];
    if (s > 0) {
      prev_stage_out = h;
      h = tensor::upsample2x(h);
    }
    for (const auto& l : st.convs) {
      const std::string name = stage_prefix("g", s) + "/layer" + std::to_string(l.id);
      h = tensor::pixelnorm(tensor::leaky_relu(conv_layer(p, name, h, l.filter_size)));
      record(probe, name, h);
    }
  }

  auto rgb = conv_layer(p, stage_prefix("g", S - 1) + "/to_rgb", h, 1);
  if (g.fading() && alpha < T(1)) {
    auto low = tensor::upsample2x(conv_layer(p, stage_prefix("g", S - 2) + "/to_rgb", *prev_stage_out, 1));
    rgb = tensor::blend(low, rgb, alpha);
  }
  auto out = tensor::tanh(rgb);
  record(probe, "g/out", out);
  return out;
}

template <typename T>
Var<T> discriminator_forward(const NetworkSpec& d, const ParamVars<T>& p, Var<T> x, T alpha, Probe<T>* probe) {
  const int R = d.resolution();
  if (x.shape() != tensor::Shape{x.shape().at(0), kImageChannels, R, R}) {
    throw ShapeError("discriminator input must be [N,3," + std::to_string(R) + "," + std::to_string(R) + "], got " +
                     tensor::shape_str(x.shape()));
  }
  const int S = static_cast<int>(d.stages.size());
  auto h = tensor::leaky_relu(conv_layer(p, stage_prefix("d", S - 1) + "/from_rgb", x, 1));
  record(probe, stage_prefix("d", S - 1) + "/from_rgb", h);
  for (int s = S - 1; s >= 0; --s) {
    const Stage& st = d.stages[static_cast<std::size_t>(s)];
    for (const auto& l : st.convs) {
      const std::string name = stage_prefix("d", s) + "/layer" + std::to_string(l.id);
      h = tensor::leaky_relu(conv_layer(p, name, h, l.filter_size));
      record(probe, name, h);
    }
    if (s > 0) {
      h = tensor::downsample2x(h);
      if (s == S - 1 && d.fading() && alpha < T(1)) {
        auto low = tensor::leaky_relu(conv_layer(p, stage_prefix("d", s - 1) + "/from_rgb", tensor::downsample2x(x), 1));
        h = tensor::blend(low, h, alpha);
      }
    }
  }
  const int n = x.shape()[0];
  h = tensor::reshape(h, {n, static_cast<int>(h.value().size()) / n});
  auto out = tensor::linear_dense(h, param(p, std::string("d/dense/weight")), param(p, std::string("d/dense/bias")));
  record(probe, "d/out", out);
  return out;
}

template ParamVars<float> bind(tensor::Tape<float>&, const WeightSet&, bool);
template ParamVars<double> bind(tensor::Tape<double>&, const WeightSet&, bool);
template Var<float> generator_forward(const NetworkSpec&, const ParamVars<float>&, Var<float>, float, Probe<float>*);
template Var<double> generator_forward(const NetworkSpec&, const ParamVars<double>&, Var<double>, double, Probe<double>*);
template Var<float> discriminator_forward(const NetworkSpec&, const ParamVars<float>&, Var<float>, float, Probe<float>*);
template Var<double> discriminator_forward(const NetworkSpec&, const ParamVars<double>&, Var<double>, double,
                                           Probe<double>*);

}  // namespace dggan::arch
