#include <cmath>

#include <Eigen/Core>

#include "dggan/tensor.hpp"

namespace dggan::tensor {

namespace {

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T, typename F>
Tensor<T> map_unary(const Tensor<T>& a, F f) {
  Tensor<T> out(a.shape());
  auto src = a.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> map_binary(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  auto x = a.data();
  auto y = b.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = f(x[i], y[i]);
  return out;
}

// [N, C, inner...] viewed as three extents.
struct NCI {
  std::size_t n, c, inner;
};

NCI split_nci(const Shape& s, const char* op) {
  if (s.size() < 2) throw ShapeError(std::string(op) + ": needs a channel axis, got " + shape_str(s));
  std::size_t inner = 1;
  for (std::size_t i = 2; i < s.size(); ++i) inner *= static_cast<std::size_t>(s[i]);
  return {static_cast<std::size_t>(s[0]), static_cast<std::size_t>(s[1]), inner};
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

// ---- elementwise --------------------------------------------------------

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape("add", a, b);
  auto out = map_binary(a.value(), b.value(), [](T x, T y) { return x + y; });
  return a.tape->record(std::move(out), {a, b}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{g, g};
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape("sub", a, b);
  auto out = map_binary(a.value(), b.value(), [](T x, T y) { return x - y; });
  return a.tape->record(std::move(out), {a, b}, [](Var<T>, Var<T> g, const std::vector<char>& need) {
    InputGrads<T> r(2);
    r[0] = g;
    if (need[1]) r[1] = scale(g, T(-1));
    return r;
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape("mul", a, b);
  auto out = map_binary(a.value(), b.value(), [](T x, T y) { return x * y; });
  return a.tape->record(std::move(out), {a, b}, [a, b](Var<T>, Var<T> g, const std::vector<char>& need) {
    InputGrads<T> r(2);
    if (need[0]) r[0] = mul(g, b);
    if (need[1]) r[1] = mul(g, a);
    return r;
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  auto out = map_unary(a.value(), [s](T x) { return x * s; });
  return a.tape->record(std::move(out), {a}, [s](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{scale(g, s)};
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  auto out = map_unary(a.value(), [s](T x) { return x + s; });
  return a.tape->record(std::move(out), {a}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{g};
  });
}

template <typename T>
Var<T> pow(Var<T> a, T exponent) {
  if (exponent == T(0)) return a.tape->constant(Tensor<T>(a.shape(), T(1)));
  auto out = map_unary(a.value(), [exponent](T x) { return std::pow(x, exponent); });
  return a.tape->record(std::move(out), {a}, [a, exponent](Var<T>, Var<T> g, const std::vector<char>&) {
    if (exponent == T(1)) return InputGrads<T>{g};
    return InputGrads<T>{mul(g, scale(pow(a, exponent - T(1)), exponent))};
  });
}

template <typename T>
Var<T> square(Var<T> a) {
  return mul(a, a);
}

// ---- reductions ---------------------------------------------------------

template <typename T>
Var<T> sum(Var<T> a) {
  T acc = 0;
  for (T v : a.value().data()) acc += v;
  const Shape shape = a.shape();
  return a.tape->record(Tensor<T>::scalar(acc), {a}, [shape](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{broadcast_scalar(g, shape)};
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

template <typename T>
Var<T> broadcast_scalar(Var<T> a, const Shape& shape) {
  if (a.value().size() != 1) throw ShapeError("broadcast_scalar: input must have one element");
  Tensor<T> out(shape, a.value()[0]);
  return a.tape->record(std::move(out), {a}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{sum(g)};
  });
}

template <typename T>
Var<T> sum_per_sample(Var<T> a) {
  const Shape shape = a.shape();
  if (shape.empty()) throw ShapeError("sum_per_sample: needs a batch axis");
  const std::size_t n = static_cast<std::size_t>(shape[0]);
  const std::size_t per = a.value().size() / n;
  Tensor<T> out({shape[0]});
  auto src = a.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    T acc = 0;
    for (std::size_t k = 0; k < per; ++k) acc += src[i * per + k];
    out[i] = acc;
  }
  return a.tape->record(std::move(out), {a}, [shape](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{broadcast_per_sample(g, shape)};
  });
}

template <typename T>
Var<T> broadcast_per_sample(Var<T> a, const Shape& shape) {
  if (a.shape().size() != 1 || shape.empty() || a.shape()[0] != shape[0]) {
    throw ShapeError("broadcast_per_sample: " + shape_str(a.shape()) + " onto " + shape_str(shape));
  }
  Tensor<T> out(shape);
  const std::size_t n = static_cast<std::size_t>(shape[0]);
  const std::size_t per = out.size() / n;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < per; ++k) out[i * per + k] = a.value()[i];
  return a.tape->record(std::move(out), {a}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{sum_per_sample(g)};
  });
}

template <typename T>
Var<T> sum_channels(Var<T> a) {
  const Shape shape = a.shape();
  const auto d = split_nci(shape, "sum_channels");
  Shape out_shape = shape;
  out_shape[1] = 1;
  Tensor<T> out(out_shape);
  auto src = a.value().data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < d.inner; ++i) out[n * d.inner + i] += src[(n * d.c + c) * d.inner + i];
  const int channels = shape[1];
  return a.tape->record(std::move(out), {a}, [channels](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{expand_channels(g, channels)};
  });
}

template <typename T>
Var<T> expand_channels(Var<T> a, int channels) {
  const auto d = split_nci(a.shape(), "expand_channels");
  if (d.c != 1) throw ShapeError("expand_channels: input must have one channel");
  Shape out_shape = a.shape();
  out_shape[1] = channels;
  Tensor<T> out(out_shape);
  auto src = a.value().data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < static_cast<std::size_t>(channels); ++c)
      for (std::size_t i = 0; i < d.inner; ++i)
        out[(n * channels + c) * d.inner + i] = src[n * d.inner + i];
  return a.tape->record(std::move(out), {a}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{sum_channels(g)};
  });
}

template <typename T>
Var<T> channel_total(Var<T> a) {
  const Shape shape = a.shape();
  const auto d = split_nci(shape, "channel_total");
  Tensor<T> out({shape[1]});
  auto src = a.value().data();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c) {
      T acc = 0;
      for (std::size_t i = 0; i < d.inner; ++i) acc += src[(n * d.c + c) * d.inner + i];
      out[c] += acc;
    }
  return a.tape->record(std::move(out), {a}, [shape](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{expand_bias(g, shape)};
  });
}

template <typename T>
Var<T> expand_bias(Var<T> b, const Shape& shape) {
  const auto d = split_nci(shape, "expand_bias");
  if (b.shape().size() != 1 || static_cast<std::size_t>(b.shape()[0]) != d.c) {
    throw ShapeError("expand_bias: bias " + shape_str(b.shape()) + " for " + shape_str(shape));
  }
  Tensor<T> out(shape);
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < d.inner; ++i) out[(n * d.c + c) * d.inner + i] = b.value()[c];
  return b.tape->record(std::move(out), {b}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{channel_total(g)};
  });
}

template <typename T>
Var<T> bias_add(Var<T> x, Var<T> b) {
  const auto d = split_nci(x.shape(), "bias_add");
  if (b.shape().size() != 1 || static_cast<std::size_t>(b.shape()[0]) != d.c) {
    throw ShapeError("bias_add: bias " + shape_str(b.shape()) + " for " + shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c) {
      const T bc = b.value()[c];
      T* p = out.data().data() + (n * d.c + c) * d.inner;
      for (std::size_t i = 0; i < d.inner; ++i) p[i] += bc;
    }
  return x.tape->record(std::move(out), {x, b}, [](Var<T>, Var<T> g, const std::vector<char>& need) {
    InputGrads<T> r(2);
    r[0] = g;
    if (need[1]) r[1] = channel_total(g);
    return r;
  });
}

// ---- shape --------------------------------------------------------------

template <typename T>
Var<T> reshape(Var<T> a, const Shape& shape) {
  const Shape orig = a.shape();
  return a.tape->record(a.value().reshaped(shape), {a}, [orig](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{reshape(g, orig)};
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  if (a.shape().size() != 2) throw ShapeError("transpose: needs a 2-D tensor, got " + shape_str(a.shape()));
  const int m = a.shape()[0], n = a.shape()[1];
  Tensor<T> out({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(j) * m + i] = a.value()[static_cast<std::size_t>(i) * n + j];
  return a.tape->record(std::move(out), {a}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{transpose(g)};
  });
}

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor<T> out({m, n});
  Eigen::Map<const RowMat<T>> A(a.value().data().data(), m, k);
  Eigen::Map<const RowMat<T>> B(b.value().data().data(), k, n);
  Eigen::Map<RowMat<T>> C(out.data().data(), m, n);
  C.noalias() = A * B;
  return a.tape->record(std::move(out), {a, b}, [a, b](Var<T>, Var<T> g, const std::vector<char>& need) {
    InputGrads<T> r(2);
    if (need[0]) r[0] = matmul(g, transpose(b));
    if (need[1]) r[1] = matmul(transpose(a), g);
    return r;
  });
}

// ---- resampling and blending --------------------------------------------

template <typename T>
Var<T> resample(Var<T> x, Resample direction) {
  const Shape shape = x.shape();
  if (shape.size() < 3) throw ShapeError("resample: needs spatial axes, got " + shape_str(shape));
  const int h = shape[shape.size() - 2], w = shape[shape.size() - 1];
  const std::size_t planes = x.value().size() / (static_cast<std::size_t>(h) * w);
  const auto src = x.value().data();

  if (direction == Resample::up) {
    Shape out_shape = shape;
    out_shape[shape.size() - 2] = 2 * h;
    out_shape[shape.size() - 1] = 2 * w;
    Tensor<T> out(out_shape);
    const int H = 2 * h, W = 2 * w;
    for (std::size_t p = 0; p < planes; ++p) {
      const T* in = src.data() + p * h * w;
      T* o = out.data().data() + p * H * W;
      for (int y = 0; y < H; ++y)
        for (int xx = 0; xx < W; ++xx) o[y * W + xx] = in[(y / 2) * w + xx / 2];
    }
    return x.tape->record(std::move(out), {x}, [](Var<T>, Var<T> g, const std::vector<char>&) {
      return InputGrads<T>{scale(resample(g, Resample::down), T(4))};
    });
  }

  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("resample down: odd spatial extent in " + shape_str(shape));
  }
  Shape out_shape = shape;
  out_shape[shape.size() - 2] = h / 2;
  out_shape[shape.size() - 1] = w / 2;
  Tensor<T> out(out_shape);
  const int H = h / 2, W = w / 2;
  for (std::size_t p = 0; p < planes; ++p) {
    const T* in = src.data() + p * h * w;
    T* o = out.data().data() + p * H * W;
    for (int y = 0; y < H; ++y)
      for (int xx = 0; xx < W; ++xx) {
        const T s = (in[(2 * y) * w + 2 * xx] + in[(2 * y) * w + 2 * xx + 1]) +
                    (in[(2 * y + 1) * w + 2 * xx] + in[(2 * y + 1) * w + 2 * xx + 1]);
        o[y * W + xx] = s * T(0.25);
      }
  }
  return x.tape->record(std::move(out), {x}, [](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{scale(resample(g, Resample::up), T(0.25))};
  });
}

template <typename T>
Var<T> blend(Var<T> low, Var<T> high, T alpha) {
  require_same_shape("blend", low, high);
  if (!(alpha >= T(0) && alpha <= T(1))) throw ContractError("blend: alpha outside [0,1]");
  Tensor<T> out;
  if (alpha == T(0)) {
    out = low.value();
  } else if (alpha == T(1)) {
    out = high.value();
  } else {
    const T a = alpha, b = T(1) - alpha;
    out = map_binary(low.value(), high.value(), [a, b](T l, T h) { return b * l + a * h; });
  }
  return low.tape->record(std::move(out), {low, high}, [alpha](Var<T>, Var<T> g, const std::vector<char>& need) {
    InputGrads<T> r(2);
    if (need[0] && alpha != T(1)) r[0] = scale(g, T(1) - alpha);
    if (need[1] && alpha != T(0)) r[1] = scale(g, alpha);
    return r;
  });
}

// ---- pointwise ----------------------------------------------------------

template <typename T>
Var<T> leaky_relu(Var<T> x) {
  const T slope = static_cast<T>(kLeakySlope);
  auto out = map_unary(x.value(), [slope](T v) { return v > T(0) ? v : slope * v; });
  return x.tape->record(std::move(out), {x}, [x](Var<T>, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{leaky_relu_mask(g, x)};
  });
}

template <typename T>
Var<T> leaky_relu_mask(Var<T> g, Var<T> x) {
  require_same_shape("leaky_relu_mask", g, x);
  const T slope = static_cast<T>(kLeakySlope);
  auto out = map_binary(g.value(), x.value(), [slope](T gv, T xv) { return xv > T(0) ? gv : slope * gv; });
  return g.tape->record(std::move(out), {g, x}, [x](Var<T>, Var<T> gg, const std::vector<char>& need) {
    InputGrads<T> r(2);
    if (need[0]) r[0] = leaky_relu_mask(gg, x);
    return r;
  });
}

template <typename T>
Var<T> tanh(Var<T> x) {
  auto out = map_unary(x.value(), [](T v) { return std::tanh(v); });
  return x.tape->record(std::move(out), {x}, [](Var<T> y, Var<T> g, const std::vector<char>&) {
    return InputGrads<T>{mul(g, add_scalar(scale(mul(y, y), T(-1)), T(1)))};
  });
}

template <typename T>
Var<T> pixelnorm(Var<T> x) {
  const auto d = split_nci(x.shape(), "pixelnorm");
  const int channels = static_cast<int>(d.c);
  auto ms = scale(sum_channels(mul(x, x)), T(1) / static_cast<T>(channels));
  auto inv = pow(add_scalar(ms, static_cast<T>(kPixelNormEps)), T(-0.5));
  return mul(x, expand_channels(inv, channels));
}

template <typename T>
Var<T> linear_dense(Var<T> x, Var<T> w, Var<T> b) {
  return bias_add(matmul(x, transpose(w)), b);
}

template <typename T>
Var<T> pointwise(Var<T> x, Pointwise kind) {
  switch (kind) {
    case Pointwise::leaky_relu: return leaky_relu(x);
    case Pointwise::tanh: return tanh(x);
    case Pointwise::pixelnorm: return pixelnorm(x);
  }
  throw ContractError("pointwise: unknown kind");
}

template <typename T>
Var<T> input_gradient(Var<T> scalar_output, Var<T> wrt_input) {
  const Var<T> wrt[] = {wrt_input};
  return scalar_output.tape->grad(scalar_output, wrt, /*create_graph=*/true).front();
}

// ---- optimizer ----------------------------------------------------------

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, const AdamConfig& cfg) {
  if (param.shape() != grad.shape()) {
    throw ShapeError("adam_step: param " + shape_str(param.shape()) + " vs grad " + shape_str(grad.shape()));
  }
  if (state.m.empty()) {
    state.m = Tensor<T>(param.shape());
    state.v = Tensor<T>(param.shape());
    state.step = 0;
  }
  if (state.m.shape() != param.shape()) throw ShapeError("adam_step: state shape mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  auto p = param.data();
  auto g = grad.data();
  auto m = state.m.data();
  auto v = state.v.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double gi = g[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double mhat = mi / c1;
    const double vhat = vi / c2;
    p[i] = static_cast<T>(p[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

#define DGGAN_INSTANTIATE_OPS(T)                                                      \
  template Var<T> add(Var<T>, Var<T>);                                                \
  template Var<T> sub(Var<T>, Var<T>);                                                \
  template Var<T> mul(Var<T>, Var<T>);                                                \
  template Var<T> scale(Var<T>, T);                                                   \
  template Var<T> add_scalar(Var<T>, T);                                              \
  template Var<T> pow(Var<T>, T);                                                     \
  template Var<T> square(Var<T>);                                                     \
  template Var<T> sum(Var<T>);                                                        \
  template Var<T> mean(Var<T>);                                                       \
  template Var<T> broadcast_scalar(Var<T>, const Shape&);                             \
  template Var<T> sum_per_sample(Var<T>);                                             \
  template Var<T> broadcast_per_sample(Var<T>, const Shape&);                         \
  template Var<T> sum_channels(Var<T>);                                               \
  template Var<T> expand_channels(Var<T>, int);                                       \
  template Var<T> channel_total(Var<T>);                                              \
  template Var<T> expand_bias(Var<T>, const Shape&);                                  \
  template Var<T> bias_add(Var<T>, Var<T>);                                           \
  template Var<T> reshape(Var<T>, const Shape&);                                      \
  template Var<T> transpose(Var<T>);                                                  \
  template Var<T> matmul(Var<T>, Var<T>);                                             \
  template Var<T> resample(Var<T>, Resample);                                         \
  template Var<T> blend(Var<T>, Var<T>, T);                                           \
  template Var<T> leaky_relu(Var<T>);                                                 \
  template Var<T> leaky_relu_mask(Var<T>, Var<T>);                                    \
  template Var<T> tanh(Var<T>);                                                       \
  template Var<T> pixelnorm(Var<T>);                                                  \
  template Var<T> linear_dense(Var<T>, Var<T>, Var<T>);                               \
  template Var<T> pointwise(Var<T>, Pointwise);                                       \
  template Var<T> input_gradient(Var<T>, Var<T>);                                     \
  template void adam_step(Tensor<T>&, const Tensor<T>&, AdamState<T>&, const AdamConfig&);

DGGAN_INSTANTIATE_OPS(float)
DGGAN_INSTANTIATE_OPS(double)

#undef DGGAN_INSTANTIATE_OPS

}  // namespace dggan::tensor
