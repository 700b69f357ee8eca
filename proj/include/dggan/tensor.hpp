#pragma once

// Dense tensors and a reverse-mode tape with support for differentiating
// through gradient computations (needed by the WGAN-GP penalty).

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dggan/errors.hpp"

namespace dggan::tensor {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Sole element of a one-element tensor.
  T item() const;

  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

// Gradient contributions for each input of a recorded op; nullopt means zero.
template <typename T>
using InputGrads = std::vector<std::optional<Var<T>>>;

// Receives the op's output, the upstream gradient and a per-input mask of
// which gradients are wanted. Input gradients must be built from tape ops so
// they can themselves be differentiated.
template <typename T>
using BackwardFn =
    std::function<InputGrads<T>(Var<T> out, Var<T> grad_out, const std::vector<char>& need)>;

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Appends an op result. Backward is dropped when no input needs a gradient
  // or when recording with grad mode disabled.
  Var<T> record(Tensor<T> value, std::vector<Var<T>> inputs, BackwardFn<T> backward);

  const Tensor<T>& value(Var<T> v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient of a one-element `output` with respect to each entry of `wrt`.
  // With create_graph the returned values are recorded ops (differentiable);
  // otherwise they are constants. Entries with no dependency come back as
  // zero constants.
  std::vector<Var<T>> grad(Var<T> output, std::span<const Var<T>> wrt, bool create_graph);

  // Accumulates d(loss)/d(leaf) into every leaf that requires a gradient.
  void backward(Var<T> loss);
  // Accumulated gradient of a leaf after backward(); zeros if none reached it.
  Tensor<T> leaf_grad(Var<T> leaf) const;

  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Tensor<T> value;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::size_t> inputs;
    BackwardFn<T> backward;
    std::optional<Tensor<T>> grad;
  };

  // Reverse sweep from `output`; `reach` marks nodes whose adjoint is wanted.
  std::vector<std::optional<Var<T>>> sweep(Var<T> output, const std::vector<char>& reach);

  std::deque<Node> nodes_;
  bool grad_enabled_ = true;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(*this);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape->requires_grad(*this);
}

// ---- elementwise --------------------------------------------------------
template <typename T> Var<T> add(Var<T> a, Var<T> b);
template <typename T> Var<T> sub(Var<T> a, Var<T> b);
template <typename T> Var<T> mul(Var<T> a, Var<T> b);
template <typename T> Var<T> scale(Var<T> a, T s);
template <typename T> Var<T> add_scalar(Var<T> a, T s);
template <typename T> Var<T> pow(Var<T> a, T exponent);
template <typename T> Var<T> square(Var<T> a);

// ---- reductions and their adjoint broadcasts ----------------------------
template <typename T> Var<T> sum(Var<T> a);                       // -> [1]
template <typename T> Var<T> mean(Var<T> a);                      // -> [1]
template <typename T> Var<T> broadcast_scalar(Var<T> a, const Shape& shape);
template <typename T> Var<T> sum_per_sample(Var<T> a);            // [N,...] -> [N]
template <typename T> Var<T> broadcast_per_sample(Var<T> a, const Shape& shape);
template <typename T> Var<T> sum_channels(Var<T> a);              // [N,C,...] -> [N,1,...]
template <typename T> Var<T> expand_channels(Var<T> a, int channels);
template <typename T> Var<T> channel_total(Var<T> a);             // [N,C,...] -> [C]
template <typename T> Var<T> expand_bias(Var<T> b, const Shape& shape);
template <typename T> Var<T> bias_add(Var<T> x, Var<T> b);

// ---- shape --------------------------------------------------------------
template <typename T> Var<T> reshape(Var<T> a, const Shape& shape);
template <typename T> Var<T> transpose(Var<T> a);                 // 2-D only
template <typename T> Var<T> matmul(Var<T> a, Var<T> b);          // [m,k]x[k,n]

// ---- convolution (stride 1, zero padding) -------------------------------
template <typename T> Var<T> conv2d(Var<T> x, Var<T> w, int padding);
template <typename T> Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int padding);
// Adjoint of conv2d with respect to its input, given the input's shape.
template <typename T> Var<T> conv2d_input_grad(Var<T> grad_out, Var<T> w, int padding, const Shape& input_shape);
// Adjoint of conv2d with respect to its weight, given the kernel size.
template <typename T> Var<T> conv2d_weight_grad(Var<T> x, Var<T> grad_out, int padding, int kernel);

// ---- resampling and blending --------------------------------------------
enum class Resample { up, down };
template <typename T> Var<T> resample(Var<T> x, Resample direction);
template <typename T> Var<T> upsample2x(Var<T> x) { return resample(x, Resample::up); }
template <typename T> Var<T> downsample2x(Var<T> x) { return resample(x, Resample::down); }
template <typename T> Var<T> blend(Var<T> low, Var<T> high, T alpha);

// ---- pointwise ----------------------------------------------------------
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kPixelNormEps = 1e-8;

template <typename T> Var<T> leaky_relu(Var<T> x);
// g * leaky_relu'(x); x is treated as a constant (second derivative 0).
template <typename T> Var<T> leaky_relu_mask(Var<T> g, Var<T> x);
template <typename T> Var<T> tanh(Var<T> x);
template <typename T> Var<T> pixelnorm(Var<T> x);
// x [N,in], w [out,in], b [out]
template <typename T> Var<T> linear_dense(Var<T> x, Var<T> w, Var<T> b);

enum class Pointwise { leaky_relu, tanh, pixelnorm };
template <typename T> Var<T> pointwise(Var<T> x, Pointwise kind);

// Gradient of a one-element output with respect to an input, recorded on the
// tape so that it can be differentiated again.
template <typename T> Var<T> input_gradient(Var<T> scalar_output, Var<T> wrt_input);

// ---- optimizer ----------------------------------------------------------
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  Tensor<T> m;
  Tensor<T> v;
  long step = 0;
};

template <typename T>
void adam_step(Tensor<T>& param, const Tensor<T>& grad, AdamState<T>& state, const AdamConfig& cfg);

}  // namespace dggan::tensor
