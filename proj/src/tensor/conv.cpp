// Stride-1 zero-padded 2-D convolution via im2col + GEMM.
//
// The three kernels below close under differentiation:
//   y = conv(x, w)            dx = input_grad(gy, w)      dw = weight_grad(x, gy)
//   z = input_grad(g, w)      dg = conv(gz, w)            dw = weight_grad(gz, g)
//   z = weight_grad(x, g)     dx = input_grad(g, gz)      dg = conv(x, gz)
// so any number of reverse sweeps can be stacked.

#include <algorithm>

#include <Eigen/Core>

#include "dggan/tensor.hpp"

namespace dggan::tensor {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Caps the transient column buffer at roughly 16M elements.
constexpr std::size_t kMaxColsElems = std::size_t{1} << 24;

struct ConvGeom {
  int n, ci, h, w;   // input
  int co, k, pad;    // kernel
  int ho, wo;        // output
  int kk() const { return ci * k * k; }
  int p() const { return ho * wo; }
};

ConvGeom make_geom(const Shape& x, const Shape& w, int pad, const char* op) {
  if (x.size() != 4) throw ShapeError(std::string(op) + ": input must be [N,C,H,W], got " + shape_str(x));
  if (w.size() != 4 || w[2] != w[3]) {
    throw ShapeError(std::string(op) + ": weight must be [Cout,Cin,k,k], got " + shape_str(w));
  }
  if (x[1] != w[1]) {
    throw ShapeError(std::string(op) + ": channel mismatch, input " + shape_str(x) + " weight " + shape_str(w));
  }
  if (pad < 0) throw ShapeError(std::string(op) + ": negative padding");
  ConvGeom g{x[0], x[1], x[2], x[3], w[0], w[2], pad, 0, 0};
  g.ho = g.h + 2 * pad - g.k + 1;
  g.wo = g.w + 2 * pad - g.k + 1;
  if (g.ho <= 0 || g.wo <= 0) throw ShapeError(std::string(op) + ": kernel larger than padded input");
  return g;
}

int batch_chunk(const ConvGeom& g) {
  const std::size_t per = static_cast<std::size_t>(g.kk()) * g.p();
  return static_cast<int>(std::clamp<std::size_t>(kMaxColsElems / std::max<std::size_t>(per, 1), 1, g.n));
}

// cols[(ci*k+ky)*k+kx, b*P + oy*Wo + ox] = x[n0+b, ci, oy+ky-pad, ox+kx-pad]
template <typename T>
void im2col(const T* x, const ConvGeom& g, int n0, int nb, RowMat<T>& cols) {
  const int P = g.p();
  cols.resize(g.kk(), static_cast<Eigen::Index>(nb) * P);
  for (int b = 0; b < nb; ++b) {
    const T* xs = x + static_cast<std::size_t>(n0 + b) * g.ci * g.h * g.w;
    for (int c = 0; c < g.ci; ++c) {
      const T* plane = xs + static_cast<std::size_t>(c) * g.h * g.w;
      for (int ky = 0; ky < g.k; ++ky)
        for (int kx = 0; kx < g.k; ++kx) {
          T* row = cols.row((c * g.k + ky) * g.k + kx).data() + static_cast<std::size_t>(b) * P;
          const int ox_lo = std::clamp(g.pad - kx, 0, g.wo);
          const int ox_hi = std::clamp(g.w + g.pad - kx, ox_lo, g.wo);
          for (int oy = 0; oy < g.ho; ++oy) {
            T* out = row + oy * g.wo;
            const int iy = oy + ky - g.pad;
            if (iy < 0 || iy >= g.h) {
              std::fill_n(out, g.wo, T(0));
              continue;
            }
            std::fill(out, out + ox_lo, T(0));
            std::copy(plane + iy * g.w + ox_lo + kx - g.pad, plane + iy * g.w + ox_hi + kx - g.pad, out + ox_lo);
            std::fill(out + ox_hi, out + g.wo, T(0));
          }
        }
    }
  }
}

template <typename T>
void col2im_add(const RowMat<T>& cols, const ConvGeom& g, int n0, int nb, T* x) {
  const int P = g.p();
  for (int b = 0; b < nb; ++b) {
    T* xs = x + static_cast<std::size_t>(n0 + b) * g.ci * g.h * g.w;
    for (int c = 0; c < g.ci; ++c) {
      T* plane = xs + static_cast<std::size_t>(c) * g.h * g.w;
      for (int ky = 0; ky < g.k; ++ky)
        for (int kx = 0; kx < g.k; ++kx) {
          const T* row = cols.row((c * g.k + ky) * g.k + kx).data() + static_cast<std::size_t>(b) * P;
          for (int oy = 0; oy < g.ho; ++oy) {
            const int iy = oy + ky - g.pad;
            if (iy < 0 || iy >= g.h) continue;
            const int ox_lo = std::max(0, g.pad - kx);
            const int ox_hi = std::min(g.wo, g.w + g.pad - kx);
            for (int ox = ox_lo; ox < ox_hi; ++ox) plane[iy * g.w + ox + kx - g.pad] += row[oy * g.wo + ox];
          }
        }
    }
  }
}

// [N, C, P] slice -> [C, nb*P]
template <typename T>
void gather_channels_major(const T* src, int c, int P, int n0, int nb, RowMat<T>& dst) {
  dst.resize(c, static_cast<Eigen::Index>(nb) * P);
  for (int b = 0; b < nb; ++b)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(src + (static_cast<std::size_t>(n0 + b) * c + ch) * P, P,
                  dst.row(ch).data() + static_cast<std::size_t>(b) * P);
}

template <typename T>
void scatter_channels_major(const RowMat<T>& src, int c, int P, int n0, int nb, T* dst) {
  for (int b = 0; b < nb; ++b)
    for (int ch = 0; ch < c; ++ch)
      std::copy_n(src.row(ch).data() + static_cast<std::size_t>(b) * P, P,
                  dst + (static_cast<std::size_t>(n0 + b) * c + ch) * P);
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const ConvGeom& g) {
  Tensor<T> out({g.n, g.co, g.ho, g.wo});
  Eigen::Map<const RowMat<T>> W(w.data().data(), g.co, g.kk());
  RowMat<T> cols, res;
  const int chunk = batch_chunk(g);
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int nb = std::min(chunk, g.n - n0);
    im2col(x.data().data(), g, n0, nb, cols);
    res.noalias() = W * cols;
    scatter_channels_major(res, g.co, g.p(), n0, nb, out.data().data());
  }
  return out;
}

template <typename T>
Tensor<T> conv_input_adjoint(const Tensor<T>& gy, const Tensor<T>& w, const ConvGeom& g) {
  Tensor<T> dx({g.n, g.ci, g.h, g.w});
  Eigen::Map<const RowMat<T>> W(w.data().data(), g.co, g.kk());
  RowMat<T> gm, cols;
  const int chunk = batch_chunk(g);
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int nb = std::min(chunk, g.n - n0);
    gather_channels_major(gy.data().data(), g.co, g.p(), n0, nb, gm);
    cols.noalias() = W.transpose() * gm;
    col2im_add(cols, g, n0, nb, dx.data().data());
  }
  return dx;
}

template <typename T>
Tensor<T> conv_weight_adjoint(const Tensor<T>& x, const Tensor<T>& gy, const ConvGeom& g) {
  Tensor<T> dw({g.co, g.ci, g.k, g.k});
  Eigen::Map<RowMat<T>> DW(dw.data().data(), g.co, g.kk());
  RowMat<T> gm, cols;
  const int chunk = batch_chunk(g);
  for (int n0 = 0; n0 < g.n; n0 += chunk) {
    const int nb = std::min(chunk, g.n - n0);
    im2col(x.data().data(), g, n0, nb, cols);
    gather_channels_major(gy.data().data(), g.co, g.p(), n0, nb, gm);
    DW.noalias() += gm * cols.transpose();
  }
  return dw;
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, int padding) {
  const ConvGeom g = make_geom(x.shape(), w.shape(), padding, "conv2d");
  Tensor<T> out = conv_forward(x.value(), w.value(), g);
  const Shape x_shape = x.shape();
  const int k = g.k;
  return x.tape->record(std::move(out), {x, w},
                        [x, w, padding, x_shape, k](Var<T>, Var<T> gy, const std::vector<char>& need) {
                          InputGrads<T> r(2);
                          if (need[0]) r[0] = conv2d_input_grad(gy, w, padding, x_shape);
                          if (need[1]) r[1] = conv2d_weight_grad(x, gy, padding, k);
                          return r;
                        });
}

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> bias, int padding) {
  return bias_add(conv2d(x, w, padding), bias);
}

template <typename T>
Var<T> conv2d_input_grad(Var<T> grad_out, Var<T> w, int padding, const Shape& input_shape) {
  const ConvGeom g = make_geom(input_shape, w.shape(), padding, "conv2d_input_grad");
  const Shape expect{g.n, g.co, g.ho, g.wo};
  if (grad_out.shape() != expect) {
    throw ShapeError("conv2d_input_grad: gradient " + shape_str(grad_out.shape()) + " expected " + shape_str(expect));
  }
  Tensor<T> dx = conv_input_adjoint(grad_out.value(), w.value(), g);
  return grad_out.tape->record(std::move(dx), {grad_out, w},
                               [grad_out, w, padding](Var<T>, Var<T> gz, const std::vector<char>& need) {
                                 InputGrads<T> r(2);
                                 if (need[0]) r[0] = conv2d(gz, w, padding);
                                 if (need[1]) r[1] = conv2d_weight_grad(gz, grad_out, padding, w.shape()[2]);
                                 return r;
                               });
}

template <typename T>
Var<T> conv2d_weight_grad(Var<T> x, Var<T> grad_out, int padding, int kernel) {
  const Shape w_shape{grad_out.shape().at(1), x.shape().at(1), kernel, kernel};
  const ConvGeom g = make_geom(x.shape(), w_shape, padding, "conv2d_weight_grad");
  const Shape expect{g.n, g.co, g.ho, g.wo};
  if (grad_out.shape() != expect) {
    throw ShapeError("conv2d_weight_grad: gradient " + shape_str(grad_out.shape()) + " expected " + shape_str(expect));
  }
  Tensor<T> dw = conv_weight_adjoint(x.value(), grad_out.value(), g);
  const Shape x_shape = x.shape();
  return x.tape->record(std::move(dw), {x, grad_out},
                        [x, grad_out, padding, x_shape](Var<T>, Var<T> gz, const std::vector<char>& need) {
                          InputGrads<T> r(2);
                          if (need[0]) r[0] = conv2d_input_grad(grad_out, gz, padding, x_shape);
                          if (need[1]) r[1] = conv2d(x, gz, padding);
                          return r;
                        });
}

template Var<float> conv2d(Var<float>, Var<float>, int);
template Var<double> conv2d(Var<double>, Var<double>, int);
template Var<float> conv2d(Var<float>, Var<float>, Var<float>, int);
template Var<double> conv2d(Var<double>, Var<double>, Var<double>, int);
template Var<float> conv2d_input_grad(Var<float>, Var<float>, int, const Shape&);
template Var<double> conv2d_input_grad(Var<double>, Var<double>, int, const Shape&);
template Var<float> conv2d_weight_grad(Var<float>, Var<float>, int, int);
template Var<double> conv2d_weight_grad(Var<double>, Var<double>, int, int);

}  // namespace dggan::tensor
