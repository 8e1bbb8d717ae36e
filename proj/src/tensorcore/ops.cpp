#include "microforge/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

#include "impl.hpp"

namespace microforge::tensor {

namespace {

using Backward = std::function<std::vector<Tensor>(const TapeNode&, const Tensor&)>;

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void require_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
  if (a.dtype() != b.dtype()) fail(Errc::ShapeMismatch, std::string(op) + ": dtype mismatch");
}

void require_rank(const Tensor& x, int rank, const char* op) {
  if (x.rank() != rank)
    fail(Errc::ShapeMismatch, std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                                  to_string(x.shape()));
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out = make_tensor(x.shape(), x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(f(src[i]));
  });
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, F f) {
  Tensor out = make_tensor(a.shape(), a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto x = a.data<T>();
    auto y = b.data<T>();
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < x.size(); ++i) dst[i] = static_cast<T>(f(x[i], y[i]));
  });
  return out;
}

Shape ones_like_rank(std::size_t rank) { return Shape(rank, 1); }

// Expands a single-element operand to the other operand's shape.
std::pair<Tensor, Tensor> align(const Tensor& a, const Tensor& b, const char* op) {
  require_same_dtype(a, b, op);
  if (a.shape() == b.shape()) return {a, b};
  if (a.numel() == 1) return {broadcast_to(reshape(a, ones_like_rank(b.shape().size())), b.shape()), b};
  if (b.numel() == 1) return {a, broadcast_to(reshape(b, ones_like_rank(a.shape().size())), a.shape())};
  fail(Errc::ShapeMismatch, std::string(op) + ": " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

// Row-major strides.
std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t a = s.size(); a-- > 1;) st[a - 1] = st[a] * static_cast<std::size_t>(s[a]);
  return st;
}

// For every element of `big`, the linear index into `small`, where small's
// extent-1 axes collapse. Same rank required.
template <class Visit>
void for_each_reduced(const Shape& big, const Shape& small, Visit visit) {
  const std::size_t r = big.size();
  const auto sst = strides_of(small);
  std::vector<std::size_t> step(r);
  for (std::size_t a = 0; a < r; ++a) step[a] = small[a] == 1 ? 0 : sst[a];
  std::vector<int> idx(r, 0);
  const std::size_t n = numel(big);
  std::size_t target = 0;
  for (std::size_t i = 0; i < n; ++i) {
    visit(i, target);
    for (std::size_t a = r; a-- > 0;) {
      ++idx[a];
      target += step[a];
      if (idx[a] < big[a]) break;
      target -= step[a] * static_cast<std::size_t>(idx[a]);
      idx[a] = 0;
    }
  }
}

void check_reducible(const Shape& big, const Shape& small, const char* op) {
  bool ok = big.size() == small.size();
  for (std::size_t a = 0; ok && a < big.size(); ++a) ok = small[a] == big[a] || small[a] == 1;
  if (!ok) fail(Errc::ShapeMismatch, std::string(op) + ": " + to_string(big) + " vs " + to_string(small));
}

Tensor reciprocal(const Tensor& x) {
  Tensor out = map_unary(x, [](auto v) { return 1.0 / static_cast<double>(v); });
  return record("reciprocal", {x}, out, [](const TapeNode& n, const Tensor& g) {
    const Tensor& y = n.output;
    return std::vector<Tensor>{neg(mul(g, mul(y, y)))};
  });
}

Tensor pad_channels(const Tensor& x, int before, int after);

// Geometry shared by the three convolution kernels.
struct ConvGeom {
  int batch, in_c, h, w, out_c, kh, kw, stride, pad, ho, wo;
  int css() const { return in_c * kh * kw; }
  int hw_out() const { return ho * wo; }
};

ConvGeom conv_geom(const Shape& x, const Shape& k, int stride, int pad) {
  if (x.size() != 4 || k.size() != 4) fail(Errc::ShapeMismatch, "conv2d: rank-4 input and kernel required");
  if (x[1] != k[1]) fail(Errc::ShapeMismatch, "conv2d: channels " + to_string(x) + " vs kernel " + to_string(k));
  if (stride < 1 || pad < 0) fail(Errc::ShapeMismatch, "conv2d: stride >= 1 and pad >= 0 required");
  ConvGeom g{x[0], x[1], x[2], x[3], k[0], k[2], k[3], stride, pad, 0, 0};
  const int span_h = g.h + 2 * pad - g.kh;
  const int span_w = g.w + 2 * pad - g.kw;
  if (span_h < 0 || span_w < 0) fail(Errc::ShapeMismatch, "conv2d: kernel larger than padded input");
  if (span_h % stride != 0 || span_w % stride != 0)
    fail(Errc::NonIntegralOutput, "conv2d: (h + 2pad - s) not divisible by stride");
  g.ho = span_h / stride + 1;
  g.wo = span_w / stride + 1;
  return g;
}

template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
  const int hw = g.hw_out();
  for (int c = 0; c < g.in_c; ++c)
    for (int u = 0; u < g.kh; ++u)
      for (int v = 0; v < g.kw; ++v) {
        T* row = cols + static_cast<std::size_t>((c * g.kh + u) * g.kw + v) * hw;
        const T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int i = 0; i < g.ho; ++i) {
          const int hh = i * g.stride + u - g.pad;
          T* dst = row + static_cast<std::size_t>(i) * g.wo;
          if (hh < 0 || hh >= g.h) {
            std::fill(dst, dst + g.wo, T(0));
            continue;
          }
          for (int j = 0; j < g.wo; ++j) {
            const int ww = j * g.stride + v - g.pad;
            dst[j] = (ww < 0 || ww >= g.w) ? T(0) : plane[hh * g.w + ww];
          }
        }
      }
}

template <class T>
void col2im(const T* cols, const ConvGeom& g, T* x) {
  const int hw = g.hw_out();
  for (int c = 0; c < g.in_c; ++c)
    for (int u = 0; u < g.kh; ++u)
      for (int v = 0; v < g.kw; ++v) {
        const T* row = cols + static_cast<std::size_t>((c * g.kh + u) * g.kw + v) * hw;
        T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int i = 0; i < g.ho; ++i) {
          const int hh = i * g.stride + u - g.pad;
          if (hh < 0 || hh >= g.h) continue;
          for (int j = 0; j < g.wo; ++j) {
            const int ww = j * g.stride + v - g.pad;
            if (ww >= 0 && ww < g.w) plane[hh * g.w + ww] += row[static_cast<std::size_t>(i) * g.wo + j];
          }
        }
      }
}

Tensor conv_forward_raw(const Tensor& x, const Tensor& k, const ConvGeom& g) {
  Tensor out = make_tensor({g.batch, g.out_c, g.ho, g.wo}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xd = x.data<T>().data();
    T* yd = out.mutable_data<T>().data();
    Eigen::Map<const RowMat<T>> K(k.data<T>().data(), g.out_c, g.css());
    RowMat<T> cols(g.css(), g.hw_out());
    for (int b = 0; b < g.batch; ++b) {
      im2col(xd + static_cast<std::size_t>(b) * g.in_c * g.h * g.w, g, cols.data());
      Eigen::Map<RowMat<T>> Y(yd + static_cast<std::size_t>(b) * g.out_c * g.hw_out(), g.out_c, g.hw_out());
      Y.noalias() = K * cols;
    }
  });
  return out;
}

Tensor conv_input_grad_raw(const Tensor& gy, const Tensor& k, const ConvGeom& g) {
  Tensor out = make_tensor({g.batch, g.in_c, g.h, g.w}, gy.dtype());
  dispatch(gy.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* gd = gy.data<T>().data();
    T* xd = out.mutable_data<T>().data();
    Eigen::Map<const RowMat<T>> K(k.data<T>().data(), g.out_c, g.css());
    RowMat<T> cols(g.css(), g.hw_out());
    for (int b = 0; b < g.batch; ++b) {
      Eigen::Map<const RowMat<T>> G(gd + static_cast<std::size_t>(b) * g.out_c * g.hw_out(), g.out_c, g.hw_out());
      cols.noalias() = K.transpose() * G;
      col2im(cols.data(), g, xd + static_cast<std::size_t>(b) * g.in_c * g.h * g.w);
    }
  });
  return out;
}

Tensor conv_weight_grad_raw(const Tensor& x, const Tensor& gy, const ConvGeom& g) {
  Tensor out = make_tensor({g.out_c, g.in_c, g.kh, g.kw}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    const T* xd = x.data<T>().data();
    const T* gd = gy.data<T>().data();
    Eigen::Map<RowMat<T>> K(out.mutable_data<T>().data(), g.out_c, g.css());
    RowMat<T> cols(g.css(), g.hw_out());
    for (int b = 0; b < g.batch; ++b) {
      im2col(xd + static_cast<std::size_t>(b) * g.in_c * g.h * g.w, g, cols.data());
      Eigen::Map<const RowMat<T>> G(gd + static_cast<std::size_t>(b) * g.out_c * g.hw_out(), g.out_c, g.hw_out());
      K.noalias() += G * cols.transpose();
    }
  });
  return out;
}

Tensor subsample(const Tensor& x, int stride);

}  // namespace

Tensor add(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0, "add");
  Tensor out = map_binary(a, b, [](auto x, auto y) { return x + y; });
  return record("add", {a, b}, out, [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0, "sub");
  Tensor out = map_binary(a, b, [](auto x, auto y) { return x - y; });
  return record("sub", {a, b}, out,
                [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a0, const Tensor& b0) {
  auto [a, b] = align(a0, b0, "mul");
  Tensor out = map_binary(a, b, [](auto x, auto y) { return x * y; });
  return record("mul", {a, b}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{mul(g, n.inputs[1]), mul(g, n.inputs[0])};
  });
}

Tensor neg(const Tensor& x) {
  Tensor out = map_unary(x, [](auto v) { return -v; });
  return record("neg", {x}, out, [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor scale(const Tensor& x, double s) {
  Tensor out = map_unary(x, [s](auto v) { return v * static_cast<decltype(v)>(s); });
  return record("scale", {x}, out,
                [s](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{scale(g, s)}; });
}

Tensor add_scalar(const Tensor& x, double s) {
  Tensor out = map_unary(x, [s](auto v) { return v + static_cast<decltype(v)>(s); });
  return record("add_scalar", {x}, out, [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor sqrt(const Tensor& x) {
  Tensor out = map_unary(x, [](auto v) { return std::sqrt(v); });
  return record("sqrt", {x}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{mul(g, scale(rsqrt(n.inputs[0]), 0.5))};
  });
}

Tensor rsqrt(const Tensor& x) {
  Tensor out = map_unary(x, [](auto v) { return decltype(v)(1) / std::sqrt(v); });
  return record("rsqrt", {x}, out, [](const TapeNode& n, const Tensor& g) {
    const Tensor& y = n.output;
    return std::vector<Tensor>{mul(g, scale(mul(y, mul(y, y)), -0.5))};
  });
}

Tensor log(const Tensor& x) {
  Tensor out = map_unary(x, [](auto v) { return std::log(v); });
  return record("log", {x}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{mul(g, reciprocal(n.inputs[0]))};
  });
}

Tensor sigmoid(const Tensor& x) {
  Tensor out = map_unary(x, [](auto v) { return decltype(v)(1) / (decltype(v)(1) + std::exp(-v)); });
  return record("sigmoid", {x}, out, [](const TapeNode& n, const Tensor& g) {
    const Tensor& y = n.output;
    return std::vector<Tensor>{mul(g, mul(y, add_scalar(neg(y), 1.0)))};
  });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out = map_unary(x, [slope](auto v) { return v >= 0 ? v : v * static_cast<decltype(v)>(slope); });
  return record("leaky_relu", {x}, out, [slope](const TapeNode& n, const Tensor& g) {
    // Piecewise-constant slope; its own derivative vanishes almost everywhere.
    Tensor mask = map_unary(n.inputs[0], [slope](auto v) { return v >= 0 ? 1.0 : slope; });
    return std::vector<Tensor>{mul(g, mask)};
  });
}

Tensor clamp_min(const Tensor& x, double lo) {
  Tensor out = map_unary(x, [lo](auto v) { return std::max(static_cast<double>(v), lo); });
  return record("clamp_min", {x}, out, [lo](const TapeNode& n, const Tensor& g) {
    Tensor mask = map_unary(n.inputs[0], [lo](auto v) { return static_cast<double>(v) >= lo ? 1.0 : 0.0; });
    return std::vector<Tensor>{mul(g, mask)};
  });
}

Tensor sum(const Tensor& x) {
  Tensor out = make_tensor({}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    double acc = 0.0;
    for (T v : x.data<T>()) acc += static_cast<double>(v);
    out.mutable_data<T>()[0] = static_cast<T>(acc);
  });
  return record("sum", {x}, out, [](const TapeNode& n, const Tensor& g) {
    const Shape& s = n.inputs[0].shape();
    return std::vector<Tensor>{broadcast_to(reshape(g, ones_like_rank(s.size())), s)};
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) fail(Errc::ShapeMismatch, "mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor variance(const Tensor& x) {
  const Tensor centered = sub(x, mean(x));
  return mean(mul(centered, centered));
}

Tensor sum_to(const Tensor& x, const Shape& shape) {
  check_reducible(x.shape(), shape, "sum_to");
  if (x.shape() == shape) return x;
  Tensor out = make_tensor(shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    std::vector<double> acc(numel(shape), 0.0);
    auto src = x.data<T>();
    for_each_reduced(x.shape(), shape, [&](std::size_t i, std::size_t t) { acc[t] += static_cast<double>(src[i]); });
    auto dst = out.mutable_data<T>();
    for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<T>(acc[i]);
  });
  return record("sum_to", {x}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{broadcast_to(g, n.inputs[0].shape())};
  });
}

Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  check_reducible(shape, x.shape(), "broadcast_to");
  if (x.shape() == shape) return x;
  Tensor out = make_tensor(shape, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for_each_reduced(shape, x.shape(), [&](std::size_t i, std::size_t t) { dst[i] = src[t]; });
  });
  return record("broadcast_to", {x}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{sum_to(g, n.inputs[0].shape())};
  });
}

Tensor mean_to(const Tensor& x, const Shape& shape) {
  const double count = static_cast<double>(x.numel()) / static_cast<double>(numel(shape));
  return scale(sum_to(x, shape), 1.0 / count);
}

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.numel())
    fail(Errc::ShapeMismatch, "reshape " + to_string(x.shape()) + " -> " + to_string(shape));
  if (x.shape() == shape) return x;
  Tensor out = x.clone();
  TensorAccess::impl(out)->shape = shape;
  return record("reshape", {x}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{reshape(g, n.inputs[0].shape())};
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  require_same_dtype(a, b, "matmul");
  if (a.dim(1) != b.dim(0)) fail(Errc::ShapeMismatch, "matmul " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor out = make_tensor({a.dim(0), b.dim(1)}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    Eigen::Map<const RowMat<T>> A(a.data<T>().data(), a.dim(0), a.dim(1));
    Eigen::Map<const RowMat<T>> B(b.data<T>().data(), b.dim(0), b.dim(1));
    Eigen::Map<RowMat<T>> C(out.mutable_data<T>().data(), a.dim(0), b.dim(1));
    C.noalias() = A * B;
  });
  return record("matmul", {a, b}, out, [](const TapeNode& n, const Tensor& g) {
    return std::vector<Tensor>{matmul(g, transpose(n.inputs[1])), matmul(transpose(n.inputs[0]), g)};
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const int r = a.dim(0), c = a.dim(1);
  Tensor out = make_tensor({c, r}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = a.data<T>();
    auto dst = out.mutable_data<T>();
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) dst[static_cast<std::size_t>(j) * r + i] = src[static_cast<std::size_t>(i) * c + j];
  });
  return record("transpose", {a}, out,
                [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(bias, 1, "dense");
  if (bias.dim(0) != w.dim(1)) fail(Errc::ShapeMismatch, "dense: bias " + to_string(bias.shape()));
  Tensor xw = matmul(x, w);
  return add(xw, broadcast_to(reshape(bias, {1, bias.dim(0)}), xw.shape()));
}

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
  require_same_dtype(x, k, "conv2d");
  const ConvGeom g = conv_geom(x.shape(), k.shape(), stride, pad);
  Tensor out = conv_forward_raw(x, k, g);
  return record("conv2d", {x, k}, out, [stride, pad](const TapeNode& n, const Tensor& gy) {
    const Tensor& xi = n.inputs[0];
    const Tensor& ki = n.inputs[1];
    return std::vector<Tensor>{conv2d_input_grad(gy, ki, stride, pad, xi.shape()),
                               conv2d_weight_grad(xi, gy, stride, pad, ki.shape())};
  });
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& k, int stride, int pad, const Shape& x_shape) {
  require_same_dtype(gy, k, "conv2d_input_grad");
  const ConvGeom g = conv_geom(x_shape, k.shape(), stride, pad);
  if (gy.shape() != Shape{g.batch, g.out_c, g.ho, g.wo})
    fail(Errc::ShapeMismatch, "conv2d_input_grad: gradient " + to_string(gy.shape()));
  Tensor out = conv_input_grad_raw(gy, k, g);
  return record("conv2d_input_grad", {gy, k}, out, [stride, pad](const TapeNode& n, const Tensor& gx) {
    const Tensor& gyi = n.inputs[0];
    const Tensor& ki = n.inputs[1];
    return std::vector<Tensor>{conv2d(gx, ki, stride, pad), conv2d_weight_grad(gx, gyi, stride, pad, ki.shape())};
  });
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& gy, int stride, int pad, const Shape& k_shape) {
  require_same_dtype(x, gy, "conv2d_weight_grad");
  const ConvGeom g = conv_geom(x.shape(), k_shape, stride, pad);
  if (gy.shape() != Shape{g.batch, g.out_c, g.ho, g.wo})
    fail(Errc::ShapeMismatch, "conv2d_weight_grad: gradient " + to_string(gy.shape()));
  Tensor out = conv_weight_grad_raw(x, gy, g);
  return record("conv2d_weight_grad", {x, gy}, out, [stride, pad](const TapeNode& n, const Tensor& gk) {
    const Tensor& xi = n.inputs[0];
    const Tensor& gyi = n.inputs[1];
    return std::vector<Tensor>{conv2d_input_grad(gyi, gk, stride, pad, xi.shape()), conv2d(xi, gk, stride, pad)};
  });
}

Tensor zero_insert(const Tensor& x, int stride) {
  require_rank(x, 4, "zero_insert");
  if (stride < 1) fail(Errc::ShapeMismatch, "zero_insert: stride >= 1 required");
  if (stride == 1) return x;
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out = make_tensor({b, c, h * stride, w * stride}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::size_t planes = static_cast<std::size_t>(b) * c;
    const int W = w * stride;
    for (std::size_t p = 0; p < planes; ++p)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          dst[(p * h * stride + static_cast<std::size_t>(i) * stride) * W + static_cast<std::size_t>(j) * stride] =
              src[(p * h + i) * w + j];
  });
  return record("zero_insert", {x}, out,
                [stride](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{subsample(g, stride)}; });
}

namespace {

Tensor subsample(const Tensor& x, int stride) {
  require_rank(x, 4, "subsample");
  const int b = x.dim(0), c = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % stride != 0 || W % stride != 0)
    fail(Errc::OddDimension, "subsample: " + to_string(x.shape()) + " not divisible by " + std::to_string(stride));
  if (stride == 1) return x;
  const int h = H / stride, w = W / stride;
  Tensor out = make_tensor({b, c, h, w}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::size_t planes = static_cast<std::size_t>(b) * c;
    for (std::size_t p = 0; p < planes; ++p)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
          dst[(p * h + i) * w + j] =
              src[(p * H + static_cast<std::size_t>(i) * stride) * W + static_cast<std::size_t>(j) * stride];
  });
  return record("subsample", {x}, out,
                [stride](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{zero_insert(g, stride)}; });
}

Tensor pad_channels(const Tensor& x, int before, int after) {
  require_rank(x, 4, "pad_channels");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int C = c + before + after;
  Tensor out = make_tensor({b, C, h, w}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int n = 0; n < b; ++n)
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(n * c * plane), c * plane,
                  dst.begin() + static_cast<std::ptrdiff_t>((n * C + before) * plane));
  });
  return record("pad_channels", {x}, out, [before, c](const TapeNode&, const Tensor& g) {
    return std::vector<Tensor>{slice_channels(g, before, c)};
  });
}

}  // namespace

Tensor subsample2(const Tensor& x) { return subsample(x, 2); }

Tensor swap01(const Tensor& x) {
  require_rank(x, 4, "swap01");
  const int a = x.dim(0), b = x.dim(1);
  const std::size_t inner = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out = make_tensor({b, a, x.dim(2), x.dim(3)}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    for (int i = 0; i < a; ++i)
      for (int j = 0; j < b; ++j)
        std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(i) * b + j) * inner), inner,
                    dst.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(j) * a + i) * inner));
  });
  return record("swap01", {x}, out, [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{swap01(g)}; });
}

Tensor deconv2d(const Tensor& x, const Tensor& k, int stride) {
  require_rank(x, 4, "deconv2d");
  require_rank(k, 4, "deconv2d");
  if (stride != 1 && stride != 2) fail(Errc::ShapeMismatch, "deconv2d: stride must be 1 or 2");
  if (k.dim(0) != x.dim(1)) fail(Errc::ShapeMismatch, "deconv2d: kernel " + to_string(k.shape()) + " vs input " +
                                                          to_string(x.shape()));
  if (k.dim(2) != k.dim(3) || k.dim(2) % 2 == 0) fail(Errc::ShapeMismatch, "deconv2d: kernel must be square and odd");
  return conv2d(zero_insert(x, stride), swap01(k), 1, k.dim(2) / 2);
}

Tensor avg_pool2(const Tensor& x) {
  require_rank(x, 4, "avg_pool2");
  const int b = x.dim(0), c = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0) fail(Errc::OddDimension, "avg_pool2: " + to_string(x.shape()));
  const int h = H / 2, w = W / 2;
  Tensor out = make_tensor({b, c, h, w}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::size_t planes = static_cast<std::size_t>(b) * c;
    for (std::size_t p = 0; p < planes; ++p)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
          const std::size_t r0 = (p * H + 2 * static_cast<std::size_t>(i)) * W + 2 * static_cast<std::size_t>(j);
          const double s = static_cast<double>(src[r0]) + src[r0 + 1] + src[r0 + W] + src[r0 + W + 1];
          dst[(p * h + i) * w + j] = static_cast<T>(0.25 * s);
        }
  });
  return record("avg_pool2", {x}, out,
                [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{scale(upsample2(g), 0.25)}; });
}

Tensor upsample2(const Tensor& x) {
  require_rank(x, 4, "upsample2");
  const int b = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int H = 2 * h, W = 2 * w;
  Tensor out = make_tensor({b, c, H, W}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>();
    const std::size_t planes = static_cast<std::size_t>(b) * c;
    for (std::size_t p = 0; p < planes; ++p)
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) dst[(p * H + i) * W + j] = src[(p * h + i / 2) * w + j / 2];
  });
  return record("upsample2", {x}, out,
                [](const TapeNode&, const Tensor& g) { return std::vector<Tensor>{scale(avg_pool2(g), 4.0)}; });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  require_same_dtype(a, b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    fail(Errc::ShapeMismatch, "concat_channels " + to_string(a.shape()) + " + " + to_string(b.shape()));
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Tensor out = make_tensor({n, ca + cb, a.dim(2), a.dim(3)}, a.dtype());
  dispatch(a.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto sa = a.data<T>();
    auto sb = b.data<T>();
    auto dst = out.mutable_data<T>().begin();
    for (int i = 0; i < n; ++i) {
      dst = std::copy_n(sa.begin() + static_cast<std::ptrdiff_t>(i * ca * plane), ca * plane, dst);
      dst = std::copy_n(sb.begin() + static_cast<std::ptrdiff_t>(i * cb * plane), cb * plane, dst);
    }
  });
  return record("concat_channels", {a, b}, out, [ca, cb](const TapeNode&, const Tensor& g) {
    return std::vector<Tensor>{slice_channels(g, 0, ca), slice_channels(g, ca, cb)};
  });
}

Tensor slice_channels(const Tensor& x, int start, int count) {
  require_rank(x, 4, "slice_channels");
  const int n = x.dim(0), c = x.dim(1);
  if (start < 0 || count < 0 || start + count > c) fail(Errc::ShapeMismatch, "slice_channels out of range");
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor out = make_tensor({n, count, x.dim(2), x.dim(3)}, x.dtype());
  dispatch(x.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto src = x.data<T>();
    auto dst = out.mutable_data<T>().begin();
    for (int i = 0; i < n; ++i)
      dst = std::copy_n(src.begin() + static_cast<std::ptrdiff_t>((i * c + start) * plane), count * plane, dst);
  });
  return record("slice_channels", {x}, out, [start, count, c](const TapeNode&, const Tensor& g) {
    return std::vector<Tensor>{pad_channels(g, start, c - start - count)};
  });
}

}  // namespace microforge::tensor
