#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "microforge/ops.hpp"
#include "microforge/rng.hpp"
#include "microforge/stylenet.hpp"

namespace gradcheck {

using microforge::CounterRng;
using microforge::tensor::DType;
using microforge::tensor::Shape;
using microforge::tensor::Tensor;
namespace ops = microforge::tensor;

struct Case {
  std::string name;
  // Draws a fresh random shape and 64-bit inputs.
  std::function<std::vector<Tensor>(CounterRng&)> inputs;
  std::function<Tensor(const std::vector<Tensor>&)> f;
};

inline int dim(CounterRng& rng, int lo, int hi) { return lo + static_cast<int>(rng.below(hi - lo + 1)); }

inline Tensor randn(const Shape& s, CounterRng& rng) { return Tensor::randn(s, rng, 1.0, DType::F64); }

inline Tensor positive(const Shape& s, CounterRng& rng) {
  return Tensor::uniform(s, rng, 0.5, 2.0, DType::F64);
}

// Unit-scale values kept at least `gap` away from zero, for ops with a kink there.
inline Tensor away_from_zero(const Shape& s, CounterRng& rng, double gap = 0.05) {
  Tensor t = randn(s, rng);
  for (auto& v : t.mutable_data<double>())
    if (std::abs(v) < gap) v = v < 0 ? v - gap : v + gap;
  return t;
}

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-6),
/// maximised over the inputs. The scalar loss is sum(f(x) * r) for a fixed random r.
inline double check(const Case& c, CounterRng& rng, double h = 1e-3) {
  std::vector<Tensor> in = c.inputs(rng);
  for (auto& t : in) t.set_requires_grad(true);
  ops::Tape tape;
  std::vector<Tensor> analytic;
  Tensor r;
  {
    ops::TapeScope scope(tape);
    const Tensor y = c.f(in);
    r = randn(y.shape(), rng);
    analytic = tape.gradients(ops::sum(ops::mul(y, r)), in);
  }
  auto loss_at = [&](const std::vector<Tensor>& x) {
    ops::NoGradScope quiet;
    return ops::sum(ops::mul(c.f(x), r)).item();
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    std::vector<double> a = analytic[i].to_vector(), n(in[i].numel());
    for (std::size_t k = 0; k < in[i].numel(); ++k) {
      std::vector<Tensor> plus = in, minus = in;
      plus[i] = in[i].clone();
      minus[i] = in[i].clone();
      plus[i].mutable_data<double>()[k] += h;
      minus[i].mutable_data<double>()[k] -= h;
      n[k] = (loss_at(plus) - loss_at(minus)) / (2 * h);
    }
    std::vector<double> d(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) d[k] = a[k] - n[k];
    worst = std::max(worst, norm(d) / std::max({norm(a), norm(n), 1e-6}));
  }
  return worst;
}

inline std::vector<Case> primitive_cases() {
  std::vector<Case> cs;
  auto unary = [&](std::string name, auto make, std::function<Tensor(const Tensor&)> f) {
    cs.push_back({std::move(name),
                  [make](CounterRng& g) {
                    return std::vector<Tensor>{make(Shape{dim(g, 1, 3), dim(g, 1, 4), dim(g, 1, 5)}, g)};
                  },
                  [f](const std::vector<Tensor>& x) { return f(x[0]); }});
  };
  auto binary = [&](std::string name, std::function<Tensor(const Tensor&, const Tensor&)> f) {
    cs.push_back({std::move(name),
                  [](CounterRng& g) {
                    const Shape s{dim(g, 1, 4), dim(g, 1, 5)};
                    // One draw in four broadcasts a single-element operand.
                    const Shape s2 = g.below(4) == 0 ? Shape{1} : s;
                    return std::vector<Tensor>{randn(s, g), randn(s2, g)};
                  },
                  [f](const std::vector<Tensor>& x) { return f(x[0], x[1]); }});
  };
  binary("add", ops::add);
  binary("sub", ops::sub);
  binary("mul", ops::mul);
  unary("neg", randn, ops::neg);
  unary("scale", randn, [](const Tensor& x) { return ops::scale(x, -1.7); });
  unary("add_scalar", randn, [](const Tensor& x) { return ops::add_scalar(x, 0.3); });
  unary("sqrt", positive, ops::sqrt);
  unary("rsqrt", positive, ops::rsqrt);
  unary("log", positive, ops::log);
  unary("sigmoid", randn, ops::sigmoid);
  unary("leaky_relu", [](const Shape& s, CounterRng& g) { return away_from_zero(s, g); },
        [](const Tensor& x) { return ops::leaky_relu(x, 0.2); });
  unary("clamp_min", [](const Shape& s, CounterRng& g) { return away_from_zero(s, g); },
        [](const Tensor& x) { return ops::clamp_min(x, 0.0); });
  unary("sum", randn, ops::sum);
  unary("mean", randn, ops::mean);
  unary("variance", randn, ops::variance);
  unary("reshape", randn, [](const Tensor& x) { return ops::reshape(x, Shape{static_cast<int>(x.numel())}); });

  auto reduce_shape = [](const Shape& s, CounterRng& g) {
    Shape out = s;
    for (auto& d : out)
      if (g.below(2)) d = 1;
    return out;
  };
  cs.push_back({"sum_to", [](CounterRng& g) { return std::vector<Tensor>{randn({dim(g, 1, 3), dim(g, 1, 3), dim(g, 1, 4)}, g)}; },
                [reduce_shape](const std::vector<Tensor>& x) {
                  CounterRng pick(x[0].numel());
                  return ops::sum_to(x[0], reduce_shape(x[0].shape(), pick));
                }});
  cs.push_back({"mean_to", [](CounterRng& g) { return std::vector<Tensor>{randn({dim(g, 1, 3), dim(g, 1, 3), dim(g, 1, 4)}, g)}; },
                [reduce_shape](const std::vector<Tensor>& x) {
                  CounterRng pick(x[0].numel() + 1);
                  return ops::mean_to(x[0], reduce_shape(x[0].shape(), pick));
                }});
  cs.push_back({"broadcast_to",
                [](CounterRng& g) {
                  return std::vector<Tensor>{randn({dim(g, 1, 3), 1, dim(g, 1, 3)}, g)};
                },
                [](const std::vector<Tensor>& x) {
                  return ops::broadcast_to(x[0], {x[0].dim(0), 3, x[0].dim(2)});
                }});
  cs.push_back({"matmul",
                [](CounterRng& g) {
                  const int n = dim(g, 1, 4), k = dim(g, 1, 4), m = dim(g, 1, 4);
                  return std::vector<Tensor>{randn({n, k}, g), randn({k, m}, g)};
                },
                [](const std::vector<Tensor>& x) { return ops::matmul(x[0], x[1]); }});
  cs.push_back({"transpose", [](CounterRng& g) { return std::vector<Tensor>{randn({dim(g, 1, 4), dim(g, 1, 4)}, g)}; },
                [](const std::vector<Tensor>& x) { return ops::transpose(x[0]); }});
  cs.push_back({"dense",
                [](CounterRng& g) {
                  const int b = dim(g, 1, 3), n = dim(g, 1, 4), m = dim(g, 1, 4);
                  return std::vector<Tensor>{randn({b, n}, g), randn({n, m}, g), randn({m}, g)};
                },
                [](const std::vector<Tensor>& x) { return ops::dense(x[0], x[1], x[2]); }});
  for (int stride : {1, 2}) {
    cs.push_back({"conv2d/s" + std::to_string(stride),
                  [stride](CounterRng& g) {
                    const int s = dim(g, 1, 3);
                    int hw = dim(g, std::max(s, 2), 6);
                    if ((hw + 2 * (s / 2) - s) % stride != 0) ++hw;
                    const int c = dim(g, 1, 3);
                    return std::vector<Tensor>{randn({dim(g, 1, 2), c, hw, hw}, g), randn({dim(g, 1, 3), c, s, s}, g)};
                  },
                  [stride](const std::vector<Tensor>& x) {
                    const int s = x[1].dim(2);
                    return ops::conv2d(x[0], x[1], stride, s / 2);
                  }});
  }
  cs.push_back({"conv2d_input_grad",
                [](CounterRng& g) {
                  const int hw = dim(g, 2, 5);
                  const int c = dim(g, 1, 2), o = dim(g, 1, 2);
                  return std::vector<Tensor>{randn({dim(g, 1, 2), o, hw, hw}, g), randn({o, c, 3, 3}, g)};
                },
                [](const std::vector<Tensor>& x) {
                  return ops::conv2d_input_grad(x[0], x[1], 1, 1, {x[0].dim(0), x[1].dim(1), x[0].dim(2), x[0].dim(3)});
                }});
  cs.push_back({"conv2d_weight_grad",
                [](CounterRng& g) {
                  const int hw = dim(g, 2, 5);
                  const int b = dim(g, 1, 2), c = dim(g, 1, 2), o = dim(g, 1, 2);
                  return std::vector<Tensor>{randn({b, c, hw, hw}, g), randn({b, o, hw, hw}, g), Tensor::zeros({o, c, 3, 3}, DType::F64)};
                },
                [](const std::vector<Tensor>& x) {
                  return ops::conv2d_weight_grad(x[0], x[1], 1, 1, x[2].shape());
                }});
  cs.push_back({"deconv2d",
                [](CounterRng& g) {
                  const int hw = dim(g, 1, 4), c = dim(g, 1, 3), o = dim(g, 1, 3);
                  return std::vector<Tensor>{randn({dim(g, 1, 2), c, hw, hw}, g), randn({c, o, 3, 3}, g)};
                },
                [](const std::vector<Tensor>& x) { return ops::deconv2d(x[0], x[1], 2); }});
  auto spatial = [&](std::string name, std::function<Tensor(const Tensor&)> f) {
    cs.push_back({std::move(name),
                  [](CounterRng& g) {
                    const int hw = 2 * dim(g, 1, 3);
                    return std::vector<Tensor>{randn({dim(g, 1, 2), dim(g, 1, 3), hw, hw}, g)};
                  },
                  [f](const std::vector<Tensor>& x) { return f(x[0]); }});
  };
  spatial("zero_insert", [](const Tensor& x) { return ops::zero_insert(x, 2); });
  spatial("subsample2", ops::subsample2);
  spatial("swap01", ops::swap01);
  spatial("avg_pool2", ops::avg_pool2);
  spatial("upsample2", ops::upsample2);
  spatial("slice_channels", [](const Tensor& x) { return ops::slice_channels(x, x.dim(1) / 2, (x.dim(1) + 1) / 2); });
  cs.push_back({"concat_channels",
                [](CounterRng& g) {
                  const int b = dim(g, 1, 2), hw = dim(g, 1, 4);
                  return std::vector<Tensor>{randn({b, dim(g, 1, 3), hw, hw}, g), randn({b, dim(g, 1, 3), hw, hw}, g)};
                },
                [](const std::vector<Tensor>& x) { return ops::concat_channels(x[0], x[1]); }});
  return cs;
}

// Network building blocks composed from the primitives.
inline std::vector<Case> stylenet_cases() {
  namespace sn = microforge::stylenet;
  std::vector<Case> cs;
  cs.push_back({"adain",
                [](CounterRng& g) {
                  const int b = dim(g, 1, 2), c = dim(g, 1, 3), hw = dim(g, 2, 4);
                  return std::vector<Tensor>{randn({b, c, hw, hw}, g), randn({b, c}, g), randn({b, c}, g)};
                },
                [](const std::vector<Tensor>& x) { return sn::adain(x[0], x[1], x[2]); }});
  cs.push_back({"add_noise",
                [](CounterRng& g) {
                  const int b = dim(g, 1, 2), c = dim(g, 1, 3), hw = dim(g, 1, 4);
                  return std::vector<Tensor>{randn({b, c, hw, hw}, g), randn({c}, g), randn({b, 1, hw, hw}, g)};
                },
                [](const std::vector<Tensor>& x) { return sn::add_noise(x[0], x[1], x[2]); }});
  cs.push_back({"pixel_norm",
                // With one channel the op is x / sqrt(x^2 + eps), a near-step at 0.
                [](CounterRng& g) {
                  return std::vector<Tensor>{
                      away_from_zero({dim(g, 1, 2), dim(g, 1, 3), dim(g, 1, 3), dim(g, 1, 3)}, g, 0.1)};
                },
                [](const std::vector<Tensor>& x) { return sn::pixel_norm(x[0]); }});
  cs.push_back({"batch_std",
                [](CounterRng& g) { return std::vector<Tensor>{randn({dim(g, 2, 3), dim(g, 1, 2), dim(g, 1, 3), dim(g, 1, 3)}, g)}; },
                [](const std::vector<Tensor>& x) { return sn::batch_std(x[0]); }});
  return cs;
}

}  // namespace gradcheck
