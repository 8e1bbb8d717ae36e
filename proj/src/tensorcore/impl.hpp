#pragma once

#include <memory>
#include <vector>

#include "microforge/tensor.hpp"

namespace microforge::tensor {

struct TensorImpl {
  Shape shape;
  DType dtype = DType::F32;
  std::vector<float> f32;
  std::vector<double> f64;
  bool requires_grad = false;
  bool leaf = true;
  std::shared_ptr<TensorImpl> grad;

  template <class T>
  std::vector<T>& storage() {
    if constexpr (std::is_same_v<T, float>) return f32;
    else return f64;
  }
};

struct TensorAccess {
  static Tensor wrap(std::shared_ptr<TensorImpl> p) { return Tensor(std::move(p)); }
  static const std::shared_ptr<TensorImpl>& impl(const Tensor& t) { return t.impl_; }
};

/// Calls fn(T{}) with T = float or double according to dtype.
template <class Fn>
decltype(auto) dispatch(DType dtype, Fn&& fn) {
  if (dtype == DType::F32) return fn(float{});
  return fn(double{});
}

/// Uninitialized-to-zero tensor of the given shape and dtype.
Tensor make_tensor(const Shape& shape, DType dtype);

/// Records `out` as produced from `inputs` when a tape is active and any input
/// requires a gradient; returns `out`.
Tensor record(const char* op, std::vector<Tensor> inputs, Tensor out,
              std::function<std::vector<Tensor>(const TapeNode&, const Tensor&)> backward);

}  // namespace microforge::tensor
