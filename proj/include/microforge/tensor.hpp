#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "microforge/error.hpp"
#include "microforge/rng.hpp"

namespace microforge::tensor {

enum class DType : std::uint8_t { F32, F64 };

using Shape = std::vector<int>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

struct TensorImpl;

/// Shared handle to a dense row-major array.
///
/// Copies alias the same storage; ops never mutate their inputs, so handles
/// behave like values except for optimizer updates through `mutable_data`.
/// Storage is 32-bit by default; F64 tensors exist for gradient checking.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, DType dtype = DType::F32);
  static Tensor full(const Shape& shape, double value, DType dtype = DType::F32);
  static Tensor from(const Shape& shape, std::vector<float> values);
  static Tensor from(const Shape& shape, std::vector<double> values);
  static Tensor scalar(double value, DType dtype = DType::F32);
  /// N(0, stddev^2) entries drawn in storage order.
  static Tensor randn(const Shape& shape, CounterRng& rng, double stddev = 1.0, DType dtype = DType::F32);
  static Tensor uniform(const Shape& shape, CounterRng& rng, double lo, double hi, DType dtype = DType::F32);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return static_cast<int>(shape().size()); }
  int dim(int axis) const;
  std::size_t numel() const;
  DType dtype() const;

  template <class T>
  std::span<const T> data() const;
  /// Writable view; only for leaves (parameters, buffers being filled).
  template <class T>
  std::span<T> mutable_data();

  double at(std::size_t i) const;
  double item() const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const;

  /// Accumulated gradient from Tape::backward; undefined until one exists.
  Tensor grad() const;
  void zero_grad();
  void accumulate_grad(const Tensor& g);

  /// Fresh storage, no gradient history.
  Tensor clone() const;
  Tensor detach() const { return clone(); }
  Tensor to(DType dtype) const;

  const TensorImpl* id() const { return impl_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}
  friend struct TensorAccess;
  std::shared_ptr<TensorImpl> impl_;
};

/// One recorded primitive application.
struct TapeNode {
  const char* op = "";
  std::vector<Tensor> inputs;
  Tensor output;
  /// Adjoints of each input given the output adjoint; undefined entries mean
  /// "no contribution". Implemented with recordable ops so the backward pass
  /// can itself be differentiated.
  std::function<std::vector<Tensor>(const TapeNode&, const Tensor&)> backward;
};

/// Ordered record of primitive applications for reverse-mode differentiation.
class Tape {
 public:
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }
  const TapeNode& node(std::size_t i) const { return nodes_[i]; }

  void record(TapeNode node) { nodes_.push_back(std::move(node)); }

  /// Accumulates d(loss)/d(leaf) into the grad slot of every requires_grad leaf
  /// in the loss's ancestry. The loss must hold exactly one element.
  void backward(const Tensor& loss);

  /// d(output)/d(wrt[k]) for a single-element output. With create_graph the
  /// adjoint computation is appended to this tape and can be differentiated
  /// again; otherwise nothing is recorded. Inputs outside the ancestry get zeros.
  std::vector<Tensor> gradients(const Tensor& output, std::span<const Tensor> wrt, bool create_graph = false);

 private:
  struct Adjoint {
    Tensor tensor;
    Tensor grad;
  };
  std::vector<Adjoint> sweep(const Tensor& output, bool create_graph);

  std::vector<TapeNode> nodes_;
};

/// Current thread's recording tape, or null.
Tape* active_tape();

/// Makes `tape` the recording tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording for the scope's lifetime.
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

}  // namespace microforge::tensor
