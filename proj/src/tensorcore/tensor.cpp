#include "microforge/tensor.hpp"

#include <algorithm>
#include <unordered_map>

#include "impl.hpp"
#include "microforge/ops.hpp"

namespace microforge::tensor {

namespace {
thread_local Tape* g_active_tape = nullptr;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) fail(Errc::ShapeMismatch, "negative extent in " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor make_tensor(const Shape& shape, DType dtype) {
  auto p = std::make_shared<TensorImpl>();
  p->shape = shape;
  p->dtype = dtype;
  const std::size_t n = numel(shape);
  if (dtype == DType::F32) p->f32.assign(n, 0.0f);
  else p->f64.assign(n, 0.0);
  return TensorAccess::wrap(std::move(p));
}

Tensor Tensor::zeros(const Shape& shape, DType dtype) { return make_tensor(shape, dtype); }

Tensor Tensor::full(const Shape& shape, double value, DType dtype) {
  Tensor t = make_tensor(shape, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    auto d = t.mutable_data<T>();
    std::fill(d.begin(), d.end(), static_cast<T>(value));
  });
  return t;
}

Tensor Tensor::from(const Shape& shape, std::vector<float> values) {
  if (values.size() != tensor::numel(shape)) fail(Errc::ShapeMismatch, "value count vs " + to_string(shape));
  auto p = std::make_shared<TensorImpl>();
  p->shape = shape;
  p->dtype = DType::F32;
  p->f32 = std::move(values);
  return Tensor(std::move(p));
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values) {
  if (values.size() != tensor::numel(shape)) fail(Errc::ShapeMismatch, "value count vs " + to_string(shape));
  auto p = std::make_shared<TensorImpl>();
  p->shape = shape;
  p->dtype = DType::F64;
  p->f64 = std::move(values);
  return Tensor(std::move(p));
}

Tensor Tensor::scalar(double value, DType dtype) { return full({}, value, dtype); }

Tensor Tensor::randn(const Shape& shape, CounterRng& rng, double stddev, DType dtype) {
  Tensor t = make_tensor(shape, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(stddev * rng.normal());
  });
  return t;
}

Tensor Tensor::uniform(const Shape& shape, CounterRng& rng, double lo, double hi, DType dtype) {
  Tensor t = make_tensor(shape, dtype);
  dispatch(dtype, [&](auto tag) {
    using T = decltype(tag);
    for (auto& v : t.mutable_data<T>()) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  });
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) fail(Errc::ShapeMismatch, "undefined tensor");
  return impl_->shape;
}

int Tensor::dim(int axis) const {
  const auto& s = shape();
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size())) fail(Errc::ShapeMismatch, "axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return tensor::numel(shape()); }

DType Tensor::dtype() const {
  if (!impl_) fail(Errc::ShapeMismatch, "undefined tensor");
  return impl_->dtype;
}

template <class T>
std::span<const T> Tensor::data() const {
  if (dtype() != (std::is_same_v<T, float> ? DType::F32 : DType::F64)) fail(Errc::ShapeMismatch, "dtype mismatch");
  return impl_->storage<T>();
}

template <class T>
std::span<T> Tensor::mutable_data() {
  if (dtype() != (std::is_same_v<T, float> ? DType::F32 : DType::F64)) fail(Errc::ShapeMismatch, "dtype mismatch");
  return impl_->storage<T>();
}

template std::span<const float> Tensor::data<float>() const;
template std::span<const double> Tensor::data<double>() const;
template std::span<float> Tensor::mutable_data<float>();
template std::span<double> Tensor::mutable_data<double>();

double Tensor::at(std::size_t i) const {
  return dtype() == DType::F32 ? static_cast<double>(impl_->f32.at(i)) : impl_->f64.at(i);
}

double Tensor::item() const {
  if (numel() != 1) fail(Errc::ShapeMismatch, "item() on " + to_string(shape()));
  return at(0);
}

std::vector<double> Tensor::to_vector() const {
  std::vector<double> out(numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = at(i);
  return out;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  shape();
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::is_leaf() const { return impl_ && impl_->leaf; }

Tensor Tensor::grad() const {
  if (!impl_ || !impl_->grad) return {};
  return Tensor(impl_->grad);
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.reset();
}

void Tensor::accumulate_grad(const Tensor& g) {
  if (g.shape() != shape() || g.dtype() != dtype()) fail(Errc::ShapeMismatch, "gradient shape/dtype");
  if (!impl_->grad) {
    impl_->grad = g.clone().impl_;
    return;
  }
  dispatch(dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto& dst = impl_->grad->storage<T>();
    auto src = g.data<T>();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  });
}

Tensor Tensor::clone() const {
  auto p = std::make_shared<TensorImpl>();
  p->shape = shape();
  p->dtype = impl_->dtype;
  p->f32 = impl_->f32;
  p->f64 = impl_->f64;
  return Tensor(std::move(p));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return clone();
  Tensor out = make_tensor(shape(), target);
  if (target == DType::F64) {
    auto src = data<float>();
    std::copy(src.begin(), src.end(), out.mutable_data<double>().begin());
  } else {
    auto src = data<double>();
    auto dst = out.mutable_data<float>();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
  }
  return out;
}

Tensor record(const char* op, std::vector<Tensor> inputs, Tensor out,
              std::function<std::vector<Tensor>(const TapeNode&, const Tensor&)> backward) {
  Tape* tape = active_tape();
  if (!tape) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  auto& impl = TensorAccess::impl(out);
  impl->requires_grad = true;
  impl->leaf = false;
  tape->record(TapeNode{op, std::move(inputs), out, std::move(backward)});
  return out;
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

std::vector<Tape::Adjoint> Tape::sweep(const Tensor& output, bool create_graph) {
  if (!output.defined() || output.numel() != 1)
    fail(Errc::NonScalarLoss, "loss must hold one element, shape " + (output.defined() ? to_string(output.shape()) : "?"));

  std::unordered_map<const TensorImpl*, std::size_t> slot;
  std::vector<Adjoint> adj;
  slot.emplace(output.id(), 0);
  adj.push_back({output, Tensor::full(output.shape(), 1.0, output.dtype())});

  // With create_graph the adjoint ops append to this tape; only the prefix
  // that existed at entry is swept.
  const std::size_t end = nodes_.size();
  std::unique_ptr<TapeScope> record_scope;
  std::unique_ptr<NoGradScope> quiet_scope;
  if (create_graph) record_scope = std::make_unique<TapeScope>(*this);
  else quiet_scope = std::make_unique<NoGradScope>();

  for (std::size_t n = end; n-- > 0;) {
    // Copy: record() may reallocate nodes_ while the backward runs.
    const TapeNode node = nodes_[n];
    auto it = slot.find(node.output.id());
    if (it == slot.end()) continue;
    const Tensor g_out = adj[it->second].grad;
    auto grads = node.backward(node, g_out);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const Tensor& in = node.inputs[k];
      if (!in.requires_grad() || k >= grads.size() || !grads[k].defined()) continue;
      auto [pos, inserted] = slot.emplace(in.id(), adj.size());
      if (inserted) adj.push_back({in, grads[k]});
      else adj[pos->second].grad = add(adj[pos->second].grad, grads[k]);
    }
  }
  return adj;
}

void Tape::backward(const Tensor& loss) {
  for (auto& a : sweep(loss, false))
    if (a.tensor.is_leaf() && a.tensor.requires_grad()) a.tensor.accumulate_grad(a.grad);
}

std::vector<Tensor> Tape::gradients(const Tensor& output, std::span<const Tensor> wrt, bool create_graph) {
  auto adj = sweep(output, create_graph);
  std::unordered_map<const TensorImpl*, std::size_t> index;
  for (std::size_t i = 0; i < adj.size(); ++i) index.emplace(adj[i].tensor.id(), i);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto it = index.find(w.id());
    out.push_back(it == index.end() ? Tensor::zeros(w.shape(), w.dtype()) : adj[it->second].grad);
  }
  return out;
}

}  // namespace microforge::tensor
