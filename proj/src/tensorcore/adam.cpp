#include "microforge/adam.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "impl.hpp"

namespace microforge::tensor {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) fail(Errc::ConfigInvalid, "duplicate parameter " + name);
  t.set_requires_grad(true);
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  fail(Errc::NotFound, "parameter " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  fail(Errc::NotFound, "parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.first);
  return out;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_) out.push_back(e.second);
  return out;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

std::uint64_t ParamStore::fingerprint() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [name, t] : entries_) {
    feed(name.data(), name.size());
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = t.data<T>();
      feed(d.data(), d.size_bytes());
    });
  }
  return h;
}

AdamState AdamState::like(std::span<const Tensor> params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.shape(), p.dtype()));
    s.v.push_back(Tensor::zeros(p.shape(), p.dtype()));
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    fail(Errc::ShapeMismatch, "adam_step: parameter/gradient/state counts differ");
  const auto& c = state.config;
  if (!(c.lr >= 0.0)) fail(Errc::ConfigInvalid, "adam_step: negative learning rate");
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = params[k];
    const Tensor& g = grads[k];
    if (g.shape() != p.shape() || state.m[k].shape() != p.shape())
      fail(Errc::ShapeMismatch, "adam_step: shape of parameter " + std::to_string(k));
    dispatch(p.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto pd = p.mutable_data<T>();
      auto m = state.m[k].mutable_data<T>();
      auto v = state.v[k].mutable_data<T>();
      for (std::size_t i = 0; i < pd.size(); ++i) {
        const double gi = g.at(i);
        const double mi = c.beta1 * static_cast<double>(m[i]) + (1.0 - c.beta1) * gi;
        const double vi = c.beta2 * static_cast<double>(v[i]) + (1.0 - c.beta2) * gi * gi;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        pd[i] = static_cast<T>(static_cast<double>(pd[i]) - c.lr * mhat / (std::sqrt(vhat) + c.eps));
      }
    });
  }
}

void adam_step(ParamStore& store, AdamState& state) {
  auto& entries = store.entries();
  std::vector<Tensor> params;
  std::vector<Tensor> grads;
  params.reserve(entries.size());
  for (auto& [name, t] : entries) {
    params.push_back(t);
    Tensor g = t.grad();
    grads.push_back(g.defined() ? g : Tensor::zeros(t.shape(), t.dtype()));
  }
  adam_step(params, grads, state);
  store.bump_version();
}

}  // namespace microforge::tensor
