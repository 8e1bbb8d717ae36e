#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "microforge/tensor.hpp"

namespace microforge::tensor {

/// Named trainable tensors. `version` bumps on every optimizer update.
class ParamStore {
 public:
  /// Registers a leaf with requires_grad on; names must be unique.
  Tensor& add(const std::string& name, Tensor t);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  std::vector<std::string> names() const;
  std::vector<Tensor> tensors() const;
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  void zero_grad();
  std::uint64_t version() const { return version_; }
  void bump_version() { ++version_; }

  /// FNV-1a over every parameter's bytes, in registration order.
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::uint64_t version_ = 0;
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

/// First/second moments per parameter plus the shared step counter.
struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  /// Zero moments shaped like `params`.
  static AdamState like(std::span<const Tensor> params, AdamConfig config);
};

/// One bias-corrected Adam update of `params` in place; state.t advances by one.
/// Arithmetic runs in double; moments are stored at parameter precision.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);

/// Convenience: steps every parameter of `store` using its accumulated grads
/// (missing grads count as zero).
void adam_step(ParamStore& store, AdamState& state);

}  // namespace microforge::tensor
