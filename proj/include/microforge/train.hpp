#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "microforge/adam.hpp"
#include "microforge/image.hpp"
#include "microforge/stylenet.hpp"

namespace microforge::train {

using stylenet::Discriminator;
using stylenet::Generator;
using stylenet::NetConfig;
using tensor::AdamConfig;
using tensor::AdamState;
using tensor::ParamStore;
using tensor::Tensor;

enum class LossKind { Classic, WganGp };
std::string to_string(LossKind k);
LossKind parse_loss_kind(const std::string& s);

struct TrainConfig {
  NetConfig net;
  LossKind loss = LossKind::WganGp;
  AdamConfig adam{};
  /// Learning rate used from `lr_high_from_resolution` upward.
  double lr_high = 0.0015;
  int lr_high_from_resolution = 128;
  int batch = 16;
  int k_d = 1;
  int k_g = 1;
  double lambda_gp = 10.0;
  /// Outer iterations per phase.
  std::uint64_t iterations_per_phase = 1000;
  /// Images over which a new block's alpha ramps from 0 to 1.
  std::uint64_t fade_in_images = 8000;
  bool progressive = true;
  std::uint64_t seed = 1;

  void validate() const;
  /// Phase resolutions seen by the critic.
  std::vector<int> phases() const;
  double learning_rate(int phase_resolution) const;
};

/// [8, 16, ..., target], or just [target] without progressive growing.
std::vector<int> schedule_resolutions(int target, bool progressive = true, int start = 8);

/// Critic output fed straight to a Wasserstein loss.
struct RawScores {
  Tensor t;
};
/// Critic output after the logistic squashing used by the classic loss.
struct Probabilities {
  Tensor t;
};
Probabilities squash(const RawScores& s);

struct GanLosses {
  Tensor loss_d;
  Tensor loss_g;
  /// mean D(x) - mean D(G(z)) on raw scores; NaN for the classic loss.
  double w_estimate = 0.0;
  double penalty = 0.0;
};

constexpr double kLogClamp = 1e-7;

/// loss_D = -[mean log D(x) + mean log(1 - D(G(z)))], loss_G = -mean log D(G(z)).
GanLosses classic_gan_losses(const Probabilities& real, const Probabilities& fake);

using Critic = std::function<RawScores(const Tensor&)>;

/// mean over the batch of (||grad_xhat D(xhat)||_2 - 1)^2 at xhat = eps*fake + (1-eps)*real;
/// eps has shape [b,1,1,1]. The result stays differentiable in the critic parameters.
Tensor gradient_penalty(const Critic& critic, const Tensor& real, const Tensor& fake, const Tensor& eps);

GanLosses wgan_gp_losses(const Critic& critic, const Tensor& real, const Tensor& fake, const Tensor& eps,
                         double lambda);

/// One row of the loss trace.
struct LossRow {
  std::uint64_t iter = 0;
  int phase = 0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double w_estimate = 0.0;
};

std::string loss_trace_csv(const std::vector<LossRow>& rows);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint64_t iteration = 0;
  std::uint32_t phase = 0;
  float alpha = 1.0f;
  std::array<std::uint8_t, 16> rng_state{};
  std::vector<std::pair<std::string, Tensor>> entries;

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Network architecture stored inside checkpoints so models reload without the original config.
Tensor encode_net_config(const NetConfig& net);
NetConfig decode_net_config(const Tensor& t);

/// Generator rebuilt from a checkpoint's architecture and parameters.
Generator load_generator(const Checkpoint& ck);

/// Progressive real images: 2x box-filter reductions of the patches, from
/// `source` resolution down to `resolution`.
Tensor downscale_reals(const Tensor& source, int resolution);

/// Alternating critic/generator optimisation over the progressive schedule.
class Trainer {
 public:
  Trainer(TrainConfig config, const PatchSet& patches);
  /// Continues from a checkpoint written by a trainer with the same config.
  Trainer(TrainConfig config, const PatchSet& patches, const Checkpoint& resume);
  /// The patch set is borrowed and must outlive the trainer.
  Trainer(TrainConfig, PatchSet&&) = delete;
  Trainer(TrainConfig, PatchSet&&, const Checkpoint&) = delete;

  /// Runs one outer iteration (k_d critic updates then k_g generator updates).
  /// Returns false once the schedule is exhausted.
  bool step();
  /// Steps until the schedule ends or `max_iterations` more have run.
  void run(std::uint64_t max_iterations = UINT64_MAX);
  bool done() const { return iteration_ >= total_iterations(); }

  std::uint64_t iteration() const { return iteration_; }
  std::uint64_t total_iterations() const;
  int phase_resolution() const;
  double alpha() const;

  std::uint64_t critic_updates() const { return critic_updates_; }
  std::uint64_t generator_updates() const { return generator_updates_; }

  /// Fingerprints taken before and after the critic updates of the last
  /// iteration; used to confirm the alternation.
  struct UpdateAudit {
    std::uint64_t g_before_critic = 0, g_after_critic = 0;
    std::uint64_t d_before_gen = 0, d_after_gen = 0;
  };
  const UpdateAudit& last_audit() const { return audit_; }

  const std::vector<LossRow>& trace() const { return trace_; }
  const Generator& generator() const { return g_; }
  Generator& generator() { return g_; }
  const Discriminator& discriminator() const { return d_; }
  const TrainConfig& config() const { return config_; }
  Checkpoint checkpoint() const;

 private:
  int phase_index() const;
  Tensor real_batch(int resolution);
  Tensor fake_batch(int resolution, double alpha, int batch, bool with_grad);
  RawScores critic(const Tensor& x, double alpha) const;
  void load_state(const Checkpoint& ck);

  TrainConfig config_;
  const PatchSet& patches_;
  std::vector<int> phases_;
  int source_resolution_ = 0;
  CounterRng rng_;
  Generator g_;
  Discriminator d_;
  AdamState adam_g_;
  AdamState adam_d_;
  std::uint64_t iteration_ = 0;
  std::uint64_t critic_updates_ = 0;
  std::uint64_t generator_updates_ = 0;
  std::vector<LossRow> trace_;
  UpdateAudit audit_;
};

}  // namespace microforge::train
