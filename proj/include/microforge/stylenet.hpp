#pragma once

#include <map>
#include <string>
#include <vector>

#include "microforge/adam.hpp"
#include "microforge/image.hpp"
#include "microforge/ops.hpp"
#include "microforge/rng.hpp"

namespace microforge::stylenet {

using tensor::DType;
using tensor::ParamStore;
using tensor::Tensor;

enum class Variant { Standard, ResolutionIncrease };

std::string to_string(Variant v);
using tensor::to_string;
Variant parse_variant(const std::string& s);

/// Shared architecture description for the generator and the critic.
struct NetConfig {
  /// Final critic-side resolution; the generator emits twice this under ResolutionIncrease.
  int target_resolution = 128;
  int latent_dim = 64;
  int mapping_depth = 4;
  /// Feature channels per spatial resolution.
  std::map<int, int> channels = default_channels();
  Variant variant = Variant::Standard;
  DType dtype = DType::F32;

  static std::map<int, int> default_channels() {
    return {{8, 128}, {16, 128}, {32, 64}, {64, 32}, {128, 16}, {256, 16}};
  }
  int channels_at(int resolution) const;
  /// Largest resolution the generator ever emits.
  int generator_resolution() const {
    return variant == Variant::ResolutionIncrease ? 2 * target_resolution : target_resolution;
  }
  void validate() const;
};

constexpr double kLeakySlope = 0.2;
constexpr double kNormEps = 1e-8;

/// Per (sample, channel): gamma * (x - mean) / sqrt(var + 1e-8) + beta, with
/// spatial mean and population variance. x[b,c,h,w]; gamma, beta [b,c].
Tensor adain(const Tensor& x, const Tensor& gamma, const Tensor& beta);

/// x + scale_c * noise, noise[b,1,h,w] shared across channels, scale[c].
Tensor add_noise(const Tensor& x, const Tensor& scale, const Tensor& noise);

/// Per pixel: x_c / sqrt(mean_c(x^2) + 1e-8).
Tensor pixel_norm(const Tensor& x);

/// Appends one channel holding the mean over (c,h,w) of the per-position
/// population standard deviation across the batch.
Tensor batch_std(const Tensor& x);

/// Standard-normal noise map [b,1,r,r].
Tensor noise_map(int batch, int resolution, CounterRng& rng, DType dtype);

/// Resolutions of the progressive schedule handled by the generator: 8, 16, ... up to `resolution`.
std::vector<int> block_resolutions(int resolution);

class Generator {
 public:
  Generator(NetConfig config, const CounterRng& init_rng);

  const NetConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Mapping network: `mapping_depth` dense + leaky-ReLU layers, latent_dim wide.
  Tensor map_latent(const Tensor& z) const;

  /// Images [b,1,R,R] at output resolution R. During fade-in the new top block
  /// is blended with the upsampled previous toRGB output:
  /// alpha * new + (1 - alpha) * upsample(prev).
  Tensor generate(const Tensor& z, int resolution, double alpha, CounterRng& noise_rng) const;

  /// Resolution-increase variant: returns {full 2R image, stride-2 view for the critic}.
  std::pair<Tensor, Tensor> generate_upscaled(const Tensor& z, int resolution, double alpha,
                                              CounterRng& noise_rng) const;

  /// Output resolution the generator uses when the critic runs at `critic_resolution`.
  int output_resolution(int critic_resolution) const;

 private:
  Tensor style(const std::string& prefix, const Tensor& w, int stage, Tensor* beta) const;
  Tensor block(int resolution, const Tensor& input, const Tensor& w, CounterRng& noise_rng) const;
  Tensor to_rgb(int resolution, const Tensor& features) const;

  NetConfig config_;
  ParamStore params_;
};

class Discriminator {
 public:
  Discriminator(NetConfig config, const CounterRng& init_rng);

  const NetConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Raw (unsquashed) scores [b,1] for images [b,1,R,R].
  Tensor discriminate(const Tensor& x, double alpha) const;

 private:
  Tensor from_rgb(int resolution, const Tensor& x) const;
  Tensor block(int resolution, const Tensor& h) const;

  NetConfig config_;
  ParamStore params_;
};

/// 8-bit images -> [b,1,h,w] in [-1, 1].
Tensor images_to_tensor(const std::vector<GrayImage>& images, DType dtype = DType::F32);
/// [b,1,h,w] -> 8-bit images, (y + 1) * 127.5 rounded and clamped.
std::vector<GrayImage> tensor_to_images(const Tensor& t);

/// count images from fresh latents and noise drawn from `seed`, in batches.
std::vector<GrayImage> sample_images(const Generator& g, std::size_t count, std::uint64_t seed,
                                     int critic_resolution, std::size_t batch = 16);

}  // namespace microforge::stylenet
