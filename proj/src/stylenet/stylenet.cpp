#include "microforge/stylenet.hpp"

#include <algorithm>
#include <cmath>

namespace microforge::stylenet {

using namespace tensor;
using tensor::to_string;

namespace {

bool is_pow2_at_least_8(int r) { return r >= 8 && (r & (r - 1)) == 0; }

std::string block_name(const char* net, int r) { return std::string(net) + ".b" + std::to_string(r); }

Tensor bias_add(const Tensor& y, const Tensor& b) {
  return add(y, broadcast_to(reshape(b, {1, b.dim(0), 1, 1}), y.shape()));
}

Tensor init_kernel(const Shape& shape, int fan_in, CounterRng& rng, DType dtype) {
  return Tensor::randn(shape, rng, 1.0 / std::sqrt(static_cast<double>(fan_in)), dtype);
}

Tensor lerp(const Tensor& from, const Tensor& to, double alpha) {
  return add(scale(to, alpha), scale(from, 1.0 - alpha));
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::Standard ? "standard" : "resolution_increase"; }

Variant parse_variant(const std::string& s) {
  if (s == "standard") return Variant::Standard;
  if (s == "resolution_increase") return Variant::ResolutionIncrease;
  fail(Errc::ConfigInvalid, "unknown variant '" + s + "'");
}

int NetConfig::channels_at(int resolution) const {
  auto it = channels.find(resolution);
  if (it == channels.end()) fail(Errc::ConfigInvalid, "channel table has no entry for " + std::to_string(resolution));
  return it->second;
}

void NetConfig::validate() const {
  static constexpr int kAllowed[] = {8, 16, 32, 64, 128, 256};
  if (std::find(std::begin(kAllowed), std::end(kAllowed), target_resolution) == std::end(kAllowed))
    fail(Errc::ConfigInvalid, "target resolution must be one of 8..256, got " + std::to_string(target_resolution));
  if (latent_dim < 1 || mapping_depth < 0) fail(Errc::ConfigInvalid, "latent_dim >= 1 and mapping_depth >= 0");
  for (int r : block_resolutions(generator_resolution()))
    if (channels_at(r) < 1) fail(Errc::ConfigInvalid, "channel count must be >= 1");
}

std::vector<int> block_resolutions(int resolution) {
  if (!is_pow2_at_least_8(resolution)) fail(Errc::ResolutionNotInSchedule, std::to_string(resolution));
  std::vector<int> out;
  for (int r = 8; r <= resolution; r *= 2) out.push_back(r);
  return out;
}

Tensor adain(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.rank() != 4 || gamma.shape() != Shape{x.dim(0), x.dim(1)} || beta.shape() != gamma.shape())
    fail(Errc::ShapeMismatch, "adain: x " + to_string(x.shape()) + ", gamma " + to_string(gamma.shape()) +
                                  ", beta " + to_string(beta.shape()));
  const Shape stat{x.dim(0), x.dim(1), 1, 1};
  const Tensor centered = sub(x, broadcast_to(mean_to(x, stat), x.shape()));
  const Tensor var = mean_to(mul(centered, centered), stat);
  const Tensor gain = mul(reshape(gamma, stat), rsqrt(add_scalar(var, kNormEps)));
  return add(mul(centered, broadcast_to(gain, x.shape())), broadcast_to(reshape(beta, stat), x.shape()));
}

Tensor add_noise(const Tensor& x, const Tensor& scale_c, const Tensor& noise) {
  if (x.rank() != 4 || scale_c.shape() != Shape{x.dim(1)} ||
      noise.shape() != Shape{x.dim(0), 1, x.dim(2), x.dim(3)})
    fail(Errc::ShapeMismatch, "add_noise: x " + to_string(x.shape()) + ", scale " + to_string(scale_c.shape()) +
                                  ", noise " + to_string(noise.shape()));
  const Tensor s = broadcast_to(reshape(scale_c, {1, x.dim(1), 1, 1}), x.shape());
  return add(x, mul(s, broadcast_to(noise, x.shape())));
}

Tensor pixel_norm(const Tensor& x) {
  if (x.rank() != 4) fail(Errc::ShapeMismatch, "pixel_norm: rank 4 expected");
  const Tensor ms = mean_to(mul(x, x), {x.dim(0), 1, x.dim(2), x.dim(3)});
  return mul(x, broadcast_to(rsqrt(add_scalar(ms, kNormEps)), x.shape()));
}

Tensor batch_std(const Tensor& x) {
  if (x.rank() != 4) fail(Errc::ShapeMismatch, "batch_std: rank 4 expected");
  const Shape per_pos{1, x.dim(1), x.dim(2), x.dim(3)};
  const Tensor centered = sub(x, broadcast_to(mean_to(x, per_pos), x.shape()));
  const Tensor sd = sqrt(add_scalar(mean_to(mul(centered, centered), per_pos), kNormEps));
  const Tensor avg = reshape(mean(sd), {1, 1, 1, 1});
  return concat_channels(x, broadcast_to(avg, {x.dim(0), 1, x.dim(2), x.dim(3)}));
}

Tensor noise_map(int batch, int resolution, CounterRng& rng, DType dtype) {
  return Tensor::randn({batch, 1, resolution, resolution}, rng, 1.0, dtype);
}

// ---------------------------------------------------------------- generator

Generator::Generator(NetConfig config, const CounterRng& init_rng) : config_(std::move(config)) {
  config_.validate();
  const DType dt = config_.dtype;
  const int L = config_.latent_dim;
  CounterRng rng = init_rng.split("generator");

  for (int i = 0; i < config_.mapping_depth; ++i) {
    const std::string p = "G.map" + std::to_string(i);
    params_.add(p + ".W", init_kernel({L, L}, L, rng, dt));
    params_.add(p + ".b", Tensor::zeros({L}, dt));
  }
  int prev_c = 0;
  for (int r : block_resolutions(config_.generator_resolution())) {
    const int c = config_.channels_at(r);
    const std::string p = block_name("G", r);
    if (r == 8) {
      params_.add(p + ".const", Tensor::randn({1, c, 8, 8}, rng, 1.0, dt));
    } else {
      params_.add(p + ".deconv.k", init_kernel({prev_c, c, 3, 3}, prev_c * 9, rng, dt));
      params_.add(p + ".deconv.b", Tensor::zeros({c}, dt));
      params_.add(p + ".conv0.k", init_kernel({c, c, 3, 3}, c * 9, rng, dt));
      params_.add(p + ".conv0.b", Tensor::zeros({c}, dt));
    }
    params_.add(p + ".conv1.k", init_kernel({c, c, 3, 3}, c * 9, rng, dt));
    params_.add(p + ".conv1.b", Tensor::zeros({c}, dt));
    for (int s = 0; s < 2; ++s) {
      const std::string sp = p + ".s" + std::to_string(s);
      params_.add(sp + ".noise", Tensor::zeros({c}, dt));
      params_.add(sp + ".style.W", init_kernel({L, 2 * c}, L, rng, dt));
      std::vector<double> sb(2 * c, 0.0);
      std::fill(sb.begin(), sb.begin() + c, 1.0);  // gamma starts at 1, beta at 0
      params_.add(sp + ".style.b", Tensor::from({2 * c}, std::move(sb)).to(dt));
    }
    params_.add(p + ".torgb.k", init_kernel({1, c, 1, 1}, c, rng, dt));
    params_.add(p + ".torgb.b", Tensor::zeros({1}, dt));
    prev_c = c;
  }
}

Tensor Generator::map_latent(const Tensor& z) const {
  if (z.rank() != 2 || z.dim(1) != config_.latent_dim)
    fail(Errc::ShapeMismatch, "map_latent: z " + to_string(z.shape()));
  Tensor w = z;
  for (int i = 0; i < config_.mapping_depth; ++i) {
    const std::string p = "G.map" + std::to_string(i);
    w = leaky_relu(dense(w, params_.get(p + ".W"), params_.get(p + ".b")), kLeakySlope);
  }
  return w;
}

Tensor Generator::style(const std::string& prefix, const Tensor& w, int stage, Tensor* beta) const {
  const std::string sp = prefix + ".s" + std::to_string(stage);
  const Tensor gb = dense(w, params_.get(sp + ".style.W"), params_.get(sp + ".style.b"));
  const int b = gb.dim(0), c2 = gb.dim(1), c = c2 / 2;
  const Tensor as4 = reshape(gb, {b, c2, 1, 1});
  *beta = reshape(slice_channels(as4, c, c), {b, c});
  return reshape(slice_channels(as4, 0, c), {b, c});
}

Tensor Generator::block(int r, const Tensor& input, const Tensor& w, CounterRng& noise_rng) const {
  const std::string p = block_name("G", r);
  const int batch = w.dim(0);
  const DType dt = config_.dtype;
  Tensor beta;
  Tensor x;
  if (r == 8) {
    const Tensor& k = params_.get(p + ".const");
    x = broadcast_to(k, {batch, k.dim(1), 8, 8});
    x = add_noise(x, params_.get(p + ".s0.noise"), noise_map(batch, r, noise_rng, dt));
  } else {
    x = bias_add(deconv2d(input, params_.get(p + ".deconv.k"), 2), params_.get(p + ".deconv.b"));
    x = bias_add(conv2d(x, params_.get(p + ".conv0.k"), 1, 1), params_.get(p + ".conv0.b"));
    x = add_noise(x, params_.get(p + ".s0.noise"), noise_map(batch, r, noise_rng, dt));
    x = leaky_relu(x, kLeakySlope);
  }
  Tensor gamma = style(p, w, 0, &beta);
  x = adain(x, gamma, beta);

  x = bias_add(conv2d(x, params_.get(p + ".conv1.k"), 1, 1), params_.get(p + ".conv1.b"));
  x = add_noise(x, params_.get(p + ".s1.noise"), noise_map(batch, r, noise_rng, dt));
  x = leaky_relu(x, kLeakySlope);
  gamma = style(p, w, 1, &beta);
  return adain(x, gamma, beta);
}

Tensor Generator::to_rgb(int r, const Tensor& features) const {
  const std::string p = block_name("G", r);
  return bias_add(conv2d(features, params_.get(p + ".torgb.k"), 1, 0), params_.get(p + ".torgb.b"));
}

Tensor Generator::generate(const Tensor& z, int resolution, double alpha, CounterRng& noise_rng) const {
  if (!is_pow2_at_least_8(resolution) || resolution > config_.generator_resolution())
    fail(Errc::ResolutionNotInSchedule, "generator resolution " + std::to_string(resolution));
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(Errc::ConfigInvalid, "fade-in alpha must lie in [0, 1]");
  const Tensor w = map_latent(z);
  Tensor prev;
  Tensor x;
  for (int r : block_resolutions(resolution)) {
    prev = x;
    x = block(r, x, w, noise_rng);
  }
  Tensor out = to_rgb(resolution, x);
  if (alpha < 1.0 && resolution > 8) out = lerp(upsample2(to_rgb(resolution / 2, prev)), out, alpha);
  return out;
}

std::pair<Tensor, Tensor> Generator::generate_upscaled(const Tensor& z, int resolution, double alpha,
                                                       CounterRng& noise_rng) const {
  if (config_.variant != Variant::ResolutionIncrease)
    fail(Errc::VariantDisabled, "generate_upscaled needs the resolution_increase variant");
  Tensor full = generate(z, 2 * resolution, alpha, noise_rng);
  Tensor view = subsample2(full);
  return {full, view};
}

int Generator::output_resolution(int critic_resolution) const {
  return config_.variant == Variant::ResolutionIncrease ? 2 * critic_resolution : critic_resolution;
}

// ------------------------------------------------------------ discriminator

Discriminator::Discriminator(NetConfig config, const CounterRng& init_rng) : config_(std::move(config)) {
  config_.validate();
  const DType dt = config_.dtype;
  CounterRng rng = init_rng.split("discriminator");
  for (int r : block_resolutions(config_.target_resolution)) {
    const int c = config_.channels_at(r);
    const int c_out = r == 8 ? c : config_.channels_at(r / 2);
    const std::string p = block_name("D", r);
    params_.add(p + ".fromrgb.k", init_kernel({c, 1, 1, 1}, 1, rng, dt));
    params_.add(p + ".fromrgb.b", Tensor::zeros({c}, dt));
    params_.add(p + ".conv0.k", init_kernel({c, c, 3, 3}, c * 9, rng, dt));
    params_.add(p + ".conv0.b", Tensor::zeros({c}, dt));
    params_.add(p + ".conv1.k", init_kernel({c_out, c, 3, 3}, c * 9, rng, dt));
    params_.add(p + ".conv1.b", Tensor::zeros({c_out}, dt));
  }
  const int c4 = config_.channels_at(8);
  params_.add("D.final.conv3.k", init_kernel({c4, c4 + 1, 3, 3}, (c4 + 1) * 9, rng, dt));
  params_.add("D.final.conv3.b", Tensor::zeros({c4}, dt));
  params_.add("D.final.conv4.k", init_kernel({c4, c4, 4, 4}, c4 * 16, rng, dt));
  params_.add("D.final.conv4.b", Tensor::zeros({c4}, dt));
  params_.add("D.dense.W", init_kernel({c4, 1}, c4, rng, dt));
  params_.add("D.dense.b", Tensor::zeros({1}, dt));
}

Tensor Discriminator::from_rgb(int r, const Tensor& x) const {
  const std::string p = block_name("D", r);
  return leaky_relu(bias_add(conv2d(x, params_.get(p + ".fromrgb.k"), 1, 0), params_.get(p + ".fromrgb.b")),
                    kLeakySlope);
}

Tensor Discriminator::block(int r, const Tensor& h0) const {
  const std::string p = block_name("D", r);
  Tensor h = leaky_relu(bias_add(conv2d(h0, params_.get(p + ".conv0.k"), 1, 1), params_.get(p + ".conv0.b")),
                        kLeakySlope);
  h = leaky_relu(bias_add(conv2d(h, params_.get(p + ".conv1.k"), 1, 1), params_.get(p + ".conv1.b")), kLeakySlope);
  return pixel_norm(avg_pool2(h));
}

Tensor Discriminator::discriminate(const Tensor& x, double alpha) const {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != x.dim(3))
    fail(Errc::ShapeMismatch, "discriminate: expected [b,1,R,R], got " + to_string(x.shape()));
  const int R = x.dim(2);
  if (!is_pow2_at_least_8(R) || R > config_.target_resolution)
    fail(Errc::ResolutionMismatch, "critic input resolution " + std::to_string(R));
  if (!(alpha >= 0.0 && alpha <= 1.0)) fail(Errc::ConfigInvalid, "fade-in alpha must lie in [0, 1]");

  Tensor h = block(R, from_rgb(R, x));
  if (alpha < 1.0 && R > 8) h = lerp(from_rgb(R / 2, avg_pool2(x)), h, alpha);
  for (int r = R / 2; r >= 8; r /= 2) h = block(r, h);

  h = batch_std(h);
  h = leaky_relu(bias_add(conv2d(h, params_.get("D.final.conv3.k"), 1, 1), params_.get("D.final.conv3.b")),
                 kLeakySlope);
  h = leaky_relu(bias_add(conv2d(h, params_.get("D.final.conv4.k"), 1, 0), params_.get("D.final.conv4.b")),
                 kLeakySlope);
  h = reshape(h, {h.dim(0), h.dim(1)});
  return dense(h, params_.get("D.dense.W"), params_.get("D.dense.b"));
}

// ------------------------------------------------------------------ images

Tensor images_to_tensor(const std::vector<GrayImage>& images, DType dtype) {
  if (images.empty()) fail(Errc::EmptySet, "no images");
  const int h = images[0].height(), w = images[0].width();
  std::vector<double> v;
  v.reserve(images.size() * h * w);
  for (const auto& img : images) {
    if (img.width() != w || img.height() != h) fail(Errc::ShapeMismatch, "images differ in size");
    for (auto p : img.pixels()) v.push_back(p / 127.5 - 1.0);
  }
  return Tensor::from({static_cast<int>(images.size()), 1, h, w}, std::move(v)).to(dtype);
}

std::vector<GrayImage> tensor_to_images(const Tensor& t) {
  if (t.rank() != 4 || t.dim(1) != 1) fail(Errc::ShapeMismatch, "tensor_to_images: [b,1,h,w] expected");
  const int b = t.dim(0), h = t.dim(2), w = t.dim(3);
  std::vector<GrayImage> out;
  out.reserve(b);
  std::size_t k = 0;
  for (int n = 0; n < b; ++n) {
    GrayImage img(w, h);
    for (auto& p : img.pixels()) {
      const double v = std::round((t.at(k++) + 1.0) * 127.5);
      p = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
    }
    out.push_back(std::move(img));
  }
  return out;
}

std::vector<GrayImage> sample_images(const Generator& g, std::size_t count, std::uint64_t seed,
                                     int critic_resolution, std::size_t batch) {
  NoGradScope quiet;
  CounterRng root(seed);
  CounterRng latent_rng = root.split("sample-latent");
  CounterRng noise_rng = root.split("sample-noise");
  const int res = g.output_resolution(critic_resolution);
  std::vector<GrayImage> out;
  out.reserve(count);
  while (out.size() < count) {
    const int b = static_cast<int>(std::min(batch, count - out.size()));
    const Tensor z = Tensor::randn({b, g.config().latent_dim}, latent_rng, 1.0, g.config().dtype);
    auto imgs = tensor_to_images(g.generate(z, res, 1.0, noise_rng));
    for (auto& img : imgs) out.push_back(std::move(img));
  }
  return out;
}

}  // namespace microforge::stylenet
