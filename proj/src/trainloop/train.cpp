#include "microforge/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <sstream>

#include "microforge/fileio.hpp"
#include "microforge/ops.hpp"

namespace microforge::train {

using namespace tensor;
using tensor::to_string;

namespace {

constexpr char kMagic[4] = {'M', 'G', 'C', 'K'};

bool is_pow2(int v) { return v > 0 && (v & (v - 1)) == 0; }

void assign(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape())
    fail(Errc::ShapeMismatch, "checkpoint tensor " + to_string(src.shape()) + " vs " + to_string(dst.shape()));
  const Tensor s = src.to(dst.dtype());
  if (dst.dtype() == DType::F32) {
    auto d = s.data<float>();
    std::copy(d.begin(), d.end(), dst.mutable_data<float>().begin());
  } else {
    auto d = s.data<double>();
    std::copy(d.begin(), d.end(), dst.mutable_data<double>().begin());
  }
}

void store_params(Checkpoint& ck, const ParamStore& ps) {
  for (const auto& [name, t] : ps.entries()) ck.entries.emplace_back(name, t.to(DType::F32));
}

void store_adam(Checkpoint& ck, const ParamStore& ps, const AdamState& st, const std::string& tag) {
  const auto& e = ps.entries();
  for (std::size_t k = 0; k < e.size(); ++k) {
    ck.entries.emplace_back("adam." + tag + ".m/" + e[k].first, st.m[k].to(DType::F32));
    ck.entries.emplace_back("adam." + tag + ".v/" + e[k].first, st.v[k].to(DType::F32));
  }
}

void restore_params(const Checkpoint& ck, ParamStore& ps) {
  for (auto& [name, t] : ps.entries()) assign(t, ck.get(name));
}

void restore_adam(const Checkpoint& ck, const ParamStore& ps, AdamState& st, const std::string& tag) {
  const auto& e = ps.entries();
  for (std::size_t k = 0; k < e.size(); ++k) {
    assign(st.m[k], ck.get("adam." + tag + ".m/" + e[k].first));
    assign(st.v[k], ck.get("adam." + tag + ".v/" + e[k].first));
  }
}

Tensor mean_log(const Tensor& p) { return mean(log(clamp_min(p, kLogClamp))); }

}  // namespace

std::string to_string(LossKind k) { return k == LossKind::Classic ? "classic" : "wgan_gp"; }

LossKind parse_loss_kind(const std::string& s) {
  if (s == "classic") return LossKind::Classic;
  if (s == "wgan_gp") return LossKind::WganGp;
  fail(Errc::ConfigInvalid, "unknown loss '" + s + "'");
}

void TrainConfig::validate() const {
  net.validate();
  if (batch < 1) fail(Errc::ConfigInvalid, "batch must be >= 1");
  if (k_d < 1 || k_g < 1) fail(Errc::ConfigInvalid, "k_d and k_g must be >= 1");
  if (!(lambda_gp >= 0.0)) fail(Errc::ConfigInvalid, "lambda_gp must be >= 0");
  if (!(adam.lr >= 0.0) || !(lr_high >= 0.0)) fail(Errc::ConfigInvalid, "learning rates must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
    fail(Errc::ConfigInvalid, "Adam betas must lie in [0, 1)");
}

std::vector<int> TrainConfig::phases() const { return schedule_resolutions(net.target_resolution, progressive); }

double TrainConfig::learning_rate(int phase_resolution) const {
  return phase_resolution >= lr_high_from_resolution ? lr_high : adam.lr;
}

std::vector<int> schedule_resolutions(int target, bool progressive, int start) {
  if (!is_pow2(target) || target < 8) fail(Errc::BadTarget, "target must be a power of two >= 8, got " + std::to_string(target));
  if (!is_pow2(start) || start < 8 || start > target) fail(Errc::BadTarget, "bad start resolution");
  if (!progressive) return {target};
  std::vector<int> out;
  for (int r = start; r <= target; r *= 2) out.push_back(r);
  return out;
}

Probabilities squash(const RawScores& s) { return {sigmoid(s.t)}; }

GanLosses classic_gan_losses(const Probabilities& real, const Probabilities& fake) {
  GanLosses out;
  out.loss_d = neg(add(mean_log(real.t), mean_log(add_scalar(neg(fake.t), 1.0))));
  out.loss_g = neg(mean_log(fake.t));
  out.w_estimate = std::numeric_limits<double>::quiet_NaN();
  return out;
}

Tensor gradient_penalty(const Critic& critic, const Tensor& real, const Tensor& fake, const Tensor& eps) {
  if (real.shape() != fake.shape() || real.rank() < 1 || eps.numel() != static_cast<std::size_t>(real.dim(0)))
    fail(Errc::ShapeMismatch, "gradient_penalty: real " + to_string(real.shape()) + ", fake " +
                                  to_string(fake.shape()) + ", eps " + to_string(eps.shape()));
  Tape local;
  Tape* tape = active_tape();
  std::optional<TapeScope> scope;
  if (!tape) {
    tape = &local;
    scope.emplace(local);
  }
  Shape per_sample(real.rank(), 1);
  per_sample[0] = real.dim(0);
  Tensor xhat;
  {
    NoGradScope quiet;
    const Tensor e = broadcast_to(reshape(eps.to(real.dtype()), per_sample), real.shape());
    xhat = add(mul(e, fake.detach()), mul(add_scalar(neg(e), 1.0), real.detach()));
  }
  xhat.set_requires_grad(true);
  const RawScores scores = critic(xhat);
  const Tensor g = tape->gradients(sum(scores.t), std::span<const Tensor>(&xhat, 1), true)[0];
  const Tensor norm = sqrt(add_scalar(sum_to(mul(g, g), per_sample), 1e-12));
  const Tensor dev = add_scalar(norm, -1.0);
  return mean(mul(dev, dev));
}

GanLosses wgan_gp_losses(const Critic& critic, const Tensor& real, const Tensor& fake, const Tensor& eps,
                         double lambda) {
  GanLosses out;
  const Tensor sr = mean(critic(real).t);
  const Tensor sf = mean(critic(fake).t);
  out.w_estimate = sr.item() - sf.item();
  out.loss_g = neg(sf);
  Tensor loss = sub(sf, sr);
  if (lambda > 0.0) {
    const Tensor gp = gradient_penalty(critic, real, fake, eps);
    out.penalty = gp.item();
    loss = add(loss, scale(gp, lambda));
  }
  out.loss_d = loss;
  return out;
}

std::string loss_trace_csv(const std::vector<LossRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "iter,phase,loss_d,loss_g,w_estimate\n";
  for (const auto& r : rows)
    os << r.iter << ',' << r.phase << ',' << r.loss_d << ',' << r.loss_g << ',' << r.w_estimate << '\n';
  return os.str();
}

// -------------------------------------------------------------- checkpoints

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries)
    if (n == name) return t;
  fail(Errc::CorruptFile, "checkpoint has no entry " + name);
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries.begin(), entries.end(), [&](const auto& e) { return e.first == name; });
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kMagic), 4));
  w.u32(Checkpoint::kVersion);
  w.u64(ck.iteration);
  w.u32(ck.phase);
  w.f32(ck.alpha);
  w.bytes(ck.rng_state);
  w.u32(static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& [name, t] : ck.entries) {
    if (name.size() > 0xffff) fail(Errc::ConfigInvalid, "entry name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.text(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.numel(); ++i) w.f32(static_cast<float>(t.at(i)));
  }
  return w.buffer();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (r.text(4) != std::string(kMagic, 4)) fail(Errc::CorruptFile, "not a checkpoint (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != Checkpoint::kVersion)
    fail(Errc::VersionMismatch, "checkpoint version " + std::to_string(version) + ", expected " +
                                    std::to_string(Checkpoint::kVersion));
  Checkpoint ck;
  ck.iteration = r.u64();
  ck.phase = r.u32();
  ck.alpha = r.f32();
  const auto rs = r.bytes(16);
  std::copy(rs.begin(), rs.end(), ck.rng_state.begin());
  const std::uint32_t n = r.u32();
  for (std::uint32_t k = 0; k < n; ++k) {
    const std::uint16_t len = r.u16();
    std::string name = r.text(len);
    const int rank = r.u8();
    Shape shape(rank);
    std::size_t count = 1;
    for (auto& d : shape) {
      const std::uint32_t v = r.u32();
      if (v == 0 || v > (1u << 28)) fail(Errc::CorruptFile, "implausible extent in " + name);
      d = static_cast<int>(v);
      count *= v;
    }
    if (count * 4 > r.remaining()) fail(Errc::CorruptFile, "truncated payload in " + name);
    std::vector<float> vals(count);
    for (auto& v : vals) v = r.f32();
    ck.entries.emplace_back(std::move(name), Tensor::from(shape, std::move(vals)));
  }
  if (r.remaining() != 0) fail(Errc::CorruptFile, "trailing bytes after checkpoint");
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  write_file_atomic(path, encode_checkpoint(ck));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Tensor encode_net_config(const NetConfig& net) {
  std::vector<float> v{static_cast<float>(net.target_resolution), static_cast<float>(net.latent_dim),
                       static_cast<float>(net.mapping_depth),
                       net.variant == stylenet::Variant::ResolutionIncrease ? 1.0f : 0.0f,
                       static_cast<float>(net.channels.size())};
  for (const auto& [r, c] : net.channels) {
    v.push_back(static_cast<float>(r));
    v.push_back(static_cast<float>(c));
  }
  const int n = static_cast<int>(v.size());
  return Tensor::from({n}, std::move(v));
}

NetConfig decode_net_config(const Tensor& t) {
  const auto v = t.to_vector();
  if (v.size() < 5 || v.size() != 5 + 2 * static_cast<std::size_t>(v[4]))
    fail(Errc::CorruptFile, "malformed architecture entry");
  NetConfig net;
  net.target_resolution = static_cast<int>(v[0]);
  net.latent_dim = static_cast<int>(v[1]);
  net.mapping_depth = static_cast<int>(v[2]);
  net.variant = v[3] != 0.0 ? stylenet::Variant::ResolutionIncrease : stylenet::Variant::Standard;
  net.channels.clear();
  for (std::size_t i = 5; i + 1 < v.size(); i += 2) net.channels[static_cast<int>(v[i])] = static_cast<int>(v[i + 1]);
  net.validate();
  return net;
}

Generator load_generator(const Checkpoint& ck) {
  Generator g(decode_net_config(ck.get("config.arch")), CounterRng(0));
  restore_params(ck, g.params());
  return g;
}

Tensor downscale_reals(const Tensor& source, int resolution) {
  if (source.rank() != 4 || !is_pow2(resolution) || source.dim(2) < resolution ||
      source.dim(2) % resolution != 0 || !is_pow2(source.dim(2) / resolution))
    fail(Errc::ResolutionMismatch,
         "cannot reduce " + to_string(source.shape()) + " to " + std::to_string(resolution));
  Tensor x = source;
  while (x.dim(2) > resolution) x = avg_pool2(x);
  return x;
}

// ------------------------------------------------------------------ trainer

Trainer::Trainer(TrainConfig config, const PatchSet& patches)
    : config_((config.validate(), std::move(config))),
      patches_(patches),
      phases_(config_.phases()),
      rng_(CounterRng(config_.seed).split("train")),
      g_(config_.net, CounterRng(config_.seed).split("init")),
      d_(config_.net, CounterRng(config_.seed).split("init")) {
  source_resolution_ = config_.net.generator_resolution();
  if (patches_.count() == 0) fail(Errc::EmptySet, "no training patches");
  if (patches_.patch_size() != source_resolution_)
    fail(Errc::ConfigInvalid, "patch size " + std::to_string(patches_.patch_size()) + " does not match the " +
                                  std::to_string(source_resolution_) + " pixel generator output");
  adam_g_ = AdamState::like(g_.params().tensors(), config_.adam);
  adam_d_ = AdamState::like(d_.params().tensors(), config_.adam);
}

Trainer::Trainer(TrainConfig config, const PatchSet& patches, const Checkpoint& resume)
    : Trainer(std::move(config), patches) {
  load_state(resume);
}

void Trainer::load_state(const Checkpoint& ck) {
  const NetConfig stored = decode_net_config(ck.get("config.arch"));
  if (stored.target_resolution != config_.net.target_resolution || stored.channels != config_.net.channels ||
      stored.latent_dim != config_.net.latent_dim || stored.mapping_depth != config_.net.mapping_depth ||
      stored.variant != config_.net.variant)
    fail(Errc::ConfigInvalid, "checkpoint architecture differs from the training config");
  if (ck.iteration > total_iterations()) fail(Errc::ConfigInvalid, "checkpoint is past the end of the schedule");
  restore_params(ck, g_.params());
  restore_params(ck, d_.params());
  restore_adam(ck, g_.params(), adam_g_, "G");
  restore_adam(ck, d_.params(), adam_d_, "D");
  iteration_ = ck.iteration;
  critic_updates_ = iteration_ * static_cast<std::uint64_t>(config_.k_d);
  generator_updates_ = iteration_ * static_cast<std::uint64_t>(config_.k_g);
  adam_d_.t = critic_updates_;
  adam_g_.t = generator_updates_;
  rng_ = CounterRng::from_state(ck.rng_state);
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.iteration = iteration_;
  ck.phase = static_cast<std::uint32_t>(phase_resolution());
  ck.alpha = static_cast<float>(alpha());
  ck.rng_state = rng_.state();
  ck.entries.emplace_back("config.arch", encode_net_config(config_.net));
  store_params(ck, g_.params());
  store_params(ck, d_.params());
  store_adam(ck, g_.params(), adam_g_, "G");
  store_adam(ck, d_.params(), adam_d_, "D");
  return ck;
}

std::uint64_t Trainer::total_iterations() const { return config_.iterations_per_phase * phases_.size(); }

int Trainer::phase_index() const {
  if (config_.iterations_per_phase == 0) return static_cast<int>(phases_.size()) - 1;
  return static_cast<int>(std::min<std::uint64_t>(iteration_ / config_.iterations_per_phase, phases_.size() - 1));
}

int Trainer::phase_resolution() const { return phases_[phase_index()]; }

double Trainer::alpha() const {
  const int p = phase_index();
  if (p == 0 || config_.fade_in_images == 0 || config_.iterations_per_phase == 0) return 1.0;
  const std::uint64_t into = iteration_ - static_cast<std::uint64_t>(p) * config_.iterations_per_phase;
  const double seen = static_cast<double>(into) * config_.batch;
  return std::min(1.0, seen / static_cast<double>(config_.fade_in_images));
}

Tensor Trainer::real_batch(int resolution) {
  std::vector<GrayImage> imgs;
  imgs.reserve(config_.batch);
  for (int i = 0; i < config_.batch; ++i) imgs.push_back(patches_.patch(rng_.below(patches_.count())));
  Tensor x = stylenet::images_to_tensor(imgs, config_.net.dtype);
  if (config_.net.variant == stylenet::Variant::ResolutionIncrease) x = subsample2(x);
  return downscale_reals(x, resolution);
}

Tensor Trainer::fake_batch(int resolution, double alpha, int batch, bool with_grad) {
  std::optional<NoGradScope> quiet;
  if (!with_grad) quiet.emplace();
  const Tensor z = Tensor::randn({batch, config_.net.latent_dim}, rng_, 1.0, config_.net.dtype);
  if (config_.net.variant == stylenet::Variant::ResolutionIncrease)
    return g_.generate_upscaled(z, resolution, alpha, rng_).second;
  return g_.generate(z, resolution, alpha, rng_);
}

RawScores Trainer::critic(const Tensor& x, double alpha) const { return {d_.discriminate(x, alpha)}; }

bool Trainer::step() {
  if (done()) return false;
  const int res = phase_resolution();
  const double a = alpha();
  const double lr = config_.learning_rate(res);
  adam_d_.config.lr = lr;
  adam_g_.config.lr = lr;
  const Critic crit = [&](const Tensor& x) { return critic(x, a); };

  LossRow row;
  row.iter = iteration_;
  row.phase = res;

  audit_.g_before_critic = g_.params().fingerprint();
  for (int k = 0; k < config_.k_d; ++k) {
    Tape tape;
    TapeScope scope(tape);
    d_.params().zero_grad();
    const Tensor real = real_batch(res);
    const Tensor fake = fake_batch(res, a, config_.batch, false);
    GanLosses l;
    if (config_.loss == LossKind::WganGp) {
      const Tensor eps = Tensor::uniform({config_.batch, 1, 1, 1}, rng_, 0.0, 1.0, config_.net.dtype);
      l = wgan_gp_losses(crit, real, fake, eps, config_.lambda_gp);
    } else {
      const RawScores sr = crit(real), sf = crit(fake);
      l = classic_gan_losses(squash(sr), squash(sf));
      l.w_estimate = mean(sr.t).item() - mean(sf.t).item();
    }
    tape.backward(l.loss_d);
    adam_step(d_.params(), adam_d_);
    ++critic_updates_;
    row.loss_d = l.loss_d.item();
    row.w_estimate = l.w_estimate;
  }
  audit_.g_after_critic = g_.params().fingerprint();

  audit_.d_before_gen = d_.params().fingerprint();
  for (int k = 0; k < config_.k_g; ++k) {
    Tape tape;
    TapeScope scope(tape);
    g_.params().zero_grad();
    const RawScores sf = crit(fake_batch(res, a, config_.batch, true));
    const Tensor loss = config_.loss == LossKind::WganGp ? neg(mean(sf.t)) : neg(mean_log(squash(sf).t));
    tape.backward(loss);
    adam_step(g_.params(), adam_g_);
    ++generator_updates_;
    row.loss_g = loss.item();
  }
  audit_.d_after_gen = d_.params().fingerprint();

  trace_.push_back(row);
  ++iteration_;
  return true;
}

void Trainer::run(std::uint64_t max_iterations) {
  for (std::uint64_t i = 0; i < max_iterations && step(); ++i) {
  }
}

}  // namespace microforge::train
