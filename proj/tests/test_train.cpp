#include <doctest.h>

#include <cmath>
#include <cstring>

#include "microforge/fileio.hpp"
#include "microforge/train.hpp"
#include "support.hpp"

using namespace microforge;
using namespace microforge::train;
using tensor::DType;
using tensor::Shape;

namespace {

TrainConfig tiny(int target, bool progressive, std::uint64_t iters) {
  TrainConfig t;
  t.net.target_resolution = target;
  t.net.latent_dim = 8;
  t.net.mapping_depth = 1;
  t.net.channels = {{8, 4}, {16, 3}, {32, 2}};
  t.batch = 4;
  t.iterations_per_phase = iters;
  t.fade_in_images = 8;
  t.progressive = progressive;
  t.seed = 3;
  return t;
}

PatchSet patches_for(int size, std::size_t n = 40) {
  CounterRng rng(1);
  return extract_patches(testsupport::random_image(48, 48, rng), size, n, 2);
}

bool same_params(const ParamStore& a, const ParamStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto x = a.entries()[i].second.data<float>(), y = b.entries()[i].second.data<float>();
    if (a.entries()[i].first != b.entries()[i].first || x.size() != y.size() ||
        std::memcmp(x.data(), y.data(), x.size_bytes()) != 0)
      return false;
  }
  return true;
}

Tensor column(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return Tensor::from({n, 1}, std::move(v));
}

}  // namespace

TEST_CASE("classic GAN losses") {
  const Probabilities half{Tensor::full({4, 1}, 0.5, DType::F64)};
  const auto l = classic_gan_losses(half, half);
  CHECK(l.loss_d.item() == doctest::Approx(std::log(4.0)));
  CHECK(l.loss_g.item() == doctest::Approx(std::log(2.0)));
  CHECK(std::isnan(l.w_estimate));
  const auto perfect = classic_gan_losses({Tensor::full({4, 1}, 1.0, DType::F64)}, {Tensor::zeros({4, 1}, DType::F64)});
  CHECK(perfect.loss_d.item() == doctest::Approx(0.0));
  // Saturated probabilities stay finite through the clamp.
  const auto worst = classic_gan_losses({Tensor::zeros({2, 1}, DType::F64)}, {Tensor::full({2, 1}, 1.0, DType::F64)});
  CHECK(std::isfinite(worst.loss_d.item()));
}

TEST_CASE("classic loss gradient through a one-parameter critic") {
  // D(x) = sigmoid(theta * x).
  const Tensor real = column({0.5, 1.5, -0.2}), fake = column({-1.0, 0.3, 0.8});
  auto loss_at = [&](double th, Tensor* grad) {
    Tensor theta = Tensor::scalar(th, DType::F64);
    theta.set_requires_grad();
    tensor::Tape tape;
    tensor::TapeScope scope(tape);
    const auto l = classic_gan_losses(squash({tensor::mul(real, theta)}), squash({tensor::mul(fake, theta)}));
    if (grad) *grad = tape.gradients(l.loss_d, std::vector<Tensor>{theta})[0];
    return l.loss_d.item();
  };
  Tensor g;
  loss_at(0.7, &g);
  const double fd = (loss_at(0.7 + 1e-5, nullptr) - loss_at(0.7 - 1e-5, nullptr)) / 2e-5;
  CHECK(g.item() == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("gradient penalty") {
  CounterRng rng(4);
  const Tensor real = Tensor::randn({5, 1, 1, 1}, rng, 1.0, DType::F64);
  const Tensor fake = Tensor::randn({5, 1, 1, 1}, rng, 1.0, DType::F64);
  const Tensor eps = Tensor::uniform({5, 1, 1, 1}, rng, 0.0, 1.0, DType::F64);
  auto linear = [](double slope) {
    return Critic([slope](const Tensor& x) { return RawScores{tensor::scale(tensor::reshape(x, {x.dim(0), 1}), slope)}; });
  };
  CHECK(gradient_penalty(linear(1.0), real, fake, eps).item() == doctest::Approx(0.0).scale(1.0));
  CHECK(gradient_penalty(linear(3.0), real, fake, eps).item() == doctest::Approx(4.0));

  const auto l = wgan_gp_losses(linear(3.0), real, fake, eps, 0.0);
  const double mr = tensor::mean(real).item(), mf = tensor::mean(fake).item();
  CHECK(l.loss_d.item() == doctest::Approx(3 * mf - 3 * mr));
  CHECK(l.w_estimate == doctest::Approx(3 * mr - 3 * mf));
  CHECK(l.loss_g.item() == doctest::Approx(-3 * mf));
  CHECK(wgan_gp_losses(linear(3.0), real, fake, eps, 10.0).loss_d.item() ==
        doctest::Approx(3 * mf - 3 * mr + 40.0));
}

TEST_CASE("gradient penalty is differentiable in the critic parameters") {
  // D(x) = theta * sum(x^2) per sample; the penalty depends on theta through the input gradient.
  CounterRng rng(5);
  const Tensor real = Tensor::randn({3, 1, 2, 2}, rng, 1.0, DType::F64);
  const Tensor fake = Tensor::randn({3, 1, 2, 2}, rng, 1.0, DType::F64);
  const Tensor eps = Tensor::uniform({3, 1, 1, 1}, rng, 0.0, 1.0, DType::F64);
  auto gp_at = [&](double th, Tensor* grad) {
    Tensor theta = Tensor::scalar(th, DType::F64);
    theta.set_requires_grad();
    tensor::Tape tape;
    tensor::TapeScope scope(tape);
    const Critic c = [&](const Tensor& x) {
      return RawScores{tensor::mul(tensor::sum_to(tensor::mul(x, x), {x.dim(0), 1, 1, 1}), theta)};
    };
    const Tensor gp = gradient_penalty(c, real, fake, eps);
    if (grad) *grad = tape.gradients(gp, std::vector<Tensor>{theta})[0];
    return gp.item();
  };
  Tensor g;
  gp_at(0.8, &g);
  const double fd = (gp_at(0.8 + 1e-5, nullptr) - gp_at(0.8 - 1e-5, nullptr)) / 2e-5;
  CHECK(g.item() == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("one hand-computed WGAN iteration with linear networks") {
  // G(z) = a z, D(x) = b x, no penalty, Adam(0.001, 0, 0.99).
  const Tensor z = column({0.4, -1.2, 2.0}), real = column({1.0, 0.5, 2.5});
  Tensor a = Tensor::scalar(0.3, DType::F64), b = Tensor::scalar(-0.6, DType::F64);
  a.set_requires_grad();
  b.set_requires_grad();
  AdamState sa = AdamState::like(std::vector<Tensor>{a}, {}), sb = AdamState::like(std::vector<Tensor>{b}, {});
  const Critic d = [&](const Tensor& x) { return RawScores{tensor::mul(x, b)}; };
  {
    tensor::Tape tape;
    tensor::TapeScope scope(tape);
    Tensor fake;
    {
      tensor::NoGradScope quiet;
      fake = tensor::mul(z, a);
    }
    const auto l = wgan_gp_losses(d, real, fake, Tensor::zeros({3, 1}, DType::F64), 0.0);
    std::vector<Tensor> p{b};
    std::vector<Tensor> g = tape.gradients(l.loss_d, p);
    tensor::adam_step(p, g, sb);
  }
  {
    tensor::Tape tape;
    tensor::TapeScope scope(tape);
    const auto sf = d(tensor::mul(z, a));
    std::vector<Tensor> p{a};
    std::vector<Tensor> g = tape.gradients(tensor::neg(tensor::mean(sf.t)), p);
    tensor::adam_step(p, g, sa);
  }
  // dL_D/db = mean(a z) - mean(real) = 0.3 * 0.4 - 4 / 3; first Adam step moves by lr * sign.
  const double gb = 0.3 * (0.4 - 1.2 + 2.0) / 3 - 4.0 / 3;
  const double b1 = -0.6 - 0.001 * gb / (std::abs(gb) + 1e-8);
  // dL_G/da = -b1 * mean(z) = -b1 * 0.4.
  const double ga = -b1 * 0.4;
  const double a1 = 0.3 - 0.001 * ga / (std::abs(ga) + 1e-8);
  CHECK(b.item() == doctest::Approx(b1).epsilon(1e-9));
  CHECK(a.item() == doctest::Approx(a1).epsilon(1e-9));
}

TEST_CASE("progressive schedule") {
  CHECK(schedule_resolutions(128) == std::vector<int>{8, 16, 32, 64, 128});
  CHECK(schedule_resolutions(64) == std::vector<int>{8, 16, 32, 64});
  CHECK(schedule_resolutions(8) == std::vector<int>{8});
  CHECK(schedule_resolutions(64, false) == std::vector<int>{64});
  for (int bad : {4, 12, 0, -8}) {
    try {
      schedule_resolutions(bad);
      FAIL("expected BadTarget");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadTarget);
    }
  }
  TrainConfig t;
  CHECK(t.learning_rate(64) == doctest::Approx(0.001));
  CHECK(t.learning_rate(128) == doctest::Approx(0.0015));
}

TEST_CASE("configuration validation") {
  auto bad = tiny(8, false, 1);
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny(8, false, 1);
  bad.k_d = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = tiny(8, false, 1);
  bad.adam.beta2 = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  const PatchSet ps = patches_for(16);
  CHECK_THROWS_AS(Trainer(tiny(8, false, 1), ps), Error);
  CHECK(parse_loss_kind("classic") == LossKind::Classic);
  CHECK(parse_loss_kind("wgan_gp") == LossKind::WganGp);
  CHECK_THROWS_AS(parse_loss_kind("hinge"), Error);
}

TEST_CASE("trainer bookkeeping") {
  const PatchSet ps = patches_for(8);
  SUBCASE("no iterations leaves the networks untouched") {
    Trainer t(tiny(8, false, 0), ps);
    const auto g0 = t.generator().params().fingerprint();
    CHECK_FALSE(t.step());
    CHECK(t.generator().params().fingerprint() == g0);
  }
  SUBCASE("update counters and alternation") {
    auto cfg = tiny(8, false, 5);
    cfg.k_d = 2;
    Trainer t(cfg, ps);
    t.run();
    CHECK(t.critic_updates() == 10);
    CHECK(t.generator_updates() == 5);
    CHECK(t.trace().size() == 5);
    const auto& a = t.last_audit();
    CHECK(a.g_before_critic == a.g_after_critic);
    CHECK(a.d_before_gen == a.d_after_gen);
  }
  SUBCASE("classic loss trains too") {
    auto cfg = tiny(8, false, 2);
    cfg.loss = LossKind::Classic;
    Trainer t(cfg, ps);
    const auto d0 = t.discriminator().params().fingerprint();
    t.run();
    CHECK(t.discriminator().params().fingerprint() != d0);
    for (const auto& r : t.trace()) CHECK(std::isfinite(r.loss_d));
  }
}

TEST_CASE("fade-in ramp over a progressive run") {
  const PatchSet ps = patches_for(16);
  Trainer t(tiny(16, true, 4), ps);
  std::vector<int> phases;
  std::vector<double> alphas;
  while (!t.done()) {
    phases.push_back(t.phase_resolution());
    alphas.push_back(t.alpha());
    t.step();
  }
  CHECK(phases == std::vector<int>{8, 8, 8, 8, 16, 16, 16, 16});
  // 4 images per iteration over an 8-image ramp.
  CHECK(alphas == std::vector<double>{1, 1, 1, 1, 0, 0.5, 1, 1});
  CHECK(t.trace().back().phase == 16);
}

TEST_CASE("checkpoints") {
  const PatchSet ps = patches_for(16);
  const auto cfg = tiny(16, true, 3);
  testsupport::TempDir dir("ckpt");

  Trainer full(cfg, ps);
  full.run(5);

  Trainer first(cfg, ps);
  first.run(4);
  save_checkpoint(first.checkpoint(), dir.path / "m.mgck");
  const Checkpoint ck = load_checkpoint(dir.path / "m.mgck");
  CHECK(encode_checkpoint(ck) == encode_checkpoint(first.checkpoint()));
  CHECK(ck.iteration == 4);

  const Generator g = load_generator(ck);
  CHECK(same_params(g.params(), first.generator().params()));

  Trainer resumed(cfg, ps, ck);
  resumed.step();
  CHECK(same_params(resumed.generator().params(), full.generator().params()));
  CHECK(same_params(resumed.discriminator().params(), full.discriminator().params()));
  CHECK(resumed.trace().back().loss_d == full.trace().back().loss_d);

  auto bytes = read_file(dir.path / "m.mgck");
  const auto whole = bytes;
  bytes.resize(bytes.size() / 2);
  try {
    decode_checkpoint(bytes);
    FAIL("expected CorruptFile");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::CorruptFile);
  }
  auto versioned = whole;
  versioned[4] = 99;
  try {
    decode_checkpoint(versioned);
    FAIL("expected VersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::VersionMismatch);
  }
  auto trailing = whole;
  trailing.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(trailing), Error);

  auto other = cfg;
  other.net.channels[8] = 5;
  CHECK_THROWS_AS(Trainer(other, ps, ck), Error);
}

TEST_CASE("architecture record") {
  NetConfig n;
  n.target_resolution = 32;
  n.latent_dim = 12;
  n.mapping_depth = 3;
  n.variant = stylenet::Variant::ResolutionIncrease;
  const NetConfig back = decode_net_config(encode_net_config(n));
  CHECK(back.target_resolution == 32);
  CHECK(back.latent_dim == 12);
  CHECK(back.mapping_depth == 3);
  CHECK(back.variant == stylenet::Variant::ResolutionIncrease);
  CHECK(back.channels == n.channels);
}

TEST_CASE("real images reduce by box filtering") {
  CounterRng rng(6);
  const Tensor x = Tensor::randn({2, 1, 16, 16}, rng);
  CHECK(downscale_reals(x, 16).to_vector() == x.to_vector());
  CHECK(downscale_reals(x, 4).to_vector() == tensor::avg_pool2(tensor::avg_pool2(x)).to_vector());
}

TEST_CASE("loss trace csv") {
  const std::string csv = loss_trace_csv({{0, 8, 1.5, -0.5, 2.0}});
  CHECK(csv == "iter,phase,loss_d,loss_g,w_estimate\n0,8,1.5,-0.5,2\n");
}
