#include <doctest.h>

#include <cmath>
#include <queue>

#include "microforge/fileio.hpp"
#include "microforge/postproc.hpp"
#include "otsu_oracle.hpp"
#include "support.hpp"

using namespace microforge;
using namespace microforge::postproc;
using testsupport::exhaustive_otsu;

namespace {

// Pore pixels 4-connected to the border stay pore; everything else is solid.
BinaryMask fill_oracle(const BinaryMask& m) {
  const int w = m.width(), h = m.height();
  std::vector<char> outside(static_cast<std::size_t>(w) * h, 0);
  std::queue<std::pair<int, int>> q;
  auto seed = [&](int r, int c) {
    if (!m.at(r, c) && !outside[r * w + c]) {
      outside[r * w + c] = 1;
      q.push({r, c});
    }
  };
  for (int r = 0; r < h; ++r) {
    seed(r, 0);
    seed(r, w - 1);
  }
  for (int c = 0; c < w; ++c) {
    seed(0, c);
    seed(h - 1, c);
  }
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop();
    const int dr[4] = {1, -1, 0, 0}, dc[4] = {0, 0, 1, -1};
    for (int k = 0; k < 4; ++k) {
      const int rr = r + dr[k], cc = c + dc[k];
      if (rr >= 0 && rr < h && cc >= 0 && cc < w) seed(rr, cc);
    }
  }
  BinaryMask out(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.set(r, c, !outside[r * w + c]);
  return out;
}

}  // namespace

TEST_CASE("fixed threshold") {
  GrayImage img(2, 1, std::vector<std::uint8_t>{116, 115});
  const auto m = threshold(img, 116);
  CHECK(m.at(0, 0));
  CHECK_FALSE(m.at(0, 1));
  CHECK(threshold(img, 0).count_solid() == 2);
  CHECK(threshold(GrayImage(3, 3, 254), 255).count_solid() == 0);
  CHECK_THROWS_AS(threshold(img, 256), Error);
}

TEST_CASE("hole filling") {
  BinaryMask frame(5, 5, true);
  frame.set(2, 2, false);
  CHECK(fill_holes(frame) == BinaryMask(5, 5, true));
  BinaryMask open(5, 5, true);
  open.set(0, 2, false);
  open.set(1, 2, false);
  CHECK(fill_holes(open) == open);
  CHECK(fill_holes(BinaryMask(4, 4, true)) == BinaryMask(4, 4, true));
  // A diagonal gap does not connect a hole to the border.
  BinaryMask diag(4, 4, true);
  diag.set(1, 1, false);
  diag.set(0, 0, false);
  BinaryMask expect = diag;
  expect.set(1, 1, true);
  CHECK(fill_holes(diag) == expect);
  CounterRng rng(1);
  for (int i = 0; i < 300; ++i) {
    const auto m = testsupport::random_mask(1 + rng.below(12), 1 + rng.below(12), rng, 0.6);
    CHECK(fill_holes(m) == fill_oracle(m));
  }
}

TEST_CASE("Gaussian kernel and blur") {
  const auto k = gaussian_kernel(5, 20.0);
  REQUIRE(k.size() == 25);
  double total = 0.0, raw_total = 0.0;
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j) raw_total += std::exp(-(i * i + j * j) / 800.0);
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j) {
      const double w = k[(i + 2) * 5 + (j + 2)];
      CHECK(w == doctest::Approx(std::exp(-(i * i + j * j) / 800.0) / raw_total).epsilon(1e-12));
      CHECK(w >= 0.0398);
      CHECK(w <= 0.0403);
      total += w;
    }
  CHECK(total == doctest::Approx(1.0));
  CHECK(gaussian_blur(GrayImage(9, 7, 77), 5, 20.0) == GrayImage(9, 7, 77));
  try {
    gaussian_kernel(4, 1.0);
    FAIL("expected EvenKernel");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EvenKernel);
  }
}

TEST_CASE("median filter") {
  CHECK(median_blur(GrayImage(6, 6, 40), 3) == GrayImage(6, 6, 40));
  GrayImage salt(7, 7, 10);
  salt.at(3, 3) = 250;
  CHECK(median_blur(salt, 3) == GrayImage(7, 7, 10));
  CounterRng rng(2);
  const auto img = testsupport::random_image(6, 5, rng);
  CHECK(median_blur(img, 1) == img);
  CHECK_THROWS_AS(median_blur(img, 2), Error);
}

TEST_CASE("Otsu") {
  GrayImage bimodal(4, 4, 0);
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 2; ++r) bimodal.at(r, c) = 255;
  const auto res = otsu_threshold(bimodal);
  CHECK(res.threshold == 1);
  CHECK(res.mask.count_solid() == 8);
  CHECK(res.mask.at(0, 0));
  CHECK_FALSE(res.mask.at(3, 3));
  try {
    otsu_threshold(GrayImage(4, 4, 9));
    FAIL("expected DegenerateImage");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::DegenerateImage);
  }
  CounterRng rng(3);
  for (int i = 0; i < 200; ++i) {
    const auto img = testsupport::random_image(16, 16, rng, i % 3 == 0 ? 6 : 256);
    CHECK(otsu_level(img) == exhaustive_otsu(img));
  }
}

TEST_CASE("recipes") {
  const Recipe alporas = preset("alporas");
  REQUIRE(alporas.steps.size() == 4);
  CHECK(alporas.steps[0].level == 116);
  CHECK(alporas.steps[2].window == 5);
  CHECK(alporas.steps[2].sigma == 20.0);
  CHECK(parse_recipe(alporas.to_text(), "alporas").to_text() == alporas.to_text());
  CHECK(is_preset("digitalrock"));
  CHECK_FALSE(is_preset("other"));

  const Recipe r = parse_recipe("# comment\nmedian = 3\n  otsu =  \n");
  CHECK(r.steps.size() == 2);
  CHECK_THROWS_AS(parse_recipe("median = 3\n"), Error);  // does not end in a mask
  CHECK_THROWS_AS(parse_recipe("fill_holes =\notsu =\n"), Error);
  CHECK_THROWS_AS(parse_recipe("sharpen = 2\notsu =\n"), Error);
  CHECK_THROWS_AS(parse_recipe("gaussian = 4,2\notsu =\n"), Error);

  testsupport::TempDir dir("recipe");
  write_file_atomic(dir.path / "r.txt", std::string_view("threshold = 100\n"));
  CHECK(load_recipe((dir.path / "r.txt").string()).steps.size() == 1);
  CHECK_THROWS_AS(load_recipe("no-such-recipe"), Error);
}

TEST_CASE("applying a recipe") {
  CounterRng rng(4);
  const auto img = testsupport::random_image(20, 20, rng);
  const auto out = apply(preset("digitalrock"), img);
  const auto med = median_blur(img, 3);
  CHECK(out.thresholds == std::vector<int>{otsu_level(med)});
  CHECK(out.mask == threshold(med, otsu_level(med)));

  const auto al = apply(preset("alporas"), img);
  CHECK(al.thresholds.size() == 2);
  CHECK(al.thresholds[0] == 116);
  const auto expect_gray = gaussian_blur(fill_holes(threshold(img, 116)).to_gray(), 5, 20.0);
  CHECK(al.mask == threshold(expect_gray, otsu_level(expect_gray)));

  // A flat patch cannot be split by Otsu and falls back to a mid-level cut.
  const auto flat = apply(preset("digitalrock"), GrayImage(8, 8, 200));
  CHECK(flat.thresholds == std::vector<int>{kFlatFallback});
  CHECK(flat.mask.count_solid() == 64);
}
