#include <doctest.h>

#include "microforge/quilt.hpp"
#include "seam_oracle.hpp"
#include "support.hpp"

using namespace microforge;
using namespace microforge::quilt;

namespace {

using testsupport::Brute;

std::vector<std::int64_t> squared_diff(std::span<const std::uint8_t> x, std::span<const std::uint8_t> y) {
  std::vector<std::int64_t> e(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) e[k] = (std::int64_t{x[k]} - y[k]) * (std::int64_t{x[k]} - y[k]);
  return e;
}

std::vector<std::uint8_t> band(const GrayImage& img, int c0, int w) {
  std::vector<std::uint8_t> out;
  for (int r = 0; r < img.height(); ++r)
    for (int c = c0; c < c0 + w; ++c) out.push_back(img.at(r, c));
  return out;
}

}  // namespace

TEST_CASE("equal bands give a zero seam at column 0") {
  CounterRng rng(1);
  const auto img = testsupport::random_image(4, 6, rng);
  const auto b = band(img, 0, 4);
  const auto res = seam(b, b, 6, 4);
  CHECK(res.total_error == 0);
  CHECK(res.path.columns == std::vector<int>(6, 0));
}

TEST_CASE("single-column band") {
  CounterRng rng(2);
  const auto x = testsupport::random_image(1, 9, rng), y = testsupport::random_image(1, 9, rng);
  const auto res = seam(x.pixels(), y.pixels(), 9, 1);
  std::int64_t sum = 0;
  for (int i = 0; i < 9; ++i) sum += (int(x.at(i, 0)) - y.at(i, 0)) * (int(x.at(i, 0)) - y.at(i, 0));
  CHECK(res.total_error == sum);
  CHECK(res.path.columns == std::vector<int>(9, 0));
}

TEST_CASE("dynamic program matches exhaustive search") {
  CounterRng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const int rows = 1 + static_cast<int>(rng.below(7));
    const int width = 1 + static_cast<int>(rng.below(4));
    const auto x = testsupport::random_image(width, rows, rng, trial % 2 ? 4 : 256);
    const auto y = testsupport::random_image(width, rows, rng, trial % 2 ? 4 : 256);
    const auto e = squared_diff(x.pixels(), y.pixels());
    Brute b{e, rows, width};
    b.go(0, 0);
    const auto res = seam(x.pixels(), y.pixels(), rows, width);
    REQUIRE(res.total_error == b.best);
    std::int64_t along = 0;
    for (int i = 0; i < rows; ++i) {
      along += e[static_cast<std::size_t>(i) * width + res.path.columns[i]];
      if (i > 0) CHECK(std::abs(res.path.columns[i] - res.path.columns[i - 1]) <= 1);
    }
    CHECK(along == res.total_error);
    const auto field = overlap_error_field(x.pixels(), y.pixels(), rows, width);
    CHECK(field.E(rows - 1, res.path.columns.back()) == b.best);
  }
}

TEST_CASE("pair merge") {
  CounterRng rng(4);
  SUBCASE("size law") { CHECK(quilt_pair_horizontal(GrayImage(64, 64), GrayImage(64, 64), 8).width() == 120); }
  SUBCASE("matching overlap keeps all of y") {
    const auto x = testsupport::random_image(8, 8, rng);
    auto y = testsupport::random_image(8, 8, rng);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 3; ++c) y.at(r, c) = x.at(r, 5 + c);
    const auto z = quilt_pair_horizontal(x, y, 3);
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 13; ++c) CHECK(z.at(r, c) == (c < 8 ? x.at(r, c) : y.at(r, c - 5)));
  }
  SUBCASE("rows split into two runs at the optimal seam") {
    for (int trial = 0; trial < 100; ++trial) {
      const int w = 2 + static_cast<int>(rng.below(3));
      const auto x = testsupport::random_image(8, 8, rng), y = testsupport::random_image(8, 8, rng);
      const auto xb = band(x, 8 - w, w), yb = band(y, 0, w);
      const auto e = squared_diff(xb, yb);
      Brute b{e, 8, w};
      b.go(0, 0);
      const auto cut = seam(xb, yb, 8, w);
      REQUIRE(cut.total_error == b.best);
      const auto z = quilt_pair_horizontal(x, y, w);
      REQUIRE(z.width() == 16 - w);
      REQUIRE(z.height() == 8);
      for (int r = 0; r < 8; ++r) {
        const int split = 8 - w + cut.path.columns[r];
        for (int c = 0; c < z.width(); ++c) CHECK(z.at(r, c) == (c < split ? x.at(r, c) : y.at(r, c - (8 - w))));
      }
    }
  }
  SUBCASE("bad overlap") {
    try {
      quilt_pair_horizontal(GrayImage(8, 8), GrayImage(8, 8), 8);
      FAIL("expected BadOverlap");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::BadOverlap);
    }
    CHECK_THROWS_AS(quilt_pair_horizontal(GrayImage(8, 8), GrayImage(8, 8), 0), Error);
    CHECK_THROWS_AS(quilt_pair_horizontal(GrayImage(8, 8), GrayImage(9, 9), 2), Error);
  }
}

TEST_CASE("grid assembly") {
  CounterRng rng(5);
  std::vector<GrayImage> patches;
  for (int i = 0; i < 49; ++i) patches.push_back(testsupport::random_image(16, 16, rng));
  const PatchSource src = [&](std::size_t k) { return patches.at(k); };
  CHECK(assemble_grid(src, 1, 1, 4) == patches[0]);
  CHECK(assemble_grid(src, 1, 2, 4) == quilt_pair_horizontal(patches[0], patches[1], 4));
  const auto g = assemble_grid(src, 3, 5, 4);
  CHECK(g.width() == grid_extent(5, 16, 4));
  CHECK(g.height() == grid_extent(3, 16, 4));
  static_assert(grid_extent(7, 64, 8) == 400);
  // Every output pixel comes from one of the patches covering it.
  for (int r = 0; r < g.height(); ++r)
    for (int c = 0; c < g.width(); ++c) {
      bool found = false;
      for (int pr = 0; pr < 3 && !found; ++pr)
        for (int pc = 0; pc < 5 && !found; ++pc) {
          const int lr = r - pr * 12, lc = c - pc * 12;
          if (lr >= 0 && lr < 16 && lc >= 0 && lc < 16) found = patches[pr * 5 + pc].at(lr, lc) == g.at(r, c);
        }
      CHECK(found);
    }
  // The top-left corner region is never overwritten.
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 12; ++c) CHECK(g.at(r, c) == patches[0].at(r, c));
}
