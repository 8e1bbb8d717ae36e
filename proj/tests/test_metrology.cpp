#include <doctest.h>

#include <json.hpp>

#include "euler_oracle.hpp"
#include "microforge/metrology.hpp"
#include "support.hpp"

using namespace microforge;
using namespace microforge::metrology;

TEST_CASE("Minkowski functionals of simple shapes") {
  SUBCASE("full mask") {
    const auto t = minkowski(BinaryMask(16, 16, true));
    CHECK(t.area_density == 1.0);
    CHECK(t.perimeter_density == 0.0);
    CHECK(t.counts.euler == 1);
    CHECK(t.euler_density == 1.0 / 256);
  }
  SUBCASE("single pixel") {
    BinaryMask m(8, 8);
    m.set(3, 4, true);
    const auto t = minkowski(m);
    CHECK(t.area_density == 0.015625);
    CHECK(t.perimeter_density == 0.0625);
    CHECK(t.euler_density == 0.015625);
  }
  SUBCASE("annulus") {
    BinaryMask m(8, 8);
    for (int r = 2; r < 5; ++r)
      for (int c = 2; c < 5; ++c) m.set(r, c, !(r == 3 && c == 3));
    CHECK(minkowski(m).counts.euler == 0);
    CHECK(minkowski(m).counts.perimeter == 16);
  }
  SUBCASE("diagonal pixels touch at a corner") {
    BinaryMask m(4, 4);
    m.set(1, 1, true);
    m.set(2, 2, true);
    CHECK(minkowski(m).counts.euler == 1);
  }
  SUBCASE("pore phase") {
    BinaryMask m(8, 8, true);
    m.set(0, 0, false);
    const auto t = minkowski(m, Phase::Pore);
    CHECK(t.counts.area == 1);
    CHECK(t.counts.perimeter == 2);
    CHECK(t.counts.euler == 1);
    CHECK(minkowski(BinaryMask(5, 5, true), Phase::Pore).counts.euler == 0);
  }
}

TEST_CASE("Euler numerator matches the flood-fill oracle") {
  CounterRng rng(1);
  for (int i = 0; i < 3000; ++i) {
    const int w = 1 + rng.below(12), h = 1 + rng.below(12);
    const auto m = testsupport::random_mask(w, h, rng, 0.2 + 0.6 * rng.uniform());
    CHECK(minkowski(m).counts.euler == euleroracle::components_minus_holes(m));
    CHECK(minkowski(m, Phase::Pore).counts.euler == euleroracle::components_minus_holes(m, false));
  }
}

TEST_CASE("summaries") {
  const auto s = summarize({0.0, 2.0});
  CHECK(s.mean == 1.0);
  CHECK(s.std == 1.0);
  CHECK(s.n == 2);
  CHECK(summarize({3.0, 3.0, 3.0}).std == 0.0);
  try {
    summarize({});
    FAIL("expected EmptySet");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::EmptySet);
  }
  BinaryMask a(4, 4, true), b(4, 4);
  b.set(0, 0, true);
  const auto agg = aggregate(std::vector<MinkowskiTriple>{minkowski(a), minkowski(b)});
  CHECK(agg.metrics.at("area").mean == doctest::Approx((1.0 + 1.0 / 16) / 2));
  CHECK(agg.metrics.at("area").std == doctest::Approx((1.0 - 1.0 / 16) / 2));
  CHECK(agg.metrics.size() == 3);
}

TEST_CASE("comparison report") {
  SampleStats real, gen;
  real.metrics["area"] = summarize({0.7984 - 0.0439, 0.7984 + 0.0439});
  gen.metrics["area"] = summarize({0.7934 - 0.0334, 0.7934 + 0.0334});
  const auto rep = compare_report(real, gen, 4);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].delta == doctest::Approx(-0.0050));
  CHECK(rep.rows[0].real.std == doctest::Approx(0.0439));
  CHECK(compare_report(real, real).rows[0].delta == 0.0);

  std::size_t real_count = 0, gen_count = 0;
  for (const auto& b : rep.rows[0].histogram) {
    real_count += b.count_real;
    gen_count += b.count_generated;
  }
  CHECK(real_count == 2);
  CHECK(gen_count == 2);
  CHECK(rep.rows[0].histogram.size() == 4);

  const auto j = nlohmann::json::parse(rep.to_json());
  CHECK(j["area"]["real"]["n"] == 2);
  CHECK(rep.to_csv().rfind("metric,real_mean", 0) == 0);
  CHECK(rep.histogram_csv().rfind("metric,bin_left,bin_right,count_real,count_generated\n", 0) == 0);

  SampleStats other;
  other.metrics["euler"] = summarize({1.0});
  try {
    compare_report(real, other);
    FAIL("expected MetricMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MetricMismatch);
  }
}

TEST_CASE("pooled histogram") {
  const auto h = pooled_histogram({0.0, 1.0, 2.0}, {2.0, 3.0}, 3);
  REQUIRE(h.size() == 3);
  CHECK(h[0].left == 0.0);
  CHECK(h[2].right == 3.0);
  CHECK(h[0].count_real == 1);
  CHECK(h[1].count_real == 1);
  CHECK(h[1].count_generated == 0);
  CHECK(h[2].count_real == 1);
  CHECK(h[2].count_generated == 2);
  const auto flat = pooled_histogram({5.0, 5.0}, {5.0}, 4);
  std::size_t total = 0;
  for (const auto& b : flat) total += b.count_real + b.count_generated;
  CHECK(total == 3);
}

TEST_CASE("per-sample csv") {
  const auto csv = samples_csv({minkowski(BinaryMask(2, 2, true))});
  CHECK(csv.rfind("id,area,perimeter,euler\n0,1,0,0.25", 0) == 0);
}
