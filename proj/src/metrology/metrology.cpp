#include "microforge/metrology.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace microforge::metrology {

std::string to_string(Phase p) { return p == Phase::Solid ? "solid" : "pore"; }

Phase parse_phase(const std::string& s) {
  if (s == "solid") return Phase::Solid;
  if (s == "pore") return Phase::Pore;
  fail(Errc::ConfigInvalid, "phase must be solid or pore, got '" + s + "'");
}

MinkowskiTriple minkowski(const BinaryMask& mask, Phase phase) {
  const int w = mask.width(), h = mask.height();
  const bool want = phase == Phase::Solid;
  auto in = [&](int r, int c) { return r >= 0 && r < h && c >= 0 && c < w && mask.at(r, c) == want; };

  MinkowskiCounts k;
  std::int64_t verts = 0, edges = 0;
  for (int r = 0; r <= h; ++r)
    for (int c = 0; c <= w; ++c) {
      if (in(r - 1, c - 1) || in(r - 1, c) || in(r, c - 1) || in(r, c)) ++verts;
      if (c < w && (in(r - 1, c) || in(r, c))) ++edges;  // horizontal edge (r,c)-(r,c+1)
      if (r < h && (in(r, c - 1) || in(r, c))) ++edges;  // vertical edge (r,c)-(r+1,c)
    }
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!in(r, c)) continue;
      ++k.area;
      if (r > 0 && !in(r - 1, c)) ++k.perimeter;
      if (r + 1 < h && !in(r + 1, c)) ++k.perimeter;
      if (c > 0 && !in(r, c - 1)) ++k.perimeter;
      if (c + 1 < w && !in(r, c + 1)) ++k.perimeter;
    }
  k.euler = verts - edges + k.area;
  k.denominator = static_cast<std::int64_t>(w) * h;

  MinkowskiTriple t;
  t.counts = k;
  if (k.denominator > 0) {
    const double s = static_cast<double>(k.denominator);
    t.area_density = k.area / s;
    t.perimeter_density = k.perimeter / s;
    t.euler_density = k.euler / s;
  }
  return t;
}

MetricSummary summarize(const std::vector<double>& values) {
  if (values.empty()) fail(Errc::EmptySet, "cannot summarise an empty sample");
  MetricSummary s;
  s.n = values.size();
  s.values = values;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / s.n;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / s.n);
  return s;
}

SampleStats aggregate(const std::vector<MinkowskiTriple>& samples) {
  if (samples.empty()) fail(Errc::EmptySet, "no samples to aggregate");
  std::map<std::string, std::vector<double>> v;
  for (const auto& t : samples) {
    v["area"].push_back(t.area_density);
    v["perimeter"].push_back(t.perimeter_density);
    v["euler"].push_back(t.euler_density);
  }
  return aggregate(v);
}

SampleStats aggregate(const std::map<std::string, std::vector<double>>& values) {
  if (values.empty()) fail(Errc::EmptySet, "no metrics to aggregate");
  SampleStats out;
  for (const auto& [name, v] : values) out.metrics[name] = summarize(v);
  return out;
}

std::vector<HistogramBin> pooled_histogram(const std::vector<double>& real, const std::vector<double>& generated,
                                           int bins) {
  if (bins < 1) fail(Errc::ConfigInvalid, "histogram needs at least one bin");
  if (real.empty() && generated.empty()) fail(Errc::EmptySet, "histogram of nothing");
  double lo = INFINITY, hi = -INFINITY;
  for (const auto* set : {&real, &generated})
    for (double v : *set) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  std::vector<HistogramBin> out(bins);
  const double width = (hi - lo) / bins;
  for (int b = 0; b < bins; ++b) {
    out[b].left = lo + b * width;
    out[b].right = b + 1 == bins ? hi : lo + (b + 1) * width;
  }
  auto slot = [&](double v) { return std::clamp(static_cast<int>((v - lo) / width), 0, bins - 1); };
  for (double v : real) ++out[slot(v)].count_real;
  for (double v : generated) ++out[slot(v)].count_generated;
  return out;
}

ComparisonReport compare_report(const SampleStats& real, const SampleStats& generated, int bins) {
  std::vector<std::string> a, b;
  for (const auto& e : real.metrics) a.push_back(e.first);
  for (const auto& e : generated.metrics) b.push_back(e.first);
  if (a != b) fail(Errc::MetricMismatch, "real and generated statistics cover different metrics");
  if (a.empty()) fail(Errc::EmptySet, "no metrics to compare");
  ComparisonReport rep;
  for (const auto& name : a) {
    MetricComparison row;
    row.metric = name;
    row.real = real.metrics.at(name);
    row.generated = generated.metrics.at(name);
    row.delta = row.generated.mean - row.real.mean;
    row.rel_delta = row.real.mean != 0.0 ? row.delta / std::abs(row.real.mean) : 0.0;
    row.histogram = pooled_histogram(row.real.values, row.generated.values, bins);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

std::ostringstream precise_stream() {
  std::ostringstream os;
  os.precision(10);
  return os;
}

}  // namespace

std::string ComparisonReport::to_csv() const {
  auto os = precise_stream();
  os << "metric,real_mean,real_std,real_n,generated_mean,generated_std,generated_n,delta,rel_delta\n";
  for (const auto& r : rows)
    os << r.metric << ',' << r.real.mean << ',' << r.real.std << ',' << r.real.n << ',' << r.generated.mean << ','
       << r.generated.std << ',' << r.generated.n << ',' << r.delta << ',' << r.rel_delta << '\n';
  return os.str();
}

std::string ComparisonReport::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& r : rows) {
    auto side = [](const MetricSummary& s) {
      return nlohmann::ordered_json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    };
    j[r.metric] = {{"real", side(r.real)}, {"generated", side(r.generated)}, {"delta", r.delta},
                   {"rel_delta", r.rel_delta}};
  }
  return j.dump(2) + "\n";
}

std::string ComparisonReport::histogram_csv() const {
  auto os = precise_stream();
  os << "metric,bin_left,bin_right,count_real,count_generated\n";
  for (const auto& r : rows)
    for (const auto& b : r.histogram)
      os << r.metric << ',' << b.left << ',' << b.right << ',' << b.count_real << ',' << b.count_generated << '\n';
  return os.str();
}

std::string samples_csv(const std::vector<MinkowskiTriple>& samples) {
  auto os = precise_stream();
  os << "id,area,perimeter,euler\n";
  for (std::size_t i = 0; i < samples.size(); ++i)
    os << i << ',' << samples[i].area_density << ',' << samples[i].perimeter_density << ','
       << samples[i].euler_density << '\n';
  return os.str();
}

}  // namespace microforge::metrology
