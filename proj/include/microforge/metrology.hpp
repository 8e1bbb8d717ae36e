#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "microforge/image.hpp"

namespace microforge::metrology {

enum class Phase { Solid, Pore };
std::string to_string(Phase p);
Phase parse_phase(const std::string& s);

/// Integer counts behind the densities, for exact checks.
struct MinkowskiCounts {
  std::int64_t area = 0;
  std::int64_t perimeter = 0;
  std::int64_t euler = 0;  // V - E + F
  std::int64_t denominator = 0;
};

struct MinkowskiTriple {
  double area_density = 0.0;
  double perimeter_density = 0.0;
  double euler_density = 0.0;
  MinkowskiCounts counts;
};

/// Densities of the chosen phase, pixels taken as closed unit squares.
/// Perimeter counts phase/non-phase pixel edges inside the image.
MinkowskiTriple minkowski(const BinaryMask& mask, Phase phase = Phase::Solid);

struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
  std::vector<double> values;
};

/// Named metrics, each summarised over the same set of samples.
struct SampleStats {
  std::map<std::string, MetricSummary> metrics;
};

MetricSummary summarize(const std::vector<double>& values);
SampleStats aggregate(const std::vector<MinkowskiTriple>& samples);
SampleStats aggregate(const std::map<std::string, std::vector<double>>& values);

struct HistogramBin {
  double left = 0.0;
  double right = 0.0;
  std::size_t count_real = 0;
  std::size_t count_generated = 0;
};
/// `bins` equal-width bins over the pooled range of both value sets; the last bin is closed.
std::vector<HistogramBin> pooled_histogram(const std::vector<double>& real, const std::vector<double>& generated,
                                           int bins);

struct MetricComparison {
  std::string metric;
  MetricSummary real;
  MetricSummary generated;
  double delta = 0.0;      // generated.mean - real.mean
  double rel_delta = 0.0;  // delta / |real.mean|, 0 when real.mean is 0
  std::vector<HistogramBin> histogram;
};

struct ComparisonReport {
  std::vector<MetricComparison> rows;

  std::string to_csv() const;
  std::string to_json() const;
  std::string histogram_csv() const;
};

ComparisonReport compare_report(const SampleStats& real, const SampleStats& generated, int bins = 10);

/// `id,area,perimeter,euler`, one row per sample.
std::string samples_csv(const std::vector<MinkowskiTriple>& samples);

}  // namespace microforge::metrology
