#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "microforge/image.hpp"

namespace microforge::postproc {

/// mask = img >= t.
BinaryMask threshold(const GrayImage& img, int t);

/// Turns every 4-connected pore component that does not touch the border solid.
BinaryMask fill_holes(const BinaryMask& mask);

/// k x k weights of exp(-(i^2 + j^2) / (2 sigma^2)), normalised to sum 1; row-major.
std::vector<double> gaussian_kernel(int k, double sigma);
/// Edge-replicated Gaussian filter, rounded to the nearest level.
GrayImage gaussian_blur(const GrayImage& img, int k, double sigma);
/// Edge-replicated k x k median filter.
GrayImage median_blur(const GrayImage& img, int k);

struct OtsuResult {
  int threshold = 0;
  BinaryMask mask;
};
/// Smallest t maximising the between-class variance of {v < t} and {v >= t}.
OtsuResult otsu_threshold(const GrayImage& img);
int otsu_level(const GrayImage& img);

enum class StepKind { Threshold, FillHoles, Gaussian, Median, Otsu };

struct Step {
  StepKind kind = StepKind::Otsu;
  int level = 0;       // threshold
  int window = 0;      // gaussian, median
  double sigma = 0.0;  // gaussian
};

struct Recipe {
  std::string name;
  std::vector<Step> steps;

  /// Checks parameters and that the last step leaves a binary mask.
  void validate() const;
  std::string to_text() const;
};

/// "alporas": threshold 116, fill holes, gaussian (5, 20), Otsu.
/// "digitalrock": median 3, Otsu.
Recipe preset(const std::string& name);
bool is_preset(const std::string& name);

/// One step per line, "name = params": `threshold = 116`, `fill_holes =`,
/// `gaussian = 5,20`, `median = 3`, `otsu =`. '#' starts a comment.
Recipe parse_recipe(const std::string& text, const std::string& name = "custom");
/// A preset name or a recipe file.
Recipe load_recipe(const std::string& name_or_path);

struct RecipeResult {
  BinaryMask mask;
  /// Threshold used by each binarising step, in order.
  std::vector<int> thresholds;
};
/// Runs the steps in order. An Otsu step on a single-intensity image uses
/// kFlatFallback rather than failing, so uniform patches still binarise.
RecipeResult apply(const Recipe& recipe, const GrayImage& img);

inline constexpr int kFlatFallback = 128;

}  // namespace microforge::postproc
