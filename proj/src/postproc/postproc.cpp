#include "microforge/postproc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include <boost/algorithm/string/trim.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "microforge/fileio.hpp"

namespace microforge::postproc {

namespace {

void check_window(int k) {
  if (k < 1 || k % 2 == 0) fail(Errc::EvenKernel, "window must be odd and positive, got " + std::to_string(k));
}

int clamp_index(int v, int n) { return std::clamp(v, 0, n - 1); }

}  // namespace

BinaryMask threshold(const GrayImage& img, int t) {
  if (t < 0 || t > 255) fail(Errc::ConfigInvalid, "threshold must lie in [0, 255]");
  BinaryMask m(img.width(), img.height());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) m.set(r, c, img.at(r, c) >= t);
  return m;
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::uint8_t> outside(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::pair<int, int>> stack;
  auto seed = [&](int r, int c) {
    const std::size_t i = static_cast<std::size_t>(r) * w + c;
    if (!mask.at(r, c) && !outside[i]) {
      outside[i] = 1;
      stack.emplace_back(r, c);
    }
  };
  for (int c = 0; c < w; ++c) {
    seed(0, c);
    seed(h - 1, c);
  }
  for (int r = 0; r < h; ++r) {
    seed(r, 0);
    seed(r, w - 1);
  }
  while (!stack.empty()) {
    const auto [r, c] = stack.back();
    stack.pop_back();
    if (r > 0) seed(r - 1, c);
    if (r + 1 < h) seed(r + 1, c);
    if (c > 0) seed(r, c - 1);
    if (c + 1 < w) seed(r, c + 1);
  }
  BinaryMask out(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) out.set(r, c, mask.at(r, c) || !outside[static_cast<std::size_t>(r) * w + c]);
  return out;
}

std::vector<double> gaussian_kernel(int k, double sigma) {
  check_window(k);
  if (!(sigma > 0.0)) fail(Errc::ConfigInvalid, "sigma must be positive");
  const int half = k / 2;
  std::vector<double> w(static_cast<std::size_t>(k) * k);
  double total = 0.0;
  for (int i = -half; i <= half; ++i)
    for (int j = -half; j <= half; ++j) {
      const double v = std::exp(-(i * i + j * j) / (2.0 * sigma * sigma));
      w[static_cast<std::size_t>(i + half) * k + (j + half)] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

GrayImage gaussian_blur(const GrayImage& img, int k, double sigma) {
  const auto w = gaussian_kernel(k, sigma);
  const int half = k / 2;
  GrayImage out(img.width(), img.height());
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i)
        for (int j = -half; j <= half; ++j)
          acc += w[static_cast<std::size_t>(i + half) * k + (j + half)] *
                 img.at(clamp_index(r + i, img.height()), clamp_index(c + j, img.width()));
      out.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
    }
  return out;
}

GrayImage median_blur(const GrayImage& img, int k) {
  check_window(k);
  const int half = k / 2;
  GrayImage out(img.width(), img.height());
  std::vector<std::uint8_t> win(static_cast<std::size_t>(k) * k);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      std::size_t n = 0;
      for (int i = -half; i <= half; ++i)
        for (int j = -half; j <= half; ++j)
          win[n++] = img.at(clamp_index(r + i, img.height()), clamp_index(c + j, img.width()));
      std::nth_element(win.begin(), win.begin() + win.size() / 2, win.end());
      out.at(r, c) = win[win.size() / 2];
    }
  return out;
}

int otsu_level(const GrayImage& img) {
  using boost::multiprecision::int256_t;
  std::array<std::int64_t, 256> hist{};
  for (auto v : img.pixels()) ++hist[v];
  if (std::count_if(hist.begin(), hist.end(), [](auto n) { return n > 0; }) < 2)
    fail(Errc::DegenerateImage, "Otsu needs at least two distinct intensities");

  std::int64_t n_total = 0, s_total = 0;
  for (int v = 0; v < 256; ++v) {
    n_total += hist[v];
    s_total += hist[v] * v;
  }
  // Between-class variance is proportional to (n1 s0 - n0 s1)^2 / (n0 n1);
  // candidates are compared by cross-multiplication in exact integers.
  int best_t = -1;
  int256_t best_num = 0, best_den = 1;
  std::int64_t n0 = 0, s0 = 0;
  for (int t = 1; t < 256; ++t) {
    n0 += hist[t - 1];
    s0 += hist[t - 1] * (t - 1);
    const std::int64_t n1 = n_total - n0, s1 = s_total - s0;
    if (n0 == 0 || n1 == 0) continue;
    const int256_t d = int256_t(n1) * s0 - int256_t(n0) * s1;
    const int256_t num = d * d;
    const int256_t den = int256_t(n0) * n1;
    if (best_t < 0 || num * best_den > best_num * den) {
      best_t = t;
      best_num = num;
      best_den = den;
    }
  }
  return best_t;
}

OtsuResult otsu_threshold(const GrayImage& img) {
  const int t = otsu_level(img);
  return {t, threshold(img, t)};
}

// ------------------------------------------------------------------ recipes

namespace {

const char* step_name(StepKind k) {
  switch (k) {
    case StepKind::Threshold: return "threshold";
    case StepKind::FillHoles: return "fill_holes";
    case StepKind::Gaussian: return "gaussian";
    case StepKind::Median: return "median";
    case StepKind::Otsu: return "otsu";
  }
  return "?";
}

bool binarises(StepKind k) { return k == StepKind::Threshold || k == StepKind::Otsu; }

int parse_int(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) fail(Errc::ConfigInvalid, what + ": expected an integer, got '" + s + "'");
  return v;
}

double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) fail(Errc::ConfigInvalid, what + ": expected a number, got '" + s + "'");
  return v;
}

}  // namespace

void Recipe::validate() const {
  if (steps.empty()) fail(Errc::ConfigInvalid, "recipe '" + name + "' has no steps");
  bool is_mask = false;
  for (const auto& s : steps) {
    switch (s.kind) {
      case StepKind::Threshold:
        if (s.level < 0 || s.level > 255) fail(Errc::ConfigInvalid, "threshold must lie in [0, 255]");
        break;
      case StepKind::FillHoles:
        if (!is_mask) fail(Errc::ConfigInvalid, "fill_holes needs a binary mask; binarise first");
        break;
      case StepKind::Gaussian:
        check_window(s.window);
        if (!(s.sigma > 0.0)) fail(Errc::ConfigInvalid, "gaussian sigma must be positive");
        break;
      case StepKind::Median:
        check_window(s.window);
        break;
      case StepKind::Otsu:
        break;
    }
    if (binarises(s.kind)) is_mask = true;
    if (s.kind == StepKind::Gaussian || s.kind == StepKind::Median) is_mask = false;
  }
  if (!is_mask) fail(Errc::ConfigInvalid, "recipe '" + name + "' must end with a binary mask");
}

std::string Recipe::to_text() const {
  std::ostringstream os;
  os << "# recipe " << name << '\n';
  for (const auto& s : steps) {
    os << step_name(s.kind) << " =";
    if (s.kind == StepKind::Threshold) os << ' ' << s.level;
    if (s.kind == StepKind::Median) os << ' ' << s.window;
    if (s.kind == StepKind::Gaussian) os << ' ' << s.window << ',' << s.sigma;
    os << '\n';
  }
  return os.str();
}

bool is_preset(const std::string& name) { return name == "alporas" || name == "digitalrock"; }

Recipe preset(const std::string& name) {
  Recipe r;
  r.name = name;
  if (name == "alporas") {
    r.steps = {{StepKind::Threshold, 116, 0, 0.0},
               {StepKind::FillHoles, 0, 0, 0.0},
               {StepKind::Gaussian, 0, 5, 20.0},
               {StepKind::Otsu, 0, 0, 0.0}};
  } else if (name == "digitalrock") {
    r.steps = {{StepKind::Median, 0, 3, 0.0}, {StepKind::Otsu, 0, 0, 0.0}};
  } else {
    fail(Errc::NotFound, "no recipe preset named '" + name + "'");
  }
  return r;
}

Recipe parse_recipe(const std::string& text, const std::string& name) {
  Recipe r;
  r.name = name;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    boost::algorithm::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(Errc::ConfigInvalid, "recipe line " + std::to_string(lineno) + ": expected key = value");
    std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    boost::algorithm::trim(key);
    boost::algorithm::trim(value);
    const std::string where = "recipe line " + std::to_string(lineno);
    Step s;
    if (key == "threshold") {
      s.kind = StepKind::Threshold;
      s.level = parse_int(value, where);
    } else if (key == "fill_holes") {
      s.kind = StepKind::FillHoles;
    } else if (key == "median") {
      s.kind = StepKind::Median;
      s.window = value.empty() ? 3 : parse_int(value, where);
    } else if (key == "gaussian") {
      s.kind = StepKind::Gaussian;
      const auto comma = value.find(',');
      if (comma == std::string::npos) fail(Errc::ConfigInvalid, where + ": gaussian = window,sigma");
      std::string a = value.substr(0, comma), b = value.substr(comma + 1);
      boost::algorithm::trim(a);
      boost::algorithm::trim(b);
      s.window = parse_int(a, where);
      s.sigma = parse_double(b, where);
    } else if (key == "otsu") {
      s.kind = StepKind::Otsu;
    } else {
      fail(Errc::ConfigInvalid, where + ": unknown step '" + key + "'");
    }
    r.steps.push_back(s);
  }
  r.validate();
  return r;
}

Recipe load_recipe(const std::string& name_or_path) {
  if (is_preset(name_or_path)) return preset(name_or_path);
  const auto bytes = read_file(name_or_path);
  return parse_recipe(std::string(bytes.begin(), bytes.end()), std::filesystem::path(name_or_path).stem().string());
}

RecipeResult apply(const Recipe& recipe, const GrayImage& img) {
  recipe.validate();
  RecipeResult out;
  GrayImage gray = img;
  BinaryMask mask;
  bool is_mask = false;
  for (const auto& s : recipe.steps) {
    if (is_mask && (s.kind == StepKind::Gaussian || s.kind == StepKind::Median || binarises(s.kind))) {
      gray = mask.to_gray();
      is_mask = false;
    }
    switch (s.kind) {
      case StepKind::Threshold:
        mask = threshold(gray, s.level);
        out.thresholds.push_back(s.level);
        is_mask = true;
        break;
      case StepKind::FillHoles:
        mask = fill_holes(mask);
        break;
      case StepKind::Gaussian:
        gray = gaussian_blur(gray, s.window, s.sigma);
        break;
      case StepKind::Median:
        gray = median_blur(gray, s.window);
        break;
      case StepKind::Otsu: {
        // A single-intensity image has no between-class variance; split at mid-grey instead.
        const auto px = gray.pixels();
        const bool flat = std::all_of(px.begin(), px.end(), [&](auto v) { return v == px[0]; });
        const int t = flat ? kFlatFallback : otsu_level(gray);
        mask = threshold(gray, t);
        out.thresholds.push_back(t);
        is_mask = true;
        break;
      }
    }
  }
  out.mask = std::move(mask);
  return out;
}

}  // namespace microforge::postproc
