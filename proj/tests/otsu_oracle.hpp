#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include "microforge/image.hpp"

namespace testsupport {

// Exhaustive between-class variance n0 n1 (mu0 - mu1)^2 / N^2 in exact
// rationals over every split {v < t}, {v >= t}; smallest t wins ties.
inline int exhaustive_otsu(const microforge::GrayImage& img) {
  int best_t = -1;
  boost::multiprecision::cpp_rational best = -1;
  const auto n = static_cast<long>(img.size());
  for (int t = 1; t <= 255; ++t) {
    long n0 = 0, s0 = 0, s1 = 0;
    for (auto v : img.pixels()) {
      if (v < t) {
        ++n0;
        s0 += v;
      } else {
        s1 += v;
      }
    }
    const long n1 = n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const boost::multiprecision::cpp_rational diff = boost::multiprecision::cpp_rational(s0, n0) - boost::multiprecision::cpp_rational(s1, n1);
    const boost::multiprecision::cpp_rational var = boost::multiprecision::cpp_rational(n0) * n1 * diff * diff / (boost::multiprecision::cpp_rational(n) * n);
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace testsupport
