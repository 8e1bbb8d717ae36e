#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

namespace testsupport {

// Exhaustive minimum over every monotone 8-connected path.
struct Brute {
  const std::vector<std::int64_t>& e;
  int rows, width;
  std::int64_t best = std::numeric_limits<std::int64_t>::max();
  std::vector<int> cur = {};

  void go(int i, std::int64_t acc) {
    if (i == rows) {
      if (acc < best) {
        best = acc;
      }
      return;
    }
    const int lo = i == 0 ? 0 : std::max(0, cur.back() - 1);
    const int hi = i == 0 ? width - 1 : std::min(width - 1, cur.back() + 1);
    for (int j = lo; j <= hi; ++j) {
      cur.push_back(j);
      go(i + 1, acc + e[static_cast<std::size_t>(i) * width + j]);
      cur.pop_back();
    }
  }
};

}  // namespace testsupport
