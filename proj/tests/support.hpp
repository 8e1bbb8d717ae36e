#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "microforge/image.hpp"
#include "microforge/rng.hpp"

namespace testsupport {

inline microforge::GrayImage random_image(int w, int h, microforge::CounterRng& rng, int levels = 256) {
  microforge::GrayImage img(w, h);
  for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(rng.below(levels));
  return img;
}

inline microforge::BinaryMask random_mask(int w, int h, microforge::CounterRng& rng, double p_solid = 0.5) {
  microforge::BinaryMask m(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) m.set(r, c, rng.uniform() < p_solid);
  return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("mf-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testsupport
