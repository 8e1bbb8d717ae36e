#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "microforge/image.hpp"

namespace microforge::quilt {

/// Per-row column index of a monotone 8-connected cut inside an overlap band.
struct SeamPath {
  std::vector<int> columns;
  int band_width = 0;
};

/// Row-major rows x width matrices of the minimum-error-boundary dynamic program.
struct OverlapErrorField {
  int rows = 0;
  int width = 0;
  std::vector<std::int64_t> error;       // e(i, j) = (x - y)^2
  std::vector<std::int64_t> cumulative;  // E(i, j)
  std::vector<int> back;                 // column of the predecessor in row i-1; -1 on row 0

  std::int64_t e(int i, int j) const { return error[static_cast<std::size_t>(i) * width + j]; }
  std::int64_t E(int i, int j) const { return cumulative[static_cast<std::size_t>(i) * width + j]; }
};

struct SeamResult {
  SeamPath path;
  std::int64_t total_error = 0;
};

/// Fills e, E and the backpointers. Bands are rows x width, row-major.
OverlapErrorField overlap_error_field(std::span<const std::uint8_t> x_band, std::span<const std::uint8_t> y_band,
                                      int rows, int width);

/// Minimum total-error monotone path; ties go to the smallest column at every argmin.
SeamResult seam(std::span<const std::uint8_t> x_band, std::span<const std::uint8_t> y_band, int rows, int width);

/// Left/right merge of two N x N patches sharing `overlap` columns; result is N x (2N - overlap).
GrayImage quilt_pair_horizontal(const GrayImage& x, const GrayImage& y, int overlap);

/// Supplies patch number k of a grid in raster order.
using PatchSource = std::function<GrayImage(std::size_t index)>;

/// rows x cols mosaic; every patch after the first is cut against the current
/// canvas by a vertical seam (left neighbour) and a horizontal seam (top
/// neighbour). In the shared corner a pixel comes from the new patch only when
/// it lies on the new-patch side of both seams.
GrayImage assemble_grid(const PatchSource& source, int rows, int cols, int overlap);
GrayImage assemble_grid(const PatchSet& patches, int rows, int cols, int overlap);

/// Output extent along one axis: n * size - (n - 1) * overlap.
constexpr int grid_extent(int n, int size, int overlap) { return n * size - (n - 1) * overlap; }

}  // namespace microforge::quilt
