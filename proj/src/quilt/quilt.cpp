#include "microforge/quilt.hpp"

#include <limits>
#include <string>

namespace microforge::quilt {

namespace {

constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max();

void check_overlap(int n, int overlap) {
  if (overlap < 1 || overlap >= n)
    fail(Errc::BadOverlap, "overlap " + std::to_string(overlap) + " must satisfy 1 <= overlap < " + std::to_string(n));
}

void check_square_pair(const GrayImage& x, const GrayImage& y) {
  if (x.width() != x.height() || y.width() != y.height() || x.width() != y.width())
    fail(Errc::ShapeMismatch, "patches must be square and equally sized");
}

}  // namespace

OverlapErrorField overlap_error_field(std::span<const std::uint8_t> x_band, std::span<const std::uint8_t> y_band,
                                      int rows, int width) {
  if (rows < 1 || width < 1) fail(Errc::ShapeMismatch, "band must be at least 1x1");
  const std::size_t n = static_cast<std::size_t>(rows) * width;
  if (x_band.size() != n || y_band.size() != n) fail(Errc::ShapeMismatch, "band sizes differ from rows*width");

  OverlapErrorField f;
  f.rows = rows;
  f.width = width;
  f.error.resize(n);
  f.cumulative.resize(n);
  f.back.assign(n, -1);
  for (std::size_t k = 0; k < n; ++k) {
    const std::int64_t d = static_cast<std::int64_t>(x_band[k]) - static_cast<std::int64_t>(y_band[k]);
    f.error[k] = d * d;
  }
  for (int j = 0; j < width; ++j) f.cumulative[j] = f.error[j];
  for (int i = 1; i < rows; ++i) {
    const std::int64_t* prev = &f.cumulative[static_cast<std::size_t>(i - 1) * width];
    for (int j = 0; j < width; ++j) {
      // Scan left to right so equal minima keep the smallest column.
      std::int64_t best = kInf;
      int arg = -1;
      for (int dj = -1; dj <= 1; ++dj) {
        const int jj = j + dj;
        if (jj < 0 || jj >= width) continue;
        if (prev[jj] < best) {
          best = prev[jj];
          arg = jj;
        }
      }
      const std::size_t k = static_cast<std::size_t>(i) * width + j;
      f.cumulative[k] = f.error[k] + best;
      f.back[k] = arg;
    }
  }
  return f;
}

SeamResult seam(std::span<const std::uint8_t> x_band, std::span<const std::uint8_t> y_band, int rows, int width) {
  const auto f = overlap_error_field(x_band, y_band, rows, width);
  SeamResult out;
  out.path.band_width = width;
  out.path.columns.assign(rows, 0);
  int p = 0;
  for (int j = 1; j < width; ++j)
    if (f.E(rows - 1, j) < f.E(rows - 1, p)) p = j;
  out.total_error = f.E(rows - 1, p);
  for (int i = rows - 1; i >= 0; --i) {
    out.path.columns[i] = p;
    if (i > 0) p = f.back[static_cast<std::size_t>(i) * width + p];
  }
  return out;
}

GrayImage quilt_pair_horizontal(const GrayImage& x, const GrayImage& y, int overlap) {
  check_square_pair(x, y);
  const int n = x.width();
  check_overlap(n, overlap);
  std::vector<std::uint8_t> xb, yb;
  xb.reserve(static_cast<std::size_t>(n) * overlap);
  yb.reserve(xb.capacity());
  for (int i = 0; i < n; ++i) {
    auto xr = x.row(i).subspan(n - overlap, overlap);
    auto yr = y.row(i).subspan(0, overlap);
    xb.insert(xb.end(), xr.begin(), xr.end());
    yb.insert(yb.end(), yr.begin(), yr.end());
  }
  const auto cut = seam(xb, yb, n, overlap);

  GrayImage z(2 * n - overlap, n);
  for (int i = 0; i < n; ++i) {
    const int split = n - overlap + cut.path.columns[i];
    for (int j = 0; j < split; ++j) z.at(i, j) = x.at(i, j);
    for (int j = split; j < z.width(); ++j) z.at(i, j) = y.at(i, j - (n - overlap));
  }
  return z;
}

GrayImage assemble_grid(const PatchSource& source, int rows, int cols, int overlap) {
  if (rows < 1 || cols < 1) fail(Errc::ConfigInvalid, "grid must have at least one row and column");
  GrayImage first = source(0);
  const int n = first.width();
  if (first.height() != n) fail(Errc::ShapeMismatch, "patches must be square");
  if (rows > 1 || cols > 1) check_overlap(n, overlap);
  const int step = n - overlap;
  GrayImage canvas(grid_extent(cols, n, overlap), grid_extent(rows, n, overlap));

  std::vector<int> vcut(n), hcut(n);
  std::vector<std::uint8_t> cb, pb;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t index = static_cast<std::size_t>(r) * cols + c;
      GrayImage patch = index == 0 ? std::move(first) : source(index);
      if (patch.width() != n || patch.height() != n) fail(Errc::ShapeMismatch, "patch size differs within grid");
      const int y0 = r * step;
      const int x0 = c * step;

      // Vertical seam against the left neighbour: per patch row, first owned column.
      std::fill(vcut.begin(), vcut.end(), 0);
      if (c > 0) {
        cb.clear();
        pb.clear();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < overlap; ++j) {
            cb.push_back(canvas.at(y0 + i, x0 + j));
            pb.push_back(patch.at(i, j));
          }
        vcut = seam(cb, pb, n, overlap).path.columns;
      }
      // Horizontal seam against the top neighbour, computed on the transposed band.
      std::fill(hcut.begin(), hcut.end(), 0);
      if (r > 0) {
        cb.clear();
        pb.clear();
        for (int j = 0; j < n; ++j)
          for (int i = 0; i < overlap; ++i) {
            cb.push_back(canvas.at(y0 + i, x0 + j));
            pb.push_back(patch.at(i, j));
          }
        hcut = seam(cb, pb, n, overlap).path.columns;
      }

      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          if (j >= vcut[i] && i >= hcut[j]) canvas.at(y0 + i, x0 + j) = patch.at(i, j);
    }
  }
  return canvas;
}

GrayImage assemble_grid(const PatchSet& patches, int rows, int cols, int overlap) {
  if (rows < 1 || cols < 1) fail(Errc::ConfigInvalid, "grid must have at least one row and column");
  const auto needed = static_cast<std::size_t>(rows) * cols;
  if (patches.count() < needed)
    fail(Errc::ConfigInvalid, "grid needs " + std::to_string(needed) + " patches, set has " +
                                  std::to_string(patches.count()));
  return assemble_grid([&](std::size_t i) { return patches.patch(i); }, rows, cols, overlap);
}

}  // namespace microforge::quilt
