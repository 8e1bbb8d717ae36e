#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "microforge/error.hpp"

namespace microforge {

/// 8-bit grayscale raster, row-major, 0 = darkest.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(int width, int height, std::uint8_t fill = 0);
  GrayImage(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::uint8_t at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col]; }
  std::uint8_t& at(int row, int col) { return data_[static_cast<std::size_t>(row) * width_ + col]; }

  std::span<const std::uint8_t> pixels() const { return data_; }
  std::span<std::uint8_t> pixels() { return data_; }
  std::span<const std::uint8_t> row(int r) const {
    return std::span<const std::uint8_t>(data_).subspan(static_cast<std::size_t>(r) * width_, width_);
  }

  /// Copy of the window with top-left corner (row, col).
  GrayImage crop(int row, int col, int height, int width) const;

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Two-phase raster; true marks the solid phase.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false);
  BinaryMask(int width, int height, std::vector<std::uint8_t> data);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }

  bool at(int row, int col) const { return data_[static_cast<std::size_t>(row) * width_ + col] != 0; }
  void set(int row, int col, bool v) { data_[static_cast<std::size_t>(row) * width_ + col] = v ? 1 : 0; }

  /// Stored as one byte per pixel (0 or 1) so spans of it are addressable.
  std::span<const std::uint8_t> cells() const { return data_; }

  std::size_t count_solid() const;

  /// Solid = 255, pore = 0.
  GrayImage to_gray() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Square patches cut from one exemplar, stored back to back.
class PatchSet {
 public:
  PatchSet() = default;
  PatchSet(int patch_size, std::uint64_t seed, std::vector<std::uint8_t> store);

  int patch_size() const { return patch_size_; }
  std::size_t count() const { return count_; }
  std::uint64_t seed() const { return seed_; }

  std::span<const std::uint8_t> patch_pixels(std::size_t i) const;
  GrayImage patch(std::size_t i) const;
  std::span<const std::uint8_t> storage() const { return store_; }

  friend bool operator==(const PatchSet&, const PatchSet&) = default;

 private:
  int patch_size_ = 0;
  std::size_t count_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<std::uint8_t> store_;
};

/// Reads an 8-bit grayscale PNG or a binary PGM (P5, maxval 255).
GrayImage load_image(const std::filesystem::path& path);

/// Writes PNG or PGM depending on the extension (".pgm" selects PGM).
void save_image(const GrayImage& img, const std::filesystem::path& path);

/// In-memory PGM codec, shared by the file functions.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

/// Top-left corner of a patch.
struct PatchCorner {
  int row = 0;
  int col = 0;
};

/// Corners drawn uniformly with replacement from the valid window range.
std::vector<PatchCorner> sample_patch_corners(int width, int height, int patch_size, std::size_t count,
                                              std::uint64_t seed);

PatchSet extract_patches(const GrayImage& img, int patch_size, std::size_t count, std::uint64_t seed);

/// output(i, j) = input(2i, 2j).
GrayImage subsample_stride2(const GrayImage& img);

/// Container format "MGPT" v1.
void save_patchset(const PatchSet& set, const std::filesystem::path& path);
PatchSet load_patchset(const std::filesystem::path& path);

}  // namespace microforge
