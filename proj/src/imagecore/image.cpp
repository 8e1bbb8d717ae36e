#include "microforge/image.hpp"

#include <algorithm>
#include <numeric>

#include "microforge/fileio.hpp"
#include "microforge/rng.hpp"

namespace microforge {

namespace {

void check_dims(int width, int height, std::size_t n) {
  if (width < 1 || height < 1) fail(Errc::ShapeMismatch, "image dimensions must be >= 1");
  if (n != static_cast<std::size_t>(width) * height) fail(Errc::ShapeMismatch, "data length != width*height");
}

constexpr char kPatchMagic[4] = {'M', 'G', 'P', 'T'};
constexpr std::uint32_t kPatchVersion = 1;

}  // namespace

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : width_(width), height_(height) {
  check_dims(width, height, static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0));
  data_.assign(static_cast<std::size_t>(width) * height, fill);
}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height, data_.size());
}

GrayImage GrayImage::crop(int row, int col, int h, int w) const {
  if (row < 0 || col < 0 || row + h > height_ || col + w > width_)
    fail(Errc::ShapeMismatch, "crop window outside image");
  GrayImage out(w, h);
  for (int r = 0; r < h; ++r) {
    auto src = this->row(row + r).subspan(col, w);
    std::copy(src.begin(), src.end(), out.data_.begin() + static_cast<std::ptrdiff_t>(r) * w);
  }
  return out;
}

BinaryMask::BinaryMask(int width, int height, bool fill) : width_(width), height_(height) {
  check_dims(width, height, static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0));
  data_.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
  check_dims(width, height, data_.size());
  for (auto& v : data_) v = v ? 1 : 0;
}

std::size_t BinaryMask::count_solid() const {
  return static_cast<std::size_t>(std::count(data_.begin(), data_.end(), std::uint8_t{1}));
}

GrayImage BinaryMask::to_gray() const {
  std::vector<std::uint8_t> px(data_.size());
  std::transform(data_.begin(), data_.end(), px.begin(), [](std::uint8_t v) { return v ? 255 : 0; });
  return GrayImage(width_, height_, std::move(px));
}

PatchSet::PatchSet(int patch_size, std::uint64_t seed, std::vector<std::uint8_t> store)
    : patch_size_(patch_size), seed_(seed), store_(std::move(store)) {
  if (patch_size < 1) fail(Errc::ShapeMismatch, "patch size must be >= 1");
  const std::size_t per = static_cast<std::size_t>(patch_size) * patch_size;
  if (store_.empty() || store_.size() % per != 0) fail(Errc::ShapeMismatch, "patch store length");
  count_ = store_.size() / per;
}

std::span<const std::uint8_t> PatchSet::patch_pixels(std::size_t i) const {
  const std::size_t per = static_cast<std::size_t>(patch_size_) * patch_size_;
  return std::span<const std::uint8_t>(store_).subspan(i * per, per);
}

GrayImage PatchSet::patch(std::size_t i) const {
  auto px = patch_pixels(i);
  return GrayImage(patch_size_, patch_size_, std::vector<std::uint8_t>(px.begin(), px.end()));
}

std::vector<PatchCorner> sample_patch_corners(int width, int height, int patch_size, std::size_t count,
                                              std::uint64_t seed) {
  if (patch_size < 1 || patch_size > std::min(width, height))
    fail(Errc::PatchTooLarge, "patch size " + std::to_string(patch_size) + " exceeds image " +
                                  std::to_string(width) + "x" + std::to_string(height));
  if (count < 1) fail(Errc::ConfigInvalid, "patch count must be >= 1");
  CounterRng rng = CounterRng(seed).split("patch-corners");
  const auto rows = static_cast<std::uint64_t>(height - patch_size + 1);
  const auto cols = static_cast<std::uint64_t>(width - patch_size + 1);
  std::vector<PatchCorner> corners(count);
  for (auto& c : corners) {
    c.row = static_cast<int>(rng.below(rows));
    c.col = static_cast<int>(rng.below(cols));
  }
  return corners;
}

PatchSet extract_patches(const GrayImage& img, int patch_size, std::size_t count, std::uint64_t seed) {
  const auto corners = sample_patch_corners(img.width(), img.height(), patch_size, count, seed);
  const std::size_t per = static_cast<std::size_t>(patch_size) * patch_size;
  std::vector<std::uint8_t> store(per * count);
  auto dst = store.begin();
  for (const auto& c : corners) {
    for (int r = 0; r < patch_size; ++r) {
      auto src = img.row(c.row + r).subspan(c.col, patch_size);
      dst = std::copy(src.begin(), src.end(), dst);
    }
  }
  return PatchSet(patch_size, seed, std::move(store));
}

GrayImage subsample_stride2(const GrayImage& img) {
  if (img.width() % 2 != 0 || img.height() % 2 != 0)
    fail(Errc::OddDimension, std::to_string(img.width()) + "x" + std::to_string(img.height()));
  GrayImage out(img.width() / 2, img.height() / 2);
  for (int r = 0; r < out.height(); ++r)
    for (int c = 0; c < out.width(); ++c) out.at(r, c) = img.at(2 * r, 2 * c);
  return out;
}

void save_patchset(const PatchSet& set, const std::filesystem::path& path) {
  ByteWriter w;
  w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(kPatchMagic), 4));
  w.u32(kPatchVersion);
  w.u32(static_cast<std::uint32_t>(set.patch_size()));
  w.u32(static_cast<std::uint32_t>(set.count()));
  w.u64(set.seed());
  w.bytes(set.storage());
  write_file_atomic(path, w.buffer());
}

PatchSet load_patchset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  auto magic = r.bytes(4);
  if (!std::equal(magic.begin(), magic.end(), kPatchMagic)) fail(Errc::CorruptFile, "bad patch-set magic");
  const auto version = r.u32();
  if (version != kPatchVersion) fail(Errc::VersionMismatch, "patch-set version " + std::to_string(version));
  const auto size = r.u32();
  const auto count = r.u32();
  const auto seed = r.u64();
  if (size == 0 || count == 0) fail(Errc::CorruptFile, "empty patch set");
  const std::size_t n = static_cast<std::size_t>(size) * size * count;
  auto payload = r.bytes(n);
  if (r.remaining() != 0) fail(Errc::CorruptFile, "trailing bytes in patch set");
  return PatchSet(static_cast<int>(size), seed, std::vector<std::uint8_t>(payload.begin(), payload.end()));
}

}  // namespace microforge
