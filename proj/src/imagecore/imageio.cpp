#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstring>
#include <memory>
#include <string>

#include "microforge/fileio.hpp"
#include "microforge/image.hpp"

namespace microforge {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

bool is_png(std::span<const std::uint8_t> bytes) {
  return bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8, bytes.begin());
}

// PGM header tokens are whitespace separated with '#' comments to end of line.
class PgmHeader {
 public:
  explicit PgmHeader(std::span<const std::uint8_t> b) : b_(b) {}

  std::string token() {
    skip();
    std::string t;
    while (pos_ < b_.size() && !std::isspace(b_[pos_]) && b_[pos_] != '#') t.push_back(static_cast<char>(b_[pos_++]));
    if (t.empty()) fail(Errc::UnsupportedFormat, "truncated PGM header");
    return t;
  }

  long number() {
    auto t = token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      fail(Errc::UnsupportedFormat, "bad PGM header field '" + t + "'");
    return std::stol(t);
  }

  // Exactly one whitespace byte separates maxval from the raster.
  std::size_t raster_offset() {
    if (pos_ >= b_.size() || !std::isspace(b_[pos_])) fail(Errc::UnsupportedFormat, "truncated PGM header");
    return pos_ + 1;
  }

 private:
  void skip() {
    while (pos_ < b_.size()) {
      if (std::isspace(b_[pos_])) {
        ++pos_;
      } else if (b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

struct PngReadState {
  std::span<const std::uint8_t> bytes;
  std::size_t pos = 0;
  std::string error;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + n > st->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(out, st->bytes.data() + st->pos, n);
  st->pos += n;
}

void png_error_cb(png_structp png, png_const_charp msg) {
  auto* st = static_cast<PngReadState*>(png_get_error_ptr(png));
  st->error = msg;
  png_longjmp(png, 1);
}

void png_warn_cb(png_structp, png_const_charp) {}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
  PngReadState st{bytes, 0, {}};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &st, png_error_cb, png_warn_cb);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::IoError, "libpng init failed");
  }
  // Objects touched between setjmp and a possible longjmp live behind a
  // pointer that is never reassigned.
  struct Decoded {
    png_uint_32 width = 0, height = 0;
    int bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> data;
    std::vector<png_bytep> rows;
    bool unsupported = false;
  };
  const auto d = std::make_unique<Decoded>();

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::UnsupportedFormat, "PNG decode error: " + st.error);
  }
  png_set_read_fn(png, &st, png_read_cb);
  png_read_info(png, info);
  png_get_IHDR(png, info, &d->width, &d->height, &d->bit_depth, &d->color_type, nullptr, nullptr, nullptr);
  if (d->color_type != PNG_COLOR_TYPE_GRAY || d->bit_depth != 8 || png_get_valid(png, info, PNG_INFO_tRNS)) {
    d->unsupported = true;
  } else {
    png_set_interlace_handling(png);
    png_read_update_info(png, info);
    d->data.resize(static_cast<std::size_t>(d->width) * d->height);
    d->rows.resize(d->height);
    for (png_uint_32 r = 0; r < d->height; ++r) d->rows[r] = d->data.data() + static_cast<std::size_t>(r) * d->width;
    png_read_image(png, d->rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (d->unsupported)
    fail(Errc::UnsupportedFormat, "PNG must be 8-bit grayscale without alpha (color type " +
                                      std::to_string(d->color_type) + ", depth " + std::to_string(d->bit_depth) + ")");
  return GrayImage(static_cast<int>(d->width), static_cast<int>(d->height), std::move(d->data));
}

void png_write_cb(png_structp png, png_bytep in, png_size_t n) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + n);
}

void png_flush_cb(png_structp) {}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
  std::vector<std::uint8_t> out;
  PngReadState st;  // only its error slot is used
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &st, png_error_cb, png_warn_cb);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::IoError, "libpng init failed");
  }
  std::vector<png_const_bytep> rows(img.height());
  for (int r = 0; r < img.height(); ++r) rows[r] = img.row(r).data();
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::IoError, "PNG encode error: " + st.error);
  }
  png_set_write_fn(png, &out, png_write_cb, png_flush_cb);
  png_set_IHDR(png, info, img.width(), img.height(), 8, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

bool has_pgm_extension(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm";
}

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
  PgmHeader h(bytes);
  if (h.token() != "P5") fail(Errc::UnsupportedFormat, "only binary PGM (P5) is supported");
  const long width = h.number();
  const long height = h.number();
  const long maxval = h.number();
  if (width < 1 || height < 1) fail(Errc::UnsupportedFormat, "PGM dimensions must be >= 1");
  if (maxval != 255) fail(Errc::UnsupportedFormat, "PGM maxval must be 255, got " + std::to_string(maxval));
  const std::size_t off = h.raster_offset();
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - off < n) fail(Errc::UnsupportedFormat, "truncated PGM raster");
  return GrayImage(static_cast<int>(width), static_cast<int>(height),
                   std::vector<std::uint8_t>(bytes.begin() + off, bytes.begin() + off + n));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
  const std::string header =
      "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels().begin(), img.pixels().end());
  return out;
}

GrayImage load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(Errc::NotFound, path.string());
  const auto bytes = read_file(path);
  if (is_png(bytes)) return decode_png(bytes);
  if (bytes.size() >= 2 && bytes[0] == 'P') return decode_pgm(bytes);
  fail(Errc::UnsupportedFormat, path.string() + " is neither PNG nor PGM");
}

void save_image(const GrayImage& img, const std::filesystem::path& path) {
  write_file_atomic(path, has_pgm_extension(path) ? encode_pgm(img) : encode_png(img));
}

}  // namespace microforge
