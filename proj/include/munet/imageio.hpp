#pragma once

#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <png.h>
#include <tiffio.h>

#include "munet/core.hpp"

namespace munet {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw DataError("cannot open " + path);
  return f;
}

inline bool host_is_little_endian() {
  const std::uint16_t probe = 1;
  return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

struct PngRead {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngRead() {
    png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngRead() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWrite {
  png_structp png = nullptr;
  png_infop info = nullptr;
  PngWrite() {
    png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (png) info = png_create_info_struct(png);
  }
  ~PngWrite() { png_destroy_write_struct(&png, &info); }
};

inline void quiet_tiff_warnings() {
  static bool done = [] {
    TIFFSetWarningHandler(nullptr);
    return true;
  }();
  (void)done;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

// Reads an 8- or 16-bit single-channel grayscale PNG into [0,1] intensities.
inline Mosaic read_mosaic_png(const std::string& path) {
  auto file = detail::open_file(path, "rb");
  detail::PngRead ctx;
  if (!ctx.png || !ctx.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("failed to decode PNG: " + path);
  png_init_io(ctx.png, file.get());
  png_read_info(ctx.png, ctx.info);

  png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  int depth = png_get_bit_depth(ctx.png, ctx.info);
  int color = png_get_color_type(ctx.png, ctx.info);
  if (color != PNG_COLOR_TYPE_GRAY)
    throw DataError("mosaic PNG must be single-channel grayscale: " + path);
  if (depth < 8) png_set_expand_gray_1_2_4_to_8(ctx.png);
  if (depth == 16 && detail::host_is_little_endian()) png_set_swap(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  std::size_t row_bytes = png_get_rowbytes(ctx.png, ctx.info);
  std::vector<std::uint8_t> raw(row_bytes * h);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y) rows[y] = raw.data() + y * row_bytes;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);

  Mosaic m(static_cast<int>(w), static_cast<int>(h));
  if (depth == 16) {
    const std::uint16_t* src = reinterpret_cast<const std::uint16_t*>(raw.data());
    for (std::size_t i = 0; i < m.size(); ++i) m.px[i] = src[i] / 65535.0f;
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) m.px[i] = raw[i] / 255.0f;
  }
  return m;
}

namespace detail {

inline void write_gray_png(const std::string& path, int width, int height,
                           int depth, const std::uint8_t* data) {
  auto file = open_file(path, "wb");
  PngWrite ctx;
  if (!ctx.png || !ctx.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("failed to encode PNG: " + path);
  png_init_io(ctx.png, file.get());
  png_set_IHDR(ctx.png, ctx.info, width, height, depth, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);
  if (depth == 16 && host_is_little_endian()) png_set_swap(ctx.png);
  std::size_t row_bytes = static_cast<std::size_t>(width) * (depth / 8);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y)
    rows[y] = const_cast<png_bytep>(data + y * row_bytes);
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

}  // namespace detail

inline void write_mosaic_png16(const std::string& path, const Mosaic& m) {
  std::vector<std::uint16_t> q(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, m.px[i]));
    q[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  detail::write_gray_png(path, m.width, m.height, 16,
                         reinterpret_cast<const std::uint8_t*>(q.data()));
}

inline void write_mosaic_png8(const std::string& path, const Mosaic& m) {
  std::vector<std::uint8_t> q(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    float v = std::min(1.0f, std::max(0.0f, m.px[i]));
    q[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  detail::write_gray_png(path, m.width, m.height, 8, q.data());
}

// One 16-bit grayscale PNG holding a single probability plane, value =
// round(p * 65535).
inline void write_probability_png16(const std::string& path, const ProbabilityMap& prob,
                                    int channel) {
  if (channel < 0 || channel >= prob.channels)
    throw ConfigError("write_probability_png16: channel out of range");
  std::vector<std::uint16_t> q(prob.pixels());
  const double* pl = prob.plane(channel);
  for (std::size_t i = 0; i < q.size(); ++i) {
    double v = std::min(1.0, std::max(0.0, pl[i]));
    q[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
  }
  detail::write_gray_png(path, prob.width, prob.height, 16,
                         reinterpret_cast<const std::uint8_t*>(q.data()));
}

// Indexed PNG: raw pixel value = class index, 255 = unlabeled. The palette
// carries the class colors, entry 255 the unlabeled color, anything in
// between black.
inline void write_label_png(const std::string& path, const LabelMap& labels,
                            const ClassTable& table) {
  table.validate();
  int k = table.num_classes();
  auto file = detail::open_file(path, "wb");
  detail::PngWrite ctx;
  if (!ctx.png || !ctx.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("failed to encode PNG: " + path);
  png_init_io(ctx.png, file.get());
  png_set_IHDR(ctx.png, ctx.info, labels.width, labels.height, 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_color plte[256];
  std::memset(plte, 0, sizeof plte);
  for (int i = 0; i < k; ++i)
    plte[i] = png_color{table.palette[i][0], table.palette[i][1], table.palette[i][2]};
  plte[kUnlabeled] = png_color{table.palette[k][0], table.palette[k][1], table.palette[k][2]};
  png_set_PLTE(ctx.png, ctx.info, plte, 256);
  png_write_info(ctx.png, ctx.info);
  std::vector<png_bytep> rows(labels.height);
  for (int y = 0; y < labels.height; ++y)
    rows[y] = const_cast<png_bytep>(labels.lab.data() +
                                    static_cast<std::size_t>(y) * labels.width);
  png_write_image(ctx.png, rows.data());
  png_write_end(ctx.png, nullptr);
}

// Accepts indexed PNGs (raw palette indices are the labels) and 8-bit
// grayscale PNGs (sample value is the label).
inline LabelMap read_label_png(const std::string& path) {
  auto file = detail::open_file(path, "rb");
  detail::PngRead ctx;
  if (!ctx.png || !ctx.info) throw DataError("libpng init failed");
  if (setjmp(png_jmpbuf(ctx.png))) throw DataError("failed to decode PNG: " + path);
  png_init_io(ctx.png, file.get());
  png_read_info(ctx.png, ctx.info);

  png_uint_32 w = png_get_image_width(ctx.png, ctx.info);
  png_uint_32 h = png_get_image_height(ctx.png, ctx.info);
  int depth = png_get_bit_depth(ctx.png, ctx.info);
  int color = png_get_color_type(ctx.png, ctx.info);
  if (color != PNG_COLOR_TYPE_PALETTE &&
      !(color == PNG_COLOR_TYPE_GRAY && depth == 8))
    throw DataError("label PNG must be 8-bit indexed or grayscale: " + path);
  if (depth < 8) png_set_packing(ctx.png);
  png_read_update_info(ctx.png, ctx.info);

  std::size_t row_bytes = png_get_rowbytes(ctx.png, ctx.info);
  LabelMap m(static_cast<int>(w), static_cast<int>(h));
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = m.lab.data() + static_cast<std::size_t>(y) * row_bytes;
  png_read_image(ctx.png, rows.data());
  png_read_end(ctx.png, nullptr);
  return m;
}

// ---------------------------------------------------------------------------
// TIFF
// ---------------------------------------------------------------------------

inline Mosaic read_mosaic_tiff(const std::string& path) {
  detail::quiet_tiff_warnings();
  TIFF* tif = TIFFOpen(path.c_str(), "r");
  if (!tif) throw DataError("cannot open TIFF: " + path);
  struct Closer {
    TIFF* t;
    ~Closer() { TIFFClose(t); }
  } closer{tif};

  std::uint32_t w = 0, h = 0;
  std::uint16_t bits = 8, samples = 1;
  TIFFGetField(tif, TIFFTAG_IMAGEWIDTH, &w);
  TIFFGetField(tif, TIFFTAG_IMAGELENGTH, &h);
  TIFFGetFieldDefaulted(tif, TIFFTAG_BITSPERSAMPLE, &bits);
  TIFFGetFieldDefaulted(tif, TIFFTAG_SAMPLESPERPIXEL, &samples);
  if (samples != 1) throw DataError("mosaic TIFF must be single-channel: " + path);
  if (bits != 8 && bits != 16) throw DataError("mosaic TIFF must be 8- or 16-bit: " + path);
  if (TIFFIsTiled(tif)) throw DataError("tiled TIFF not supported: " + path);

  Mosaic m(static_cast<int>(w), static_cast<int>(h));
  std::vector<std::uint8_t> scan(TIFFScanlineSize(tif));
  for (std::uint32_t y = 0; y < h; ++y) {
    if (TIFFReadScanline(tif, scan.data(), y) < 0)
      throw DataError("TIFF scanline read failed: " + path);
    if (bits == 16) {
      const std::uint16_t* src = reinterpret_cast<const std::uint16_t*>(scan.data());
      for (std::uint32_t x = 0; x < w; ++x) m.at(x, y) = src[x] / 65535.0f;
    } else {
      for (std::uint32_t x = 0; x < w; ++x) m.at(x, y) = scan[x] / 255.0f;
    }
  }
  return m;
}

inline void write_mosaic_tiff16(const std::string& path, const Mosaic& m) {
  detail::quiet_tiff_warnings();
  TIFF* tif = TIFFOpen(path.c_str(), "w");
  if (!tif) throw DataError("cannot create TIFF: " + path);
  struct Closer {
    TIFF* t;
    ~Closer() { TIFFClose(t); }
  } closer{tif};

  TIFFSetField(tif, TIFFTAG_IMAGEWIDTH, std::uint32_t(m.width));
  TIFFSetField(tif, TIFFTAG_IMAGELENGTH, std::uint32_t(m.height));
  TIFFSetField(tif, TIFFTAG_BITSPERSAMPLE, std::uint16_t(16));
  TIFFSetField(tif, TIFFTAG_SAMPLESPERPIXEL, std::uint16_t(1));
  TIFFSetField(tif, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(tif, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(tif, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(tif, TIFFTAG_ROWSPERSTRIP, std::uint32_t(64));

  std::vector<std::uint16_t> row(m.width);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      float v = std::min(1.0f, std::max(0.0f, m.at(x, y)));
      row[x] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    if (TIFFWriteScanline(tif, row.data(), y) < 0)
      throw DataError("TIFF scanline write failed: " + path);
  }
}

// ---------------------------------------------------------------------------
// Format dispatch
// ---------------------------------------------------------------------------

inline Mosaic read_mosaic(const std::string& path) {
  auto file = detail::open_file(path, "rb");
  std::uint8_t magic[4] = {0, 0, 0, 0};
  std::size_t got = std::fread(magic, 1, 4, file.get());
  file.reset();
  if (got >= 4 && magic[0] == 0x89 && magic[1] == 'P' && magic[2] == 'N' && magic[3] == 'G')
    return read_mosaic_png(path);
  if (got >= 2 && ((magic[0] == 'I' && magic[1] == 'I') || (magic[0] == 'M' && magic[1] == 'M')))
    return read_mosaic_tiff(path);
  throw DataError("unrecognized image format (need PNG or TIFF): " + path);
}

}  // namespace munet
