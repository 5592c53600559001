#pragma once

// Accuracy metrics over held-out pixels and classification-map rendering.

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "fst3d/binary_io.hpp"
#include "fst3d/error.hpp"
#include "fst3d/hsi_io.hpp"
#include "fst3d/sampling.hpp"

namespace fst3d {

struct EvalReport {
  std::size_t num_classes = 0;
  std::vector<std::vector<std::size_t>> confusion;  // [true - 1][predicted - 1]
  std::vector<std::size_t> test_counts;             // per true class
  std::vector<double> class_accuracy;               // 0 for classes without test pixels
  double overall_accuracy = 0.0;
  double average_accuracy = 0.0;
  double kappa = 0.0;
  std::size_t total = 0;
};

inline EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion) {
  EvalReport rep;
  const std::size_t K = confusion.size();
  rep.num_classes = K;
  rep.confusion = std::move(confusion);
  rep.test_counts.assign(K, 0);
  rep.class_accuracy.assign(K, 0.0);
  std::vector<std::size_t> predicted(K, 0);
  std::size_t diag = 0;
  for (std::size_t i = 0; i < K; ++i)
    for (std::size_t j = 0; j < K; ++j) {
      rep.test_counts[i] += rep.confusion[i][j];
      predicted[j] += rep.confusion[i][j];
      if (i == j) diag += rep.confusion[i][j];
    }
  for (auto c : rep.test_counts) rep.total += c;
  if (rep.total == 0) throw data_error("evaluate: empty test set");
  const double n = static_cast<double>(rep.total);
  rep.overall_accuracy = static_cast<double>(diag) / n;
  std::size_t present = 0;
  double acc_sum = 0.0;
  double pe = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (rep.test_counts[k] > 0) {
      rep.class_accuracy[k] = static_cast<double>(rep.confusion[k][k]) / static_cast<double>(rep.test_counts[k]);
      acc_sum += rep.class_accuracy[k];
      ++present;
    }
    pe += (static_cast<double>(rep.test_counts[k]) / n) * (static_cast<double>(predicted[k]) / n);
  }
  rep.average_accuracy = acc_sum / static_cast<double>(present);
  rep.kappa = pe < 1.0 ? (rep.overall_accuracy - pe) / (1.0 - pe) : (rep.overall_accuracy == 1.0 ? 1.0 : 0.0);
  return rep;
}

/// Metrics over labeled pixels outside the training mask.
inline EvalReport evaluate(const LabelMap& truth, const LabelMap& predicted, const TrainMask& mask) {
  if (truth.height != predicted.height || truth.width != predicted.width)
    throw data_error("evaluate: prediction and label maps differ in size");
  const std::size_t K = truth.num_classes;
  std::vector<std::vector<std::size_t>> confusion(K, std::vector<std::size_t>(K, 0));
  std::vector<std::uint8_t> training(truth.height * truth.width, 0);
  for (const auto& p : mask.selected)
    if (p.row < truth.height && p.col < truth.width) training[p.row * truth.width + p.col] = 1;
  for (std::size_t i = 0; i < truth.labels.size(); ++i) {
    const auto t = truth.labels[i];
    if (t == 0 || training[i]) continue;
    const auto p = predicted.labels[i];
    if (t > K) throw data_error("evaluate: true label exceeds class count");
    if (p < 1 || p > K)
      throw data_error("evaluate: prediction " + std::to_string(p) + " at a test pixel is outside 1.." +
                       std::to_string(K));
    ++confusion[t - 1][p - 1];
  }
  return report_from_confusion(std::move(confusion));
}

inline json report_to_json(const EvalReport& r) {
  return json{{"num_classes", r.num_classes},
              {"overall_accuracy", r.overall_accuracy},
              {"average_accuracy", r.average_accuracy},
              {"kappa", r.kappa},
              {"total_test_pixels", r.total},
              {"test_counts", r.test_counts},
              {"class_accuracy", r.class_accuracy},
              {"confusion", r.confusion}};
}

/// Confusion matrix as CSV: header "true\\pred,1,...,K", one row per true class.
inline std::string confusion_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "true\\pred";
  for (std::size_t j = 1; j <= r.num_classes; ++j) os << ',' << j;
  os << '\n';
  for (std::size_t i = 0; i < r.num_classes; ++i) {
    os << i + 1;
    for (std::size_t j = 0; j < r.num_classes; ++j) os << ',' << r.confusion[i][j];
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Classification maps as indexed-color PNG.

using Rgb = std::array<std::uint8_t, 3>;

/// Entry 0 (unlabeled) is black; entries 1..16 are visually distinct colors.
inline const std::vector<Rgb>& default_palette() {
  static const std::vector<Rgb> palette = {
      {0, 0, 0},       {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
      {245, 130, 48},  {145, 30, 180},  {70, 240, 240},  {240, 50, 230}, {210, 245, 60},
      {250, 190, 212}, {0, 128, 128},   {220, 190, 255}, {170, 110, 40}, {255, 250, 200},
      {128, 0, 0},     {170, 255, 195}};
  return palette;
}

namespace detail {

struct PngBuffer {
  std::vector<std::uint8_t>* out = nullptr;
  const std::uint8_t* in = nullptr;
  std::size_t in_size = 0;
  std::size_t pos = 0;
};

// Errors surface as a false return from the caller instead of stderr output.
extern "C" inline void png_error_cb(png_structp png, png_const_charp) { png_longjmp(png, 1); }
extern "C" inline void png_warning_cb(png_structp, png_const_charp) {}

extern "C" inline void png_write_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  buf->out->insert(buf->out->end(), data, data + len);
}

extern "C" inline void png_flush_cb(png_structp) {}

extern "C" inline void png_read_cb(png_structp png, png_bytep data, png_size_t len) {
  auto* buf = static_cast<PngBuffer*>(png_get_io_ptr(png));
  if (buf->pos + len > buf->in_size) png_error(png, "truncated PNG");
  std::memcpy(data, buf->in + buf->pos, len);
  buf->pos += len;
}

// Kept free of objects with destructors because libpng reports errors via longjmp.
inline bool encode_indexed_png(const std::uint8_t* indices, std::size_t height, std::size_t width,
                               const png_color* palette, int palette_size, PngBuffer* buf,
                               const std::uint8_t** rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, buf, png_write_cb, png_flush_cb);
  png_set_compression_level(png, 9);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_PALETTE, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_PLTE(png, info, palette, palette_size);
  for (std::size_t r = 0; r < height; ++r) rows[r] = indices + r * width;
  png_set_rows(png, info, const_cast<png_bytepp>(rows));
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

/// One pixel per cell, palette-indexed by class id. Byte-deterministic.
inline std::vector<std::uint8_t> render_map(const LabelMap& map,
                                            const std::vector<Rgb>& palette = default_palette()) {
  if (map.height == 0 || map.width == 0) throw data_error("render_map: empty map");
  if (palette.empty() || palette.size() > 256) throw usage_error("render_map: palette must hold 1..256 colors");
  std::vector<std::uint8_t> indices(map.labels.size());
  for (std::size_t i = 0; i < map.labels.size(); ++i) {
    if (map.labels[i] >= palette.size())
      throw data_error("render_map: class id " + std::to_string(map.labels[i]) + " exceeds the " +
                       std::to_string(palette.size()) + "-entry palette");
    indices[i] = static_cast<std::uint8_t>(map.labels[i]);
  }
  std::vector<png_color> pal(palette.size());
  for (std::size_t i = 0; i < palette.size(); ++i) pal[i] = {palette[i][0], palette[i][1], palette[i][2]};
  std::vector<std::uint8_t> out;
  detail::PngBuffer buf{&out};
  std::vector<const std::uint8_t*> rows(map.height);
  if (!detail::encode_indexed_png(indices.data(), map.height, map.width, pal.data(),
                                  static_cast<int>(pal.size()), &buf, rows.data()))
    throw data_error("render_map: PNG encoding failed");
  return out;
}

struct DecodedMap {
  LabelMap indices;
  std::vector<Rgb> palette;
};

namespace detail {

inline bool decode_indexed_png(PngBuffer* buf, png_uint_32* w, png_uint_32* h,
                               std::vector<std::uint8_t>* pixels, std::vector<Rgb>* palette) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_cb, png_warning_cb);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, buf, png_read_cb);
  png_read_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  *w = png_get_image_width(png, info);
  *h = png_get_image_height(png, info);
  if (png_get_color_type(png, info) != PNG_COLOR_TYPE_PALETTE || png_get_bit_depth(png, info) != 8) {
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_colorp pal = nullptr;
  int npal = 0;
  png_get_PLTE(png, info, &pal, &npal);
  png_bytepp rows = png_get_rows(png, info);
  pixels->resize(static_cast<std::size_t>(*w) * *h);
  for (png_uint_32 r = 0; r < *h; ++r) std::memcpy(pixels->data() + r * *w, rows[r], *w);
  palette->resize(static_cast<std::size_t>(npal));
  for (int i = 0; i < npal; ++i) (*palette)[i] = {pal[i].red, pal[i].green, pal[i].blue};
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

}  // namespace detail

/// Decodes a map written by render_map back into class ids and its palette.
inline DecodedMap decode_map(const std::vector<std::uint8_t>& png_bytes) {
  detail::PngBuffer buf{nullptr, png_bytes.data(), png_bytes.size(), 0};
  png_uint_32 w = 0, h = 0;
  std::vector<std::uint8_t> pixels;
  DecodedMap out;
  if (!detail::decode_indexed_png(&buf, &w, &h, &pixels, &out.palette))
    throw data_error("decode_map: not an 8-bit indexed PNG");
  out.indices = LabelMap(h, w);
  for (std::size_t i = 0; i < pixels.size(); ++i) out.indices.labels[i] = pixels[i];
  out.indices.refresh_class_count();
  return out;
}

}  // namespace fst3d
