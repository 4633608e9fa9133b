/**
 * Copyright 2026 The tacsim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// PNG encode/decode on top of libpng. Consumers must link PNG::PNG.

#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <png.h>

#include "tacsim/image.hpp"

namespace tacsim {

namespace png_detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline void write_rows(const std::string& path, int width, int height, int color_type,
                       int channels, const std::uint8_t* pixels) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw Error("cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("failed to encode PNG '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y) {
    png_write_row(png, const_cast<png_bytep>(pixels + static_cast<std::size_t>(y) * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace png_detail

inline void write_png(const std::string& path, const GrayImage& image) {
  png_detail::write_rows(path, image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 1, image.data().data());
}

inline void write_png_rgb(const std::string& path, int width, int height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) throw DomainError("RGB buffer size mismatch");
  png_detail::write_rows(path, width, height, PNG_COLOR_TYPE_RGB, 3, rgb.data());
}

// Reads any 8-bit or 16-bit PNG and converts it to 8-bit grayscale.
inline GrayImage read_png_gray(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw ParseError("cannot read PNG '" + path + "': " + img.message);
  }
  img.format = PNG_FORMAT_GRAY;
  GrayImage out(static_cast<int>(img.width), static_cast<int>(img.height));
  if (!png_image_finish_read(&img, nullptr, out.data().data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw ParseError("cannot decode PNG '" + path + "': " + msg);
  }
  return out;
}

}  // namespace tacsim
