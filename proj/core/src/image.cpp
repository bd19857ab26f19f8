#include "msfs/image.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

namespace msfs {

Image make_image(int channels, int h, int w) {
  Image img;
  img.channels = channels;
  img.h = h;
  img.w = w;
  img.pix.assign(static_cast<std::size_t>(channels) * h * w, 0.f);
  return img;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

Image load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P6" && magic != "P5") throw FormatError(path + ": not a binary PPM/PGM");
  auto next_token = [&]() -> long {
    long v;
    // skip whitespace and comment lines
    while (true) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    if (!(in >> v)) throw FormatError(path + ": truncated header");
    return v;
  };
  const long w = next_token(), h = next_token(), maxval = next_token();
  if (w <= 0 || h <= 0 || maxval != 255) throw FormatError(path + ": unsupported PPM header");
  in.get();  // single whitespace after maxval
  const int channels = magic == "P6" ? 3 : 1;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw FormatError(path + ": truncated pixel data");
  Image img = make_image(channels, static_cast<int>(h), static_cast<int>(w));
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * channels + c] / 255.f;
  return img;
}

void save_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path);
  out << (img.channels == 1 ? "P5" : "P6") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(img.w) * img.h * img.channels);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float v = img.at(c, y, x);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        raw[(static_cast<std::size_t>(y) * img.w + x) * img.channels + c] =
            static_cast<unsigned char>(v * 255.f + 0.5f);
      }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

Image load_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw FormatError("cannot open " + path);

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw FormatError("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw FormatError("libpng init failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": PNG decode error");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  const int channels = png_get_channels(png, info);
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw FormatError(path + ": unsupported channel count");
  }

  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  std::vector<png_bytep> rows(h);
  for (png_uint_32 y = 0; y < h; ++y)
    rows[y] = raw.data() + static_cast<std::size_t>(y) * w * channels;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Image img = make_image(channels, static_cast<int>(h), static_cast<int>(w));
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(c, y, x) = raw[(static_cast<std::size_t>(y) * w + x) * channels + c] / 255.f;
  return img;
}

void save_png(const std::string& path, const Image& img) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw FormatError("cannot write " + path);

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (!png || !info) throw FormatError("libpng init failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw FormatError(path + ": PNG encode error");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, img.w, img.h, 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<std::size_t>(img.w) * img.channels);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.channels; ++c) {
        float v = img.at(c, y, x);
        v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
        row[static_cast<std::size_t>(x) * img.channels + c] =
            static_cast<unsigned char>(v * 255.f + 0.5f);
      }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image load_image(const std::string& path) {
  if (ends_with(path, ".png") || ends_with(path, ".PNG")) return load_png(path);
  if (ends_with(path, ".ppm") || ends_with(path, ".pgm")) return load_ppm(path);
  throw FormatError(path + ": unsupported image format (expected .png/.ppm/.pgm)");
}

void save_image(const std::string& path, const Image& img) {
  if (ends_with(path, ".png") || ends_with(path, ".PNG")) return save_png(path, img);
  if (ends_with(path, ".ppm") || ends_with(path, ".pgm")) return save_ppm(path, img);
  throw FormatError(path + ": unsupported image format (expected .png/.ppm/.pgm)");
}

std::vector<float> to_gray(const Image& img) {
  std::vector<float> gray(static_cast<std::size_t>(img.h) * img.w);
  if (img.channels == 1) {
    std::memcpy(gray.data(), img.pix.data(), gray.size() * sizeof(float));
    return gray;
  }
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      gray[static_cast<std::size_t>(y) * img.w + x] =
          0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x);
  return gray;
}

}  // namespace msfs
