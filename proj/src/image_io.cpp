#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

// jpeglib.h relies on FILE and size_t being declared first.
#include <jpeglib.h>

#include "patchcraft/errors.hpp"
#include "patchcraft/image.hpp"

namespace patchcraft {

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open image " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Image from_rgb8(std::size_t height, std::size_t width, const unsigned char* rgb) {
  Image img(height, width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = static_cast<float>(rgb[i]) / 255.0f;
  }
  return img;
}

Image decode_ppm(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  std::size_t pos = 2;
  auto next_token = [&]() -> std::size_t {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) {
        ++pos;
      }
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') {
          ++pos;
        }
        continue;
      }
      break;
    }
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + static_cast<std::size_t>(bytes[pos] - '0');
      ++pos;
      ++digits;
    }
    if (digits == 0) {
      throw InputError("malformed PPM header in " + path.string());
    }
    return value;
  };
  const std::size_t width = next_token();
  const std::size_t height = next_token();
  const std::size_t maxval = next_token();
  if (width == 0 || height == 0 || maxval == 0 || maxval > 255) {
    throw InputError("unsupported PPM (need 8-bit P6) in " + path.string());
  }
  ++pos;  // single whitespace byte before the raster
  const std::size_t needed = width * height * 3;
  if (pos + needed > bytes.size()) {
    throw InputError("truncated PPM raster in " + path.string());
  }
  Image img(height, width);
  for (std::size_t i = 0; i < needed; ++i) {
    img.pixels[i] = static_cast<float>(bytes[pos + i]) / static_cast<float>(maxval);
  }
  return img;
}

Image decode_png(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
    throw InputError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> rgb(PNG_IMAGE_SIZE(image));
  if (png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr) == 0) {
    std::string message = image.message;
    png_image_free(&image);
    throw InputError("cannot decode PNG " + path.string() + ": " + message);
  }
  return from_rgb8(image.height, image.width, rgb.data());
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  std::array<char, JMSG_LENGTH_MAX> message{};
};

void jpeg_error_exit(j_common_ptr info) {
  auto* manager = reinterpret_cast<JpegErrorManager*>(info->err);
  (*info->err->format_message)(info, manager->message.data());
  std::longjmp(manager->jump, 1);
}

struct JpegRaster {
  std::vector<unsigned char> rgb;
  std::size_t width = 0;
  std::size_t height = 0;
};

// Everything libjpeg may longjmp over lives behind `out`, outside this frame.
bool decode_jpeg_raw(const std::vector<unsigned char>& bytes, JpegRaster* out,
                     JpegErrorManager* errors) {
  jpeg_decompress_struct info{};
  info.err = jpeg_std_error(&errors->base);
  errors->base.error_exit = jpeg_error_exit;
  if (setjmp(errors->jump) != 0) {
    jpeg_destroy_decompress(&info);
    return false;
  }
  jpeg_create_decompress(&info);
  jpeg_mem_src(&info, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&info, TRUE);
  info.out_color_space = JCS_RGB;
  jpeg_start_decompress(&info);
  out->width = info.output_width;
  out->height = info.output_height;
  out->rgb.resize(out->width * out->height * 3);
  while (info.output_scanline < info.output_height) {
    JSAMPROW row = out->rgb.data() + static_cast<std::size_t>(info.output_scanline) * out->width * 3;
    jpeg_read_scanlines(&info, &row, 1);
  }
  jpeg_finish_decompress(&info);
  jpeg_destroy_decompress(&info);
  return true;
}

Image decode_jpeg(const std::vector<unsigned char>& bytes, const std::filesystem::path& path) {
  JpegRaster raster;
  JpegErrorManager errors{};
  if (!decode_jpeg_raw(bytes, &raster, &errors)) {
    throw InputError("cannot decode JPEG " + path.string() + ": " + errors.message.data());
  }
  return from_rgb8(raster.height, raster.width, raster.rgb.data());
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const std::vector<unsigned char> bytes = read_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') {
    return decode_ppm(bytes, path);
  }
  if (bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0) {
    return decode_png(bytes, path);
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) {
    return decode_jpeg(bytes, path);
  }
  throw InputError("unrecognized image format: " + path.string());
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write " + path.string());
  }
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::string raster(img.pixels.size(), '\0');
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    raster[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0f)));
  }
  out.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!out) {
    throw InputError("failed writing " + path.string());
  }
}

}  // namespace patchcraft
