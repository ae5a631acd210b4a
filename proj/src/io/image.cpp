#include "milg/image.hpp"

#include <cctype>
#include <fstream>

#include "milg/error.hpp"

namespace milg {

RgbImage RgbImage::crop(std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) const {
  if (x0 + w > width_ || y0 + h > height_) throw std::out_of_range("crop outside image bounds");
  RgbImage out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    const auto* src = pixels_.data() + ((y0 + y) * width_ + x0) * 3;
    std::copy(src, src + w * 3, out.pixels_.begin() + static_cast<std::ptrdiff_t>(y * w * 3));
  }
  return out;
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& is) {
  std::string tok;
  int c;
  while ((c = is.get()) != EOF) {
    if (c == '#') {
      while ((c = is.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

RgbImage read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UserError("cannot open image " + path.string());
  if (next_token(is) != "P6") throw UserError(path.string() + ": only binary PPM (P6) is supported");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(next_token(is));
    h = std::stoul(next_token(is));
    maxval = std::stoul(next_token(is));
  } catch (const std::exception&) {
    throw UserError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255) throw UserError(path.string() + ": only 8-bit PPM (maxval 255) is supported");
  RgbImage img(w, h);
  if (!is.read(reinterpret_cast<char*>(img.bytes().data()), static_cast<std::streamsize>(w * h * 3)))
    throw UserError(path.string() + ": truncated pixel data");
  return img;
}

void write_ppm(const std::filesystem::path& path, const RgbImage& img) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw UserError("cannot write image " + path.string());
  os << "P6\n" << img.width() << ' ' << img.height() << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.bytes().data()), static_cast<std::streamsize>(img.bytes().size()));
}

}  // namespace milg
