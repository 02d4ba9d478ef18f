#include "agis/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace agis {

Scalar byte_to_value(unsigned char b) { return static_cast<Scalar>(b) / 255.0 * 2.0 - 1.0; }

unsigned char value_to_byte(Scalar v) {
  Scalar b = std::round((v + 1.0) / 2.0 * 255.0);
  if (b < 0) b = 0;
  if (b > 255) b = 255;
  return static_cast<unsigned char>(b);
}

Scalar quantize8(Scalar v) { return byte_to_value(value_to_byte(v)); }

void write_image(const std::string& path, const Tensor& img) {
  if (img.rank() != 3 || (img.dim(0) != 1 && img.dim(0) != 3))
    throw std::invalid_argument("write_image: expected [C,H,W] with C in {1,3}");
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image for writing: " + path);
  f << (c == 3 ? "P6\n" : "P5\n") << w << " " << h << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(w) * c);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch)
        row[static_cast<size_t>(j) * c + ch] = value_to_byte(img.at3(ch, i, j));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("image write failed: " + path);
}

namespace {
int read_pnm_int(std::istream& in) {
  // Skips whitespace and '#' comments.
  int ch = in.peek();
  while (ch == '#' || std::isspace(ch)) {
    if (ch == '#')
      while (in.peek() != '\n' && in.good()) in.get();
    else
      in.get();
    ch = in.peek();
  }
  int v;
  in >> v;
  return v;
}
}  // namespace

Tensor read_image(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open image: " + path);
  std::string magic;
  f >> magic;
  int c;
  if (magic == "P6")
    c = 3;
  else if (magic == "P5")
    c = 1;
  else
    throw std::runtime_error("unsupported image format in " + path);
  int w = read_pnm_int(f);
  int h = read_pnm_int(f);
  int maxval = read_pnm_int(f);
  if (maxval != 255) throw std::runtime_error("only 8-bit images supported: " + path);
  f.get();  // single whitespace after header
  std::vector<unsigned char> buf(static_cast<size_t>(w) * h * c);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("truncated image: " + path);
  Tensor img({c, h, w});
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j)
      for (int ch = 0; ch < c; ++ch)
        img.at3(ch, i, j) = byte_to_value(buf[(static_cast<size_t>(i) * w + j) * c + ch]);
  return img;
}

}  // namespace agis
