#include "contourrl/image.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "contourrl/errors.hpp"

namespace crl {

namespace {

// reads one whitespace-delimited token, skipping '#' comments, tracking the
// byte offset for error reporting
std::string next_token(std::istream& in, long& offset) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    ++offset;
    if (ch == '#') {
      while ((ch = in.get()) != EOF) {
        ++offset;
        if (ch == '\n') break;
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

long parse_int_token(const std::string& tok, std::istream&, long offset, const char* what) {
  if (tok.empty()) throw ParseError(std::string("unexpected end of file reading ") + what, offset);
  try {
    size_t pos = 0;
    long v = std::stol(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + tok + "'", offset);
  }
}

}  // namespace

void write_pgm(const std::string& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for write: " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  std::vector<uint8_t> row(img.width);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c) {
      float v = img.at(r, c);
      if (v < 0.0f) v = 0.0f;
      if (v > 1.0f) v = 1.0f;
      row[c] = static_cast<uint8_t>(std::lround(v * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row.size());
  }
  if (!out) throw Error("short write: " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open: " + path);
  long offset = 0;
  std::string magic = next_token(in, offset);
  if (magic != "P5") throw ParseError("expected P5 magic, got '" + magic + "'", 0);
  long w = parse_int_token(next_token(in, offset), in, offset, "width");
  long h = parse_int_token(next_token(in, offset), in, offset, "height");
  long maxval = parse_int_token(next_token(in, offset), in, offset, "maxval");
  if (w <= 0 || h <= 0) throw ParseError("non-positive dimensions", offset);
  if (maxval != 255) throw ParseError("unsupported maxval " + std::to_string(maxval), offset);
  // header tokenizer consumed exactly one whitespace byte after maxval
  GrayImage img(static_cast<int>(h), static_cast<int>(w));
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), buf.size());
  if (static_cast<size_t>(in.gcount()) != buf.size())
    throw ParseError("truncated pixel data", offset + in.gcount());
  for (size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0f;
  return img;
}

void write_ppm(const std::string& path, const RgbImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for write: " + path);
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()), img.data.size());
  if (!out) throw Error("short write: " + path);
}

}  // namespace crl
