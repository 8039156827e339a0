#include "contourrl/contour.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "contourrl/errors.hpp"

namespace crl {

namespace {

// Moore neighbourhood in clockwise order on screen (row down):
// N, NE, E, SE, S, SW, W, NW
constexpr int kNbrRow[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kNbrCol[8] = {0, 1, 1, 1, 0, -1, -1, -1};

int neighbour_index(const Pixel& from, const Pixel& to) {
  for (int i = 0; i < 8; ++i)
    if (from.row + kNbrRow[i] == to.row && from.col + kNbrCol[i] == to.col) return i;
  return -1;
}

}  // namespace

std::vector<Pixel> line_between(const Pixel& a, const Pixel& b) {
  std::vector<Pixel> out;
  int dr = b.row - a.row, dc = b.col - a.col;
  int adr = std::abs(dr), adc = std::abs(dc);
  int sr = dr > 0 ? 1 : (dr < 0 ? -1 : 0);
  int sc = dc > 0 ? 1 : (dc < 0 ? -1 : 0);
  if (adr <= 1 && adc <= 1) return out;  // already adjacent (or equal)
  if (adr <= 1) {
    // adjacent rows: walk the source row, step down/up at the end
    for (int c = a.col + sc; c != b.col; c += sc) out.push_back({a.row, c});
    return out;
  }
  if (adc <= 1) {
    for (int r = a.row + sr; r != b.row; r += sr) out.push_back({r, a.col});
    return out;
  }
  // general case: Bresenham along the dominant axis, endpoints excluded
  if (adc >= adr) {
    int e = adc / 2, r = a.row, c = a.col;
    for (int i = 0; i < adc - 1; ++i) {
      c += sc;
      e += adr;
      if (e >= adc) {
        e -= adc;
        r += sr;
      }
      out.push_back({r, c});
    }
  } else {
    int e = adr / 2, r = a.row, c = a.col;
    for (int i = 0; i < adr - 1; ++i) {
      r += sr;
      e += adc;
      if (e >= adr) {
        e -= adr;
        c += sc;
      }
      out.push_back({r, c});
    }
  }
  return out;
}

long long signed_area_twice(const std::vector<Pixel>& points) {
  // shoelace with y up == row down negated; positive means counter-clockwise
  // in image coordinates
  long long s = 0;
  int n = static_cast<int>(points.size());
  for (int i = 0; i < n; ++i) {
    const Pixel& p = points[i];
    const Pixel& q = points[(i + 1) % n];
    s += static_cast<long long>(q.col) * p.row - static_cast<long long>(p.col) * q.row;
  }
  return s;
}

bool is_closed_eight_connected(const std::vector<Pixel>& points) {
  int n = static_cast<int>(points.size());
  if (n < 3) return false;
  for (int i = 0; i < n; ++i)
    if (!adjacent8(points[i], points[(i + 1) % n])) return false;
  return true;
}

Contour refine_contour(const std::vector<Pixel>& points) {
  if (points.empty()) throw DegenerateContour("refine_contour: empty input");
  // drop consecutive duplicates (cyclically)
  std::vector<Pixel> dedup;
  for (const Pixel& p : points)
    if (dedup.empty() || !(dedup.back() == p)) dedup.push_back(p);
  while (dedup.size() > 1 && dedup.back() == dedup.front()) dedup.pop_back();
  if (dedup.size() < 3) throw DegenerateContour("refine_contour: fewer than 3 distinct points");

  std::vector<Pixel> out;
  out.reserve(dedup.size() * 2);
  int n = static_cast<int>(dedup.size());
  for (int i = 0; i < n; ++i) {
    out.push_back(dedup[i]);
    for (const Pixel& p : line_between(dedup[i], dedup[(i + 1) % n])) out.push_back(p);
  }
  Contour c;
  c.points = std::move(out);
  return c;
}

Contour ensure_ccw(Contour c) {
  long long a2 = signed_area_twice(c.points);
  if (a2 == 0) throw DegenerateContour("ensure_ccw: zero enclosed area");
  if (a2 < 0) std::reverse(c.points.begin() + 1, c.points.end());
  return c;
}

std::vector<Pixel> trace_boundary(int h, int w, const std::function<bool(int, int)>& object,
                                  Pixel start) {
  auto obj = [&](int r, int c) { return r >= 0 && r < h && c >= 0 && c < w && object(r, c); };
  if (!obj(start.row, start.col)) throw Error("trace_boundary: start is not an object pixel");

  // the scan found start first in row-major order, so the walk "entered" it
  // from the west
  const int enter0 = 6;  // W
  std::vector<Pixel> seq{start};
  Pixel cur = start;
  int back = enter0;  // index (relative to cur) of the backtrack neighbour
  long cap = 8L * h * w + 16;
  for (long it = 0; it < cap; ++it) {
    // scan clockwise starting just after the backtrack neighbour
    int found = -1, last_bg = back;
    for (int k = 1; k <= 8; ++k) {
      int idx = (back + k) % 8;
      int nr = cur.row + kNbrRow[idx], nc = cur.col + kNbrCol[idx];
      if (obj(nr, nc)) {
        found = idx;
        break;
      }
      last_bg = idx;  // last background neighbour examined
    }
    if (found < 0) return seq;  // isolated pixel
    Pixel next{cur.row + kNbrRow[found], cur.col + kNbrCol[found]};
    // backtrack seen from the next pixel
    Pixel back_px{cur.row + kNbrRow[last_bg], cur.col + kNbrCol[last_bg]};
    int enter = neighbour_index(next, back_px);
    if (next == start && enter == enter0) return seq;  // closed: same entry direction
    seq.push_back(next);
    cur = next;
    back = enter;
  }
  throw OpenCurve("trace_boundary: walk failed to close");
}

Contour extract_contour(const GrayImage& mask) {
  auto is_on = [&](int r, int c) { return mask.at(r, c) > 0.5f; };
  Pixel start{-1, -1};
  long count = 0;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (is_on(r, c)) {
        if (start.row < 0) start = {r, c};
        ++count;
      }
  if (count == 0) throw EmptyMask("extract_contour: no foreground pixels");

  std::vector<Pixel> seq = trace_boundary(mask.height, mask.width, is_on, start);
  std::set<Pixel> visited(seq.begin(), seq.end());
  if (static_cast<long>(visited.size()) != static_cast<long>(seq.size()))
    throw OpenCurve("extract_contour: boundary walk revisits pixels (curve not closed)");
  if (static_cast<long>(visited.size()) != count)
    throw MultipleComponents("extract_contour: " + std::to_string(count - visited.size()) +
                             " foreground pixels outside the traced ring");
  if (seq.size() < 3) throw OpenCurve("extract_contour: ring too small to close");

  Contour c;
  c.points = std::move(seq);
  return c;
}

GrayImage rasterize_contour(const Contour& c, int h, int w) {
  GrayImage img(h, w, 0.0f);
  for (const Pixel& p : c.points) {
    if (!img.inside(p)) throw BoundsError("rasterize_contour: point outside image");
    img.at(p.row, p.col) = 1.0f;
  }
  return img;
}

void write_contour_csv(const std::string& path, const Contour& c) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open for write: " + path);
  for (const Pixel& p : c.points) out << p.row << "," << p.col << "\n";
  if (!out) throw Error("short write: " + path);
}

Contour read_contour_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open: " + path);
  Contour c;
  std::string line;
  long offset = 0;
  while (std::getline(in, line)) {
    if (line.empty()) {
      offset += 1;
      continue;
    }
    size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError("expected 'row,col' in contour csv", offset);
    try {
      size_t used = 0;
      int row = std::stoi(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument(line);
      std::string rest = line.substr(comma + 1);
      int col = std::stoi(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(line);
      c.points.push_back({row, col});
    } catch (const std::exception&) {
      throw ParseError("bad coordinate in contour csv: '" + line + "'", offset);
    }
    offset += static_cast<long>(line.size()) + 1;
  }
  if (c.points.empty()) throw ParseError("empty contour csv", 0);
  return c;
}

}  // namespace crl
