#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "agis/dataset.hpp"

namespace agis {

namespace {

struct Pt {
  Scalar x, y;
};
using Polyline = std::vector<Pt>;
using Strokes = std::vector<Polyline>;

// Stroke skeletons on a 4x6 grid, y up. Crude but mutually distinct; the
// renderer's fit-to-box policy makes the grid units irrelevant.
const std::map<char32_t, Strokes>& glyph_table() {
  static const std::map<char32_t, Strokes> table = {
      {U'A', {{{0, 0}, {2, 6}, {4, 0}}, {{1, 2}, {3, 2}}}},
      {U'B',
       {{{0, 0}, {0, 6}, {3, 6}, {3.6, 4.8}, {3, 3}, {0, 3}},
        {{3, 3}, {3.8, 1.6}, {3, 0}, {0, 0}}}},
      {U'C', {{{4, 5}, {3, 6}, {1, 6}, {0, 5}, {0, 1}, {1, 0}, {3, 0}, {4, 1}}}},
      {U'D', {{{0, 0}, {0, 6}, {2.6, 6}, {4, 4.6}, {4, 1.4}, {2.6, 0}, {0, 0}}}},
      {U'E', {{{4, 6}, {0, 6}, {0, 0}, {4, 0}}, {{0, 3}, {3, 3}}}},
      {U'F', {{{4, 6}, {0, 6}, {0, 0}}, {{0, 3}, {3, 3}}}},
      {U'G',
       {{{4, 5}, {3, 6}, {1, 6}, {0, 5}, {0, 1}, {1, 0}, {3, 0}, {4, 1}, {4, 2.6}, {2.2, 2.6}}}},
      {U'H', {{{0, 0}, {0, 6}}, {{4, 0}, {4, 6}}, {{0, 3}, {4, 3}}}},
      {U'I', {{{1, 6}, {3, 6}}, {{2, 6}, {2, 0}}, {{1, 0}, {3, 0}}}},
      {U'J', {{{1, 6}, {4, 6}}, {{3, 6}, {3, 1}, {2, 0}, {0.6, 0}, {0, 1}}}},
      {U'K', {{{0, 0}, {0, 6}}, {{4, 6}, {0, 2.8}}, {{1.4, 3.6}, {4, 0}}}},
      {U'L', {{{0, 6}, {0, 0}, {4, 0}}}},
      {U'M', {{{0, 0}, {0, 6}, {2, 2.6}, {4, 6}, {4, 0}}}},
      {U'N', {{{0, 0}, {0, 6}, {4, 0}, {4, 6}}}},
      {U'O', {{{1, 0}, {0, 1}, {0, 5}, {1, 6}, {3, 6}, {4, 5}, {4, 1}, {3, 0}, {1, 0}}}},
      {U'P', {{{0, 0}, {0, 6}, {3, 6}, {4, 5}, {4, 3.8}, {3, 2.8}, {0, 2.8}}}},
      {U'Q',
       {{{1, 0}, {0, 1}, {0, 5}, {1, 6}, {3, 6}, {4, 5}, {4, 1}, {3, 0}, {1, 0}},
        {{2.6, 1.6}, {4.2, -0.4}}}},
      {U'R',
       {{{0, 0}, {0, 6}, {3, 6}, {4, 5}, {4, 3.8}, {3, 2.8}, {0, 2.8}}, {{1.6, 2.8}, {4, 0}}}},
      {U'S',
       {{{4, 5.2},
         {3, 6},
         {1, 6},
         {0, 5},
         {1, 3.6},
         {3, 2.6},
         {4, 1.4},
         {3, 0},
         {1, 0},
         {0, 0.8}}}},
      {U'T', {{{0, 6}, {4, 6}}, {{2, 6}, {2, 0}}}},
      {U'U', {{{0, 6}, {0, 1}, {1, 0}, {3, 0}, {4, 1}, {4, 6}}}},
      {U'V', {{{0, 6}, {2, 0}, {4, 6}}}},
      {U'W', {{{0, 6}, {1, 0}, {2, 3.4}, {3, 0}, {4, 6}}}},
      {U'X', {{{0, 0}, {4, 6}}, {{0, 6}, {4, 0}}}},
      {U'Y', {{{0, 6}, {2, 3}, {4, 6}}, {{2, 3}, {2, 0}}}},
      {U'Z', {{{0, 6}, {4, 6}, {0, 0}, {4, 0}}}},
      {U'0',
       {{{1, 0}, {0, 1}, {0, 5}, {1, 6}, {3, 6}, {4, 5}, {4, 1}, {3, 0}, {1, 0}},
        {{1, 1}, {3, 5}}}},
      {U'1', {{{1, 5}, {2, 6}, {2, 0}}, {{1, 0}, {3, 0}}}},
      {U'2', {{{0, 5}, {1, 6}, {3, 6}, {4, 5}, {4, 4}, {0, 0}, {4, 0}}}},
      {U'3',
       {{{0, 5.4}, {1, 6}, {3, 6}, {4, 5}, {3, 3.2}, {1.6, 3.2}},
        {{3, 3.2}, {4, 2}, {3, 0}, {1, 0}, {0, 0.6}}}},
      {U'4', {{{3, 0}, {3, 6}, {0, 1.6}, {4, 1.6}}}},
      {U'5',
       {{{4, 6}, {0, 6}, {0, 3.4}, {3, 3.4}, {4, 2.4}, {4, 1}, {3, 0}, {1, 0}, {0, 0.8}}}},
      {U'6',
       {{{3.4, 6}, {1, 6}, {0, 5}, {0, 1}, {1, 0}, {3, 0}, {4, 1}, {4, 2}, {3, 3}, {0, 3}}}},
      {U'7', {{{0, 6}, {4, 6}, {1.4, 0}}}},
      {U'8',
       {{{1, 3},
         {0.4, 4},
         {0.4, 5},
         {1.4, 6},
         {2.6, 6},
         {3.6, 5},
         {3.6, 4},
         {3, 3},
         {1, 3},
         {0.2, 2},
         {0.2, 1},
         {1, 0},
         {3, 0},
         {3.8, 1},
         {3.8, 2},
         {3, 3}}}},
      {U'9',
       {{{0.6, 0}, {3, 0}, {4, 1}, {4, 5}, {3, 6}, {1, 6}, {0, 5}, {0, 4}, {1, 3}, {4, 3}}}},
  };
  return table;
}

const Strokes* find_strokes(char32_t cp) {
  // Lowercase letters reuse the uppercase skeletons (plumbing for unexplored
  // characters; the fit-to-box layout makes them render identically).
  if (cp >= U'a' && cp <= U'z') cp = cp - U'a' + U'A';
  auto it = glyph_table().find(cp);
  return it == glyph_table().end() ? nullptr : &it->second;
}

Scalar dist_to_segment(Scalar px, Scalar py, const Pt& a, const Pt& b) {
  Scalar vx = b.x - a.x, vy = b.y - a.y;
  Scalar len2 = vx * vx + vy * vy;
  Scalar t = len2 == 0 ? 0 : ((px - a.x) * vx + (py - a.y) * vy) / len2;
  t = std::clamp(t, Scalar(0), Scalar(1));
  Scalar dx = px - (a.x + t * vx), dy = py - (a.y + t * vy);
  return std::sqrt(dx * dx + dy * dy);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

FontParams font_params(const std::string& font_id) {
  if (font_id.rfind("content", 0) == 0) return {0.10, 0.0, 1.0};
  Rng rng(fnv1a(font_id));
  FontParams p;
  p.stroke_width = rng.uniform(0.06, 0.16);
  p.slant = rng.uniform(-0.22, 0.22);
  p.x_scale = rng.uniform(0.75, 1.1);
  return p;
}

bool font_has_glyph(char32_t cp) { return find_strokes(cp) != nullptr; }

GlyphImage render_glyph(const std::string& font_id, char32_t codepoint, int canvas) {
  if (canvas < 16) throw std::invalid_argument("render_glyph: canvas must be >= 16");
  const Strokes* strokes = find_strokes(codepoint);
  if (!strokes)
    throw MissingGlyphError("font '" + font_id + "' has no glyph for codepoint " +
                            std::to_string(static_cast<std::uint32_t>(codepoint)));
  FontParams fp = font_params(font_id);

  // Shear and x-scale the skeleton, then fit its bounding box (inflated by
  // half the stroke width) into the centered 54/64 inner box.
  Strokes pts = *strokes;
  Scalar ymid = 3.0;
  for (auto& line : pts)
    for (auto& p : line) p.x = fp.x_scale * p.x + fp.slant * (p.y - ymid);

  Scalar minx = std::numeric_limits<Scalar>::max(), maxx = -minx;
  Scalar miny = minx, maxy = -minx;
  for (const auto& line : pts)
    for (const auto& p : line) {
      minx = std::min(minx, p.x);
      maxx = std::max(maxx, p.x);
      miny = std::min(miny, p.y);
      maxy = std::max(maxy, p.y);
    }
  Scalar inner = static_cast<Scalar>(canvas) * 54.0 / 64.0;
  Scalar half_w = fp.stroke_width * 6.0 / 2.0;  // in grid units
  minx -= half_w;
  maxx += half_w;
  miny -= half_w;
  maxy += half_w;
  Scalar scale = inner / std::max(maxx - minx, maxy - miny);
  Scalar offx = (canvas - scale * (maxx - minx)) / 2.0;
  Scalar offy = (canvas - scale * (maxy - miny)) / 2.0;
  Scalar half_w_px = half_w * scale;

  GlyphImage img = Tensor::constant({3, canvas, canvas}, 1.0);
  for (int i = 0; i < canvas; ++i)
    for (int j = 0; j < canvas; ++j) {
      // Pixel center back to grid coordinates (image rows grow downward).
      Scalar gx = (static_cast<Scalar>(j) + 0.5 - offx) / scale + minx;
      Scalar gy = (static_cast<Scalar>(canvas - 1 - i) + 0.5 - offy) / scale + miny;
      Scalar d = std::numeric_limits<Scalar>::max();
      for (const auto& line : pts)
        for (size_t s = 0; s + 1 < line.size(); ++s)
          d = std::min(d, dist_to_segment(gx, gy, line[s], line[s + 1]));
      if (d * scale <= half_w_px)
        for (int ch = 0; ch < 3; ++ch) img.at3(ch, i, j) = -1.0;
    }
  return img;
}

}  // namespace agis
