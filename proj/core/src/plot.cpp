#include "kmfv/plot.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "kmfv/errors.hpp"

namespace kmfv {

namespace {

// 5x7 bitmap glyphs, one byte per row, low 5 bits used (MSB = left column).
struct Glyph {
  char ch;
  std::uint8_t rows[7];
};

constexpr Glyph kFont[] = {
    {' ', {0, 0, 0, 0, 0, 0, 0}},
    {'%', {0x19, 0x1A, 0x02, 0x04, 0x08, 0x0B, 0x13}},
    {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
    {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
    {',', {0, 0, 0, 0, 0x0C, 0x04, 0x08}},
    {'-', {0, 0, 0, 0x1F, 0, 0, 0}},
    {'.', {0, 0, 0, 0, 0, 0x0C, 0x0C}},
    {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {':', {0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0}},
    {'=', {0, 0, 0x1F, 0, 0x1F, 0, 0}},
    {'A', {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
    {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
    {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
    {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
    {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
    {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
    {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
    {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
    {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
    {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
    {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
    {'N', {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11}},
    {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
    {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
    {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
    {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
    {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
    {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
    {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
    {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
    {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
    {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
    {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
    {'_', {0, 0, 0, 0, 0, 0, 0x1F}},
};

struct Rgb {
  std::uint8_t r, g, b;
};

constexpr Rgb kCurveColors[] = {
    {31, 90, 166}, {196, 54, 38}, {38, 140, 66}, {214, 132, 26}, {120, 60, 160},
};

class Canvas {
public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3,
                                           255) {}

  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
    std::uint8_t* p = px_.data() + (static_cast<std::size_t>(y) * w_ + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
  }

  void line(double x0, double y0, double x1, double y1, Rgb c) {
    const double dx = x1 - x0, dy = y1 - y0;
    const int steps =
        std::max(1, static_cast<int>(std::ceil(std::max(std::fabs(dx),
                                                        std::fabs(dy)))));
    for (int i = 0; i <= steps; ++i) {
      const double t = static_cast<double>(i) / steps;
      set(static_cast<int>(std::lround(x0 + t * dx)),
          static_cast<int>(std::lround(y0 + t * dy)), c);
    }
  }

  void marker(int x, int y, Rgb c) {
    for (int dy = -2; dy <= 2; ++dy) {
      for (int dx = -2; dx <= 2; ++dx) set(x + dx, y + dy, c);
    }
  }

  void text(int x, int y, const std::string& s, Rgb c) {
    int cx = x;
    for (char raw : s) {
      const char ch = static_cast<char>(std::toupper(
          static_cast<unsigned char>(raw)));
      const Glyph* glyph = nullptr;
      for (const Glyph& g : kFont) {
        if (g.ch == ch) {
          glyph = &g;
          break;
        }
      }
      if (glyph) {
        for (int row = 0; row < 7; ++row) {
          for (int col = 0; col < 5; ++col) {
            if (glyph->rows[row] & (1 << (4 - col))) {
              set(cx + col, y + row, c);
            }
          }
        }
      }
      cx += 6;
    }
  }

  void save(const std::string& path) const {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w_);
    image.height = static_cast<png_uint_32>(h_);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, px_.data(), 0,
                                 nullptr)) {
      throw DataError("render_rd_plot: cannot write " + path + ": " +
                      image.message);
    }
  }

private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

double nice_step(double span, int target_ticks) {
  const double raw = span / std::max(1, target_ticks);
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  for (double mult : {1.0, 2.0, 5.0}) {
    if (raw <= mult * mag) return mult * mag;
  }
  return 10.0 * mag;
}

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

} // namespace

void render_rd_plot(const std::vector<RDCurve>& curves,
                    const std::string& title, const std::string& path,
                    int width, int height) {
  if (curves.empty()) throw UsageError("render_rd_plot: no curves");
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const RDCurve& c : curves) {
    for (const RDPoint& p : c.points) {
      x_min = std::min(x_min, p.bpp);
      x_max = std::max(x_max, p.bpp);
      y_min = std::min(y_min, p.psnr);
      y_max = std::max(y_max, p.psnr);
    }
  }
  if (x_min > x_max) throw UsageError("render_rd_plot: curves are empty");
  if (x_max - x_min < 1e-9) {
    x_min -= 0.05;
    x_max += 0.05;
  }
  if (y_max - y_min < 1e-9) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  const double xpad = 0.05 * (x_max - x_min), ypad = 0.05 * (y_max - y_min);
  x_min -= xpad;
  x_max += xpad;
  y_min -= ypad;
  y_max += ypad;

  const int ml = 72, mr = 24, mt = 34, mb = 52;
  const int pw = width - ml - mr, ph = height - mt - mb;
  Canvas canvas(width, height);
  const Rgb black{0, 0, 0}, grey{210, 210, 210}, dgrey{90, 90, 90};

  auto to_x = [&](double v) {
    return ml + (v - x_min) / (x_max - x_min) * pw;
  };
  auto to_y = [&](double v) {
    return mt + ph - (v - y_min) / (y_max - y_min) * ph;
  };

  // grid + ticks
  const double xs = nice_step(x_max - x_min, 6);
  for (double v = std::ceil(x_min / xs) * xs; v <= x_max; v += xs) {
    const int px = static_cast<int>(std::lround(to_x(v)));
    canvas.line(px, mt, px, mt + ph, grey);
    canvas.line(px, mt + ph, px, mt + ph + 4, black);
    const std::string label = format_tick(v);
    canvas.text(px - 3 * static_cast<int>(label.size()), mt + ph + 8, label,
                dgrey);
  }
  const double ys = nice_step(y_max - y_min, 6);
  for (double v = std::ceil(y_min / ys) * ys; v <= y_max; v += ys) {
    const int py = static_cast<int>(std::lround(to_y(v)));
    canvas.line(ml, py, ml + pw, py, grey);
    canvas.line(ml - 4, py, ml, py, black);
    const std::string label = format_tick(v);
    canvas.text(ml - 8 - 6 * static_cast<int>(label.size()), py - 3, label,
                dgrey);
  }
  // axes
  canvas.line(ml, mt, ml, mt + ph, black);
  canvas.line(ml, mt + ph, ml + pw, mt + ph, black);
  canvas.text(ml + pw / 2 - 9, height - 16, "BPP", black);
  canvas.text(8, mt - 14, "PSNR (DB)", black);
  canvas.text(ml, 8, title, black);

  int color_i = 0;
  int legend_y = mt + 6;
  for (const RDCurve& curve : curves) {
    const Rgb c = kCurveColors[color_i % 5];
    ++color_i;
    for (std::size_t i = 0; i + 1 < curve.points.size(); ++i) {
      canvas.line(to_x(curve.points[i].bpp), to_y(curve.points[i].psnr),
                  to_x(curve.points[i + 1].bpp),
                  to_y(curve.points[i + 1].psnr), c);
    }
    for (const RDPoint& p : curve.points) {
      canvas.marker(static_cast<int>(std::lround(to_x(p.bpp))),
                    static_cast<int>(std::lround(to_y(p.psnr))), c);
    }
    canvas.marker(ml + pw - 100, legend_y + 3, c);
    canvas.text(ml + pw - 92, legend_y, curve.codec, black);
    legend_y += 12;
  }
  canvas.save(path);
}

} // namespace kmfv
