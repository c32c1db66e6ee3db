#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <optional>

#include "geocdl/render.hpp"

#ifdef GEOCDL_RASTER
#include <zlib.h>
#endif

namespace geocdl::render {

namespace {

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

#ifdef GEOCDL_RASTER

// 5x7 glyphs, one string of five cells per row.
const char* glyph(char c) {
  static const char* const letters[26] = {
      "01110100011000111111100011000110001", "11110100011000111110100011000111110",
      "01110100011000010000100001000101110", "11110100011000110001100011000111110",
      "11111100001000011110100001000011111", "11111100001000011110100001000010000",
      "01110100011000010111100011000101111", "10001100011000111111100011000110001",
      "01110001000010000100001000010001110", "00111000100001000010000101001001100",
      "10001100101010011000101001001010001", "10000100001000010000100001000011111",
      "10001110111010110101100011000110001", "10001100011100110101100111000110001",
      "01110100011000110001100011000101110", "11110100011000111110100001000010000",
      "01110100011000110001101011001001101", "11110100011000111110101001001010001",
      "01111100001000001110000010000111110", "11111001000010000100001000010000100",
      "10001100011000110001100011000101110", "10001100011000110001100010101000100",
      "10001100011000110101101011010101010", "10001100010101000100010101000110001",
      "10001100010101000100001000010000100", "11111000010001000100010001000011111",
  };
  static const char* const digits[10] = {
      "01110100011001110101110011000101110", "00100011000010000100001000010001110",
      "01110100010000100010001000100011111", "11111000100010000010000011000101110",
      "00010001100101010010111110001000010", "11111100001111000001000011000101110",
      "00110010001000011110100011000101110", "11111000010001000100010000100001000",
      "01110100011000101110100011000101110", "01110100011000101111000010001001100",
  };
  if (c >= 'A' && c <= 'Z') return letters[c - 'A'];
  if (c >= '0' && c <= '9') return digits[c - '0'];
  return nullptr;
}

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
};

std::optional<Color> parse_color(std::string_view text) {
  if (text.size() != 7 || text[0] != '#') return std::nullopt;
  auto byte = [&](std::size_t i) { return static_cast<std::uint8_t>(std::stoi(std::string(text.substr(i, 2)), nullptr, 16)); };
  return Color{byte(1), byte(3), byte(5)};
}

class Canvas {
 public:
  Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

  void blend(int x, int y, Color c, double a) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_ || a <= 0) return;
    a = std::min(a, 1.0);
    auto* p = &px_[(static_cast<std::size_t>(y) * w_ + x) * 3];
    const std::uint8_t col[3] = {c.r, c.g, c.b};
    for (int i = 0; i < 3; ++i) p[i] = static_cast<std::uint8_t>(std::lround(p[i] * (1 - a) + col[i] * a));
  }

  void fill(Color c) {
    for (std::size_t i = 0; i < px_.size(); i += 3) {
      px_[i] = c.r;
      px_[i + 1] = c.g;
      px_[i + 2] = c.b;
    }
  }

  // Coverage from distance to a shape, evaluated on pixel centers.
  template <class Dist>
  void shade(double x0, double y0, double x1, double y1, Color c, Dist dist) {
    const int ix0 = std::max(0, static_cast<int>(std::floor(x0))), iy0 = std::max(0, static_cast<int>(std::floor(y0)));
    const int ix1 = std::min(w_ - 1, static_cast<int>(std::ceil(x1))), iy1 = std::min(h_ - 1, static_cast<int>(std::ceil(y1)));
    for (int y = iy0; y <= iy1; ++y)
      for (int x = ix0; x <= ix1; ++x) blend(x, y, c, std::clamp(dist(x + 0.5, y + 0.5), 0.0, 1.0));
  }

  void line(double ax, double ay, double bx, double by, double width, Color c) {
    const double hw = width / 2;
    const double dx = bx - ax, dy = by - ay, len2 = dx * dx + dy * dy;
    shade(std::min(ax, bx) - hw - 1, std::min(ay, by) - hw - 1, std::max(ax, bx) + hw + 1, std::max(ay, by) + hw + 1, c,
          [&](double px, double py) {
            double t = len2 > 0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
            t = std::clamp(t, 0.0, 1.0);
            return hw + 0.5 - std::hypot(px - ax - t * dx, py - ay - t * dy);
          });
  }

  void ring(double cx, double cy, double r, double width, Color c) {
    const double e = r + width / 2 + 1;
    shade(cx - e, cy - e, cx + e, cy + e, c,
          [&](double px, double py) { return width / 2 + 0.5 - std::abs(std::hypot(px - cx, py - cy) - r); });
  }

  void disc(double cx, double cy, double r, Color c) {
    shade(cx - r - 1, cy - r - 1, cx + r + 1, cy + r + 1, c,
          [&](double px, double py) { return r + 0.5 - std::hypot(px - cx, py - cy); });
  }

  // Exact area coverage of an axis-aligned rectangle.
  void rect(double x0, double y0, double x1, double y1, Color c) {
    for (int y = std::max(0, static_cast<int>(std::floor(y0))); y < std::min(h_, static_cast<int>(std::ceil(y1))); ++y)
      for (int x = std::max(0, static_cast<int>(std::floor(x0))); x < std::min(w_, static_cast<int>(std::ceil(x1))); ++x) {
        const double ox = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
        const double oy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        blend(x, y, c, ox * oy);
      }
  }

  void text(double cx, double cy, double font_size, std::string_view s, Color c) {
    const double cell = 0.7 * font_size / 7;
    const double width = static_cast<double>(s.size()) * 6 * cell - cell;
    double left = cx - width / 2;
    const double top = cy - 3.5 * cell;
    for (char ch : s) {
      if (const char* g = glyph(ch))
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (g[row * 5 + col] == '1')
              rect(left + col * cell, top + row * cell, left + (col + 1) * cell, top + (row + 1) * cell, c);
      left += 6 * cell;
    }
  }

  const std::vector<std::uint8_t>& pixels() const { return px_; }
  int width() const { return w_; }
  int height() const { return h_; }

 private:
  int w_, h_;
  std::vector<std::uint8_t> px_;
};

struct Element {
  std::string name;
  std::map<std::string, std::string> attrs;
  std::string content;
};

std::vector<Element> scan(std::string_view svg) {
  std::vector<Element> out;
  std::size_t i = 0;
  auto fail = [] { throw RenderError("malformed vector input"); };
  while ((i = svg.find('<', i)) != std::string_view::npos) {
    if (svg.substr(i, 2) == "</" || svg.substr(i, 2) == "<?") {
      i = svg.find('>', i);
      if (i == std::string_view::npos) fail();
      continue;
    }
    Element e;
    std::size_t j = i + 1;
    while (j < svg.size() && std::isalpha(static_cast<unsigned char>(svg[j]))) ++j;
    e.name = std::string(svg.substr(i + 1, j - i - 1));
    for (;;) {
      while (j < svg.size() && svg[j] == ' ') ++j;
      if (j >= svg.size()) fail();
      if (svg[j] == '>' || svg.substr(j, 2) == "/>") break;
      const std::size_t eq = svg.find("=\"", j);
      if (eq == std::string_view::npos) fail();
      const std::size_t close = svg.find('"', eq + 2);
      if (close == std::string_view::npos) fail();
      e.attrs.emplace(std::string(svg.substr(j, eq - j)), std::string(svg.substr(eq + 2, close - eq - 2)));
      j = close + 1;
    }
    const bool self_closing = svg[j] == '/';
    j = svg.find('>', j) + 1;
    if (!self_closing && e.name == "text") {
      const std::size_t end = svg.find("</text>", j);
      if (end == std::string_view::npos) fail();
      e.content = std::string(svg.substr(j, end - j));
    }
    out.push_back(std::move(e));
    i = j;
  }
  return out;
}

double attr(const Element& e, const std::string& key) {
  auto it = e.attrs.find(key);
  if (it == e.attrs.end()) throw RenderError("<" + e.name + "> lacks " + key);
  return std::stod(it->second);
}

std::optional<Color> paint(const Element& e, const std::string& key) {
  auto it = e.attrs.find(key);
  if (it == e.attrs.end() || it->second == "none") return std::nullopt;
  auto c = parse_color(it->second);
  if (!c) throw RenderError("unsupported color " + it->second);
  return c;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(v >> s));
}

void chunk(std::vector<std::uint8_t>& out, const char* type, const std::vector<std::uint8_t>& data) {
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc = crc32(0, out.data() + start, static_cast<uInt>(out.size() - start));
  put_u32(out, static_cast<std::uint32_t>(crc));
}

std::vector<std::uint8_t> encode_png(const Canvas& c) {
  std::vector<std::uint8_t> raw;
  const std::size_t row = static_cast<std::size_t>(c.width()) * 3;
  raw.reserve((row + 1) * c.height());
  for (int y = 0; y < c.height(); ++y) {
    raw.push_back(0);
    raw.insert(raw.end(), c.pixels().begin() + y * row, c.pixels().begin() + (y + 1) * row);
  }
  uLongf size = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> z(size);
  if (compress2(z.data(), &size, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw RenderError("png compression failed");
  z.resize(size);

  std::vector<std::uint8_t> out(kPngSignature, kPngSignature + 8);
  std::vector<std::uint8_t> ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(c.width()));
  put_u32(ihdr, static_cast<std::uint32_t>(c.height()));
  ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});
  chunk(out, "IHDR", ihdr);
  chunk(out, "IDAT", z);
  chunk(out, "IEND", {});
  return out;
}

#endif

}  // namespace

bool raster_available() {
#ifdef GEOCDL_RASTER
  return true;
#else
  return false;
#endif
}

std::vector<std::uint8_t> rasterize(std::string_view svg, const RenderStyle& style) {
#ifdef GEOCDL_RASTER
  style.check();
  const auto elements = scan(svg);
  auto root = std::find_if(elements.begin(), elements.end(), [](const Element& e) { return e.name == "svg"; });
  if (root == elements.end()) throw RenderError("vector input has no <svg> root");
  const double k = style.canvas / attr(*root, "width");
  Canvas canvas(style.canvas, style.canvas);
  for (const auto& e : elements) {
    if (e.name == "rect") {
      if (auto c = paint(e, "fill")) canvas.fill(*c);
    } else if (e.name == "line") {
      if (auto c = paint(e, "stroke"))
        canvas.line(attr(e, "x1") * k, attr(e, "y1") * k, attr(e, "x2") * k, attr(e, "y2") * k,
                    attr(e, "stroke-width") * k, *c);
    } else if (e.name == "circle") {
      const double cx = attr(e, "cx") * k, cy = attr(e, "cy") * k, r = attr(e, "r") * k;
      if (auto c = paint(e, "fill")) canvas.disc(cx, cy, r, *c);
      if (auto c = paint(e, "stroke")) canvas.ring(cx, cy, r, attr(e, "stroke-width") * k, *c);
    } else if (e.name == "polyline") {
      auto c = paint(e, "stroke");
      if (!c) continue;
      std::vector<Vec2> pts;
      std::string list = e.attrs.at("points");
      std::replace(list.begin(), list.end(), ',', ' ');
      std::size_t pos = 0;
      while (pos < list.size()) {
        std::size_t used = 0;
        const double x = std::stod(list.substr(pos), &used);
        pos += used;
        const double y = std::stod(list.substr(pos), &used);
        pos += used;
        pts.emplace_back(x * k, y * k);
        while (pos < list.size() && list[pos] == ' ') ++pos;
      }
      for (std::size_t i = 0; i + 1 < pts.size(); ++i)
        canvas.line(pts[i].x(), pts[i].y(), pts[i + 1].x(), pts[i + 1].y(), attr(e, "stroke-width") * k, *c);
    } else if (e.name == "text") {
      if (auto c = paint(e, "fill")) canvas.text(attr(e, "x") * k, attr(e, "y") * k, attr(e, "font-size") * k, e.content, *c);
    }
  }
  return encode_png(canvas);
#else
  (void)svg;
  (void)style;
  throw RasterBackendUnavailable("raster backend not built");
#endif
}

PngInfo png_info(const std::vector<std::uint8_t>& png) {
  if (png.size() < 33 || std::memcmp(png.data(), kPngSignature, 8) != 0 || std::memcmp(png.data() + 12, "IHDR", 4) != 0)
    throw RenderError("not a PNG");
  auto u32 = [&](std::size_t at) {
    return static_cast<int>((png[at] << 24) | (png[at + 1] << 16) | (png[at + 2] << 8) | png[at + 3]);
  };
  return {u32(16), u32(20), png[24], png[25]};
}

}  // namespace geocdl::render
