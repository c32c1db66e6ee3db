#include "geocdl/render.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

namespace geocdl::render {

namespace {

struct Palette {
  const char* segment;
  const char* circle;
  const char* point;
  const char* label;
  const char* mark;
};

Palette palette(const RenderStyle& s) {
  if (s.monochrome) return {"#000000", "#000000", "#000000", "#000000", "#000000"};
  return {"#000000", "#1f4e9c", "#c0392b", "#000000", "#555555"};
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  std::string out = buf;
  if (out == "-0.00") out = "0.00";
  return out;
}

// Fixed order: NE, NW, SE, SW, N, S, E, W.
constexpr std::array<std::array<double, 2>, 8> kSlots{{
    {0.85, -0.85}, {-0.85, -0.85}, {0.85, 0.85}, {-0.85, 0.85},
    {0.0, -1.0}, {0.0, 1.0}, {1.0, 0.0}, {-1.0, 0.0},
}};

double box_distance(const Box& b, const Vec2& p) {
  const double dx = std::max({b.x0 - p.x(), 0.0, p.x() - b.x1});
  const double dy = std::max({b.y0 - p.y(), 0.0, p.y() - b.y1});
  return std::hypot(dx, dy);
}

double box_far_distance(const Box& b, const Vec2& p) {
  const double dx = std::max(std::abs(p.x() - b.x0), std::abs(p.x() - b.x1));
  const double dy = std::max(std::abs(p.y() - b.y0), std::abs(p.y() - b.y1));
  return std::hypot(dx, dy);
}

// Liang-Barsky clip of the segment against the box.
bool segment_hits_box(const Vec2& a, const Vec2& b, const Box& box) {
  double t0 = 0.0, t1 = 1.0;
  const Vec2 d = b - a;
  const double p[4] = {-d.x(), d.x(), -d.y(), d.y()};
  const double q[4] = {a.x() - box.x0, box.x1 - a.x(), a.y() - box.y0, box.y1 - a.y()};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) t0 = std::max(t0, t);
    else t1 = std::min(t1, t);
    if (t0 > t1) return false;
  }
  return true;
}

Box label_box(const Vec2& anchor, const cdl::Label& label, const RenderStyle& s) {
  const double w = 0.6 * s.font_size * static_cast<double>(label.str().size());
  const double h = 0.75 * s.font_size;
  return {anchor.x() - w / 2, anchor.y() - h / 2, anchor.x() + w / 2, anchor.y() + h / 2};
}

double placement_cost(const Box& box, const cdl::Label& self, const Diagram& d) {
  const auto& s = d.style;
  double cost = 0.0;
  for (const auto& other : d.labels)
    if (box.intersects(other.box)) cost += 1000.0;
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > s.canvas || box.y1 > s.canvas) cost += 100.0;
  for (const auto& seg : d.segments)
    if (segment_hits_box(seg[0], seg[1], box)) cost += 10.0;
  for (const auto& m : d.right_angles)
    if (segment_hits_box(m[0], m[1], box) || segment_hits_box(m[1], m[2], box)) cost += 5.0;
  const double halo = s.stroke_width;
  for (const auto& [c, r] : d.circles)
    if (box_distance(box, c) <= r + halo && box_far_distance(box, c) >= r - halo) cost += 10.0;
  for (const auto& [l, p] : d.points)
    if (l != self && box_distance(box, p) <= s.point_radius + halo) cost += 10.0;
  return cost;
}

}  // namespace

void RenderStyle::check() const {
  if (canvas <= 0 || margin <= 0 || stroke_width <= 0 || point_radius <= 0 || font_size <= 0 || label_offset <= 0)
    throw std::invalid_argument("render style dimensions must be positive");
  if (margin * 2 >= canvas) throw std::invalid_argument("render margin must be less than half the canvas");
  const bool hex = background.size() == 7 && background[0] == '#' &&
                   std::all_of(background.begin() + 1, background.end(), [](char c) { return std::isxdigit(c); });
  if (!hex) throw std::invalid_argument("background must be #rrggbb");
}

Diagram layout(const kernel::Figure& figure, const cdl::CdlDocument& doc, const RenderStyle& style) {
  style.check();
  if (figure.points.empty()) throw kernel::DegenerateFigure("figure has no points");
  double lo_x = std::numeric_limits<double>::infinity(), lo_y = lo_x;
  double hi_x = -lo_x, hi_y = -lo_x;
  auto extend = [&](const Vec2& p, double r) {
    lo_x = std::min(lo_x, p.x() - r);
    lo_y = std::min(lo_y, p.y() - r);
    hi_x = std::max(hi_x, p.x() + r);
    hi_y = std::max(hi_y, p.y() + r);
  };
  for (const auto& [l, p] : figure.points) extend(p, 0.0);
  for (const auto& [c, r] : figure.circles) extend(figure.at(c), r);
  const double extent = std::max(hi_x - lo_x, hi_y - lo_y);
  if (!(extent > 1e-9)) throw kernel::DegenerateFigure("figure collapses to a point");

  Diagram d;
  d.style = style;
  const double usable = style.canvas - 2 * style.margin;
  const double k = usable / extent;
  const double ox = style.margin + (usable - (hi_x - lo_x) * k) / 2;
  const double oy = style.margin + (usable - (hi_y - lo_y) * k) / 2;
  auto to_canvas = [&](const Vec2& p) {
    return Vec2(ox + (p.x() - lo_x) * k, style.canvas - (oy + (p.y() - lo_y) * k));
  };

  for (const auto& [l, p] : figure.points) d.points.emplace(l, to_canvas(p));
  for (const auto& [a, b] : figure.segments) d.segments.push_back({d.points.at(a), d.points.at(b)});
  for (const auto& [c, r] : figure.circles) d.circles.emplace_back(d.points.at(c), r * k);

  for (const auto& s : doc.img()) {
    const auto* eq = std::get_if<cdl::Equal>(&s);
    if (!eq) continue;
    const auto* ang = std::get_if<cdl::MeasureOfAngle>(&eq->lhs);
    const auto* lit = std::get_if<Rational>(&eq->rhs);
    if (!ang || !lit || *lit != Rational(90)) continue;
    if (!d.points.count(ang->a) || !d.points.count(ang->vertex) || !d.points.count(ang->c)) continue;
    const Vec2 v = d.points.at(ang->vertex);
    const Vec2 u1 = d.points.at(ang->a) - v, u2 = d.points.at(ang->c) - v;
    if (u1.norm() < 1e-9 || u2.norm() < 1e-9) continue;
    const double size = std::min({10.0, u1.norm() / 3, u2.norm() / 3});
    const Vec2 p1 = v + u1.normalized() * size, p2 = v + u2.normalized() * size;
    d.right_angles.push_back({p1, p1 + (p2 - v), p2});
  }

  for (const auto& [l, p] : d.points) {
    PlacedLabel best{l, {}, {}, -1, std::numeric_limits<double>::infinity()};
    for (int i = 0; i < static_cast<int>(kSlots.size()); ++i) {
      const Vec2 anchor = p + Vec2(kSlots[i][0], kSlots[i][1]) * style.label_offset;
      const Box box = label_box(anchor, l, style);
      const double cost = placement_cost(box, l, d);
      if (cost < best.cost) best = {l, anchor, box, i, cost};
      if (cost == 0.0) break;
    }
    d.labels.push_back(best);
  }
  return d;
}

std::size_t label_overlaps(const Diagram& diagram) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < diagram.labels.size(); ++i)
    for (std::size_t j = i + 1; j < diagram.labels.size(); ++j)
      n += diagram.labels[i].box.intersects(diagram.labels[j].box);
  return n;
}

std::string to_svg(const Diagram& d) {
  const auto& s = d.style;
  const auto pal = palette(s);
  const std::string size = std::to_string(s.canvas);
  const std::string sw = num(s.stroke_width);
  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + size + "\" height=\"" + size +
         "\" viewBox=\"0 0 " + size + " " + size + "\">\n";
  out += "<rect class=\"background\" x=\"0\" y=\"0\" width=\"" + size + "\" height=\"" + size + "\" fill=\"" +
         s.background + "\"/>\n";
  for (const auto& [c, r] : d.circles)
    out += "<circle class=\"circle\" cx=\"" + num(c.x()) + "\" cy=\"" + num(c.y()) + "\" r=\"" + num(r) +
           "\" fill=\"none\" stroke=\"" + pal.circle + "\" stroke-width=\"" + sw + "\"/>\n";
  for (const auto& seg : d.segments)
    out += "<line class=\"segment\" x1=\"" + num(seg[0].x()) + "\" y1=\"" + num(seg[0].y()) + "\" x2=\"" +
           num(seg[1].x()) + "\" y2=\"" + num(seg[1].y()) + "\" stroke=\"" + pal.segment + "\" stroke-width=\"" +
           sw + "\"/>\n";
  for (const auto& m : d.right_angles) {
    out += "<polyline class=\"right-angle\" points=\"";
    for (int i = 0; i < 3; ++i) out += (i ? " " : "") + num(m[i].x()) + "," + num(m[i].y());
    out += "\" fill=\"none\" stroke=\"" + std::string(pal.mark) + "\" stroke-width=\"" + num(s.stroke_width / 2) +
           "\"/>\n";
  }
  for (const auto& [l, p] : d.points)
    out += "<circle class=\"point\" cx=\"" + num(p.x()) + "\" cy=\"" + num(p.y()) + "\" r=\"" + num(s.point_radius) +
           "\" fill=\"" + pal.point + "\"/>\n";
  for (const auto& lab : d.labels)
    out += "<text class=\"label\" x=\"" + num(lab.anchor.x()) + "\" y=\"" + num(lab.anchor.y()) +
           "\" font-family=\"sans-serif\" font-size=\"" + num(s.font_size) +
           "\" text-anchor=\"middle\" dominant-baseline=\"central\" fill=\"" + pal.label + "\">" + lab.label.str() +
           "</text>\n";
  out += "</svg>\n";
  return out;
}

std::string render_vector(const kernel::Figure& figure, const cdl::CdlDocument& doc, const RenderStyle& style) {
  return to_svg(layout(figure, doc, style));
}

}  // namespace geocdl::render
