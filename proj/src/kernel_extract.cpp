#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "geocdl/kernel.hpp"
#include "geocdl/util.hpp"

namespace geocdl::kernel {

using cdl::Label;

namespace {

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double sine_between(const Vec2& a, const Vec2& b) { return cross2(a, b) / (a.norm() * b.norm()); }
double cosine_between(const Vec2& a, const Vec2& b) { return a.dot(b) / (a.norm() * b.norm()); }

double angle_degrees(const Vec2& a, const Vec2& vertex, const Vec2& c) {
  const Vec2 u = a - vertex;
  const Vec2 v = c - vertex;
  return std::atan2(std::abs(cross2(u, v)), u.dot(v)) * 180.0 / std::numbers::pi;
}

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

void check_figure(const Figure& f, const ExtractOptions& opt) {
  if (f.points.empty()) throw DegenerateFigure("figure has no points");
  for (const auto& [l, p] : f.points)
    if (!p.allFinite()) throw DegenerateFigure("point " + l.name + " has non-finite coordinates");
  if (f.points.size() < 2) return;
  auto it = f.points.begin();
  const Vec2 a = (it++)->second;
  const double reference = (it->second - a).norm();
  if (!(reference > 0.0)) throw DegenerateFigure("first two points coincide");
  const double limit = 0.5 * opt.min_separation * reference;
  for (auto i = f.points.begin(); i != f.points.end(); ++i)
    for (auto j = std::next(i); j != f.points.end(); ++j)
      if ((i->second - j->second).norm() < limit)
        throw DegenerateFigure("points " + i->first.name + " and " + j->first.name + " are closer than the minimum separation");
}

std::vector<SegmentKey> mining_segments(const Figure& f, const ExtractOptions& opt) {
  std::vector<SegmentKey> out;
  if (opt.all_pairs) {
    for (auto i = f.points.begin(); i != f.points.end(); ++i)
      for (auto j = std::next(i); j != f.points.end(); ++j) out.emplace_back(i->first, j->first);
    return out;
  }
  for (const auto& s : f.segments)
    if (f.points.count(s.first) && f.points.count(s.second)) out.push_back(s);
  return out;
}

void extract_collinear(const Figure& f, const std::vector<SegmentKey>& segs, double tol, cdl::CdlDocument& doc) {
  std::map<Label, std::vector<std::size_t>> incident;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    incident[segs[i].first].push_back(i);
    incident[segs[i].second].push_back(i);
  }
  DisjointSets sets(segs.size());
  for (const auto& [q, list] : incident) {
    const Vec2& pq = f.at(q);
    for (std::size_t a = 0; a < list.size(); ++a) {
      const auto& sa = segs[list[a]];
      const Vec2 da = f.at(sa.first == q ? sa.second : sa.first) - pq;
      for (std::size_t b = a + 1; b < list.size(); ++b) {
        const auto& sb = segs[list[b]];
        const Vec2 db = f.at(sb.first == q ? sb.second : sb.first) - pq;
        if (std::abs(sine_between(da, db)) < tol) sets.unite(list[a], list[b]);
      }
    }
  }
  std::map<std::size_t, std::set<Label>> groups;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    auto& g = groups[sets.find(i)];
    g.insert(segs[i].first);
    g.insert(segs[i].second);
  }
  for (const auto& [_, members] : groups) {
    if (members.size() < 3) continue;
    std::vector<Label> pts(members.begin(), members.end());
    // Order along the direction of the farthest pair.
    Vec2 from = f.at(pts[0]);
    Vec2 to = from;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        const double d = (f.at(pts[i]) - f.at(pts[j])).norm();
        if (d > best) {
          best = d;
          from = f.at(pts[i]);
          to = f.at(pts[j]);
        }
      }
    const Vec2 dir = to - from;
    std::stable_sort(pts.begin(), pts.end(),
                     [&](const Label& a, const Label& b) { return (f.at(a) - from).dot(dir) < (f.at(b) - from).dot(dir); });
    doc.insert(cdl::ConsStatement{cdl::Collinear{pts}});
  }
}

void extract_cocircular(const Figure& f, double tol, cdl::CdlDocument& doc) {
  for (const auto& [center, radius] : f.circles) {
    auto cit = f.points.find(center);
    if (cit == f.points.end() || !(radius > 0.0)) continue;
    const Vec2 c = cit->second;
    std::vector<std::pair<double, Label>> on;
    for (const auto& [l, p] : f.points) {
      if (l == center) continue;
      if (std::abs((p - c).norm() - radius) <= tol * radius) on.emplace_back(std::atan2(p.y() - c.y(), p.x() - c.x()), l);
    }
    if (on.empty()) continue;
    std::sort(on.begin(), on.end());
    cdl::Cocircular cc{center, {}};
    for (auto& [_, l] : on) cc.points.push_back(l);
    doc.insert(cdl::ConsStatement{cc});
  }
}

void extract_right_angles(const Figure& f, const std::vector<SegmentKey>& segs, double tol, cdl::CdlDocument& doc) {
  std::map<Label, std::vector<Label>> neighbours;
  for (const auto& s : segs) {
    neighbours[s.first].push_back(s.second);
    neighbours[s.second].push_back(s.first);
  }
  for (auto& [q, list] : neighbours) {
    std::sort(list.begin(), list.end());
    const Vec2& pq = f.at(q);
    for (std::size_t a = 0; a < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b)
        if (std::abs(cosine_between(f.at(list[a]) - pq, f.at(list[b]) - pq)) < tol)
          doc.insert(cdl::ImgStatement{cdl::Equal{cdl::MeasureOfAngle{list[a], q, list[b]}, Rational(90)}});
  }
}

void extract_equal_lengths(const Figure& f, const std::vector<SegmentKey>& segs, double tol, cdl::CdlDocument& doc) {
  std::vector<std::pair<double, SegmentKey>> lengths;
  for (const auto& s : segs) lengths.emplace_back((f.at(s.first) - f.at(s.second)).norm(), s);
  std::sort(lengths.begin(), lengths.end());
  std::size_t i = 0;
  while (i < lengths.size()) {
    std::size_t j = i + 1;
    while (j < lengths.size() && lengths[j].first - lengths[j - 1].first <= tol * lengths[j].first) ++j;
    if (j - i >= 2) {
      std::vector<SegmentKey> cls;
      for (std::size_t k = i; k < j; ++k) cls.push_back(lengths[k].second);
      std::sort(cls.begin(), cls.end());
      for (const auto& st : equal_length_chain(cls)) doc.insert(cdl::ImgStatement{st});
    }
    i = j;
  }
}

}  // namespace

std::vector<cdl::Equal> equal_length_chain(const std::vector<SegmentKey>& segments) {
  std::vector<cdl::Equal> out;
  const std::size_t n = segments.size();
  if (n < 2) return out;
  auto term = [&](std::size_t i) { return cdl::LengthOfLine{segments[i].first, segments[i].second}; };
  if (n == 2) {
    out.push_back(cdl::Equal{term(0), cdl::MeasureTerm{term(1)}});
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out.push_back(cdl::Equal{term(i), cdl::MeasureTerm{term((i + 1) % n)}});
  return out;
}

cdl::CdlDocument extract_cdl(const Figure& figure, const ExtractOptions& opt) {
  check_figure(figure, opt);
  const auto segs = mining_segments(figure, opt);
  cdl::CdlDocument doc;
  for (const auto& shape : figure.shapes) doc.insert(cdl::ConsStatement{shape});
  extract_collinear(figure, segs, opt.tolerance, doc);
  extract_cocircular(figure, opt.tolerance, doc);
  extract_right_angles(figure, segs, opt.tolerance, doc);
  extract_equal_lengths(figure, segs, opt.tolerance, doc);
  return doc;
}

// ---------------------------------------------------------------------------
// Verification

namespace {

std::string deviation(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, " (deviation %.3g)", v);
  return buf;
}

double term_value(const Figure& f, const cdl::MeasureTerm& t) {
  if (const auto* len = std::get_if<cdl::LengthOfLine>(&t)) return (f.at(len->a) - f.at(len->b)).norm();
  const auto& a = std::get<cdl::MeasureOfAngle>(t);
  return angle_degrees(f.at(a.a), f.at(a.vertex), f.at(a.c));
}

double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale > 0.0 ? std::abs(a - b) / scale : 0.0;
}

double circle_radius(const Figure& f, const Label& center, const Label& fallback) {
  auto it = f.circles.find(center);
  return it != f.circles.end() ? it->second : (f.at(fallback) - f.at(center)).norm();
}

}  // namespace

std::vector<std::string> verify(const Figure& f, const cdl::CdlDocument& doc, double tol) {
  std::vector<std::string> failures;
  auto fail = [&](const auto& stmt, double dev) { failures.push_back(cdl::to_string(stmt) + deviation(dev)); };
  for (const auto& stmt : doc.cons()) {
    if (const auto* shape = std::get_if<cdl::Shape>(&stmt)) {
      for (const auto& e : shape->edges) {
        if (e.is_arc()) {
          const double r = circle_radius(f, e.points[0], e.points[1]);
          for (int k = 1; k <= 2; ++k) {
            const double dev = relative_gap((f.at(e.points[k]) - f.at(e.points[0])).norm(), r);
            if (dev > tol) fail(stmt, dev);
          }
        } else if (!((f.at(e.points[0]) - f.at(e.points[1])).norm() > 0.0)) {
          fail(stmt, 0.0);
        }
      }
    } else if (const auto* col = std::get_if<cdl::Collinear>(&stmt)) {
      const auto& p = col->points;
      const Vec2 a = f.at(p.front());
      const Vec2 dir = f.at(p.back()) - a;
      double last = -1.0;
      for (std::size_t i = 1; i + 1 < p.size(); ++i) {
        const Vec2 v = f.at(p[i]) - a;
        const double dev = std::abs(sine_between(v, dir));
        const double t = v.dot(dir) / dir.squaredNorm();
        if (dev > tol || t <= last || t >= 1.0) {
          fail(stmt, dev);
          break;
        }
        last = t;
      }
    } else {
      const auto& cc = std::get<cdl::Cocircular>(stmt);
      const double r = circle_radius(f, cc.center, cc.points.front());
      for (const auto& q : cc.points) {
        const double dev = relative_gap((f.at(q) - f.at(cc.center)).norm(), r);
        if (dev > tol) {
          fail(stmt, dev);
          break;
        }
      }
    }
  }
  for (const auto& stmt : doc.img()) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, cdl::Equal>) {
            const double lhs = term_value(f, v.lhs);
            const double rhs = std::holds_alternative<Rational>(v.rhs) ? std::get<Rational>(v.rhs).to_double()
                                                                      : term_value(f, std::get<cdl::MeasureTerm>(v.rhs));
            const double dev = relative_gap(lhs, rhs);
            if (dev > tol) fail(stmt, dev);
          } else {
            const Vec2 a = f.at(v.first.b) - f.at(v.first.a);
            const Vec2 b = f.at(v.second.b) - f.at(v.second.a);
            const double dev = std::is_same_v<T, cdl::ParallelBetweenLine> ? std::abs(sine_between(a, b))
                                                                           : std::abs(cosine_between(a, b));
            if (dev > tol) fail(stmt, dev);
          }
        },
        stmt);
  }
  return failures;
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize(const Figure& f) {
  std::ostringstream os;
  char buf[96];
  os << "figure 1\n";
  for (const auto& [l, p] : f.points) {
    std::snprintf(buf, sizeof buf, "point %s %.17g %.17g\n", l.name.c_str(), p.x(), p.y());
    os << buf;
  }
  for (const auto& [c, r] : f.circles) {
    std::snprintf(buf, sizeof buf, "circle %s %.17g\n", c.name.c_str(), r);
    os << buf;
  }
  for (const auto& [a, b] : f.segments) os << "segment " << a.name << " " << b.name << "\n";
  for (const auto& s : f.shapes) {
    const std::string text = cdl::to_string(cdl::ConsStatement{s});
    os << "shape " << text.substr(6, text.size() - 7) << "\n";
  }
  return os.str();
}

Figure deserialize_figure(std::string_view text) {
  Figure f;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  auto fail = [&](const std::string& what) {
    throw KernelError("figure line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    std::string key;
    ls >> key;
    if (!header) {
      int version = 0;
      if (key != "figure" || !(ls >> version) || version != 1) fail("expected header 'figure 1'");
      header = true;
      continue;
    }
    try {
      if (key == "point") {
        std::string name, xs, ys;
        if (!(ls >> name >> xs >> ys)) fail("expected 'point LABEL X Y'");
        f.points[Label(name)] = Vec2(std::stod(xs), std::stod(ys));
      } else if (key == "circle") {
        std::string name, rs;
        if (!(ls >> name >> rs)) fail("expected 'circle CENTER RADIUS'");
        f.circles[Label(name)] = std::stod(rs);
      } else if (key == "segment") {
        std::string a, b;
        if (!(ls >> a >> b)) fail("expected 'segment A B'");
        f.segments.insert(make_segment(Label(a), Label(b)));
      } else if (key == "shape") {
        std::string edges;
        ls >> edges;
        f.shapes.push_back(cdl::make_shape(edges));
      } else {
        fail("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    } catch (const std::out_of_range& e) {
      fail(e.what());
    }
  }
  if (!header) throw KernelError("figure text is empty");
  return f;
}

}  // namespace geocdl::kernel
