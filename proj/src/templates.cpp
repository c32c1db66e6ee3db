#include "geocdl/templates.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>

#include "geocdl/kernel.hpp"
#include "geocdl/util.hpp"

namespace geocdl::templates {

using cdl::Label;
using Element = Selector::Element;

// ---------------------------------------------------------------------------
// Names

std::string_view to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Line: return "line";
    case PrimitiveKind::Triangle: return "triangle";
    case PrimitiveKind::Quadrilateral: return "quadrilateral";
    case PrimitiveKind::RegularPolygon: return "regular-polygon";
    case PrimitiveKind::Circle: return "circle";
  }
  return "?";
}

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::None: return "";
    case Variant::Scalene: return "scalene";
    case Variant::Isosceles: return "isosceles";
    case Variant::Equilateral: return "equilateral";
    case Variant::Right: return "right";
    case Variant::Square: return "square";
    case Variant::Rectangle: return "rectangle";
    case Variant::Parallelogram: return "parallelogram";
    case Variant::Trapezoid: return "trapezoid";
    case Variant::Generic: return "generic";
  }
  return "?";
}

std::string_view to_string(RelationKind kind) {
  switch (kind) {
    case RelationKind::SharedVertex: return "shared-vertex";
    case RelationKind::SharedEdge: return "shared-edge";
    case RelationKind::InscribedInCircle: return "inscribed-in-circle";
    case RelationKind::Circumscribed: return "circumscribed";
    case RelationKind::CircleLineIntersection: return "circle-line-intersection";
    case RelationKind::AngleCongruence: return "angle-congruence";
    case RelationKind::MidpointOnEdge: return "midpoint-on-edge";
    case RelationKind::PointOnSegment: return "point-on-segment";
  }
  return "?";
}

std::optional<RelationKind> relation_kind_from(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(RelationKind::PointOnSegment); ++k) {
    const auto kind = static_cast<RelationKind>(k);
    if (to_string(kind) == name) return kind;
  }
  return std::nullopt;
}

std::string_view to_string(TemplateErrorKind kind) {
  switch (kind) {
    case TemplateErrorKind::Syntax: return "SyntaxError";
    case TemplateErrorKind::DuplicateTemplateId: return "DuplicateTemplateId";
    case TemplateErrorKind::InvalidRelationArity: return "InvalidRelationArity";
    case TemplateErrorKind::IncompatibleRelation: return "IncompatibleRelation";
    case TemplateErrorKind::InvalidParameter: return "InvalidParameter";
    case TemplateErrorKind::InvalidCaption: return "InvalidCaption";
    case TemplateErrorKind::InvalidTemplate: return "InvalidTemplate";
    case TemplateErrorKind::LabelExhaustion: return "LabelExhaustion";
  }
  return "?";
}

TemplateError::TemplateError(TemplateErrorKind kind, const std::string& message, std::size_t line)
    : std::runtime_error(std::string(to_string(kind)) + (line ? " at line " + std::to_string(line) : "") + ": " +
                         message),
      kind_(kind),
      line_(line) {}

std::string display_name(const Primitive& p, int count) {
  switch (p.kind) {
    case PrimitiveKind::Line: return "line";
    case PrimitiveKind::Circle: return "circle";
    case PrimitiveKind::Triangle:
      return p.variant == Variant::Scalene ? "triangle" : std::string(to_string(p.variant)) + " triangle";
    case PrimitiveKind::Quadrilateral:
      return p.variant == Variant::Generic ? "quadrilateral" : std::string(to_string(p.variant));
    case PrimitiveKind::RegularPolygon: {
      static const char* names[] = {"pentagon", "hexagon", "heptagon", "octagon"};
      return std::string("regular ") + (count >= 5 && count <= 8 ? names[count - 5] : "polygon");
    }
  }
  return "shape";
}

const Template* Library::find(std::string_view id) const {
  for (const auto& t : templates)
    if (t.id == id) return &t;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Label plan

namespace {

[[noreturn]] void fail(TemplateErrorKind kind, const std::string& msg) { throw TemplateError(kind, msg); }

struct UnionFind {
  std::vector<int> parent;
  int add() {
    parent.push_back(static_cast<int>(parent.size()));
    return parent.back();
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

/// Slot layout of one concrete instantiation (counts fixed).
struct Plan {
  std::vector<int> counts;
  std::vector<std::vector<int>> slots;  // polygon vertices, line points, circle points
  std::vector<int> center;              // circle center slot, -1 otherwise
  std::vector<std::vector<int>> created;  // new points per relation
  UnionFind uf;
  std::vector<std::vector<int>> circle_group;  // roots on each circle, -1 entries unused
};

std::string describe(const Selector& s) {
  std::string out = std::to_string(s.primitive);
  switch (s.element) {
    case Element::Whole: break;
    case Element::Vertex: out += ".v" + std::to_string(s.index); break;
    case Element::Edge: out += ".e" + std::to_string(s.index); break;
    case Element::Center: out += ".c"; break;
    case Element::Point: out += ".p" + std::to_string(s.index); break;
  }
  return out;
}

void check_operands(const Template& t, const Relation& r, std::size_t lo, std::size_t hi) {
  const auto name = std::string(to_string(r.kind));
  if (r.operands.size() < lo || r.operands.size() > hi)
    fail(TemplateErrorKind::InvalidRelationArity, name + " takes " + std::to_string(lo) +
                                                      (hi != lo ? ".." + std::to_string(hi) : "") + " operands, got " +
                                                      std::to_string(r.operands.size()));
  for (const auto& op : r.operands)
    if (op.primitive < 0 || op.primitive >= static_cast<int>(t.primitives.size()))
      fail(TemplateErrorKind::InvalidRelationArity,
           name + " references primitive " + std::to_string(op.primitive) + " in a template with " +
               std::to_string(t.primitives.size()) + " primitives");
}

const Primitive& prim(const Template& t, const Selector& s) { return t.primitives[static_cast<std::size_t>(s.primitive)]; }

void expect(bool ok, const Relation& r, const std::string& what) {
  if (!ok) fail(TemplateErrorKind::IncompatibleRelation, std::string(to_string(r.kind)) + ": " + what);
}

/// Slot of a point-like selector (vertex, line/circle point, center).
int point_slot(const Template& t, const Plan& plan, const Relation& r, const Selector& s) {
  const auto& p = prim(t, s);
  const auto i = static_cast<std::size_t>(s.primitive);
  const int n = plan.counts[i];
  switch (s.element) {
    case Element::Vertex:
      expect(p.is_polygon(), r, describe(s) + " is not a polygon vertex");
      break;
    case Element::Point:
      expect(!p.is_polygon(), r, describe(s) + " is not a line or circle point");
      break;
    case Element::Center:
      expect(p.kind == PrimitiveKind::Circle, r, describe(s) + " is not a circle center");
      return plan.center[i];
    default:
      expect(false, r, describe(s) + " is not a point");
  }
  if (s.index < 0 || s.index >= n)
    fail(TemplateErrorKind::InvalidRelationArity, describe(s) + " is out of range for " + std::to_string(n) + " points");
  return plan.slots[i][static_cast<std::size_t>(s.index)];
}

std::pair<int, int> edge_slots(const Template& t, const Plan& plan, const Relation& r, const Selector& s) {
  const auto& p = prim(t, s);
  expect(s.element == Element::Edge && p.is_polygon(), r, describe(s) + " is not a polygon edge");
  const auto i = static_cast<std::size_t>(s.primitive);
  const int n = plan.counts[i];
  if (s.index < 0 || s.index >= n)
    fail(TemplateErrorKind::InvalidRelationArity, describe(s) + " is out of range for " + std::to_string(n) + " edges");
  const auto& v = plan.slots[i];
  return {v[static_cast<std::size_t>(s.index)], v[static_cast<std::size_t>((s.index + 1) % n)]};
}

void expect_whole(const Template& t, const Relation& r, const Selector& s, bool polygon) {
  const auto& p = prim(t, s);
  expect(s.element == Element::Whole, r, describe(s) + " must name a whole primitive");
  if (polygon)
    expect(p.is_polygon(), r, describe(s) + " is not a polygon");
  else
    expect(p.kind == PrimitiveKind::Circle, r, describe(s) + " is not a circle");
}

Plan build_plan(const Template& t, const std::vector<int>& counts) {
  Plan plan;
  plan.counts = counts;
  const std::size_t np = t.primitives.size();
  plan.slots.resize(np);
  plan.center.assign(np, -1);
  for (std::size_t i = 0; i < np; ++i) {
    if (t.primitives[i].kind == PrimitiveKind::Circle) plan.center[i] = plan.uf.add();
    for (int k = 0; k < counts[i]; ++k) plan.slots[i].push_back(plan.uf.add());
  }

  std::vector<std::vector<std::pair<int, int>>> group_sources(np);  // (primitive, source tag)
  std::vector<std::vector<int>> group_slots(np);
  for (std::size_t i = 0; i < np; ++i)
    if (t.primitives[i].kind == PrimitiveKind::Circle && counts[i] > 0) {
      group_sources[i].push_back({static_cast<int>(i), 0});
      group_slots[i] = plan.slots[i];
    }
  std::vector<std::pair<int, int>> interior;  // edge slots carrying an interior point
  std::set<std::pair<int, int>> circle_attached;  // (polygon, relation kind)

  plan.created.resize(t.relations.size());
  for (std::size_t ri = 0; ri < t.relations.size(); ++ri) {
    const auto& r = t.relations[ri];
    auto& made = plan.created[ri];
    switch (r.kind) {
      case RelationKind::SharedVertex: {
        check_operands(t, r, 2, 2);
        expect(r.operands[0].primitive != r.operands[1].primitive, r, "operands must belong to different primitives");
        plan.uf.unite(point_slot(t, plan, r, r.operands[0]), point_slot(t, plan, r, r.operands[1]));
        break;
      }
      case RelationKind::SharedEdge: {
        check_operands(t, r, 2, 2);
        expect(r.operands[0].primitive != r.operands[1].primitive, r, "operands must belong to different primitives");
        const auto [a0, a1] = edge_slots(t, plan, r, r.operands[0]);
        const auto [b0, b1] = edge_slots(t, plan, r, r.operands[1]);
        // Traversed in opposite directions so the faces lie on opposite sides.
        plan.uf.unite(a0, b1);
        plan.uf.unite(a1, b0);
        break;
      }
      case RelationKind::InscribedInCircle:
      case RelationKind::Circumscribed: {
        check_operands(t, r, 2, 2);
        expect_whole(t, r, r.operands[0], true);
        expect_whole(t, r, r.operands[1], false);
        const auto pi = static_cast<std::size_t>(r.operands[0].primitive);
        const auto ci = static_cast<std::size_t>(r.operands[1].primitive);
        expect(circle_attached.insert({static_cast<int>(pi), static_cast<int>(r.kind)}).second, r,
               "polygon is already attached to a circle this way");
        if (r.kind == RelationKind::InscribedInCircle) {
          group_sources[ci].push_back({static_cast<int>(pi), 1});
          for (int s : plan.slots[pi]) group_slots[ci].push_back(s);
        } else {
          expect(counts[ci] == 0, r, "an inscribed circle cannot carry its own points");
          const int n = counts[pi];
          group_sources[ci].push_back({static_cast<int>(pi), 2});
          for (int k = 0; k < n; ++k) {
            made.push_back(plan.uf.add());
            group_slots[ci].push_back(made.back());
            interior.push_back({plan.slots[pi][static_cast<std::size_t>(k)],
                                plan.slots[pi][static_cast<std::size_t>((k + 1) % n)]});
          }
        }
        break;
      }
      case RelationKind::CircleLineIntersection: {
        check_operands(t, r, 2, 3);
        expect_whole(t, r, r.operands[0], false);
        const auto ci = static_cast<std::size_t>(r.operands[0].primitive);
        const int line = r.operands[1].primitive;
        for (std::size_t k = 1; k < r.operands.size(); ++k) {
          const auto& s = r.operands[k];
          expect(prim(t, s).kind == PrimitiveKind::Line && s.element == Element::Point, r,
                 describe(s) + " is not a line point");
          expect(s.primitive == line, r, "intersection points must lie on one line");
          group_slots[ci].push_back(point_slot(t, plan, r, s));
        }
        group_sources[ci].push_back({line, 3});
        break;
      }
      case RelationKind::AngleCongruence: {
        check_operands(t, r, 2, 2);
        for (const auto& s : r.operands) point_slot(t, plan, r, s);
        for (const auto& s : r.operands) expect(s.element == Element::Vertex, r, describe(s) + " is not a vertex");
        expect(!(r.operands[0] == r.operands[1]), r, "an angle cannot be congruent to itself");
        break;
      }
      case RelationKind::MidpointOnEdge:
      case RelationKind::PointOnSegment: {
        check_operands(t, r, 1, 1);
        interior.push_back(edge_slots(t, plan, r, r.operands[0]));
        made.push_back(plan.uf.add());
        break;
      }
    }
  }

  // Structural rules, evaluated on unified labels.
  for (std::size_t i = 0; i < np; ++i) {
    std::set<int> roots;
    for (int s : plan.slots[i]) roots.insert(plan.uf.find(s));
    if (plan.center[i] >= 0) roots.insert(plan.uf.find(plan.center[i]));
    if (roots.size() != plan.slots[i].size() + (plan.center[i] >= 0 ? 1 : 0))
      fail(TemplateErrorKind::IncompatibleRelation, "relations merge two points of primitive " + std::to_string(i));
  }
  std::set<std::pair<int, int>> edges_in_use;
  for (auto [a, b] : interior) {
    a = plan.uf.find(a);
    b = plan.uf.find(b);
    if (!edges_in_use.insert({std::min(a, b), std::max(a, b)}).second)
      fail(TemplateErrorKind::IncompatibleRelation, "an edge carries more than one interior point");
  }
  plan.circle_group.resize(np);
  for (std::size_t i = 0; i < np; ++i) {
    if (t.primitives[i].kind != PrimitiveKind::Circle) continue;
    std::vector<int> group;
    for (int s : group_slots[i]) {
      const int root = plan.uf.find(s);
      if (std::find(group.begin(), group.end(), root) == group.end()) group.push_back(root);
    }
    if (group.empty()) fail(TemplateErrorKind::IncompatibleRelation, "circle " + std::to_string(i) + " has no points");
    if (std::find(group.begin(), group.end(), plan.uf.find(plan.center[i])) != group.end())
      fail(TemplateErrorKind::IncompatibleRelation, "circle " + std::to_string(i) + " passes through its center");
    // Four or more points need an ordering fixed by a single convex polygon.
    if (group.size() >= 4 && (group_sources[i].size() != 1 || group_sources[i][0].second == 0 ||
                              group_sources[i][0].second == 3))
      fail(TemplateErrorKind::IncompatibleRelation,
           "circle " + std::to_string(i) + " collects four or more points from several sources");
    plan.circle_group[i] = group;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Parameter validation

void check_range(const std::optional<IntRange>& r, int lo, int hi, const std::string& what) {
  if (!r) return;
  if (r->lo > r->hi) fail(TemplateErrorKind::InvalidParameter, what + " range is empty");
  if (r->lo < lo || r->hi > hi)
    fail(TemplateErrorKind::InvalidParameter,
         what + " range must lie within " + std::to_string(lo) + ".." + std::to_string(hi));
}

void validate_primitive(const Primitive& p, std::size_t index) {
  const std::string at = "primitive " + std::to_string(index) + " ";
  check_range(p.count, 0, 100, at + "count");
  switch (p.kind) {
    case PrimitiveKind::Line:
      check_range(p.count, 3, 6, at + "points");
      break;
    case PrimitiveKind::Triangle:
      check_range(p.count, 3, 3, at + "sides");
      break;
    case PrimitiveKind::Quadrilateral:
      check_range(p.count, 4, 4, at + "sides");
      break;
    case PrimitiveKind::RegularPolygon:
      check_range(p.count, 5, 8, at + "n");
      break;
    case PrimitiveKind::Circle:
      check_range(p.count, 0, 3, at + "points");
      break;
  }
  const bool triangle_variant = p.variant == Variant::Scalene || p.variant == Variant::Isosceles ||
                                p.variant == Variant::Equilateral || p.variant == Variant::Right;
  const bool quad_variant = p.variant == Variant::Square || p.variant == Variant::Rectangle ||
                            p.variant == Variant::Parallelogram || p.variant == Variant::Trapezoid ||
                            p.variant == Variant::Generic;
  if ((p.kind == PrimitiveKind::Triangle && !triangle_variant) ||
      (p.kind == PrimitiveKind::Quadrilateral && !quad_variant) ||
      (!p.is_polygon() && p.variant != Variant::None) ||
      (p.kind == PrimitiveKind::RegularPolygon && p.variant != Variant::None))
    fail(TemplateErrorKind::InvalidParameter, at + "has an invalid variant");

  if (p.side && p.kind == PrimitiveKind::Circle) fail(TemplateErrorKind::InvalidParameter, at + "circle has no side");
  check_range(p.side, 1, 1000, at + "side");
  if (p.radius && p.kind != PrimitiveKind::Circle) fail(TemplateErrorKind::InvalidParameter, at + "radius needs a circle");
  check_range(p.radius, 1, 1000, at + "radius");
  if (p.angle) {
    const bool allowed = p.variant == Variant::Scalene || p.variant == Variant::Isosceles ||
                         p.variant == Variant::Right || p.variant == Variant::Parallelogram ||
                         p.variant == Variant::Trapezoid || p.variant == Variant::Generic;
    if (!allowed) fail(TemplateErrorKind::InvalidParameter, at + "variant fixes its angles");
    check_range(p.angle, 1, p.variant == Variant::Right ? 89 : 179, at + "angle");
  }
}

// ---------------------------------------------------------------------------
// Statement emission


}  // namespace

void validate(const Template& t) {
  if (t.primitives.empty() || t.primitives.size() > 3)
    fail(TemplateErrorKind::InvalidTemplate, "a template holds 1 to 3 primitives");
  for (std::size_t i = 0; i < t.primitives.size(); ++i) validate_primitive(t.primitives[i], i);

  // Every combination of counts must plan and caption cleanly.
  std::vector<int> counts(t.primitives.size());
  std::function<void(std::size_t)> visit = [&](std::size_t i) {
    if (i == counts.size()) {
      build_plan(t, counts);
      return;
    }
    for (int c = t.primitives[i].count.lo; c <= t.primitives[i].count.hi; ++c) {
      counts[i] = c;
      visit(i + 1);
    }
  };
  visit(0);
  // Captions are checked on one trial instantiation.
  instantiate(t, 0);
}

namespace {

std::string join_labels(const std::vector<Label>& ls, std::string_view sep = "") {
  std::string s;
  for (std::size_t i = 0; i < ls.size(); ++i) s += (i ? std::string(sep) : "") + ls[i].name;
  return s;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string s;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) s += i + 1 == words.size() ? " and " : ", ";
    s += words[i];
  }
  return s;
}

std::string article(const std::string& noun) {
  return std::string(std::strchr("aeiou", noun.front()) ? "an " : "a ") + noun;
}

std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

struct Context {
  const Template& t;
  const Plan& plan;
  std::vector<Label> root_label;  // indexed by root slot
  std::vector<std::string> names;   // display names per primitive
  std::vector<std::string> refs;    // "triangle ABC" per primitive
};

Label label(const Context& c, int slot) { return c.root_label[static_cast<std::size_t>(c.plan.uf.parent[static_cast<std::size_t>(slot)])]; }

std::vector<Label> vertices(const Context& c, std::size_t i) {
  std::vector<Label> out;
  for (int s : c.plan.slots[i]) out.push_back(label(c, s));
  return out;
}

cdl::MeasureOfAngle interior_angle(const Context& c, std::size_t i, int k) {
  const auto v = vertices(c, i);
  const int n = static_cast<int>(v.size());
  return cdl::MeasureOfAngle{v[static_cast<std::size_t>((k + n - 1) % n)], v[static_cast<std::size_t>(k)],
                             v[static_cast<std::size_t>((k + 1) % n)]};
}

std::string angle_text(const cdl::MeasureOfAngle& a) { return a.a.name + a.vertex.name + a.c.name; }

void insert(cdl::CdlDocument& doc, cdl::Statement s) {
  if (auto err = cdl::validate(s)) throw TemplateError(TemplateErrorKind::InvalidTemplate, *err);
  doc.insert(s);
}

void equal_sides(cdl::CdlDocument& doc, std::vector<kernel::SegmentKey> segs) {
  std::sort(segs.begin(), segs.end());
  for (const auto& e : kernel::equal_length_chain(segs)) insert(doc, cdl::ImgStatement{e});
}

kernel::SegmentKey edge(const std::vector<Label>& v, std::size_t k) {
  return kernel::make_segment(v[k], v[(k + 1) % v.size()]);
}

cdl::Equal literal(cdl::MeasureTerm t, int value) { return cdl::Equal{std::move(t), cdl::EqualRhs{Rational(value)}}; }

void emit_primitive(const Context& c, std::size_t i, const std::map<std::string, int>& params, cdl::CdlDocument& doc,
                    std::vector<std::string>& notes) {
  const auto& p = c.t.primitives[i];
  const auto key = std::to_string(i) + ".";
  auto param = [&](const char* name) -> std::optional<int> {
    auto it = params.find(key + name);
    return it == params.end() ? std::nullopt : std::optional<int>(it->second);
  };
  const auto v = vertices(c, i);
  const std::size_t n = v.size();

  if (p.kind == PrimitiveKind::Line) {
    insert(doc, cdl::ConsStatement{cdl::Collinear{v}});
    if (auto s = param("side")) {
      insert(doc, cdl::ImgStatement{literal(cdl::LengthOfLine{v[0], v[1]}, *s)});
      notes.push_back("The length of " + v[0].name + v[1].name + " is " + std::to_string(*s) + ".");
    }
    return;
  }
  if (p.kind == PrimitiveKind::Circle) {
    const auto& group = c.plan.circle_group[i];
    std::vector<Label> on;
    for (int root : group) on.push_back(c.root_label[static_cast<std::size_t>(root)]);
    const Label center = label(c, c.plan.center[i]);
    insert(doc, cdl::ConsStatement{cdl::Cocircular{center, on}});
    if (!v.empty()) {
      std::vector<std::string> own;
      for (const auto& l : v) own.push_back(l.name);
      notes.push_back(capitalized(join_words(own)) + (own.size() == 1 ? " lies" : " lie") + " on " + c.refs[i] + ".");
    }
    if (auto r = param("radius")) {
      insert(doc, cdl::ImgStatement{literal(cdl::LengthOfLine{center, on.front()}, *r)});
      notes.push_back("The radius " + center.name + on.front().name + " is " + std::to_string(*r) + ".");
    }
    return;
  }

  cdl::Shape shape;
  for (std::size_t k = 0; k < n; ++k) shape.edges.push_back(cdl::Edge{{v[k], v[(k + 1) % n]}});
  insert(doc, cdl::ConsStatement{shape});

  auto right_angle = [&](std::size_t k) {
    insert(doc, cdl::ImgStatement{literal(interior_angle(c, i, static_cast<int>(k)), 90)});
  };
  auto parallel = [&](std::size_t a, std::size_t b) {
    const auto ea = edge(v, a), eb = edge(v, b);
    insert(doc, cdl::ImgStatement{cdl::ParallelBetweenLine{{ea.first, ea.second}, {eb.first, eb.second}}});
  };
  switch (p.variant) {
    case Variant::Isosceles:
      equal_sides(doc, {edge(v, 0), edge(v, n - 1)});
      break;
    case Variant::Equilateral:
      equal_sides(doc, {edge(v, 0), edge(v, 1), edge(v, 2)});
      break;
    case Variant::Right:
      right_angle(1);
      break;
    case Variant::Square:
      equal_sides(doc, {edge(v, 0), edge(v, 1), edge(v, 2), edge(v, 3)});
      for (std::size_t k = 0; k < 4; ++k) right_angle(k);
      break;
    case Variant::Rectangle:
      for (std::size_t k = 0; k < 4; ++k) right_angle(k);
      equal_sides(doc, {edge(v, 0), edge(v, 2)});
      equal_sides(doc, {edge(v, 1), edge(v, 3)});
      break;
    case Variant::Parallelogram:
      parallel(0, 2);
      parallel(1, 3);
      break;
    case Variant::Trapezoid:
      parallel(0, 2);
      break;
    default:
      break;
  }
  if (p.kind == PrimitiveKind::RegularPolygon) {
    std::vector<kernel::SegmentKey> sides;
    for (std::size_t k = 0; k < n; ++k) sides.push_back(edge(v, k));
    equal_sides(doc, sides);
    const Rational interior(static_cast<std::int64_t>(n - 2) * 180, static_cast<std::int64_t>(n));
    for (std::size_t k = 0; k < n; ++k)
      insert(doc, cdl::ImgStatement{cdl::Equal{interior_angle(c, i, static_cast<int>(k)), cdl::EqualRhs{interior}}});
  }
  if (auto s = param("side")) {
    insert(doc, cdl::ImgStatement{literal(cdl::LengthOfLine{v[0], v[1]}, *s)});
    notes.push_back("The length of " + v[0].name + v[1].name + " is " + std::to_string(*s) + ".");
  }
  if (auto a = param("angle")) {
    const auto ang = interior_angle(c, i, 0);
    insert(doc, cdl::ImgStatement{literal(ang, *a)});
    notes.push_back("Angle " + angle_text(ang) + " measures " + std::to_string(*a) + " degrees.");
  }
}

std::vector<Label> edge_labels(const Context& c, const Selector& s) {
  const auto v = vertices(c, static_cast<std::size_t>(s.primitive));
  const auto k = static_cast<std::size_t>(s.index);
  return {v[k], v[(k + 1) % v.size()]};
}

Label point_label(const Context& c, const Selector& s) {
  const auto i = static_cast<std::size_t>(s.primitive);
  if (s.element == Element::Center) return label(c, c.plan.center[i]);
  return label(c, c.plan.slots[i][static_cast<std::size_t>(s.index)]);
}

std::string emit_relation(const Context& c, std::size_t ri, cdl::CdlDocument& doc) {
  const auto& r = c.t.relations[ri];
  const auto& made = c.plan.created[ri];
  auto ref = [&](const Selector& s) { return c.refs[static_cast<std::size_t>(s.primitive)]; };
  switch (r.kind) {
    case RelationKind::SharedVertex:
      return ref(r.operands[0]) + " and " + ref(r.operands[1]) + " share vertex " + point_label(c, r.operands[0]).name +
             ".";
    case RelationKind::SharedEdge: {
      const auto e = edge_labels(c, r.operands[0]);
      return ref(r.operands[0]) + " and " + ref(r.operands[1]) + " share side " + e[0].name + e[1].name + ".";
    }
    case RelationKind::InscribedInCircle:
      return ref(r.operands[0]) + " is inscribed in " + ref(r.operands[1]) + ".";
    case RelationKind::Circumscribed: {
      const auto pi = static_cast<std::size_t>(r.operands[0].primitive);
      const auto ci = static_cast<std::size_t>(r.operands[1].primitive);
      const auto v = vertices(c, pi);
      const Label center = label(c, c.plan.center[ci]);
      std::vector<std::string> touch;
      for (std::size_t k = 0; k < v.size(); ++k) {
        const Label tp = label(c, made[k]);
        const Label& a = v[k];
        const Label& b = v[(k + 1) % v.size()];
        insert(doc, cdl::ConsStatement{cdl::Collinear{{a, tp, b}}});
        insert(doc, cdl::ImgStatement{cdl::PerpendicularBetweenLine{{center, tp}, {a, b}}});
        touch.push_back(tp.name);
      }
      return ref(r.operands[1]) + " is inscribed in " + ref(r.operands[0]) + ", touching its sides at " +
             join_words(touch) + ".";
    }
    case RelationKind::CircleLineIntersection: {
      std::vector<std::string> pts;
      for (std::size_t k = 1; k < r.operands.size(); ++k) pts.push_back(point_label(c, r.operands[k]).name);
      return ref(r.operands[1]) + " meets " + ref(r.operands[0]) + " at " + join_words(pts) + ".";
    }
    case RelationKind::AngleCongruence: {
      const auto a = interior_angle(c, static_cast<std::size_t>(r.operands[0].primitive), r.operands[0].index);
      const auto b = interior_angle(c, static_cast<std::size_t>(r.operands[1].primitive), r.operands[1].index);
      insert(doc, cdl::ImgStatement{cdl::Equal{a, cdl::EqualRhs{cdl::MeasureTerm{b}}}});
      return "Angle " + angle_text(a) + " is equal to angle " + angle_text(b) + ".";
    }
    case RelationKind::MidpointOnEdge:
    case RelationKind::PointOnSegment: {
      const auto e = edge_labels(c, r.operands[0]);
      const Label m = label(c, made[0]);
      insert(doc, cdl::ConsStatement{cdl::Collinear{{e[0], m, e[1]}}});
      if (r.kind == RelationKind::PointOnSegment) return m.name + " lies on side " + e[0].name + e[1].name + ".";
      insert(doc, cdl::ImgStatement{cdl::Equal{cdl::LengthOfLine{e[0], m}, cdl::EqualRhs{cdl::MeasureTerm{
                                                                              cdl::LengthOfLine{m, e[1]}}}}});
      return m.name + " is the midpoint of " + e[0].name + e[1].name + ".";
    }
  }
  return {};
}

std::string render_pattern(const Context& c, const std::string& pattern) {
  std::string out;
  std::size_t i = 0;
  while (i < pattern.size()) {
    if (pattern[i] != '{') {
      out += pattern[i++];
      continue;
    }
    const auto close = pattern.find('}', i);
    if (close == std::string::npos) fail(TemplateErrorKind::InvalidCaption, "unterminated caption slot");
    const std::string slot = pattern.substr(i + 1, close - i - 1);
    i = close + 1;
    auto number = [&](std::string_view s) -> std::size_t {
      if (s.empty() || !std::all_of(s.begin(), s.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
        fail(TemplateErrorKind::InvalidCaption, "bad caption slot {" + slot + "}");
      return static_cast<std::size_t>(std::stoul(std::string(s)));
    };
    if (!slot.empty() && slot[0] == 'r') {
      const auto k = number(std::string_view(slot).substr(1));
      if (k >= c.plan.created.size() || c.plan.created[k].empty())
        fail(TemplateErrorKind::InvalidCaption, "caption slot {" + slot + "} names no created point");
      std::vector<std::string> names;
      for (int s : c.plan.created[k]) names.push_back(label(c, s).name);
      out += join_words(names);
      continue;
    }
    const auto dot = slot.find('.');
    const auto idx = number(std::string_view(slot).substr(0, dot));
    if (idx >= c.t.primitives.size())
      fail(TemplateErrorKind::InvalidCaption, "caption slot {" + slot + "} names a missing primitive");
    const std::string field = dot == std::string::npos ? "" : slot.substr(dot + 1);
    if (field.empty()) {
      out += c.refs[idx];
    } else if (field == "name") {
      out += c.names[idx];
    } else if (field == "labels") {
      out += c.refs[idx].substr(c.names[idx].size() + 1);
    } else {
      fail(TemplateErrorKind::InvalidCaption, "unknown caption field in {" + slot + "}");
    }
  }
  return out;
}

}  // namespace

Instantiation instantiate(const Template& t, std::uint64_t seed) {
  if (t.primitives.empty() || t.primitives.size() > 3)
    fail(TemplateErrorKind::InvalidTemplate, "a template holds 1 to 3 primitives");
  Rng rng(seed);
  Instantiation inst;
  inst.template_id = t.id;
  inst.seed = seed;
  std::vector<int> counts;
  for (std::size_t i = 0; i < t.primitives.size(); ++i) {
    const auto& p = t.primitives[i];
    const auto key = std::to_string(i) + ".";
    auto draw = [&](const IntRange& r) { return static_cast<int>(rng.uniform_int(r.lo, r.hi)); };
    counts.push_back(draw(p.count));
    if (p.count.lo != p.count.hi) inst.params[key + (p.kind == PrimitiveKind::RegularPolygon ? "n" : "points")] = counts.back();
    if (p.side) inst.params[key + "side"] = draw(*p.side);
    if (p.angle) inst.params[key + "angle"] = draw(*p.angle);
    if (p.radius) inst.params[key + "radius"] = draw(*p.radius);
  }
  Plan plan = build_plan(t, counts);

  Context c{t, plan, {}, {}, {}};
  c.root_label.resize(plan.uf.parent.size());
  std::size_t next = 0;
  for (std::size_t s = 0; s < plan.uf.parent.size(); ++s) {
    const auto root = static_cast<std::size_t>(plan.uf.find(static_cast<int>(s)));
    if (root != s) continue;
    if (next >= 26) fail(TemplateErrorKind::LabelExhaustion, "template " + t.id + " needs more than 26 points");
    c.root_label[root] = Label(std::string(1, static_cast<char>('A' + next++)));
    inst.labels.push_back(c.root_label[root]);
  }
  for (auto& p : plan.uf.parent) p = plan.uf.find(p);

  for (std::size_t i = 0; i < t.primitives.size(); ++i) {
    c.names.push_back(display_name(t.primitives[i], counts[i]));
    std::string labels = t.primitives[i].kind == PrimitiveKind::Circle ? label(c, plan.center[i]).name
                                                                       : join_labels(vertices(c, i));
    c.refs.push_back(c.names[i] + " " + labels);
  }

  std::vector<std::string> notes;
  for (std::size_t i = 0; i < t.primitives.size(); ++i) emit_primitive(c, i, inst.params, inst.doc, notes);
  std::vector<std::string> relation_text;
  for (std::size_t ri = 0; ri < t.relations.size(); ++ri) relation_text.push_back(emit_relation(c, ri, inst.doc));

  if (t.caption == "auto") {
    std::vector<std::string> shown;
    for (const auto& r : c.refs) shown.push_back(article(r));
    inst.caption = "The figure shows " + join_words(shown) + ".";
    for (const auto& s : relation_text) inst.caption += " " + capitalized(s);
    for (const auto& s : notes) inst.caption += " " + s;
  } else {
    inst.caption = render_pattern(c, t.caption);
  }
  for (const auto& name : c.names)
    if (inst.caption.find(name) == std::string::npos)
      fail(TemplateErrorKind::InvalidCaption, "caption of " + t.id + " does not mention the " + name);
  return inst;
}

Template compose(const Primitive& a, const Primitive& b, const Relation& rel) {
  Template t;
  t.id = std::string(to_string(a.kind)) + "+" + std::string(to_string(b.kind)) + ":" + std::string(to_string(rel.kind));
  t.primitives = {a, b};
  t.relations = {rel};
  validate(t);
  return t;
}

// ---------------------------------------------------------------------------
// Library file

namespace {

std::optional<IntRange> parse_range(std::string_view s) {
  auto number = [](std::string_view v) -> std::optional<int> {
    if (v.empty() || v.size() > 6 ||
        !std::all_of(v.begin(), v.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
      return std::nullopt;
    return std::stoi(std::string(v));
  };
  const auto dots = s.find("..");
  if (dots == std::string_view::npos) {
    auto v = number(s);
    if (!v) return std::nullopt;
    return IntRange{*v, *v};
  }
  auto lo = number(s.substr(0, dots));
  auto hi = number(s.substr(dots + 2));
  if (!lo || !hi) return std::nullopt;
  return IntRange{*lo, *hi};
}

std::vector<std::string> words(std::string_view line) {
  std::vector<std::string> out;
  std::istringstream is{std::string(line)};
  for (std::string w; is >> w;) out.push_back(w);
  return out;
}

Primitive parse_primitive(const std::vector<std::string>& w, std::size_t line) {
  auto syntax = [&](const std::string& msg) { return TemplateError(TemplateErrorKind::Syntax, msg, line); };
  if (w.size() < 2) throw syntax("primitive needs a kind");
  Primitive p;
  std::size_t next = 2;
  const std::string& kind = w[1];
  auto variant_from = [&](const std::vector<Variant>& allowed) {
    if (w.size() < 3) throw syntax(kind + " needs a variant");
    for (auto v : allowed)
      if (to_string(v) == w[2]) {
        next = 3;
        return v;
      }
    throw syntax("unknown " + kind + " variant '" + w[2] + "'");
  };
  if (kind == "line") {
    p.kind = PrimitiveKind::Line;
    p.count = {3, 3};
  } else if (kind == "triangle") {
    p.kind = PrimitiveKind::Triangle;
    p.variant = variant_from({Variant::Scalene, Variant::Isosceles, Variant::Equilateral, Variant::Right});
    p.count = {3, 3};
  } else if (kind == "quadrilateral") {
    p.kind = PrimitiveKind::Quadrilateral;
    p.variant = variant_from(
        {Variant::Square, Variant::Rectangle, Variant::Parallelogram, Variant::Trapezoid, Variant::Generic});
    p.count = {4, 4};
  } else if (kind == "regular-polygon") {
    p.kind = PrimitiveKind::RegularPolygon;
    p.count = {6, 6};
  } else if (kind == "circle") {
    p.kind = PrimitiveKind::Circle;
    p.count = {0, 0};
  } else {
    throw syntax("unknown primitive kind '" + kind + "'");
  }
  for (std::size_t k = next; k < w.size(); ++k) {
    const auto eq = w[k].find('=');
    if (eq == std::string::npos) throw syntax("expected key=range, got '" + w[k] + "'");
    const std::string key = w[k].substr(0, eq);
    const auto range = parse_range(std::string_view(w[k]).substr(eq + 1));
    if (!range) throw syntax("bad range in '" + w[k] + "'");
    if (key == "side") {
      p.side = range;
    } else if (key == "angle") {
      p.angle = range;
    } else if (key == "radius") {
      p.radius = range;
    } else if (key == "n" && p.kind == PrimitiveKind::RegularPolygon) {
      p.count = *range;
    } else if (key == "points" && (p.kind == PrimitiveKind::Line || p.kind == PrimitiveKind::Circle)) {
      p.count = *range;
    } else {
      throw TemplateError(TemplateErrorKind::InvalidParameter, "parameter '" + key + "' does not apply to " + kind, line);
    }
  }
  return p;
}

Selector parse_selector(const std::string& s, std::size_t line) {
  auto syntax = [&]() { return TemplateError(TemplateErrorKind::Syntax, "bad operand '" + s + "'", line); };
  Selector sel;
  const auto dot = s.find('.');
  const std::string head = s.substr(0, dot);
  if (head.empty() || head.size() > 3 ||
      !std::all_of(head.begin(), head.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
    throw syntax();
  sel.primitive = std::stoi(head);
  if (dot == std::string::npos) return sel;
  const std::string tail = s.substr(dot + 1);
  if (tail == "c") {
    sel.element = Element::Center;
    return sel;
  }
  if (tail.size() < 2 || tail.size() > 3 ||
      !std::all_of(tail.begin() + 1, tail.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }))
    throw syntax();
  switch (tail[0]) {
    case 'v': sel.element = Element::Vertex; break;
    case 'e': sel.element = Element::Edge; break;
    case 'p': sel.element = Element::Point; break;
    default: throw syntax();
  }
  sel.index = std::stoi(tail.substr(1));
  return sel;
}

std::string range_text(const IntRange& r) {
  return r.lo == r.hi ? std::to_string(r.lo) : std::to_string(r.lo) + ".." + std::to_string(r.hi);
}

std::string selector_text(const Selector& s) { return describe(s); }

constexpr std::string_view kHeader = "geocdl-template-library v1";

}  // namespace

Library parse_library(std::string_view text) {
  Library lib;
  const auto lines = split(text, '\n');
  std::size_t lineno = 0;
  bool header = false;
  std::optional<Template> current;
  std::size_t current_line = 0;
  std::set<std::string> ids;
  for (const auto& raw : lines) {
    ++lineno;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != kHeader)
        throw TemplateError(TemplateErrorKind::Syntax, "expected header '" + std::string(kHeader) + "'", lineno);
      header = true;
      continue;
    }
    const auto w = words(line);
    const std::string& head = w[0];
    if (head == "template") {
      if (current) throw TemplateError(TemplateErrorKind::Syntax, "missing 'end' before new template", lineno);
      if (w.size() != 2) throw TemplateError(TemplateErrorKind::Syntax, "template needs one id", lineno);
      const bool ok_id = std::all_of(w[1].begin(), w[1].end(), [](char ch) {
        return std::islower(static_cast<unsigned char>(ch)) || std::isdigit(static_cast<unsigned char>(ch)) ||
               ch == '-' || ch == '_' || ch == '.';
      });
      if (!ok_id) throw TemplateError(TemplateErrorKind::Syntax, "bad template id '" + w[1] + "'", lineno);
      current = Template{};
      current->id = w[1];
      current->caption = "";
      current_line = lineno;
      continue;
    }
    if (!current) throw TemplateError(TemplateErrorKind::Syntax, "'" + head + "' outside a template", lineno);
    if (head == "primitive") {
      current->primitives.push_back(parse_primitive(w, lineno));
    } else if (head == "relation") {
      if (w.size() < 2) throw TemplateError(TemplateErrorKind::Syntax, "relation needs a kind", lineno);
      const auto kind = relation_kind_from(w[1]);
      if (!kind) throw TemplateError(TemplateErrorKind::Syntax, "unknown relation kind '" + w[1] + "'", lineno);
      Relation r{*kind, {}};
      for (std::size_t k = 2; k < w.size(); ++k) r.operands.push_back(parse_selector(w[k], lineno));
      current->relations.push_back(std::move(r));
    } else if (head == "caption") {
      current->caption = trim(line.substr(std::string("caption").size()));
      if (current->caption.empty()) throw TemplateError(TemplateErrorKind::Syntax, "empty caption", lineno);
    } else if (head == "end") {
      if (current->caption.empty()) current->caption = "auto";
      if (!ids.insert(current->id).second)
        throw TemplateError(TemplateErrorKind::DuplicateTemplateId, "template id '" + current->id + "' repeats",
                            current_line);
      try {
        validate(*current);
      } catch (const TemplateError& e) {
        throw TemplateError(e.kind(), "template " + current->id + ": " + e.what(), current_line);
      }
      lib.templates.push_back(std::move(*current));
      current.reset();
    } else {
      throw TemplateError(TemplateErrorKind::Syntax, "unknown directive '" + head + "'", lineno);
    }
  }
  if (current) throw TemplateError(TemplateErrorKind::Syntax, "template " + current->id + " lacks 'end'", lineno);
  if (lib.templates.empty()) lib.warnings.push_back("library holds no templates");
  return lib;
}

Library load_library(const std::string& path) { return parse_library(read_file(path)); }

std::string print_library(const std::vector<Template>& templates) {
  std::ostringstream os;
  os << kHeader << "\n";
  for (const auto& t : templates) {
    os << "\ntemplate " << t.id << "\n";
    for (const auto& p : t.primitives) {
      os << "  primitive " << to_string(p.kind);
      if (p.variant != Variant::None) os << " " << to_string(p.variant);
      if (p.kind == PrimitiveKind::RegularPolygon) os << " n=" << range_text(p.count);
      if (p.kind == PrimitiveKind::Line || p.kind == PrimitiveKind::Circle) os << " points=" << range_text(p.count);
      if (p.side) os << " side=" << range_text(*p.side);
      if (p.angle) os << " angle=" << range_text(*p.angle);
      if (p.radius) os << " radius=" << range_text(*p.radius);
      os << "\n";
    }
    for (const auto& r : t.relations) {
      os << "  relation " << to_string(r.kind);
      for (const auto& s : r.operands) os << " " << selector_text(s);
      os << "\n";
    }
    os << "  caption " << t.caption << "\nend\n";
  }
  return os.str();
}

LibraryStats library_stats(const std::vector<Template>& templates) {
  LibraryStats st;
  st.templates = templates.size();
  for (const auto& t : templates) {
    bool parametric = false;
    for (const auto& p : t.primitives) {
      std::string name(to_string(p.kind));
      if (p.variant != Variant::None) name += " " + std::string(to_string(p.variant));
      ++st.primitive_kinds[name];
      parametric = parametric || p.side || p.angle || p.radius || p.count.lo != p.count.hi;
    }
    for (const auto& r : t.relations) ++st.relation_kinds[std::string(to_string(r.kind))];
    ++st.by_primitive_count[t.primitives.size()];
    st.parametric += parametric;
  }
  return st;
}

}  // namespace geocdl::templates
