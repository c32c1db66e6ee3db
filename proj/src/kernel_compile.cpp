#include <algorithm>
#include <sstream>

#include "geocdl/kernel.hpp"

namespace geocdl::kernel {

using cdl::Label;

SegmentKey make_segment(const Label& a, const Label& b) { return a < b ? SegmentKey{a, b} : SegmentKey{b, a}; }

const Vec2& Figure::at(const Label& l) const {
  auto it = points.find(l);
  if (it == points.end()) throw UnboundLabel("figure has no point " + l.name);
  return it->second;
}

std::string_view to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::Collinear3: return "Collinear3";
    case ConstraintKind::OnCircle: return "OnCircle";
    case ConstraintKind::LengthEq: return "LengthEq";
    case ConstraintKind::AngleEq: return "AngleEq";
    case ConstraintKind::Parallel: return "Parallel";
    case ConstraintKind::Perpendicular: return "Perpendicular";
    case ConstraintKind::MinSeparation: return "MinSeparation";
    case ConstraintKind::BetweenOrder: return "BetweenOrder";
    case ConstraintKind::ConvexTurn: return "ConvexTurn";
  }
  return "?";
}

std::vector<Label> ConstraintSystem::free_labels() const {
  std::vector<Label> out;
  for (const auto& l : labels)
    if (!fixed.count(l)) out.push_back(l);
  return out;
}

std::size_t ConstraintSystem::equality_count() const {
  return static_cast<std::size_t>(std::count_if(constraints.begin(), constraints.end(), [](const Constraint& c) {
    return c.kind != ConstraintKind::MinSeparation && c.kind != ConstraintKind::BetweenOrder &&
           c.kind != ConstraintKind::ConvexTurn;
  }));
}

namespace {

void add_term_constraint(ConstraintSystem& sys, const cdl::Equal& eq, const CompileOptions& opt) {
  Constraint c;
  auto push_term = [&](const cdl::MeasureTerm& t) {
    if (const auto* len = std::get_if<cdl::LengthOfLine>(&t)) {
      c.points.push_back(len->a);
      c.points.push_back(len->b);
    } else {
      const auto& a = std::get<cdl::MeasureOfAngle>(t);
      c.points.push_back(a.a);
      c.points.push_back(a.vertex);
      c.points.push_back(a.c);
    }
  };
  const bool is_length = std::holds_alternative<cdl::LengthOfLine>(eq.lhs);
  c.kind = is_length ? ConstraintKind::LengthEq : ConstraintKind::AngleEq;
  c.weight = is_length ? 1.0 : opt.angle_weight;
  push_term(eq.lhs);
  if (const auto* rt = std::get_if<cdl::MeasureTerm>(&eq.rhs)) {
    push_term(*rt);
  } else {
    c.value = std::get<Rational>(eq.rhs).to_double();
    if (is_length) sys.uses_unit = true;
  }
  sys.constraints.push_back(std::move(c));
}

}  // namespace

ConstraintSystem compile(const cdl::CdlDocument& doc, const CompileOptions& opt) {
  if (auto dangling = doc.dangling_labels(); !dangling.empty()) {
    std::string names;
    for (const auto& l : dangling) names += (names.empty() ? "" : ", ") + l.name;
    throw UnboundLabel("labels not introduced by construction statements: " + names);
  }

  ConstraintSystem sys;
  const auto all = doc.labels();
  sys.labels.assign(all.begin(), all.end());
  if (!sys.labels.empty()) sys.fixed[sys.labels[0]] = Vec2(0.0, 0.0);
  if (sys.labels.size() > 1) sys.fixed[sys.labels[1]] = Vec2(1.0, 0.0);

  std::set<Label> centers;
  auto add = [&](ConstraintKind kind, std::vector<Label> pts, std::optional<double> value = std::nullopt,
                 double weight = 1.0) {
    sys.constraints.push_back(Constraint{kind, std::move(pts), value, weight});
  };

  for (const auto& stmt : doc.cons()) {
    if (const auto* shape = std::get_if<cdl::Shape>(&stmt)) {
      sys.shapes.push_back(*shape);
      bool all_segments = true;
      for (const auto& e : shape->edges) {
        if (e.is_arc()) {
          all_segments = false;
          centers.insert(e.points[0]);
          add(ConstraintKind::OnCircle, {e.points[0], e.points[1]});
          add(ConstraintKind::OnCircle, {e.points[0], e.points[2]});
          auto& on = sys.circle_points[e.points[0]];
          for (int k : {1, 2})
            if (std::find(on.begin(), on.end(), e.points[k]) == on.end()) on.push_back(e.points[k]);
        } else {
          sys.segments.insert(make_segment(e.points[0], e.points[1]));
        }
      }
      // Polygon faces are kept convex and counterclockwise.
      if (all_segments && shape->edges.size() >= 3) {
        const auto n = shape->edges.size();
        for (std::size_t i = 0; i < n; ++i) {
          add(ConstraintKind::ConvexTurn,
              {shape->edges[i].points[0], shape->edges[(i + 1) % n].points[0], shape->edges[(i + 2) % n].points[0]},
              opt.min_turn_sine);
        }
      }
    } else if (const auto* col = std::get_if<cdl::Collinear>(&stmt)) {
      const auto& p = col->points;
      sys.lines.push_back(p);
      for (std::size_t i = 0; i + 1 < p.size(); ++i) sys.segments.insert(make_segment(p[i], p[i + 1]));
      for (std::size_t i = 0; i + 2 < p.size(); ++i) {
        add(ConstraintKind::Collinear3, {p[i], p[i + 1], p[i + 2]});
        add(ConstraintKind::BetweenOrder, {p[i], p[i + 1], p[i + 2]});
      }
    } else {
      const auto& cc = std::get<cdl::Cocircular>(stmt);
      centers.insert(cc.center);
      auto& on = sys.circle_points[cc.center];
      for (const auto& q : cc.points) {
        add(ConstraintKind::OnCircle, {cc.center, q});
        if (std::find(on.begin(), on.end(), q) == on.end()) on.push_back(q);
      }
    }
  }
  sys.circle_centers.assign(centers.begin(), centers.end());

  for (const auto& stmt : doc.img()) {
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, cdl::Equal>) {
            add_term_constraint(sys, v, opt);
          } else {
            const auto kind =
                std::is_same_v<T, cdl::ParallelBetweenLine> ? ConstraintKind::Parallel : ConstraintKind::Perpendicular;
            add(kind, {v.first.a, v.first.b, v.second.a, v.second.b});
          }
        },
        stmt);
  }

  for (std::size_t i = 0; i < sys.labels.size(); ++i)
    for (std::size_t j = i + 1; j < sys.labels.size(); ++j)
      add(ConstraintKind::MinSeparation, {sys.labels[i], sys.labels[j]}, opt.min_separation);

  const std::size_t free_points = sys.free_labels().size();
  const std::size_t equalities = sys.equality_count();
  if (static_cast<double>(equalities) > opt.overconstrained_factor * 2.0 * static_cast<double>(free_points)) {
    std::ostringstream os;
    os << "OverConstrained: " << equalities << " equality constraints for " << free_points << " free points";
    sys.warnings.push_back(os.str());
  }
  return sys;
}

}  // namespace geocdl::kernel
