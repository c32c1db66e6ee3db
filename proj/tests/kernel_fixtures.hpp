#pragma once

// Random residual configurations and a finite-difference reference shared by
// the kernel unit tests and the acceptance suite.

#include <array>
#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "geocdl/kernel.hpp"
#include "geocdl/util.hpp"

namespace fixtures {

using geocdl::Rng;
using geocdl::kernel::Constraint;
using geocdl::kernel::ConstraintKind;
using geocdl::kernel::Figure;
using geocdl::kernel::Vec2;

inline std::vector<ConstraintKind> all_kinds() {
  return {ConstraintKind::Collinear3,    ConstraintKind::OnCircle,      ConstraintKind::LengthEq,
          ConstraintKind::AngleEq,       ConstraintKind::Parallel,      ConstraintKind::Perpendicular,
          ConstraintKind::MinSeparation, ConstraintKind::BetweenOrder,  ConstraintKind::ConvexTurn};
}

inline double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

// A configuration is rejected when it sits within `margin` of a kink or a
// singularity, so the central difference sees a smooth function.
inline std::optional<std::pair<Figure, Constraint>> random_configuration(ConstraintKind kind, Rng& rng) {
  const bool paired = rng.bernoulli(0.5);
  const int n = geocdl::kernel::point_count(kind, paired);
  const double margin = 1e-3;
  Figure f;
  Constraint c;
  c.kind = kind;
  std::vector<Vec2> pts;
  for (int i = 0; i < n; ++i) {
    const char name[2] = {static_cast<char>('A' + i), 0};
    c.points.push_back(geocdl::cdl::L(name));
    pts.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  // Hinge kinds draw half their samples in the active region.
  if (kind == ConstraintKind::MinSeparation && rng.bernoulli(0.5))
    pts[1] = pts[0] + Vec2(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
  if ((kind == ConstraintKind::BetweenOrder || kind == ConstraintKind::ConvexTurn) && rng.bernoulli(0.5))
    pts[2] = pts[1] + 0.5 * (pts[1] - pts[0]) + Vec2(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if ((pts[i] - pts[j]).norm() < 0.01 && kind != ConstraintKind::MinSeparation) return std::nullopt;
  for (int i = 0; i < n; ++i) f.points[c.points[i]] = pts[i];

  auto unit = [](const Vec2& v) { return v.normalized(); };
  switch (kind) {
    case ConstraintKind::OnCircle:
      f.circles[c.points[0]] = rng.uniform(0.1, 2.0);
      break;
    case ConstraintKind::LengthEq:
      if (!paired) c.value = rng.uniform(0.1, 3.0);
      break;
    case ConstraintKind::AngleEq: {
      if (std::abs(cross(unit(pts[0] - pts[1]), unit(pts[2] - pts[1]))) < 0.05) return std::nullopt;
      if (paired) {
        if (std::abs(cross(unit(pts[3] - pts[4]), unit(pts[5] - pts[4]))) < 0.05) return std::nullopt;
      } else {
        c.value = rng.uniform(5.0, 175.0);
      }
      c.weight = 3.14159265358979323846 / 180.0;
      break;
    }
    case ConstraintKind::MinSeparation: {
      c.value = 0.05;
      const double d = (pts[1] - pts[0]).norm();
      if (std::abs(d - 0.05) < margin || d < 0.005) return std::nullopt;
      break;
    }
    case ConstraintKind::BetweenOrder: {
      const double cosine = unit(pts[1] - pts[0]).dot(unit(pts[2] - pts[1]));
      if (std::abs(cosine) < margin) return std::nullopt;
      break;
    }
    case ConstraintKind::ConvexTurn: {
      c.value = 0.05;
      const double sine = cross(unit(pts[1] - pts[0]), unit(pts[2] - pts[1]));
      if (std::abs(sine - 0.05) < margin) return std::nullopt;
      break;
    }
    default:
      break;
  }
  return std::make_pair(std::move(f), std::move(c));
}

inline Eigen::VectorXd central_difference(const Figure& f, const Constraint& c, double h) {
  const bool circle = c.kind == ConstraintKind::OnCircle;
  const auto n = static_cast<Eigen::Index>(c.points.size());
  Eigen::VectorXd g(2 * n + (circle ? 1 : 0));
  auto shifted = [&](Eigen::Index slot, double delta) {
    Figure m = f;
    if (slot == 2 * n) {
      m.circles[c.points[0]] += delta;
    } else {
      m.points[c.points[static_cast<std::size_t>(slot / 2)]][slot % 2] += delta;
    }
    return geocdl::kernel::residual(m, c);
  };
  for (Eigen::Index s = 0; s < g.size(); ++s) g[s] = (shifted(s, h) - shifted(s, -h)) / (2 * h);
  return g;
}

}  // namespace fixtures
