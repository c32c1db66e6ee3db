#pragma once

// Residual forms of every constraint kind, templated on the scalar so the same
// code yields values (double) and exact Jacobians (Eigen::AutoDiffScalar).

#include <cmath>
#include <numbers>

#include <Eigen/Core>

namespace geocdl::kernel {

template <typename Scalar>
using Point2 = Eigen::Matrix<Scalar, 2, 1>;

enum class ConstraintKind {
  Collinear3,     // P, Q, R
  OnCircle,       // center, P; uses the circle radius
  LengthEq,       // P, Q [, R, S]; literal target scales with the figure unit
  AngleEq,        // P, Q, R [, S, T, U]; degrees, vertex in the middle
  Parallel,       // P, Q, R, S
  Perpendicular,  // P, Q, R, S
  MinSeparation,  // P, Q; parameter = minimum distance
  BetweenOrder,   // P, Q, R; Q lies between P and R
  ConvexTurn,     // P, Q, R; left turn with sine at least the parameter
};

namespace detail {

inline double value_of(double x) { return x; }
template <typename Scalar>
double value_of(const Scalar& x) {
  return x.value();
}

template <typename Scalar>
Scalar cross(const Point2<Scalar>& a, const Point2<Scalar>& b) {
  return a.x() * b.y() - a.y() * b.x();
}

template <typename Scalar>
Scalar hinge(const Scalar& x) {
  return value_of(x) > 0.0 ? x : Scalar(0.0);
}

template <typename Scalar>
Scalar absolute(const Scalar& x) {
  return value_of(x) < 0.0 ? Scalar(-x) : x;
}

}  // namespace detail

/// Inputs of one residual evaluation. `points` holds the constraint's
/// points in declaration order.
template <typename Scalar>
struct ResidualInput {
  const Point2<Scalar>* points = nullptr;
  Scalar radius = Scalar(0.0);
  Scalar unit = Scalar(1.0);
  bool has_target = false;   // literal target instead of a second term
  double target = 0.0;       // literal value, or the kind's parameter
  double zero_length = 1e-12;
  double penalty = 1.0;
};

template <typename Scalar>
struct ResidualValue {
  Scalar value;
  bool degenerate = false;
};

/// Residual of a single constraint: zero iff it holds, smooth away from hinge
/// kinks. Zero-length directions return the penalty and flag degeneracy.
template <typename Scalar>
ResidualValue<Scalar> constraint_residual(ConstraintKind kind, const ResidualInput<Scalar>& in) {
  using std::sqrt;
  using std::atan2;
  using detail::value_of;
  const auto* p = in.points;
  bool degenerate = false;
  auto norm = [&](const Point2<Scalar>& v) -> Scalar {
    const Scalar sq = v.squaredNorm();
    if (value_of(sq) < in.zero_length * in.zero_length) {
      degenerate = true;
      return Scalar(1.0);
    }
    return sqrt(sq);
  };
  auto angle_deg = [&](const Point2<Scalar>& a, const Point2<Scalar>& vertex, const Point2<Scalar>& c) -> Scalar {
    const Point2<Scalar> u = a - vertex;
    const Point2<Scalar> v = c - vertex;
    norm(u);
    norm(v);
    const Scalar s = detail::absolute(detail::cross(u, v));
    return atan2(s, Scalar(u.dot(v))) * Scalar(180.0 / std::numbers::pi);
  };

  Scalar r(0.0);
  switch (kind) {
    case ConstraintKind::Collinear3: {
      const Point2<Scalar> a = p[1] - p[0];
      const Point2<Scalar> b = p[2] - p[0];
      r = detail::cross(a, b) / (norm(a) * norm(b));
      break;
    }
    case ConstraintKind::OnCircle:
      r = norm(p[1] - p[0]) - in.radius;
      break;
    case ConstraintKind::LengthEq:
      r = in.has_target ? Scalar(norm(p[1] - p[0]) - in.unit * in.target)
                        : Scalar(norm(p[1] - p[0]) - norm(p[3] - p[2]));
      break;
    case ConstraintKind::AngleEq:
      r = in.has_target ? Scalar(angle_deg(p[0], p[1], p[2]) - in.target)
                        : Scalar(angle_deg(p[0], p[1], p[2]) - angle_deg(p[3], p[4], p[5]));
      break;
    case ConstraintKind::Parallel: {
      const Point2<Scalar> a = p[1] - p[0];
      const Point2<Scalar> b = p[3] - p[2];
      r = detail::cross(a, b) / (norm(a) * norm(b));
      break;
    }
    case ConstraintKind::Perpendicular: {
      const Point2<Scalar> a = p[1] - p[0];
      const Point2<Scalar> b = p[3] - p[2];
      r = a.dot(b) / (norm(a) * norm(b));
      break;
    }
    case ConstraintKind::MinSeparation: {
      const Point2<Scalar> d = p[1] - p[0];
      // The hinge is active only when the points are close; coincident
      // points are the fully violated case, not a degenerate direction.
      const Scalar sq = d.squaredNorm();
      r = value_of(sq) > 0.0 ? detail::hinge(Scalar(Scalar(in.target) - sqrt(sq))) : Scalar(in.target);
      break;
    }
    case ConstraintKind::BetweenOrder: {
      const Point2<Scalar> a = p[1] - p[0];
      const Point2<Scalar> b = p[2] - p[1];
      r = detail::hinge(Scalar(-a.dot(b) / (norm(a) * norm(b))));
      break;
    }
    case ConstraintKind::ConvexTurn: {
      const Point2<Scalar> a = p[1] - p[0];
      const Point2<Scalar> b = p[2] - p[1];
      r = detail::hinge(Scalar(Scalar(in.target) - detail::cross(a, b) / (norm(a) * norm(b))));
      break;
    }
  }
  if (degenerate) return {Scalar(in.penalty), true};
  return {r, false};
}

/// Number of points a constraint kind reads; `paired` selects the two-term
/// form of LengthEq/AngleEq.
constexpr int point_count(ConstraintKind kind, bool paired) {
  switch (kind) {
    case ConstraintKind::Collinear3: return 3;
    case ConstraintKind::OnCircle: return 2;
    case ConstraintKind::LengthEq: return paired ? 4 : 2;
    case ConstraintKind::AngleEq: return paired ? 6 : 3;
    case ConstraintKind::Parallel: return 4;
    case ConstraintKind::Perpendicular: return 4;
    case ConstraintKind::MinSeparation: return 2;
    case ConstraintKind::BetweenOrder: return 3;
    case ConstraintKind::ConvexTurn: return 3;
  }
  return 0;
}

}  // namespace geocdl::kernel
