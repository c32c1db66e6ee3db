#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include <Eigen/Dense>
#include <unsupported/Eigen/AutoDiff>

#include "geocdl/kernel.hpp"
#include "geocdl/util.hpp"

namespace geocdl::kernel {

using cdl::Label;

namespace {

constexpr int kMaxLocal = 14;  // six points, a radius and the unit
using LocalDerivative = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxLocal, 1>;
using Dual = Eigen::AutoDiffScalar<LocalDerivative>;

bool is_paired(const Constraint& c) {
  return (c.kind == ConstraintKind::LengthEq || c.kind == ConstraintKind::AngleEq) && !c.value;
}

double kind_parameter(const Constraint& c) { return c.value.value_or(0.0); }

Dual seeded(double v, int slot, int size) {
  return Dual(v, LocalDerivative::Unit(size, slot));
}

double derivative_at(const Dual& d, int slot) {
  return d.derivatives().size() > slot ? d.derivatives()[slot] : 0.0;
}

/// Additive recurrence on the plastic number; fills the unit square evenly.
struct R2 {
  double ox = 0.0;
  double oy = 0.0;
  int n = 1;
  Vec2 next() {
    constexpr double g = 1.32471795724474602596;
    const Vec2 p(std::fmod(ox + n / g, 1.0), std::fmod(oy + n / (g * g), 1.0));
    ++n;
    return p;
  }
};

Vec2 left_normal(const Vec2& d) { return Vec2(-d.y(), d.x()); }

/// Index form of a system: variable layout is free point coordinates, then
/// one radius per circle, then the unit when literal lengths exist.
struct Prepared {
  struct Term {
    ConstraintKind kind;
    int npts = 0;
    std::array<int, 6> pts{};
    int circle = -1;
    bool has_target = false;
    double target = 0.0;
    double weight = 1.0;
  };

  const ConstraintSystem* sys = nullptr;
  std::vector<int> point_var;  // first coordinate variable, or -1 if pinned
  std::vector<Vec2> pinned;
  std::vector<int> radius_var;
  int unit_var = -1;
  int nvars = 0;
  std::vector<Term> terms;
  double penalty = 1.0;

  explicit Prepared(const ConstraintSystem& s, double degenerate_penalty) : sys(&s), penalty(degenerate_penalty) {
    std::map<Label, int> index;
    for (std::size_t i = 0; i < s.labels.size(); ++i) index[s.labels[i]] = static_cast<int>(i);
    point_var.assign(s.labels.size(), -1);
    pinned.assign(s.labels.size(), Vec2::Zero());
    for (std::size_t i = 0; i < s.labels.size(); ++i) {
      auto it = s.fixed.find(s.labels[i]);
      if (it != s.fixed.end()) {
        pinned[i] = it->second;
      } else {
        point_var[i] = nvars;
        nvars += 2;
      }
    }
    std::map<Label, int> circle_index;
    for (std::size_t k = 0; k < s.circle_centers.size(); ++k) {
      circle_index[s.circle_centers[k]] = static_cast<int>(k);
      radius_var.push_back(nvars++);
    }
    if (s.uses_unit) unit_var = nvars++;

    for (const auto& c : s.constraints) {
      Term t;
      t.kind = c.kind;
      t.npts = point_count(c.kind, is_paired(c));
      if (static_cast<int>(c.points.size()) != t.npts)
        throw KernelError(std::string(to_string(c.kind)) + " constraint has wrong point count");
      for (int j = 0; j < t.npts; ++j) {
        auto it = index.find(c.points[j]);
        if (it == index.end()) throw UnboundLabel("constraint references unknown point " + c.points[j].name);
        t.pts[j] = it->second;
      }
      if (c.kind == ConstraintKind::OnCircle) {
        auto it = circle_index.find(c.points[0]);
        if (it == circle_index.end()) throw UnboundLabel("no circle centered at " + c.points[0].name);
        t.circle = it->second;
      }
      t.has_target = c.value.has_value();
      t.target = kind_parameter(c);
      t.weight = c.weight;
      if (!(c.weight > 0.0)) throw KernelError("constraint weight must be positive");
      terms.push_back(t);
    }
  }

  Vec2 position(const Eigen::VectorXd& x, int i) const {
    const int v = point_var[i];
    return v < 0 ? pinned[i] : Vec2(x[v], x[v + 1]);
  }

  double unit(const Eigen::VectorXd& x) const { return unit_var < 0 ? 1.0 : x[unit_var]; }

  double raw(const Eigen::VectorXd& x, const Term& t) const {
    std::array<Point2<double>, 6> p;
    for (int j = 0; j < t.npts; ++j) p[j] = position(x, t.pts[j]);
    ResidualInput<double> in;
    in.points = p.data();
    in.radius = t.circle >= 0 ? x[radius_var[t.circle]] : 0.0;
    in.unit = unit(x);
    in.has_target = t.has_target;
    in.target = t.target;
    in.penalty = penalty;
    return constraint_residual(t.kind, in).value;
  }

  /// Weighted residual vector; returns the largest raw magnitude.
  double residuals(const Eigen::VectorXd& x, Eigen::VectorXd& r) const {
    r.resize(static_cast<Eigen::Index>(terms.size()));
    double worst = 0.0;
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const double v = raw(x, terms[k]);
      worst = std::max(worst, std::abs(v));
      r[static_cast<Eigen::Index>(k)] = terms[k].weight * v;
    }
    return worst;
  }

  void jacobian(const Eigen::VectorXd& x, Eigen::MatrixXd& jac) const {
    jac.setZero(static_cast<Eigen::Index>(terms.size()), nvars);
    std::array<int, kMaxLocal> global{};
    for (std::size_t k = 0; k < terms.size(); ++k) {
      const Term& t = terms[k];
      const int size = 2 * t.npts + (t.circle >= 0 ? 1 : 0) + (unit_var >= 0 ? 1 : 0);
      std::array<Point2<Dual>, 6> p;
      int slot = 0;
      for (int j = 0; j < t.npts; ++j) {
        const Vec2 q = position(x, t.pts[j]);
        const int v = point_var[t.pts[j]];
        p[j] = Point2<Dual>(seeded(q.x(), slot, size), seeded(q.y(), slot + 1, size));
        global[slot] = v < 0 ? -1 : v;
        global[slot + 1] = v < 0 ? -1 : v + 1;
        slot += 2;
      }
      ResidualInput<Dual> in;
      in.points = p.data();
      if (t.circle >= 0) {
        in.radius = seeded(x[radius_var[t.circle]], slot, size);
        global[slot++] = radius_var[t.circle];
      }
      if (unit_var >= 0) {
        in.unit = seeded(x[unit_var], slot, size);
        global[slot++] = unit_var;
      }
      in.has_target = t.has_target;
      in.target = t.target;
      in.penalty = penalty;
      const Dual r = constraint_residual(t.kind, in).value;
      for (int s = 0; s < size; ++s)
        if (global[s] >= 0) jac(static_cast<Eigen::Index>(k), global[s]) += t.weight * derivative_at(r, s);
    }
  }

  Figure figure(const Eigen::VectorXd& x) const {
    Figure f;
    const double u = unit(x);
    for (std::size_t i = 0; i < sys->labels.size(); ++i) f.points[sys->labels[i]] = position(x, static_cast<int>(i)) / u;
    for (std::size_t k = 0; k < sys->circle_centers.size(); ++k)
      f.circles[sys->circle_centers[k]] = std::abs(x[radius_var[k]]) / u;
    f.segments = sys->segments;
    f.shapes = sys->shapes;
    return f;
  }

  int index_of(const Label& l) const {
    auto it = std::lower_bound(sys->labels.begin(), sys->labels.end(), l);
    return static_cast<int>(it - sys->labels.begin());
  }

  std::vector<Vec2> layout(Rng& rng, R2& r2) const {
    const std::size_t n = sys->labels.size();
    std::vector<std::optional<Vec2>> at(n);
    for (std::size_t i = 0; i < n; ++i)
      if (point_var[i] < 0) at[i] = pinned[i];
    auto idx = [&](const std::vector<Label>& ls) {
      std::vector<int> out;
      for (const auto& l : ls) out.push_back(index_of(l));
      return out;
    };

    auto place_face = [&](const std::vector<int>& v) {
      const int m = static_cast<int>(v.size());
      int k = -1;
      for (int j = 0; j < m && k < 0; ++j)
        if (at[v[j]] && at[v[(j + 1) % m]]) k = j;
      if (k < 0) {
        for (int j = 0; j < m && k < 0; ++j)
          if (at[v[j]]) k = j;
        if (k < 0) return false;
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        at[v[(k + 1) % m]] = *at[v[k]] + rng.uniform(0.6, 1.2) * Vec2(std::cos(t), std::sin(t));
      }
      const Vec2 p = *at[v[k]];
      const Vec2 q = *at[v[(k + 1) % m]];
      const Vec2 c = 0.5 * (p + q) + rng.uniform(-0.25, 0.9) * left_normal(q - p);
      const double radius = (q - c).norm();
      const double from = std::atan2(q.y() - c.y(), q.x() - c.x());
      double span = std::atan2(p.y() - c.y(), p.x() - c.x()) - from;
      while (span <= 0.0) span += 2.0 * std::numbers::pi;
      const int rest = m - 2;
      bool changed = false;
      for (int j = 0; j < rest; ++j) {
        const int vi = v[(k + 2 + j) % m];
        if (at[vi]) continue;
        const double u = (j + 0.5 + 0.6 * (rng.uniform() - 0.5)) / rest;
        const double a = from + u * span;
        at[vi] = c + radius * Vec2(std::cos(a), std::sin(a));
        changed = true;
      }
      return changed;
    };

    auto place_line = [&](const std::vector<int>& v) {
      const int m = static_cast<int>(v.size());
      std::vector<int> known;
      for (int j = 0; j < m; ++j)
        if (at[v[j]]) known.push_back(j);
      if (known.empty() || static_cast<int>(known.size()) == m) return false;
      Vec2 step;
      if (known.size() == 1) {
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        step = rng.uniform(0.3, 0.6) * Vec2(std::cos(t), std::sin(t));
      } else {
        step = (*at[v[known[1]]] - *at[v[known[0]]]) / (known[1] - known[0]);
      }
      for (int j = 0; j < m; ++j) {
        if (at[v[j]]) continue;
        auto lo = std::find_if(known.rbegin(), known.rend(), [&](int q) { return q < j; });
        auto hi = std::find_if(known.begin(), known.end(), [&](int q) { return q > j; });
        if (lo != known.rend() && hi != known.end()) {
          const double t = (j - *lo + 0.3 * (rng.uniform() - 0.5)) / (*hi - *lo);
          at[v[j]] = (1.0 - t) * *at[v[*lo]] + t * *at[v[*hi]];
        } else {
          const int ref = lo != known.rend() ? *lo : *hi;
          at[v[j]] = *at[v[ref]] + step * (j - ref) * rng.uniform(0.7, 1.3);
        }
      }
      return true;
    };

    auto place_circle = [&](int center, const std::vector<int>& on, bool forced) -> void {
      std::vector<int> known;
      for (int q : on)
        if (at[q]) known.push_back(q);
      if (!at[center]) {
        if (known.size() >= 3) {
          const Vec2 a = *at[known[0]], b = *at[known[1]], c = *at[known[2]];
          const double d = 2.0 * (a.x() * (b.y() - c.y()) + b.x() * (c.y() - a.y()) + c.x() * (a.y() - b.y()));
          if (std::abs(d) > 1e-9) {
            const double a2 = a.squaredNorm(), b2 = b.squaredNorm(), c2 = c.squaredNorm();
            at[center] = Vec2((a2 * (b.y() - c.y()) + b2 * (c.y() - a.y()) + c2 * (a.y() - b.y())) / d,
                              (a2 * (c.x() - b.x()) + b2 * (a.x() - c.x()) + c2 * (b.x() - a.x())) / d);
          } else {
            at[center] = (a + b + c) / 3.0 + 0.3 * left_normal(b - a);
          }
        } else if (known.size() == 2) {
          const Vec2 a = *at[known[0]], b = *at[known[1]];
          at[center] = 0.5 * (a + b) + rng.uniform(0.2, 0.6) * left_normal(b - a);
        } else if (known.size() == 1 && forced) {
          const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
          at[center] = *at[known[0]] + rng.uniform(0.4, 0.8) * Vec2(std::cos(t), std::sin(t));
        } else {
          return;
        }
      }
      const double radius = known.empty() ? rng.uniform(0.4, 0.8) : (*at[known[0]] - *at[center]).norm();
      for (int q : on) {
        if (at[q]) continue;
        const double t = rng.uniform(0.0, 2.0 * std::numbers::pi);
        at[q] = *at[center] + radius * Vec2(std::cos(t), std::sin(t));
      }
    };

    std::vector<std::vector<int>> faces;
    for (const auto& shape : sys->shapes) {
      if (std::any_of(shape.edges.begin(), shape.edges.end(), [](const cdl::Edge& e) { return e.is_arc(); })) continue;
      std::vector<Label> vs;
      for (const auto& e : shape.edges) vs.push_back(e.points[0]);
      if (vs.size() >= 3) faces.push_back(idx(vs));
    }
    std::vector<std::vector<int>> lines;
    for (const auto& run : sys->lines) lines.push_back(idx(run));
    std::vector<std::pair<int, std::vector<int>>> circles;
    for (const auto& [center, on] : sys->circle_points) circles.emplace_back(index_of(center), idx(on));

    auto missing = [&] { return std::count_if(at.begin(), at.end(), [](const auto& p) { return !p; }); };
    while (missing() > 0) {
      bool progress = false;
      for (const auto& f : faces) progress = place_face(f) || progress;
      for (const auto& l : lines) progress = place_line(l) || progress;
      for (const auto& [c, on] : circles) {
        const bool had = at[c].has_value();
        const auto before = missing();
        place_circle(c, on, false);
        progress = progress || (!had && at[c]) || missing() != before;
      }
      if (progress) continue;
      bool forced = false;
      for (const auto& [c, on] : circles) {
        if (at[c]) continue;
        const auto before = missing();
        place_circle(c, on, true);
        if (missing() != before) {
          forced = true;
          break;
        }
      }
      if (forced) continue;
      for (std::size_t i = 0; i < n; ++i)
        if (!at[i]) {
          at[i] = r2.next();
          break;
        }
    }
    std::vector<Vec2> out;
    for (const auto& p : at) out.push_back(*p);
    return out;
  }

  /// Starting point number `attempt`. Faces are laid out as random convex
  /// counterclockwise polygons over an already placed edge, collinear runs
  /// are spread along their line and circle centers start at a circumcenter.
  /// Points the layout cannot reach come from an R2 low-discrepancy sequence
  /// in the unit box, which also supplies the per-attempt jitter.
  Eigen::VectorXd start(std::uint64_t seed, int attempt) const {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
    R2 r2{rng.uniform(), rng.uniform(), attempt * static_cast<int>(point_var.size()) * 3 + 1};
    const auto placed = layout(rng, r2);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(nvars);
    const double jitter = 0.02 + 0.03 * attempt;
    for (std::size_t i = 0; i < point_var.size(); ++i) {
      const int v = point_var[i];
      if (v < 0) continue;
      const Vec2 d = r2.next() - Vec2(0.5, 0.5);
      x[v] = placed[i].x() + jitter * d.x();
      x[v + 1] = placed[i].y() + jitter * d.y();
    }
    // Radii start at the mean distance to their constrained points.
    std::vector<double> sum(radius_var.size(), 0.0);
    std::vector<int> count(radius_var.size(), 0);
    double unit_sum = 0.0;
    int unit_count = 0;
    for (const auto& t : terms) {
      if (t.kind == ConstraintKind::OnCircle) {
        sum[t.circle] += (position(x, t.pts[1]) - position(x, t.pts[0])).norm();
        ++count[t.circle];
      } else if (t.kind == ConstraintKind::LengthEq && t.has_target && t.target > 0.0) {
        unit_sum += (position(x, t.pts[1]) - position(x, t.pts[0])).norm() / t.target;
        ++unit_count;
      }
    }
    for (std::size_t k = 0; k < radius_var.size(); ++k) x[radius_var[k]] = count[k] ? sum[k] / count[k] : 0.5;
    if (unit_var >= 0) x[unit_var] = unit_count ? unit_sum / unit_count : 1.0;
    return x;
  }
};

/// Levenberg-Marquardt with Marquardt diagonal scaling. Returns the largest
/// raw residual at the final iterate.
double levenberg_marquardt(const Prepared& prep, Eigen::VectorXd& x, const SolveOptions& opt) {
  Eigen::VectorXd r;
  Eigen::VectorXd r_new;
  Eigen::MatrixXd jac;
  double worst = prep.residuals(x, r);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int it = 0; it < opt.max_iterations && worst >= opt.tolerance; ++it) {
    prep.jacobian(x, jac);
    const Eigen::MatrixXd normal = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * r;
    bool accepted = false;
    Eigen::VectorXd step;
    while (lambda < 1e12) {
      Eigen::MatrixXd damped = normal;
      damped.diagonal().array() += lambda * (normal.diagonal().array() + 1e-9);
      step = damped.ldlt().solve(-grad);
      const Eigen::VectorXd candidate = x + step;
      const double worst_new = prep.residuals(candidate, r_new);
      const double cost_new = r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        x = candidate;
        r.swap(r_new);
        cost = cost_new;
        worst = worst_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    if (!accepted) break;
    if (step.norm() < 1e-16 * (1.0 + x.norm())) break;
  }
  return worst;
}

}  // namespace

SolveResult solve(const ConstraintSystem& system, std::uint64_t seed, const SolveOptions& options) {
  const Prepared prep(system, options.degenerate_penalty);
  double best = std::numeric_limits<double>::infinity();
  const int attempts = 1 + std::max(0, options.restarts);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    Eigen::VectorXd x = prep.start(seed, attempt);
    const double worst = levenberg_marquardt(prep, x, options);
    if (worst < options.tolerance) return prep.figure(x);
    best = std::min(best, worst);
  }
  return NonConvergence{best, options.restarts};
}

double max_residual(const ConstraintSystem& system, const Figure& figure) {
  // Map the figure back into gauge position: first label at the origin,
  // second on the positive x-axis at unit distance.
  const Prepared prep(system, 1.0);
  Vec2 origin = Vec2::Zero();
  Eigen::Matrix2d to_gauge = Eigen::Matrix2d::Identity();
  double gauge = 1.0;
  if (!system.labels.empty()) origin = figure.at(system.labels[0]);
  if (system.labels.size() > 1) {
    const Vec2 d = figure.at(system.labels[1]) - origin;
    gauge = d.norm();
    if (!(gauge > 0.0)) return std::numeric_limits<double>::infinity();
    const double t = std::atan2(d.y(), d.x());
    to_gauge << std::cos(t), std::sin(t), -std::sin(t), std::cos(t);
    to_gauge /= gauge;
  }
  Eigen::VectorXd x = Eigen::VectorXd::Zero(prep.nvars);
  for (std::size_t i = 0; i < system.labels.size(); ++i) {
    const int v = prep.point_var[i];
    if (v < 0) continue;
    const Vec2 q = to_gauge * (figure.at(system.labels[i]) - origin);
    x[v] = q.x();
    x[v + 1] = q.y();
  }
  for (std::size_t k = 0; k < system.circle_centers.size(); ++k) {
    auto it = figure.circles.find(system.circle_centers[k]);
    x[prep.radius_var[k]] = it == figure.circles.end() ? 0.0 : it->second / gauge;
  }
  if (prep.unit_var >= 0) x[prep.unit_var] = 1.0 / gauge;
  Eigen::VectorXd r;
  return prep.residuals(x, r);
}

ResidualEval evaluate(const Figure& figure, const Constraint& c, double penalty) {
  const int n = point_count(c.kind, is_paired(c));
  if (static_cast<int>(c.points.size()) != n) throw KernelError("constraint has wrong point count");
  std::array<Point2<double>, 6> p;
  for (int j = 0; j < n; ++j) p[j] = figure.at(c.points[j]);
  ResidualInput<double> in;
  in.points = p.data();
  if (c.kind == ConstraintKind::OnCircle) {
    auto it = figure.circles.find(c.points[0]);
    if (it == figure.circles.end()) throw UnboundLabel("no circle centered at " + c.points[0].name);
    in.radius = it->second;
  }
  in.has_target = c.value.has_value();
  in.target = kind_parameter(c);
  in.penalty = penalty;
  const auto out = constraint_residual(c.kind, in);
  return {out.value, out.degenerate};
}

double residual(const Figure& figure, const Constraint& c) { return evaluate(figure, c).value; }

Eigen::VectorXd residual_gradient(const Figure& figure, const Constraint& c) {
  const int n = point_count(c.kind, is_paired(c));
  if (static_cast<int>(c.points.size()) != n) throw KernelError("constraint has wrong point count");
  const bool circle = c.kind == ConstraintKind::OnCircle;
  const int size = 2 * n + (circle ? 1 : 0);
  std::array<Point2<Dual>, 6> p;
  for (int j = 0; j < n; ++j) {
    const Vec2& q = figure.at(c.points[j]);
    p[j] = Point2<Dual>(seeded(q.x(), 2 * j, size), seeded(q.y(), 2 * j + 1, size));
  }
  ResidualInput<Dual> in;
  in.points = p.data();
  if (circle) in.radius = seeded(figure.circles.at(c.points[0]), 2 * n, size);
  in.unit = Dual(1.0, LocalDerivative::Zero(size));
  in.has_target = c.value.has_value();
  in.target = kind_parameter(c);
  const Dual r = constraint_residual(c.kind, in).value;
  Eigen::VectorXd g(size);
  for (int s = 0; s < size; ++s) g[s] = derivative_at(r, s);
  return g;
}

Vec2 centroid(const Figure& figure) {
  Vec2 c = Vec2::Zero();
  if (figure.points.empty()) return c;
  for (const auto& [_, p] : figure.points) c += p;
  return c / static_cast<double>(figure.points.size());
}

Figure rotate(const Figure& figure, double degrees) {
  if (std::fmod(degrees, 360.0) == 0.0) return figure;
  const double t = degrees * std::numbers::pi / 180.0;
  Eigen::Matrix2d rot;
  rot << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  const Vec2 c = centroid(figure);
  Figure out = figure;
  for (auto& [_, p] : out.points) p = rot * (p - c) + c;
  return out;
}

Figure translate(const Figure& figure, const Vec2& offset) {
  Figure out = figure;
  for (auto& [_, p] : out.points) p += offset;
  return out;
}

Figure scale(const Figure& figure, double factor) {
  Figure out = figure;
  for (auto& [_, p] : out.points) p *= factor;
  for (auto& [_, r] : out.circles) r *= factor;
  return out;
}

}  // namespace geocdl::kernel
