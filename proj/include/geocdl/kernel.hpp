#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "geocdl/cdl.hpp"
#include "geocdl/residuals.hpp"

namespace geocdl::kernel {

using Vec2 = Eigen::Vector2d;
using SegmentKey = std::pair<cdl::Label, cdl::Label>;  // sorted endpoints

SegmentKey make_segment(const cdl::Label& a, const cdl::Label& b);

/// Coordinates realizing a document, plus the drawn structure the document
/// declares (segments, circles, faces) so rendering and extraction can work
/// from the figure alone.
struct Figure {
  std::map<cdl::Label, Vec2> points;
  std::map<cdl::Label, double> circles;  // center -> radius
  std::set<SegmentKey> segments;
  std::vector<cdl::Shape> shapes;

  const Vec2& at(const cdl::Label& l) const;
};

class KernelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class UnboundLabel : public KernelError {
 public:
  using KernelError::KernelError;
};
class DegenerateFigure : public KernelError {
 public:
  using KernelError::KernelError;
};

struct Constraint {
  ConstraintKind kind = ConstraintKind::Collinear3;
  std::vector<cdl::Label> points;
  /// Literal target (LengthEq, AngleEq) or kind parameter (MinSeparation,
  /// ConvexTurn). Absent for two-term LengthEq/AngleEq.
  std::optional<double> value;
  double weight = 1.0;
};

std::string_view to_string(ConstraintKind kind);

struct CompileOptions {
  double min_separation = 0.05;
  double min_turn_sine = 0.05;
  /// Warn when equality constraints exceed factor * 2 * free points.
  double overconstrained_factor = 2.0;
  double angle_weight = 3.14159265358979323846 / 180.0;
};

struct ConstraintSystem {
  std::vector<cdl::Label> labels;           // every point, label order
  std::map<cdl::Label, Vec2> fixed;         // gauge pins
  std::vector<cdl::Label> circle_centers;   // one radius unknown each
  std::vector<Constraint> constraints;
  bool uses_unit = false;                   // literal lengths present
  std::set<SegmentKey> segments;
  std::vector<cdl::Shape> shapes;
  std::vector<std::vector<cdl::Label>> lines;                  // collinear runs
  std::map<cdl::Label, std::vector<cdl::Label>> circle_points;   // center -> points on it
  std::vector<std::string> warnings;

  std::vector<cdl::Label> free_labels() const;
  std::size_t equality_count() const;
};

ConstraintSystem compile(const cdl::CdlDocument& doc, const CompileOptions& options = {});

struct ResidualEval {
  double value = 0.0;
  bool degenerate = false;
};

/// Residual of one constraint on a concrete figure (unit length 1).
ResidualEval evaluate(const Figure& figure, const Constraint& c, double penalty = 1.0);
double residual(const Figure& figure, const Constraint& c);

/// Exact gradient of residual(figure, c) with respect to the coordinates of
/// c.points (x0, y0, x1, y1, ...) and, for OnCircle, the radius last.
Eigen::VectorXd residual_gradient(const Figure& figure, const Constraint& c);

struct SolveOptions {
  int restarts = 8;
  int max_iterations = 200;
  double tolerance = 1e-8;
  double degenerate_penalty = 1.0;
};

struct NonConvergence {
  double best_residual = 0.0;
  int restarts = 0;
};

using SolveResult = std::variant<Figure, NonConvergence>;

/// Damped least squares from seeded low-discrepancy starts. On success the
/// figure is expressed in document units: literal lengths hold as written,
/// otherwise the first two labels sit at unit distance.
SolveResult solve(const ConstraintSystem& system, std::uint64_t seed, const SolveOptions& options = {});

/// Largest absolute residual of the system on a figure.
double max_residual(const ConstraintSystem& system, const Figure& figure);

Figure rotate(const Figure& figure, double degrees);
Figure translate(const Figure& figure, const Vec2& offset);
Figure scale(const Figure& figure, double factor);
Vec2 centroid(const Figure& figure);

struct ExtractOptions {
  double tolerance = 1e-6;
  double min_separation = 0.05;
  /// Mine relations over every point pair instead of declared segments.
  bool all_pairs = false;
};

/// Equalities stating that every segment of a class has the same length: one
/// statement for a pair, otherwise the cycle s0=s1, s1=s2, ..., sn=s0 over the
/// sorted class.
std::vector<cdl::Equal> equal_length_chain(const std::vector<SegmentKey>& sorted_segments);

cdl::CdlDocument extract_cdl(const Figure& figure, const ExtractOptions& options = {});

/// Statements of `doc` that do not hold on the figure, as printed text
/// with the observed deviation.
std::vector<std::string> verify(const Figure& figure, const cdl::CdlDocument& doc, double tolerance = 1e-6);

/// Flat text map: "point L x y" lines in label order, then "circle C r",
/// "segment A B" and "shape ..." lines. Coordinates use 17 significant digits.
std::string serialize(const Figure& figure);
Figure deserialize_figure(std::string_view text);

}  // namespace geocdl::kernel
