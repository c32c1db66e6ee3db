#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geocdl/cdl.hpp"

namespace geocdl::templates {

enum class PrimitiveKind { Line, Triangle, Quadrilateral, RegularPolygon, Circle };

enum class Variant {
  None,
  Scalene,
  Isosceles,
  Equilateral,
  Right,
  Square,
  Rectangle,
  Parallelogram,
  Trapezoid,
  Generic,
};

struct IntRange {
  int lo = 0;
  int hi = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

/// One shape of a template. `count` is the polygon side count, the number of
/// points on a line, or the number of a circle's own points.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::Triangle;
  Variant variant = Variant::None;
  IntRange count{3, 3};
  std::optional<IntRange> side;    // literal length of the first edge
  std::optional<IntRange> angle;   // literal interior angle at the first vertex
  std::optional<IntRange> radius;  // circle: literal radius

  bool is_polygon() const { return kind != PrimitiveKind::Line && kind != PrimitiveKind::Circle; }
  friend bool operator==(const Primitive&, const Primitive&) = default;
};

/// Display name used in captions, e.g. "right triangle", "regular hexagon".
std::string display_name(const Primitive& p, int count);

enum class RelationKind {
  SharedVertex,
  SharedEdge,
  InscribedInCircle,
  Circumscribed,
  CircleLineIntersection,
  AngleCongruence,
  MidpointOnEdge,
  PointOnSegment,
};

std::string_view to_string(RelationKind kind);
std::optional<RelationKind> relation_kind_from(std::string_view name);

/// "1" (whole primitive), "0.v2" (vertex), "0.e1" (edge from vertex 1),
/// "1.c" (circle center), "0.p0" (line or circle point).
struct Selector {
  enum class Element { Whole, Vertex, Edge, Center, Point };
  int primitive = 0;
  Element element = Element::Whole;
  int index = 0;
  friend bool operator==(const Selector&, const Selector&) = default;
};

struct Relation {
  RelationKind kind = RelationKind::SharedVertex;
  std::vector<Selector> operands;
  friend bool operator==(const Relation&, const Relation&) = default;
};

struct Template {
  std::string id;
  std::vector<Primitive> primitives;
  std::vector<Relation> relations;
  /// "auto" or a pattern with slots {i}, {i.name}, {i.labels}, {rK}.
  std::string caption = "auto";
  friend bool operator==(const Template&, const Template&) = default;
};

enum class TemplateErrorKind {
  Syntax,
  DuplicateTemplateId,
  InvalidRelationArity,
  IncompatibleRelation,
  InvalidParameter,
  InvalidCaption,
  InvalidTemplate,
  LabelExhaustion,
};

std::string_view to_string(TemplateErrorKind kind);

class TemplateError : public std::runtime_error {
 public:
  TemplateError(TemplateErrorKind kind, const std::string& message, std::size_t line = 0);
  TemplateErrorKind kind() const { return kind_; }
  std::size_t line() const { return line_; }

 private:
  TemplateErrorKind kind_;
  std::size_t line_;
};

struct Library {
  std::vector<Template> templates;
  std::vector<std::string> warnings;

  const Template* find(std::string_view id) const;
};

Library parse_library(std::string_view text);
Library load_library(const std::string& path);
std::string print_library(const std::vector<Template>& templates);

/// Throws TemplateError if the template cannot be instantiated for some
/// parameter value in its ranges.
void validate(const Template& t);

struct Instantiation {
  std::string template_id;
  std::uint64_t seed = 0;
  cdl::CdlDocument doc;
  std::string caption;
  std::vector<cdl::Label> labels;
  std::map<std::string, int> params;  // "0.side" -> 7
};

Instantiation instantiate(const Template& t, std::uint64_t seed);

/// Two-primitive template joining `a` and `b`; operands of `rel` refer to
/// primitive 0 (a) and 1 (b).
Template compose(const Primitive& a, const Primitive& b, const Relation& rel);

struct LibraryStats {
  std::size_t templates = 0;
  std::size_t parametric = 0;
  std::map<std::string, std::size_t> primitive_kinds;
  std::map<std::string, std::size_t> relation_kinds;
  std::map<std::size_t, std::size_t> by_primitive_count;
};

LibraryStats library_stats(const std::vector<Template>& templates);

std::string_view to_string(PrimitiveKind kind);
std::string_view to_string(Variant v);

}  // namespace geocdl::templates
