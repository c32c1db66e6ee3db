#pragma once

// Construction (ConsCDL) and relation (ImgCDL) statements, their canonical
// forms, and the text format:
//
//   Shape(AB,BC,CA)                        edge cycle; 3-label edges are arcs (center, from, to)
//   Collinear(ADC)
//   Cocircular(O,ABC)
//   Equal(LengthOfLine(AB),LengthOfLine(CD))
//   Equal(MeasureOfAngle(ABC),90)          vertex in the middle, degrees
//   ParallelBetweenLine(AB,CD)
//   PerpendicularBetweenLine(AB,CD)
//
// Statements are separated by newlines or ';'. Labels are an uppercase letter
// followed by optional digits, so "A1B2C" reads as A1, B2, C.

#include <compare>
#include <cstddef>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "geocdl/rational.hpp"

namespace geocdl::cdl {

struct Label {
  std::string name;

  Label() = default;
  explicit Label(std::string n);

  static bool is_valid(std::string_view text);
  const std::string& str() const { return name; }

  friend bool operator==(const Label&, const Label&) = default;
  friend auto operator<=>(const Label&, const Label&) = default;
};

/// Directed boundary piece of a Shape: two labels for a segment, three for an
/// arc (center, from, to).
struct Edge {
  std::vector<Label> points;

  bool is_arc() const { return points.size() == 3; }
  const Label& start() const { return is_arc() ? points[1] : points[0]; }
  const Label& end() const { return points.back(); }

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct Shape {
  std::vector<Edge> edges;
  friend bool operator==(const Shape&, const Shape&) = default;
  friend auto operator<=>(const Shape&, const Shape&) = default;
};

struct Collinear {
  std::vector<Label> points;
  friend bool operator==(const Collinear&, const Collinear&) = default;
  friend auto operator<=>(const Collinear&, const Collinear&) = default;
};

struct Cocircular {
  Label center;
  std::vector<Label> points;
  friend bool operator==(const Cocircular&, const Cocircular&) = default;
  friend auto operator<=>(const Cocircular&, const Cocircular&) = default;
};

using ConsStatement = std::variant<Shape, Collinear, Cocircular>;

struct LengthOfLine {
  Label a, b;
  friend bool operator==(const LengthOfLine&, const LengthOfLine&) = default;
  friend auto operator<=>(const LengthOfLine&, const LengthOfLine&) = default;
};

/// Angle a-vertex-c in degrees.
struct MeasureOfAngle {
  Label a, vertex, c;
  friend bool operator==(const MeasureOfAngle&, const MeasureOfAngle&) = default;
  friend auto operator<=>(const MeasureOfAngle&, const MeasureOfAngle&) = default;
};

using MeasureTerm = std::variant<LengthOfLine, MeasureOfAngle>;
using EqualRhs = std::variant<MeasureTerm, Rational>;

struct Equal {
  MeasureTerm lhs;
  EqualRhs rhs;
  friend bool operator==(const Equal&, const Equal&) = default;
  friend auto operator<=>(const Equal&, const Equal&) = default;
};

struct Segment {
  Label a, b;
  friend bool operator==(const Segment&, const Segment&) = default;
  friend auto operator<=>(const Segment&, const Segment&) = default;
};

struct ParallelBetweenLine {
  Segment first, second;
  friend bool operator==(const ParallelBetweenLine&, const ParallelBetweenLine&) = default;
  friend auto operator<=>(const ParallelBetweenLine&, const ParallelBetweenLine&) = default;
};

struct PerpendicularBetweenLine {
  Segment first, second;
  friend bool operator==(const PerpendicularBetweenLine&, const PerpendicularBetweenLine&) = default;
  friend auto operator<=>(const PerpendicularBetweenLine&, const PerpendicularBetweenLine&) = default;
};

using ImgStatement = std::variant<Equal, ParallelBetweenLine, PerpendicularBetweenLine>;

using Statement = std::variant<ConsStatement, ImgStatement>;

enum class Section { Cons, Img };

// ---------------------------------------------------------------------------
// Errors

enum class ErrorKind { Syntax, Arity, DanglingLabel, InvalidStatement };

std::string_view to_string(ErrorKind kind);

class ParseError : public std::runtime_error {
 public:
  ParseError(ErrorKind kind, std::size_t line, std::size_t column, std::string message,
             std::vector<std::string> expected = {});

  ErrorKind kind() const { return kind_; }
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }
  const std::vector<std::string>& expected() const { return expected_; }

 private:
  ErrorKind kind_;
  std::size_t line_;
  std::size_t column_;
  std::vector<std::string> expected_;
};

// ---------------------------------------------------------------------------
// Document

/// Canonical statement sets. Every insertion canonicalizes, so the sets never
/// hold two spellings of the same statement and iterate in canonical order.
class CdlDocument {
 public:
  const std::set<ConsStatement>& cons() const { return cons_; }
  const std::set<ImgStatement>& img() const { return img_; }

  bool insert(const ConsStatement& s);
  bool insert(const ImgStatement& s);
  bool insert(const Statement& s);
  bool erase(const ConsStatement& s);
  bool erase(const ImgStatement& s);
  bool erase(const Statement& s);
  bool contains(const Statement& s) const;

  std::size_t size() const { return cons_.size() + img_.size(); }
  bool empty() const { return cons_.empty() && img_.empty(); }

  /// All statements, cons first, in canonical order.
  std::vector<Statement> statements() const;

  std::set<Label> labels() const;
  std::set<Label> cons_labels() const;
  /// Labels used by img statements that no cons statement mentions.
  std::set<Label> dangling_labels() const;
  bool is_label_closed() const { return dangling_labels().empty(); }

  friend bool operator==(const CdlDocument&, const CdlDocument&) = default;

 private:
  std::set<ConsStatement> cons_;
  std::set<ImgStatement> img_;
};

// ---------------------------------------------------------------------------
// Statement-kind registry

struct CallArg;

struct Call {
  std::string name;
  std::vector<CallArg> args;
  std::size_t line = 0;
  std::size_t column = 0;
};

/// One argument of a call expression: a nested call, a run of labels, or a
/// numeric literal.
struct CallArg {
  enum class Kind { Call, Labels, Number } kind = Kind::Labels;
  Call call;
  std::vector<Label> labels;
  Rational number;
  std::string text;
  std::size_t line = 0;
  std::size_t column = 0;
};

struct StatementKind {
  std::string name;
  Section section;
  std::string signature;
  std::function<Statement(const Call&)> build;
};

/// Every top-level statement kind the parser accepts. Unknown names are a
/// syntax error.
const std::vector<StatementKind>& statement_kinds();
const StatementKind* find_statement_kind(std::string_view name);

// ---------------------------------------------------------------------------
// Operations

struct ParseOptions {
  /// Reject img statements whose labels no cons statement mentions.
  /// Predicted or perturbed documents are read with this off.
  bool require_label_closure = true;
};

CdlDocument parse(std::string_view text, const ParseOptions& options = {});
Statement parse_statement(std::string_view text);

std::string print(const CdlDocument& doc);
std::string to_string(const ConsStatement& s);
std::string to_string(const ImgStatement& s);
std::string to_string(const Statement& s);
std::string to_string(const MeasureTerm& t);

ConsStatement canonicalize(const ConsStatement& s);
ImgStatement canonicalize(const ImgStatement& s);
Statement canonicalize(const Statement& s);

/// Structural validity of a single statement; returns a message on failure.
std::optional<std::string> validate(const ConsStatement& s);
std::optional<std::string> validate(const ImgStatement& s);
std::optional<std::string> validate(const Statement& s);

std::vector<Label> labels_of(const ConsStatement& s);
std::vector<Label> labels_of(const ImgStatement& s);
std::vector<Label> labels_of(const Statement& s);

template <typename T>
struct SectionDiff {
  std::set<T> hits;
  std::set<T> misses;
  std::set<T> spurious;
};

struct DocumentDiff {
  SectionDiff<ConsStatement> cons;
  SectionDiff<ImgStatement> img;
};

DocumentDiff statement_set_diff(const CdlDocument& pred, const CdlDocument& gold);

// Small builders used by the template engine and tests.
Label L(std::string_view name);
std::vector<Label> labels(std::string_view run);
Shape make_shape(std::string_view edges);  // "AB,BC,CA"
Segment seg(std::string_view two);
LengthOfLine length(std::string_view two);
MeasureOfAngle angle(std::string_view three);

}  // namespace geocdl::cdl
