#include "geocdl/cdl.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace geocdl::cdl {

// ---------------------------------------------------------------------------
// Labels

Label::Label(std::string n) : name(std::move(n)) {
  if (!is_valid(name)) throw std::invalid_argument("invalid point label '" + name + "'");
}

bool Label::is_valid(std::string_view text) {
  if (text.empty() || text[0] < 'A' || text[0] > 'Z') return false;
  return std::all_of(text.begin() + 1, text.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

namespace {

/// Splits a run like "A1BC" into labels; nullopt if the run is malformed.
std::optional<std::vector<Label>> split_run(std::string_view run) {
  std::vector<Label> out;
  std::size_t i = 0;
  while (i < run.size()) {
    if (run[i] < 'A' || run[i] > 'Z') return std::nullopt;
    std::size_t j = i + 1;
    while (j < run.size() && run[j] >= '0' && run[j] <= '9') ++j;
    out.emplace_back(std::string(run.substr(i, j - i)));
    i = j;
  }
  if (out.empty()) return std::nullopt;
  return out;
}

std::string join_run(const std::vector<Label>& ls) {
  std::string s;
  for (const auto& l : ls) s += l.name;
  return s;
}

template <typename T>
std::vector<T> reversed(std::vector<T> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

template <typename T>
std::vector<T> min_rotation(const std::vector<T>& v) {
  std::vector<T> best = v;
  std::vector<T> cur = v;
  for (std::size_t k = 1; k < v.size(); ++k) {
    std::rotate(cur.begin(), cur.begin() + 1, cur.end());
    if (cur < best) best = cur;
  }
  return best;
}

template <typename T>
bool has_duplicates(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return std::adjacent_find(v.begin(), v.end()) != v.end();
}

}  // namespace

// ---------------------------------------------------------------------------
// Errors

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Syntax: return "SyntaxError";
    case ErrorKind::Arity: return "ArityError";
    case ErrorKind::DanglingLabel: return "DanglingLabel";
    case ErrorKind::InvalidStatement: return "InvalidStatement";
  }
  return "Error";
}

namespace {

std::string format_error(ErrorKind kind, std::size_t line, std::size_t column,
                         const std::string& message, const std::vector<std::string>& expected) {
  std::ostringstream os;
  os << to_string(kind) << " at " << line << ":" << column << ": " << message;
  if (!expected.empty()) {
    os << " (expected ";
    for (std::size_t i = 0; i < expected.size(); ++i) os << (i ? ", " : "") << expected[i];
    os << ")";
  }
  return os.str();
}

}  // namespace

ParseError::ParseError(ErrorKind kind, std::size_t line, std::size_t column, std::string message,
                       std::vector<std::string> expected)
    : std::runtime_error(format_error(kind, line, column, message, expected)),
      kind_(kind),
      line_(line),
      column_(column),
      expected_(std::move(expected)) {}

// ---------------------------------------------------------------------------
// Canonical forms

namespace {

Segment sorted(Segment s) {
  if (s.b < s.a) std::swap(s.a, s.b);
  return s;
}

MeasureTerm canonical_term(MeasureTerm t) {
  if (auto* len = std::get_if<LengthOfLine>(&t)) {
    if (len->b < len->a) std::swap(len->a, len->b);
  } else if (auto* ang = std::get_if<MeasureOfAngle>(&t)) {
    if (ang->c < ang->a) std::swap(ang->a, ang->c);
  }
  return t;
}

}  // namespace

ConsStatement canonicalize(const ConsStatement& s) {
  return std::visit(
      [](auto v) -> ConsStatement {
        using T = decltype(v);
        if constexpr (std::is_same_v<T, Shape>) {
          v.edges = min_rotation(v.edges);
        } else if constexpr (std::is_same_v<T, Collinear>) {
          auto rev = reversed(v.points);
          if (rev < v.points) v.points = std::move(rev);
        } else {
          auto a = min_rotation(v.points);
          auto b = min_rotation(reversed(v.points));
          v.points = std::min(a, b);
        }
        return v;
      },
      s);
}

ImgStatement canonicalize(const ImgStatement& s) {
  return std::visit(
      [](auto v) -> ImgStatement {
        using T = decltype(v);
        if constexpr (std::is_same_v<T, Equal>) {
          v.lhs = canonical_term(v.lhs);
          if (auto* rt = std::get_if<MeasureTerm>(&v.rhs)) {
            MeasureTerm r = canonical_term(*rt);
            if (r < v.lhs) std::swap(r, v.lhs);
            v.rhs = r;
          }
        } else {
          v.first = sorted(v.first);
          v.second = sorted(v.second);
          if (v.second < v.first) std::swap(v.first, v.second);
        }
        return v;
      },
      s);
}

Statement canonicalize(const Statement& s) {
  return std::visit([](const auto& v) -> Statement { return canonicalize(v); }, s);
}

// ---------------------------------------------------------------------------
// Validation

std::optional<std::string> validate(const ConsStatement& s) {
  return std::visit(
      [](const auto& v) -> std::optional<std::string> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Shape>) {
          if (v.edges.empty()) return "Shape needs at least one edge";
          for (const auto& e : v.edges) {
            if (e.points.size() != 2 && e.points.size() != 3)
              return "Shape edge must have 2 (segment) or 3 (arc) labels";
            if (e.points.size() == 2 && e.points[0] == e.points[1])
              return "Shape segment " + join_run(e.points) + " has equal endpoints";
            if (e.points.size() == 3 && (e.points[0] == e.points[1] || e.points[0] == e.points[2]))
              return "Shape arc " + join_run(e.points) + " has its center on the arc";
          }
          for (std::size_t i = 0; i < v.edges.size(); ++i) {
            const auto& next = v.edges[(i + 1) % v.edges.size()];
            if (v.edges[i].end() != next.start()) return "Shape edge cycle is not closed";
          }
        } else if constexpr (std::is_same_v<T, Collinear>) {
          if (v.points.size() < 3) return "Collinear needs at least 3 points";
          if (has_duplicates(v.points)) return "Collinear repeats a point";
        } else {
          if (v.points.empty()) return "Cocircular needs at least one point on the circle";
          if (std::find(v.points.begin(), v.points.end(), v.center) != v.points.end())
            return "Cocircular center lies on its own circle";
          if (has_duplicates(v.points)) return "Cocircular repeats a point";
        }
        return std::nullopt;
      },
      s);
}

namespace {

std::optional<std::string> validate_term(const MeasureTerm& t) {
  if (const auto* len = std::get_if<LengthOfLine>(&t)) {
    if (len->a == len->b) return "LengthOfLine needs two distinct points";
  } else {
    const auto& ang = std::get<MeasureOfAngle>(t);
    if (ang.a == ang.vertex || ang.a == ang.c || ang.vertex == ang.c)
      return "MeasureOfAngle needs three distinct points";
  }
  return std::nullopt;
}

std::optional<std::string> validate_segment(const Segment& s) {
  if (s.a == s.b) return "segment needs two distinct points";
  return std::nullopt;
}

}  // namespace

std::optional<std::string> validate(const ImgStatement& s) {
  return std::visit(
      [](const auto& v) -> std::optional<std::string> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Equal>) {
          if (auto e = validate_term(v.lhs)) return e;
          if (const auto* rt = std::get_if<MeasureTerm>(&v.rhs)) {
            if (auto e = validate_term(*rt)) return e;
            if (rt->index() != v.lhs.index()) return "Equal compares a length with an angle";
            if (canonical_term(*rt) == canonical_term(v.lhs)) return "Equal compares a term with itself";
          } else {
            const auto& q = std::get<Rational>(v.rhs);
            if (std::holds_alternative<LengthOfLine>(v.lhs)) {
              if (q < Rational(0)) return "length literal must be non-negative";
            } else if (q <= Rational(0) || q >= Rational(180)) {
              return "angle literal must lie in (0, 180)";
            }
          }
        } else {
          if (auto e = validate_segment(v.first)) return e;
          if (auto e = validate_segment(v.second)) return e;
          if (sorted(v.first) == sorted(v.second)) return "relation between a line and itself";
        }
        return std::nullopt;
      },
      s);
}

std::optional<std::string> validate(const Statement& s) {
  return std::visit([](const auto& v) { return validate(v); }, s);
}

// ---------------------------------------------------------------------------
// Labels of statements

std::vector<Label> labels_of(const ConsStatement& s) {
  std::vector<Label> out;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Shape>) {
          for (const auto& e : v.edges) out.insert(out.end(), e.points.begin(), e.points.end());
        } else if constexpr (std::is_same_v<T, Collinear>) {
          out = v.points;
        } else {
          out.push_back(v.center);
          out.insert(out.end(), v.points.begin(), v.points.end());
        }
      },
      s);
  return out;
}

namespace {

void term_labels(const MeasureTerm& t, std::vector<Label>& out) {
  if (const auto* len = std::get_if<LengthOfLine>(&t)) {
    out.push_back(len->a);
    out.push_back(len->b);
  } else {
    const auto& a = std::get<MeasureOfAngle>(t);
    out.push_back(a.a);
    out.push_back(a.vertex);
    out.push_back(a.c);
  }
}

}  // namespace

std::vector<Label> labels_of(const ImgStatement& s) {
  std::vector<Label> out;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Equal>) {
          term_labels(v.lhs, out);
          if (const auto* rt = std::get_if<MeasureTerm>(&v.rhs)) term_labels(*rt, out);
        } else {
          out = {v.first.a, v.first.b, v.second.a, v.second.b};
        }
      },
      s);
  return out;
}

std::vector<Label> labels_of(const Statement& s) {
  return std::visit([](const auto& v) { return labels_of(v); }, s);
}

// ---------------------------------------------------------------------------
// Document

bool CdlDocument::insert(const ConsStatement& s) { return cons_.insert(canonicalize(s)).second; }
bool CdlDocument::insert(const ImgStatement& s) { return img_.insert(canonicalize(s)).second; }
bool CdlDocument::insert(const Statement& s) {
  return std::visit([this](const auto& v) { return insert(v); }, s);
}
bool CdlDocument::erase(const ConsStatement& s) { return cons_.erase(canonicalize(s)) > 0; }
bool CdlDocument::erase(const ImgStatement& s) { return img_.erase(canonicalize(s)) > 0; }
bool CdlDocument::erase(const Statement& s) {
  return std::visit([this](const auto& v) { return erase(v); }, s);
}

bool CdlDocument::contains(const Statement& s) const {
  const Statement c = canonicalize(s);
  if (const auto* cs = std::get_if<ConsStatement>(&c)) return cons_.count(*cs) > 0;
  return img_.count(std::get<ImgStatement>(c)) > 0;
}

std::vector<Statement> CdlDocument::statements() const {
  std::vector<Statement> out;
  out.reserve(size());
  for (const auto& s : cons_) out.emplace_back(s);
  for (const auto& s : img_) out.emplace_back(s);
  return out;
}

std::set<Label> CdlDocument::cons_labels() const {
  std::set<Label> out;
  for (const auto& s : cons_)
    for (auto& l : labels_of(s)) out.insert(std::move(l));
  return out;
}

std::set<Label> CdlDocument::labels() const {
  std::set<Label> out = cons_labels();
  for (const auto& s : img_)
    for (auto& l : labels_of(s)) out.insert(std::move(l));
  return out;
}

std::set<Label> CdlDocument::dangling_labels() const {
  const auto known = cons_labels();
  std::set<Label> out;
  for (const auto& s : img_)
    for (auto& l : labels_of(s))
      if (!known.count(l)) out.insert(std::move(l));
  return out;
}

// ---------------------------------------------------------------------------
// Printing

std::string to_string(const MeasureTerm& t) {
  if (const auto* len = std::get_if<LengthOfLine>(&t))
    return "LengthOfLine(" + len->a.name + len->b.name + ")";
  const auto& a = std::get<MeasureOfAngle>(t);
  return "MeasureOfAngle(" + a.a.name + a.vertex.name + a.c.name + ")";
}

std::string to_string(const ConsStatement& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Shape>) {
          std::string out = "Shape(";
          for (std::size_t i = 0; i < v.edges.size(); ++i) {
            if (i) out += ",";
            out += join_run(v.edges[i].points);
          }
          return out + ")";
        } else if constexpr (std::is_same_v<T, Collinear>) {
          return "Collinear(" + join_run(v.points) + ")";
        } else {
          return "Cocircular(" + v.center.name + "," + join_run(v.points) + ")";
        }
      },
      s);
}

std::string to_string(const ImgStatement& s) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Equal>) {
          std::string rhs = std::holds_alternative<Rational>(v.rhs)
                                ? std::get<Rational>(v.rhs).to_string()
                                : to_string(std::get<MeasureTerm>(v.rhs));
          return "Equal(" + to_string(v.lhs) + "," + rhs + ")";
        } else {
          const char* name =
              std::is_same_v<T, ParallelBetweenLine> ? "ParallelBetweenLine" : "PerpendicularBetweenLine";
          return std::string(name) + "(" + v.first.a.name + v.first.b.name + "," + v.second.a.name +
                 v.second.b.name + ")";
        }
      },
      s);
}

std::string to_string(const Statement& s) {
  return std::visit([](const auto& v) { return to_string(v); }, s);
}

std::string print(const CdlDocument& doc) {
  std::string out;
  for (const auto& s : doc.cons()) out += to_string(s) + "\n";
  for (const auto& s : doc.img()) out += to_string(s) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Lexing and call parsing

namespace {

struct Cursor {
  std::string_view text;
  std::size_t pos = 0;
  std::size_t line = 1;
  std::size_t column = 1;

  bool done() const { return pos >= text.size(); }
  char peek() const { return done() ? '\0' : text[pos]; }
  void advance() {
    if (text[pos] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
    ++pos;
  }
  // Horizontal whitespace only; newlines separate statements.
  void skip_blanks() {
    while (!done() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) advance();
  }
  [[noreturn]] void fail(std::string message, std::vector<std::string> expected = {}) const {
    throw ParseError(ErrorKind::Syntax, line, column, std::move(message), std::move(expected));
  }
};

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

std::string describe(const Cursor& c) {
  if (c.done()) return "end of input";
  if (c.peek() == '\n') return "end of line";
  return std::string("'") + c.peek() + "'";
}

CallArg parse_arg(Cursor& c);

Call parse_call_after_name(Cursor& c, std::string name, std::size_t line, std::size_t column) {
  Call call{std::move(name), {}, line, column};
  c.skip_blanks();
  if (c.peek() != '(') c.fail("unexpected " + describe(c) + " after '" + call.name + "'", {"'('"});
  c.advance();
  c.skip_blanks();
  if (c.peek() == ')') c.fail("empty argument list", {"label run", "number", "term"});
  while (true) {
    call.args.push_back(parse_arg(c));
    c.skip_blanks();
    if (c.peek() == ',') {
      c.advance();
      c.skip_blanks();
      continue;
    }
    if (c.peek() == ')') {
      c.advance();
      break;
    }
    c.fail("unexpected " + describe(c) + " in argument list", {"','", "')'"});
  }
  return call;
}

CallArg parse_arg(Cursor& c) {
  CallArg arg;
  arg.line = c.line;
  arg.column = c.column;
  const char ch = c.peek();
  if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '-') {
    const std::size_t start = c.pos;
    while (!c.done() && (std::isdigit(static_cast<unsigned char>(c.peek())) || c.peek() == '.' ||
                         c.peek() == '/' || c.peek() == '-'))
      c.advance();
    arg.text = std::string(c.text.substr(start, c.pos - start));
    auto q = Rational::parse(arg.text);
    if (!q) throw ParseError(ErrorKind::Syntax, arg.line, arg.column, "malformed number '" + arg.text + "'",
                             {"integer", "decimal", "fraction"});
    arg.kind = CallArg::Kind::Number;
    arg.number = *q;
    return arg;
  }
  if (!std::isalpha(static_cast<unsigned char>(ch)))
    c.fail("unexpected " + describe(c), {"label run", "number", "term"});
  const std::size_t start = c.pos;
  while (!c.done() && is_word_char(c.peek())) c.advance();
  arg.text = std::string(c.text.substr(start, c.pos - start));
  const bool has_lower = std::any_of(arg.text.begin(), arg.text.end(),
                                     [](char x) { return std::islower(static_cast<unsigned char>(x)); });
  if (has_lower) {
    arg.kind = CallArg::Kind::Call;
    arg.call = parse_call_after_name(c, arg.text, arg.line, arg.column);
    return arg;
  }
  auto run = split_run(arg.text);
  if (!run)
    throw ParseError(ErrorKind::Syntax, arg.line, arg.column, "malformed label run '" + arg.text + "'",
                     {"labels like A, B1"});
  arg.kind = CallArg::Kind::Labels;
  arg.labels = std::move(*run);
  return arg;
}

[[noreturn]] void arity(const Call& call, const std::string& message) {
  throw ParseError(ErrorKind::Arity, call.line, call.column, call.name + ": " + message);
}

[[noreturn]] void wrong_kind(const CallArg& arg, const std::string& expected) {
  throw ParseError(ErrorKind::Syntax, arg.line, arg.column, "unexpected argument '" + arg.text + "'",
                   {expected});
}

void expect_args(const Call& call, std::size_t n) {
  if (call.args.size() != n)
    arity(call, "expected " + std::to_string(n) + " argument(s), got " + std::to_string(call.args.size()));
}

const std::vector<Label>& run_arg(const CallArg& arg) {
  if (arg.kind != CallArg::Kind::Labels) wrong_kind(arg, "label run");
  return arg.labels;
}

const std::vector<Label>& run_of(const Call& call, const CallArg& arg, std::size_t n, const char* what) {
  const auto& run = run_arg(arg);
  if (run.size() != n)
    arity(call, std::string(what) + " needs " + std::to_string(n) + " points, got " + std::to_string(run.size()));
  return run;
}

MeasureTerm build_term(const CallArg& arg) {
  if (arg.kind != CallArg::Kind::Call) wrong_kind(arg, "LengthOfLine(..) or MeasureOfAngle(..)");
  const Call& call = arg.call;
  if (call.name == "LengthOfLine") {
    expect_args(call, 1);
    const auto& r = run_of(call, call.args[0], 2, "LengthOfLine");
    return LengthOfLine{r[0], r[1]};
  }
  if (call.name == "MeasureOfAngle") {
    expect_args(call, 1);
    const auto& r = run_of(call, call.args[0], 3, "MeasureOfAngle");
    return MeasureOfAngle{r[0], r[1], r[2]};
  }
  throw ParseError(ErrorKind::Syntax, call.line, call.column, "unknown term '" + call.name + "'",
                   {"LengthOfLine", "MeasureOfAngle"});
}

Segment build_segment(const Call& call, const CallArg& arg) {
  const auto& r = run_of(call, arg, 2, "line");
  return Segment{r[0], r[1]};
}

std::vector<StatementKind> make_registry() {
  std::vector<StatementKind> kinds;
  kinds.push_back({"Shape", Section::Cons, "Shape(edge, ...)", [](const Call& call) -> Statement {
                     Shape s;
                     for (const auto& a : call.args) {
                       const auto& r = run_arg(a);
                       if (r.size() != 2 && r.size() != 3)
                         arity(call, "edge '" + a.text + "' must have 2 or 3 points");
                       s.edges.push_back(Edge{r});
                     }
                     return ConsStatement{s};
                   }});
  kinds.push_back({"Collinear", Section::Cons, "Collinear(points)", [](const Call& call) -> Statement {
                     expect_args(call, 1);
                     const auto& r = run_arg(call.args[0]);
                     if (r.size() < 3) arity(call, "needs at least 3 points");
                     return ConsStatement{Collinear{r}};
                   }});
  kinds.push_back({"Cocircular", Section::Cons, "Cocircular(center,points)", [](const Call& call) -> Statement {
                     expect_args(call, 2);
                     const auto& c = run_of(call, call.args[0], 1, "center");
                     const auto& r = run_arg(call.args[1]);
                     return ConsStatement{Cocircular{c[0], r}};
                   }});
  kinds.push_back({"Equal", Section::Img, "Equal(term,term|number)", [](const Call& call) -> Statement {
                     expect_args(call, 2);
                     const auto& a = call.args[0];
                     const auto& b = call.args[1];
                     if (a.kind == CallArg::Kind::Number && b.kind == CallArg::Kind::Number)
                       throw ParseError(ErrorKind::InvalidStatement, call.line, call.column,
                                        "Equal compares two literals");
                     if (a.kind == CallArg::Kind::Number) return ImgStatement{Equal{build_term(b), a.number}};
                     if (b.kind == CallArg::Kind::Number) return ImgStatement{Equal{build_term(a), b.number}};
                     return ImgStatement{Equal{build_term(a), build_term(b)}};
                   }});
  kinds.push_back({"ParallelBetweenLine", Section::Img, "ParallelBetweenLine(line,line)",
                   [](const Call& call) -> Statement {
                     expect_args(call, 2);
                     return ImgStatement{ParallelBetweenLine{build_segment(call, call.args[0]),
                                                             build_segment(call, call.args[1])}};
                   }});
  kinds.push_back({"PerpendicularBetweenLine", Section::Img, "PerpendicularBetweenLine(line,line)",
                   [](const Call& call) -> Statement {
                     expect_args(call, 2);
                     return ImgStatement{PerpendicularBetweenLine{build_segment(call, call.args[0]),
                                                                  build_segment(call, call.args[1])}};
                   }});
  return kinds;
}

std::vector<std::string> kind_names() {
  std::vector<std::string> out;
  for (const auto& k : statement_kinds()) out.push_back(k.name);
  return out;
}

Statement parse_one(Cursor& c) {
  const std::size_t line = c.line;
  const std::size_t column = c.column;
  if (!std::isalpha(static_cast<unsigned char>(c.peek())))
    c.fail("unexpected " + describe(c) + " at start of statement", kind_names());
  const std::size_t start = c.pos;
  while (!c.done() && is_word_char(c.peek())) c.advance();
  std::string name(c.text.substr(start, c.pos - start));
  const StatementKind* kind = find_statement_kind(name);
  if (!kind) throw ParseError(ErrorKind::Syntax, line, column, "unknown statement kind '" + name + "'", kind_names());
  Call call = parse_call_after_name(c, name, line, column);
  Statement s = kind->build(call);
  if (auto problem = validate(s)) throw ParseError(ErrorKind::InvalidStatement, line, column, *problem);
  return canonicalize(s);
}

}  // namespace

const std::vector<StatementKind>& statement_kinds() {
  static const std::vector<StatementKind> kinds = make_registry();
  return kinds;
}

const StatementKind* find_statement_kind(std::string_view name) {
  for (const auto& k : statement_kinds())
    if (k.name == name) return &k;
  return nullptr;
}

CdlDocument parse(std::string_view text, const ParseOptions& options) {
  CdlDocument doc;
  Cursor c{text};
  struct Pending {
    ImgStatement stmt;
    std::size_t line, column;
  };
  std::vector<Pending> img;
  while (true) {
    c.skip_blanks();
    if (c.done()) break;
    const char ch = c.peek();
    if (ch == '\n' || ch == ';') {
      c.advance();
      continue;
    }
    if (ch == '#') {
      while (!c.done() && c.peek() != '\n') c.advance();
      continue;
    }
    const std::size_t line = c.line;
    const std::size_t column = c.column;
    Statement s = parse_one(c);
    c.skip_blanks();
    if (!c.done() && c.peek() != '\n' && c.peek() != ';' && c.peek() != '#')
      c.fail("unexpected " + describe(c) + " after statement", {"newline", "';'"});
    if (auto* cs = std::get_if<ConsStatement>(&s)) {
      doc.insert(*cs);
    } else {
      img.push_back({std::get<ImgStatement>(s), line, column});
      doc.insert(std::get<ImgStatement>(s));
    }
  }
  if (options.require_label_closure) {
    const auto known = doc.cons_labels();
    for (const auto& p : img)
      for (const auto& l : labels_of(p.stmt))
        if (!known.count(l))
          throw ParseError(ErrorKind::DanglingLabel, p.line, p.column,
                           "point " + l.name + " is not introduced by any construction statement");
  }
  return doc;
}

Statement parse_statement(std::string_view text) {
  Cursor c{text};
  c.skip_blanks();
  Statement s = parse_one(c);
  c.skip_blanks();
  if (!c.done()) c.fail("trailing input after statement");
  return s;
}

// ---------------------------------------------------------------------------
// Diff

DocumentDiff statement_set_diff(const CdlDocument& pred, const CdlDocument& gold) {
  DocumentDiff d;
  auto fill = [](const auto& p, const auto& g, auto& out) {
    std::set_intersection(p.begin(), p.end(), g.begin(), g.end(), std::inserter(out.hits, out.hits.end()));
    std::set_difference(g.begin(), g.end(), p.begin(), p.end(), std::inserter(out.misses, out.misses.end()));
    std::set_difference(p.begin(), p.end(), g.begin(), g.end(), std::inserter(out.spurious, out.spurious.end()));
  };
  fill(pred.cons(), gold.cons(), d.cons);
  fill(pred.img(), gold.img(), d.img);
  return d;
}

// ---------------------------------------------------------------------------
// Builders

Label L(std::string_view name) { return Label(std::string(name)); }

std::vector<Label> labels(std::string_view run) {
  auto r = split_run(run);
  if (!r) throw std::invalid_argument("malformed label run '" + std::string(run) + "'");
  return *r;
}

Shape make_shape(std::string_view edges) {
  Shape s;
  std::size_t start = 0;
  while (start <= edges.size()) {
    const std::size_t comma = edges.find(',', start);
    const auto piece = edges.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    s.edges.push_back(Edge{labels(piece)});
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return s;
}

Segment seg(std::string_view two) {
  auto r = labels(two);
  if (r.size() != 2) throw std::invalid_argument("segment needs two labels");
  return Segment{r[0], r[1]};
}

LengthOfLine length(std::string_view two) {
  auto s = seg(two);
  return LengthOfLine{s.a, s.b};
}

MeasureOfAngle angle(std::string_view three) {
  auto r = labels(three);
  if (r.size() != 3) throw std::invalid_argument("angle needs three labels");
  return MeasureOfAngle{r[0], r[1], r[2]};
}

}  // namespace geocdl::cdl
