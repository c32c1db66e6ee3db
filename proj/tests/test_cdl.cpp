#include <doctest.h>

#include <algorithm>

#include "geocdl/cdl.hpp"
#include "geocdl/util.hpp"

using namespace geocdl;
using namespace geocdl::cdl;

namespace {

ErrorKind error_kind_of(std::string_view text, const ParseOptions& opt = {}) {
  try {
    parse(text, opt);
  } catch (const ParseError& e) {
    return e.kind();
  }
  FAIL("expected a parse error for: " << text);
  return ErrorKind::Syntax;
}

}  // namespace

TEST_CASE("rational literals are exact and print canonically") {
  CHECK(Rational::parse("90")->to_string() == "90");
  CHECK(Rational::parse("2.5")->to_string() == "5/2");
  CHECK(Rational::parse("6/4")->to_string() == "3/2");
  CHECK(Rational::parse("0.125") == Rational(1, 8));
  CHECK(Rational::parse("-3/9") == Rational(-1, 3));
  CHECK_FALSE(Rational::parse("1/0"));
  CHECK_FALSE(Rational::parse("1."));
  CHECK_FALSE(Rational::parse("abc"));
  CHECK(Rational(1, 3) < Rational(1, 2));
}

TEST_CASE("labels") {
  CHECK(Label::is_valid("A"));
  CHECK(Label::is_valid("B12"));
  CHECK_FALSE(Label::is_valid("a"));
  CHECK_FALSE(Label::is_valid("1A"));
  CHECK_FALSE(Label::is_valid(""));
  CHECK(labels("A1BC2").size() == 3);
  CHECK(L("A") != L("a" == std::string("a") ? "B" : "A"));
}

TEST_CASE("parse recognizes construction statements") {
  const auto doc = parse("Shape(AB,BC,CA)\nCollinear(ADC)");
  CHECK(doc.cons().size() == 2);
  CHECK(doc.img().empty());
  int shapes = 0, lines = 0;
  for (const auto& s : doc.cons()) {
    shapes += std::holds_alternative<Shape>(s);
    lines += std::holds_alternative<Collinear>(s);
  }
  CHECK(shapes == 1);
  CHECK(lines == 1);
}

TEST_CASE("semicolons, comments and blank lines separate statements") {
  const auto doc = parse("  Shape(AB,BC,CA) ; Collinear(ADC)\n\n# note\nEqual(LengthOfLine(AB),3)\n");
  CHECK(doc.size() == 3);
}

TEST_CASE("img statement without construction section is a dangling label") {
  CHECK(error_kind_of("Equal(MeasureOfAngle(ABC),90)") == ErrorKind::DanglingLabel);
  ParseOptions lenient;
  lenient.require_label_closure = false;
  CHECK(parse("Equal(MeasureOfAngle(ABC),90)", lenient).img().size() == 1);
}

TEST_CASE("syntax errors carry position and expected tokens") {
  try {
    parse("Shape(AB,BC,CA)\nCollinear ADC)");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.kind() == ErrorKind::Syntax);
    CHECK(e.line() == 2);
    CHECK(e.column() == 11);
    CHECK_FALSE(e.expected().empty());
  }
  CHECK(error_kind_of("Triangle(ABC)") == ErrorKind::Syntax);
  CHECK(error_kind_of("Shape(AB,BC,CA") == ErrorKind::Syntax);
  CHECK(error_kind_of("Shape(ab)") == ErrorKind::Syntax);
  CHECK(error_kind_of("Shape(AB,BC,CA) Collinear(ABC)") == ErrorKind::Syntax);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(Foo(AB),1)") == ErrorKind::Syntax);
}

TEST_CASE("arity errors") {
  CHECK(error_kind_of("Collinear(AB)") == ErrorKind::Arity);
  CHECK(error_kind_of("Collinear(ABC,D)") == ErrorKind::Arity);
  CHECK(error_kind_of("Shape(ABCD)") == ErrorKind::Arity);
  CHECK(error_kind_of("Cocircular(OP,ABC)") == ErrorKind::Arity);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(LengthOfLine(ABC),1)") == ErrorKind::Arity);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(MeasureOfAngle(AB),1)") == ErrorKind::Arity);
}

TEST_CASE("structural invariants are enforced") {
  CHECK(error_kind_of("Shape(AB,BC)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Collinear(ABA)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Cocircular(O,AOB)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(MeasureOfAngle(ABC),180)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(MeasureOfAngle(ABC),0)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),-1)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),MeasureOfAngle(ABC))") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),LengthOfLine(BA))") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nParallelBetweenLine(AB,BA)") == ErrorKind::InvalidStatement);
  CHECK(error_kind_of("Shape(AB,BC,CA)\nEqual(3,4)") == ErrorKind::InvalidStatement);
  CHECK_NOTHROW(parse("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),0)"));
}

TEST_CASE("arcs close shape cycles") {
  const auto doc = parse("Shape(OAB,BA)\nCocircular(O,AB)");
  CHECK(doc.cons().size() == 2);
  CHECK(print(doc) == "Shape(BA,OAB)\nCocircular(O,AB)\n");
}

TEST_CASE("canonicalize: documented rules") {
  auto canon = [](std::string_view s) { return to_string(canonicalize(parse_statement(s))); };
  CHECK(canon("Shape(BC,CA,AB)") == "Shape(AB,BC,CA)");
  CHECK(canon("Shape(CB,BA,AC)") == "Shape(AC,CB,BA)");  // orientation kept
  CHECK(canon("Collinear(CDA)") == "Collinear(ADC)");
  CHECK(canon("Collinear(ADC)") == "Collinear(ADC)");
  CHECK(canon("Cocircular(O,CBAD)") == "Cocircular(O,ABCD)");
  CHECK(canon("Cocircular(O,BDAC)") == "Cocircular(O,ACBD)");
  CHECK(canon("Equal(5,LengthOfLine(AB))") == "Equal(LengthOfLine(AB),5)");
  CHECK(canon("Equal(LengthOfLine(DC),LengthOfLine(BA))") == "Equal(LengthOfLine(AB),LengthOfLine(CD))");
  CHECK(canon("Equal(MeasureOfAngle(CBA),2.5)") == "Equal(MeasureOfAngle(ABC),5/2)");
  CHECK(canon("ParallelBetweenLine(DC,BA)") == "ParallelBetweenLine(AB,CD)");
  CHECK(canon("PerpendicularBetweenLine(ZY,BA)") == "PerpendicularBetweenLine(AB,YZ)");
}

TEST_CASE("rotation closure and idempotence") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + rng.index(5);
    std::vector<Label> pts;
    for (std::size_t i = 0; i < n; ++i) pts.emplace_back(std::string(1, static_cast<char>('A' + i)));
    rng.shuffle(pts);
    Shape s;
    for (std::size_t i = 0; i < n; ++i) s.edges.push_back(Edge{{pts[i], pts[(i + 1) % n]}});
    const auto canon = canonicalize(ConsStatement{s});
    CHECK(canonicalize(canon) == canon);
    Shape rotated = s;
    for (std::size_t k = 0; k < n; ++k) {
      std::rotate(rotated.edges.begin(), rotated.edges.begin() + 1, rotated.edges.end());
      CHECK(canonicalize(ConsStatement{rotated}) == canon);
    }
    Cocircular cc{L("Z"), pts};
    const auto cc_canon = canonicalize(ConsStatement{cc});
    std::reverse(cc.points.begin(), cc.points.end());
    std::rotate(cc.points.begin(), cc.points.begin() + 1, cc.points.end());
    CHECK(canonicalize(ConsStatement{cc}) == cc_canon);
  }
}

TEST_CASE("print: empty document, ordering, round trip") {
  CHECK(print(CdlDocument{}).empty());
  const std::string text =
      "Equal(LengthOfLine(BA),LengthOfLine(CB))\nCollinear(CDA)\nShape(BC,CA,AB)\nEqual(5,LengthOfLine(CA))";
  const auto doc = parse(text);
  const std::string canonical = print(doc);
  CHECK(canonical ==
        "Shape(AB,BC,CA)\nCollinear(ADC)\n"
        "Equal(LengthOfLine(AB),LengthOfLine(BC))\nEqual(LengthOfLine(AC),5)\n");
  CHECK(parse(canonical) == doc);
  CHECK(print(parse(canonical)) == canonical);
}

TEST_CASE("duplicates collapse after canonicalization") {
  const auto doc = parse("Shape(AB,BC,CA)\nShape(BC,CA,AB)\nCollinear(ABC)\nCollinear(CBA)");
  CHECK(doc.size() == 2);
}

TEST_CASE("statement kind registry") {
  CHECK(statement_kinds().size() == 6);
  REQUIRE(find_statement_kind("Cocircular"));
  CHECK(find_statement_kind("Cocircular")->section == Section::Cons);
  CHECK(find_statement_kind("PerpendicularBetweenLine")->section == Section::Img);
  CHECK_FALSE(find_statement_kind("Goal"));
}

namespace {

// Quadratic-scan reference for set diffs: compares printed statements.
struct NaiveDiff {
  std::vector<std::string> hits, misses, spurious;
};

NaiveDiff naive_diff(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  NaiveDiff d;
  for (const auto& p : pred) {
    bool found = false;
    for (const auto& g : gold) found = found || p == g;
    (found ? d.hits : d.spurious).push_back(p);
  }
  for (const auto& g : gold) {
    bool found = false;
    for (const auto& p : pred) found = found || p == g;
    if (!found) d.misses.push_back(g);
  }
  std::sort(d.hits.begin(), d.hits.end());
  std::sort(d.misses.begin(), d.misses.end());
  std::sort(d.spurious.begin(), d.spurious.end());
  return d;
}

template <typename Set>
std::vector<std::string> printed(const Set& s) {
  std::vector<std::string> out;
  for (const auto& x : s) out.push_back(to_string(x));
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("statement_set_diff: set arithmetic") {
  const auto gold = parse("Shape(AB,BC,CA)\nCollinear(ADC)\nEqual(LengthOfLine(AB),3)");
  CHECK(statement_set_diff(gold, gold).cons.misses.empty());
  CHECK(statement_set_diff(gold, gold).img.spurious.empty());

  const auto pred = parse("Shape(AB,BC,CA)\nCollinear(ADC)\nCollinear(BDE)");
  const auto g2 = parse("Shape(AB,BC,CA)\nCollinear(ADC)\nCocircular(O,ABC)");
  const auto d = statement_set_diff(pred, g2);
  CHECK(printed(d.cons.hits) == std::vector<std::string>{"Collinear(ADC)", "Shape(AB,BC,CA)"});
  CHECK(printed(d.cons.misses) == std::vector<std::string>{"Cocircular(O,ABC)"});
  CHECK(printed(d.cons.spurious) == std::vector<std::string>{"Collinear(BDE)"});
}

TEST_CASE("statement_set_diff agrees with a quadratic scan and partitions both sides") {
  Rng rng(5);
  const std::vector<std::string> pool = {
      "Shape(AB,BC,CA)",          "Shape(AB,BD,DA)",          "Collinear(ADC)",
      "Collinear(BDE)",           "Cocircular(O,ABC)",        "Cocircular(O,AB)",
      "Equal(LengthOfLine(AB),LengthOfLine(AC))", "Equal(MeasureOfAngle(ABC),90)",
      "Equal(LengthOfLine(AB),3)", "ParallelBetweenLine(AB,CD)", "PerpendicularBetweenLine(AB,BC)",
      "Equal(MeasureOfAngle(BAC),MeasureOfAngle(ABC))"};
  ParseOptions lenient;
  lenient.require_label_closure = false;
  for (int trial = 0; trial < 1000; ++trial) {
    std::string pt, gt;
    for (const auto& s : pool) {
      if (rng.bernoulli(0.5)) pt += s + "\n";
      if (rng.bernoulli(0.5)) gt += s + "\n";
    }
    const auto pred = parse(pt, lenient);
    const auto gold = parse(gt, lenient);
    const auto d = statement_set_diff(pred, gold);
    const auto nc = naive_diff(printed(pred.cons()), printed(gold.cons()));
    const auto ni = naive_diff(printed(pred.img()), printed(gold.img()));
    CHECK(printed(d.cons.hits) == nc.hits);
    CHECK(printed(d.cons.misses) == nc.misses);
    CHECK(printed(d.cons.spurious) == nc.spurious);
    CHECK(printed(d.img.hits) == ni.hits);
    CHECK(printed(d.img.misses) == ni.misses);
    CHECK(printed(d.img.spurious) == ni.spurious);
    CHECK(d.cons.hits.size() + d.cons.spurious.size() == pred.cons().size());
    CHECK(d.cons.hits.size() + d.cons.misses.size() == gold.cons().size());
  }
}
