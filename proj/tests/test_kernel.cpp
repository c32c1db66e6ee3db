#include <doctest.h>

#include <cmath>

#include "geocdl/cdl.hpp"
#include "geocdl/kernel.hpp"
#include "geocdl/util.hpp"
#include "kernel_fixtures.hpp"

using namespace geocdl;
using namespace geocdl::kernel;
using cdl::L;

namespace {

Figure figure_of(std::initializer_list<std::pair<const char*, Vec2>> pts) {
  Figure f;
  for (const auto& [n, p] : pts) f.points[L(n)] = p;
  return f;
}

double dist(const Figure& f, const char* a, const char* b) { return (f.at(L(a)) - f.at(L(b))).norm(); }

Figure solved(std::string_view text, std::uint64_t seed = 1) {
  const auto sys = compile(cdl::parse(text));
  auto out = solve(sys, seed);
  REQUIRE(std::holds_alternative<Figure>(out));
  return std::get<Figure>(out);
}

std::size_t count_kind(const ConstraintSystem& s, ConstraintKind k) {
  return static_cast<std::size_t>(
      std::count_if(s.constraints.begin(), s.constraints.end(), [&](const Constraint& c) { return c.kind == k; }));
}

}  // namespace

TEST_CASE("compile: collinear and cocircular expansion") {
  const auto s1 = compile(cdl::parse("Collinear(ADC)"));
  CHECK(count_kind(s1, ConstraintKind::Collinear3) == 1);
  CHECK(count_kind(s1, ConstraintKind::BetweenOrder) == 1);
  const auto& between = *std::find_if(s1.constraints.begin(), s1.constraints.end(),
                                      [](const Constraint& c) { return c.kind == ConstraintKind::BetweenOrder; });
  CHECK(between.points[1] == L("D"));

  const auto s2 = compile(cdl::parse("Cocircular(O,ABC)"));
  CHECK(count_kind(s2, ConstraintKind::OnCircle) == 3);
  CHECK(s2.circle_centers == std::vector<cdl::Label>{L("O")});

  const auto s3 = compile(cdl::parse("Collinear(ABCDE)"));
  CHECK(count_kind(s3, ConstraintKind::Collinear3) == 3);
  CHECK(count_kind(s3, ConstraintKind::MinSeparation) == 10);
}

TEST_CASE("compile: gauge pins the first two labels") {
  const auto s = compile(cdl::parse("Shape(AB,BC,CA)"));
  REQUIRE(s.fixed.size() == 2);
  CHECK(s.fixed.at(L("A")) == Vec2(0, 0));
  CHECK(s.fixed.at(L("B")) == Vec2(1, 0));
  CHECK(s.free_labels() == std::vector<cdl::Label>{L("C")});
}

TEST_CASE("compile: unbound labels and over-constraint warning") {
  cdl::ParseOptions lenient;
  lenient.require_label_closure = false;
  CHECK_THROWS_AS(compile(cdl::parse("Shape(AB,BC,CA)\nEqual(LengthOfLine(AD),1)", lenient)), UnboundLabel);

  std::string text = "Shape(AB,BC,CA)\n";
  for (int v = 1; v <= 8; ++v) text += "Equal(LengthOfLine(AC)," + std::to_string(v) + ")\n";
  CHECK_FALSE(compile(cdl::parse(text)).warnings.empty());
  CHECK(compile(cdl::parse("Shape(AB,BC,CA)")).warnings.empty());
}

TEST_CASE("residual: documented zero cases") {
  const auto f = figure_of({{"A", {0, 0}}, {"B", {1, 1}}, {"C", {2, 2}}});
  CHECK(residual(f, Constraint{ConstraintKind::Collinear3, {L("A"), L("B"), L("C")}}) == doctest::Approx(0.0));

  const auto g = figure_of({{"A", {0, 0}}, {"B", {1, 0}}, {"C", {0, 1}}});
  CHECK(residual(g, Constraint{ConstraintKind::AngleEq, {L("B"), L("A"), L("C")}, 90.0}) ==
        doctest::Approx(0.0).epsilon(1e-12));
  CHECK(residual(g, Constraint{ConstraintKind::Perpendicular, {L("A"), L("B"), L("A"), L("C")}}) ==
        doctest::Approx(0.0));
  CHECK(residual(g, Constraint{ConstraintKind::LengthEq, {L("A"), L("B"), L("A"), L("C")}}) ==
        doctest::Approx(0.0));
  CHECK(residual(g, Constraint{ConstraintKind::MinSeparation, {L("A"), L("B")}, 0.05}) == 0.0);
  CHECK(residual(g, Constraint{ConstraintKind::MinSeparation, {L("A"), L("A")}, 0.05}) == 0.05);
}

TEST_CASE("residual: zero-length directions return the penalty flagged") {
  const auto f = figure_of({{"A", {0, 0}}, {"B", {0, 0}}, {"C", {1, 0}}});
  const auto r = evaluate(f, Constraint{ConstraintKind::Collinear3, {L("A"), L("B"), L("C")}}, 7.0);
  CHECK(r.degenerate);
  CHECK(r.value == 7.0);
}

TEST_CASE("residual gradients match central finite differences") {
  Rng rng(2024);
  const double h = 1e-6;
  for (const auto kind : fixtures::all_kinds()) {
    int checked = 0;
    int active_hinges = 0;
    while (checked < 100) {
      auto sample = fixtures::random_configuration(kind, rng);
      if (!sample) continue;
      auto& [fig, c] = *sample;
      const Eigen::VectorXd g = residual_gradient(fig, c);
      const Eigen::VectorXd fd = fixtures::central_difference(fig, c, h);
      REQUIRE(g.size() == fd.size());
      const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
      CHECK_MESSAGE((g - fd).lpNorm<Eigen::Infinity>() <= 1e-5 * scale, to_string(kind));
      if (residual(fig, c) > 0.0) ++active_hinges;
      ++checked;
    }
    if (kind == ConstraintKind::MinSeparation || kind == ConstraintKind::BetweenOrder ||
        kind == ConstraintKind::ConvexTurn)
      CHECK_MESSAGE(active_hinges >= 20, to_string(kind));
  }
}

TEST_CASE("solve: equilateral triangle") {
  const auto f = solved(
      "Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),1)\nEqual(LengthOfLine(BC),1)\nEqual(LengthOfLine(AC),1)");
  CHECK(std::abs(dist(f, "A", "B") - 1.0) < 1e-8);
  CHECK(std::abs(dist(f, "B", "C") - 1.0) < 1e-8);
  CHECK(std::abs(dist(f, "C", "A") - 1.0) < 1e-8);
}

TEST_CASE("solve: square") {
  const auto f = solved(
      "Shape(AB,BC,CD,DA)\n"
      "Equal(LengthOfLine(AB),LengthOfLine(BC))\nEqual(LengthOfLine(BC),LengthOfLine(CD))\n"
      "Equal(LengthOfLine(CD),LengthOfLine(AD))\nEqual(LengthOfLine(AD),LengthOfLine(AB))\n"
      "Equal(MeasureOfAngle(ABC),90)\nEqual(MeasureOfAngle(BCD),90)\n"
      "Equal(MeasureOfAngle(CDA),90)\nEqual(MeasureOfAngle(DAB),90)");
  const double side = dist(f, "A", "B");
  CHECK(std::abs(dist(f, "B", "C") - side) < 1e-8);
  CHECK(std::abs(dist(f, "C", "D") - side) < 1e-8);
  CHECK(std::abs(dist(f, "D", "A") - side) < 1e-8);
  CHECK(std::abs(dist(f, "A", "C") - dist(f, "B", "D")) < 1e-8);
}

TEST_CASE("solve: right triangle third side follows Pythagoras") {
  const auto f = solved(
      "Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),2)\nEqual(LengthOfLine(BC),3)\nEqual(MeasureOfAngle(ABC),90)", 3);
  CHECK(dist(f, "A", "B") == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(dist(f, "B", "C") == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(dist(f, "A", "C") == doctest::Approx(std::sqrt(13.0)).epsilon(1e-8));
}

TEST_CASE("solve: contradictory angles do not converge") {
  const auto sys = compile(cdl::parse(
      "Shape(AB,BC,CA)\nEqual(MeasureOfAngle(ABC),90)\nEqual(MeasureOfAngle(ABC),60)"));
  SolveOptions opt;
  opt.restarts = 3;
  const auto out = solve(sys, 1, opt);
  REQUIRE(std::holds_alternative<NonConvergence>(out));
  CHECK(std::get<NonConvergence>(out).best_residual > 1e-8);
  CHECK(std::get<NonConvergence>(out).restarts == 3);
}

TEST_CASE("solve: identical system and seed give bitwise-identical figures") {
  const auto sys = compile(cdl::parse("Shape(AB,BC,CA)\nCollinear(ADC)\nCocircular(O,ABC)"));
  const auto a = solve(sys, 42);
  const auto b = solve(sys, 42);
  REQUIRE(std::holds_alternative<Figure>(a));
  REQUIRE(std::holds_alternative<Figure>(b));
  CHECK(serialize(std::get<Figure>(a)) == serialize(std::get<Figure>(b)));
  for (const auto& [l, p] : std::get<Figure>(a).points) {
    CHECK(std::memcmp(p.data(), std::get<Figure>(b).at(l).data(), sizeof(double) * 2) == 0);
  }
}

TEST_CASE("solve: success verifies every declared statement") {
  const std::string text =
      "Shape(AB,BC,CA)\nCollinear(ADC)\nCocircular(O,ABC)\nEqual(LengthOfLine(AB),LengthOfLine(BC))\n"
      "Equal(MeasureOfAngle(ABC),90)";
  const auto doc = cdl::parse(text);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = solve(compile(doc), seed);
    REQUIRE(std::holds_alternative<Figure>(out));
    CHECK(verify(std::get<Figure>(out), doc).empty());
  }
}

TEST_CASE("rotate: identity angles and rigidity") {
  const auto f = solved("Shape(AB,BC,CA)\nCocircular(O,ABC)");
  CHECK(serialize(rotate(f, 0)) == serialize(f));
  const auto full = rotate(f, 360.0);
  for (const auto& [l, p] : f.points) CHECK((full.at(l) - p).norm() < 1e-12);
  const auto r = rotate(f, 37.0);
  CHECK(dist(r, "A", "B") == doctest::Approx(dist(f, "A", "B")));
  CHECK((centroid(r) - centroid(f)).norm() < 1e-12);
  CHECK(r.circles == f.circles);
}

TEST_CASE("extract_cdl: unit square") {
  Figure sq = figure_of({{"A", {0, 0}}, {"B", {1, 0}}, {"C", {1, 1}}, {"D", {0, 1}}});
  for (const auto* s : {"AB", "BC", "CD", "AD"}) sq.segments.insert(make_segment(L(std::string(1, s[0])), L(std::string(1, s[1]))));
  const auto doc = extract_cdl(sq);
  int right = 0, equal_len = 0, collinear = 0;
  for (const auto& s : doc.img()) {
    if (const auto* e = std::get_if<cdl::Equal>(&s)) {
      if (std::holds_alternative<cdl::MeasureOfAngle>(e->lhs)) {
        CHECK(std::get<Rational>(e->rhs) == Rational(90));
        ++right;
      } else {
        ++equal_len;
      }
    }
  }
  for (const auto& s : doc.cons()) collinear += std::holds_alternative<cdl::Collinear>(s);
  CHECK(right == 4);
  CHECK(equal_len == 4);
  CHECK(collinear == 0);
}

TEST_CASE("extract_cdl: collinear run on y = x") {
  Figure f = figure_of({{"A", {0, 0}}, {"B", {1, 1}}, {"C", {2.5, 2.5}}});
  f.segments.insert(make_segment(L("A"), L("B")));
  f.segments.insert(make_segment(L("B"), L("C")));
  const auto doc = extract_cdl(f);
  CHECK(doc.contains(cdl::Statement{cdl::ConsStatement{cdl::Collinear{cdl::labels("ABC")}}}));
}

TEST_CASE("extract_cdl: degenerate figure") {
  const Figure f = figure_of({{"A", {0, 0}}, {"B", {1, 0}}, {"C", {1, 1e-9}}});
  CHECK_THROWS_AS(extract_cdl(f), DegenerateFigure);
}

TEST_CASE("extract_cdl: solved figures recover their construction statements") {
  const std::string text = "Shape(AB,BC,CA)\nCollinear(ADC)\nCocircular(O,ABC)";
  const auto doc = cdl::parse(text);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = solve(compile(doc), seed);
    REQUIRE(std::holds_alternative<Figure>(out));
    const auto mined = extract_cdl(std::get<Figure>(out));
    for (const auto& s : doc.cons()) CHECK_MESSAGE(mined.cons().count(s), cdl::to_string(s));
  }
}

TEST_CASE("extract_cdl: invariant under rigid motion and scale") {
  const auto f = solved(
      "Shape(AB,BC,CD,DA)\nCollinear(AEC)\nEqual(LengthOfLine(AB),LengthOfLine(BC))\n"
      "Equal(MeasureOfAngle(ABC),90)",
      5);
  const auto base = extract_cdl(f);
  for (double theta : {15.0, 90.0, 133.7, 270.0, -40.0}) CHECK(extract_cdl(rotate(f, theta)) == base);
  CHECK(extract_cdl(translate(f, Vec2(3.5, -2.0))) == base);
  CHECK(extract_cdl(scale(f, 4.0)) == base);
}

TEST_CASE("figure serialization round trip") {
  const auto f = solved("Shape(AB,BC,CA)\nCocircular(O,ABC)\nCollinear(ADB)");
  const auto text = serialize(f);
  const auto g = deserialize_figure(text);
  CHECK(serialize(g) == text);
  CHECK(g.points == f.points);
  CHECK(g.circles == f.circles);
  CHECK(g.segments == f.segments);
  CHECK_THROWS(deserialize_figure("figure 2\n"));
}
