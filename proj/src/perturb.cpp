#include <algorithm>
#include <functional>
#include <json.hpp>

#include "geocdl/dataset.hpp"
#include "geocdl/util.hpp"

namespace geocdl::dataset {

using cdl::Label;
using cdl::Statement;

namespace {

using LabelMap = std::function<Label(const Label&)>;

std::vector<Label> mapped(const std::vector<Label>& ls, const LabelMap& f) {
  std::vector<Label> out;
  out.reserve(ls.size());
  for (const auto& l : ls) out.push_back(f(l));
  return out;
}

cdl::MeasureTerm map_term(const cdl::MeasureTerm& t, const LabelMap& f) {
  return std::visit(
      [&](const auto& x) -> cdl::MeasureTerm {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, cdl::LengthOfLine>) return cdl::LengthOfLine{f(x.a), f(x.b)};
        else return cdl::MeasureOfAngle{f(x.a), f(x.vertex), f(x.c)};
      },
      t);
}

Statement map_labels(const Statement& s, const LabelMap& f) {
  if (const auto* c = std::get_if<cdl::ConsStatement>(&s)) {
    return std::visit(
        [&](const auto& x) -> Statement {
          using T = std::decay_t<decltype(x)>;
          if constexpr (std::is_same_v<T, cdl::Shape>) {
            cdl::Shape out;
            for (const auto& e : x.edges) out.edges.push_back(cdl::Edge{mapped(e.points, f)});
            return cdl::ConsStatement{out};
          } else if constexpr (std::is_same_v<T, cdl::Collinear>) {
            return cdl::ConsStatement{cdl::Collinear{mapped(x.points, f)}};
          } else {
            return cdl::ConsStatement{cdl::Cocircular{f(x.center), mapped(x.points, f)}};
          }
        },
        *c);
  }
  return std::visit(
      [&](const auto& x) -> Statement {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, cdl::Equal>) {
          cdl::Equal out{map_term(x.lhs, f), x.rhs};
          if (const auto* t = std::get_if<cdl::MeasureTerm>(&x.rhs)) out.rhs = map_term(*t, f);
          return cdl::ImgStatement{out};
        } else {
          return cdl::ImgStatement{T{cdl::Segment{f(x.first.a), f(x.first.b)}, cdl::Segment{f(x.second.a), f(x.second.b)}}};
        }
      },
      std::get<cdl::ImgStatement>(s));
}

std::vector<Label> distinct_labels(const Statement& s) {
  auto ls = cdl::labels_of(s);
  std::sort(ls.begin(), ls.end());
  ls.erase(std::unique(ls.begin(), ls.end()), ls.end());
  return ls;
}

std::optional<Statement> accept(const Statement& original, const Statement& candidate) {
  if (cdl::validate(candidate)) return std::nullopt;
  const auto c = cdl::canonicalize(candidate);
  if (c == original) return std::nullopt;
  return c;
}

std::optional<Statement> swap_labels(const Statement& s, Rng& rng) {
  const auto ls = distinct_labels(s);
  if (ls.size() < 2) return std::nullopt;
  const std::size_t i = rng.index(ls.size());
  std::size_t j = rng.index(ls.size() - 1);
  if (j >= i) ++j;
  const Label a = ls[i], b = ls[j];
  return accept(s, map_labels(s, [&](const Label& l) { return l == a ? b : l == b ? a : l; }));
}

const cdl::Equal* literal_equality(const Statement& s) {
  const auto* img = std::get_if<cdl::ImgStatement>(&s);
  const auto* eq = img ? std::get_if<cdl::Equal>(img) : nullptr;
  return eq && std::holds_alternative<Rational>(eq->rhs) ? eq : nullptr;
}

const cdl::Collinear* collinear_run(const Statement& s) {
  const auto* cons = std::get_if<cdl::ConsStatement>(&s);
  const auto* col = cons ? std::get_if<cdl::Collinear>(cons) : nullptr;
  return col && col->points.size() >= 3 ? col : nullptr;
}

std::optional<Statement> shift_literal(const Statement& s, Rng& rng) {
  const auto* eq = literal_equality(s);
  const Rational& lit = std::get<Rational>(eq->rhs);
  const auto k = rng.uniform_int(1, 10);
  const Rational shifted = rng.bernoulli(0.5) ? lit + Rational(k) : lit - Rational(k);
  if (shifted <= Rational(0)) return std::nullopt;
  if (std::holds_alternative<cdl::MeasureOfAngle>(eq->lhs) && shifted >= Rational(180)) return std::nullopt;
  return accept(s, cdl::ImgStatement{cdl::Equal{eq->lhs, shifted}});
}

std::optional<Statement> reorder_collinear(const Statement& s, Rng& rng) {
  auto pts = collinear_run(s)->points;
  rng.shuffle(pts);
  return accept(s, cdl::ConsStatement{cdl::Collinear{pts}});
}

std::optional<Edit> mutate(const Statement& s, Rng& rng) {
  using Mutation = std::optional<Statement> (*)(const Statement&, Rng&);
  std::vector<std::pair<const char*, Mutation>> applicable;
  if (distinct_labels(s).size() >= 2) applicable.emplace_back("swap-labels", swap_labels);
  if (literal_equality(s)) applicable.emplace_back("shift-literal", shift_literal);
  if (collinear_run(s)) applicable.emplace_back("reorder-collinear", reorder_collinear);
  if (applicable.empty()) return std::nullopt;
  for (int attempt = 0; attempt < 8; ++attempt) {
    const auto& [name, fn] = applicable[rng.index(applicable.size())];
    if (auto out = fn(s, rng)) return Edit{EditKind::Mutate, name, s, *out};
  }
  return std::nullopt;
}

std::optional<Edit> spurious(const cdl::CdlDocument& original, const cdl::CdlDocument& working,
                             const std::vector<Label>& labels, Rng& rng) {
  if (labels.size() < 3) return std::nullopt;
  auto pick = [&](std::size_t n) {
    auto pool = labels;
    rng.shuffle(pool);
    pool.resize(n);
    return pool;
  };
  static const char* const flavors[] = {"equal-length", "equal-angle", "angle-literal", "parallel", "perpendicular", "collinear"};
  for (int attempt = 0; attempt < 10; ++attempt) {
    const std::string flavor = flavors[rng.index(std::size(flavors))];
    Statement s;
    if (flavor == "equal-length" || flavor == "parallel" || flavor == "perpendicular") {
      const auto p = pick(labels.size() >= 4 ? 4 : 3);
      const Label d = p.size() == 4 ? p[3] : p[0];
      const cdl::Segment s1{p[0], p[1]}, s2{p[2], d};
      if (flavor == "equal-length") s = cdl::ImgStatement{cdl::Equal{cdl::LengthOfLine{s1.a, s1.b}, cdl::MeasureTerm{cdl::LengthOfLine{s2.a, s2.b}}}};
      else if (flavor == "parallel") s = cdl::ImgStatement{cdl::ParallelBetweenLine{s1, s2}};
      else s = cdl::ImgStatement{cdl::PerpendicularBetweenLine{s1, s2}};
    } else if (flavor == "equal-angle") {
      const auto p = pick(3), q = pick(3);
      s = cdl::ImgStatement{cdl::Equal{cdl::MeasureOfAngle{p[0], p[1], p[2]}, cdl::MeasureTerm{cdl::MeasureOfAngle{q[0], q[1], q[2]}}}};
    } else if (flavor == "angle-literal") {
      const auto p = pick(3);
      s = cdl::ImgStatement{cdl::Equal{cdl::MeasureOfAngle{p[0], p[1], p[2]}, Rational(rng.uniform_int(10, 170))}};
    } else {
      s = cdl::ConsStatement{cdl::Collinear{pick(3)}};
    }
    if (cdl::validate(s)) continue;
    s = cdl::canonicalize(s);
    if (original.contains(s) || working.contains(s)) continue;
    return Edit{EditKind::Insert, flavor, std::nullopt, s};
  }
  return std::nullopt;
}

void apply(cdl::CdlDocument& doc, const Edit& e) {
  if (e.before) doc.erase(*e.before);
  if (e.after) doc.insert(*e.after);
}

}  // namespace

std::string_view to_string(EditKind kind) {
  switch (kind) {
    case EditKind::Drop: return "drop";
    case EditKind::Mutate: return "mutate";
    case EditKind::Insert: return "insert";
  }
  return "?";
}

void PerturbationSpec::check() const {
  for (double p : {drop, insert, mutate})
    if (!(p >= 0 && p <= 1)) throw ConfigError("perturbation rates must lie in [0, 1]");
  if (drop + mutate > 1) throw ConfigError("drop and mutate rates must sum to at most 1");
}

PerturbResult perturb(const cdl::CdlDocument& doc, const PerturbationSpec& spec) {
  spec.check();
  Rng rng(spec.seed);
  const auto ls = doc.labels();
  const std::vector<Label> labels(ls.begin(), ls.end());
  PerturbResult out{doc, {}};
  for (const auto& s : doc.statements()) {
    const double u = rng.uniform();
    std::optional<Edit> edit;
    if (u < spec.drop) edit = Edit{EditKind::Drop, "", s, std::nullopt};
    else if (u < spec.drop + spec.mutate) edit = mutate(s, rng);
    if (edit) {
      apply(out.doc, *edit);
      out.log.push_back(std::move(*edit));
    }
    if (rng.bernoulli(spec.insert)) {
      if (auto ins = spurious(doc, out.doc, labels, rng)) {
        apply(out.doc, *ins);
        out.log.push_back(std::move(*ins));
      }
    }
  }
  return out;
}

cdl::CdlDocument replay(const cdl::CdlDocument& doc, const std::vector<Edit>& log) {
  auto out = doc;
  for (const auto& e : log) apply(out, e);
  return out;
}

std::string edit_to_json(const Edit& e) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(e.kind);
  j["detail"] = e.detail;
  j["before"] = e.before ? nlohmann::ordered_json(cdl::to_string(*e.before)) : nlohmann::ordered_json(nullptr);
  j["after"] = e.after ? nlohmann::ordered_json(cdl::to_string(*e.after)) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

Edit edit_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  Edit e;
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "drop") e.kind = EditKind::Drop;
  else if (kind == "mutate") e.kind = EditKind::Mutate;
  else if (kind == "insert") e.kind = EditKind::Insert;
  else throw DatasetError("unknown edit kind " + kind);
  e.detail = j.at("detail").get<std::string>();
  if (!j.at("before").is_null()) e.before = cdl::parse_statement(j.at("before").get<std::string>());
  if (!j.at("after").is_null()) e.after = cdl::parse_statement(j.at("after").get<std::string>());
  return e;
}

}  // namespace geocdl::dataset
