#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <regex>

#include "geocdl/eval.hpp"

namespace geocdl::eval {

using json = nlohmann::ordered_json;

namespace {

double percent(std::size_t n, std::size_t d, bool vacuous) {
  if (d == 0) return vacuous ? 100.0 : 0.0;
  return 100.0 * static_cast<double>(n) / static_cast<double>(d);
}

template <typename T>
void accumulate(SectionReport& r, const cdl::SectionDiff<T>& d) {
  r.hits += d.hits.size();
  r.predicted += d.hits.size() + d.spurious.size();
  r.gold += d.hits.size() + d.misses.size();
  r.exact += d.misses.empty() && d.spurious.empty();
}

void finish(SectionReport& r, std::size_t n) {
  const std::size_t uni = r.predicted + r.gold - r.hits;
  const bool vacuous = uni == 0;
  r.sentence_precision = percent(r.hits, r.predicted, vacuous);
  r.sentence_recall = percent(r.hits, r.gold, vacuous);
  r.sentence_accuracy = percent(r.hits, uni, vacuous);
  r.full_expression_accuracy = percent(r.exact, n, false);
}

json section_json(const SectionReport& r) {
  return {{"sentence_precision", r.sentence_precision}, {"sentence_recall", r.sentence_recall},
          {"sentence_accuracy", r.sentence_accuracy},   {"full_expression_accuracy", r.full_expression_accuracy},
          {"hits", r.hits}, {"predicted", r.predicted}, {"gold", r.gold}, {"exact", r.exact}};
}

std::string row(const char* name, const SectionReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-8s %10.2f %10.2f %10.2f %10.2f\n", name, r.sentence_precision,
                r.sentence_recall, r.sentence_accuracy, r.full_expression_accuracy);
  return buf;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Hit {
  std::size_t pos;
  char letter;
};

// Only punctuation and blanks follow `from` on its line.
bool ends_clause(std::string_view text, std::size_t from) {
  for (std::size_t i = from; i < text.size() && text[i] != '\n'; ++i)
    if (std::isalnum(static_cast<unsigned char>(text[i]))) return false;
  return true;
}

std::optional<Hit> last_marker_letter(std::string_view text) {
  static const std::regex marker(
      R"((?:answer|option|choice|choose|select)(?:\s+(?:is|would be|should be|will be))?\s*(?:[:=]\s*)?)"
      R"([*"'\s]*(?:option\s+|choice\s+)?(?:\(([a-d])\)|([a-d])(?![a-z0-9])))");
  static const std::regex boxed(R"(\\boxed\{\s*\(?([a-d])\)?\s*\})");
  const std::string low = lower(text);
  std::optional<Hit> best;
  for (auto it = std::sregex_iterator(low.begin(), low.end(), marker); it != std::sregex_iterator(); ++it) {
    const int g = (*it)[1].matched ? 1 : 2;
    const auto at = static_cast<std::size_t>(it->position(g));
    const char original = text[at];
    if (original >= 'A' && original <= 'D') best = Hit{at, original};
    else if (ends_clause(text, at + 1)) best = Hit{at, static_cast<char>(std::toupper(static_cast<unsigned char>(original)))};
  }
  for (auto it = std::sregex_iterator(low.begin(), low.end(), boxed); it != std::sregex_iterator(); ++it) {
    const auto at = static_cast<std::size_t>(it->position(1));
    if (!best || at > best->pos) best = Hit{at, static_cast<char>(std::toupper(static_cast<unsigned char>(text[at])))};
  }
  return best;
}

std::optional<Hit> last_bare_letter(std::string_view text) {
  static const std::regex paren(R"(\(([A-D])\))");
  static const std::regex alone(R"((?:^|\n)[ \t*]*\(?([A-D])\)?[.)]?[ \t*]*(?=\n|$))");
  const std::string s(text);
  std::optional<Hit> best;
  for (const auto* re : {&paren, &alone})
    for (auto it = std::sregex_iterator(s.begin(), s.end(), *re); it != std::sregex_iterator(); ++it) {
      const auto at = static_cast<std::size_t>(it->position(1));
      if (!best || at > best->pos) best = Hit{at, s[at]};
    }
  return best;
}

struct Number {
  std::size_t pos;
  double value;
};

std::string strip_degrees(std::string_view text) {
  std::string s(text);
  for (const char* unit : {"^{\\circ}", "^\\circ", "\\circ", "\xC2\xB0"}) {
    const std::string u = unit;
    for (std::size_t at = s.find(u); at != std::string::npos; at = s.find(u, at)) s.replace(at, u.size(), std::string(u.size(), ' '));
  }
  return s;
}

std::vector<Number> numbers(const std::string& s) {
  static const std::regex frac(R"(\\[dt]?frac\{\s*(-?\d+(?:\.\d+)?)\s*\}\{\s*(-?\d+(?:\.\d+)?)\s*\})");
  static const std::regex plain(R"((-?)(\d{1,3}(?:,\d{3})+(?:\.\d+)?|\d+(?:\.\d+)?|\.\d+)(?:\s*/\s*(\d+(?:\.\d+)?)(?![\d.]))?)");
  std::vector<Number> out;
  std::vector<std::pair<std::size_t, std::size_t>> taken;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), frac); it != std::sregex_iterator(); ++it) {
    const double den = std::stod((*it)[2].str());
    if (den == 0) continue;
    out.push_back({static_cast<std::size_t>(it->position()), std::stod((*it)[1].str()) / den});
    taken.emplace_back(it->position(), it->position() + it->length());
  }
  for (auto it = std::sregex_iterator(s.begin(), s.end(), plain); it != std::sregex_iterator(); ++it) {
    const auto at = static_cast<std::size_t>(it->position());
    if (std::any_of(taken.begin(), taken.end(), [&](const auto& r) { return at >= r.first && at < r.second; })) continue;
    const std::size_t digits_at = static_cast<std::size_t>(it->position(2));
    if (digits_at > 0 && (std::isalpha(static_cast<unsigned char>(s[digits_at - 1])) || s[digits_at - 1] == '_')) continue;
    std::string digits = (*it)[2].str();
    digits.erase(std::remove(digits.begin(), digits.end(), ','), digits.end());
    double v = std::stod(digits);
    bool negative = (*it)[1].length() > 0;
    if (negative && at > 0 && std::isalnum(static_cast<unsigned char>(s[at - 1]))) negative = false;
    if (negative) v = -v;
    if ((*it)[3].matched) {
      const double den = std::stod((*it)[3].str());
      if (den == 0) continue;
      v /= den;
    }
    out.push_back({negative ? at : digits_at, v});
  }
  std::sort(out.begin(), out.end(), [](const Number& a, const Number& b) { return a.pos < b.pos; });
  return out;
}

std::optional<std::string_view> last_boxed(std::string_view s) {
  const auto at = s.rfind("\\boxed{");
  if (at == std::string_view::npos) return std::nullopt;
  int depth = 0;
  const std::size_t start = at + 7;
  for (std::size_t i = start; i < s.size(); ++i) {
    if (s[i] == '{') ++depth;
    else if (s[i] == '}' && depth-- == 0) return s.substr(start, i - start);
  }
  return std::nullopt;
}

}  // namespace

// ---- CDL scoring ---------------------------------------------------------

CdlEvalReport score_cdl(const std::vector<CdlPair>& pairs) {
  if (pairs.empty()) throw EmptyCorpus("no CDL pairs to score");
  CdlEvalReport report;
  report.corpus_size = pairs.size();
  for (const auto& p : pairs) {
    const auto d = cdl::statement_set_diff(p.pred, p.gold);
    accumulate(report.cons, d.cons);
    accumulate(report.img, d.img);
  }
  finish(report.cons, pairs.size());
  finish(report.img, pairs.size());
  return report;
}

std::string CdlEvalReport::to_json() const {
  json j;
  j["corpus_size"] = corpus_size;
  j["cons"] = section_json(cons);
  j["img"] = section_json(img);
  return j.dump();
}

std::string CdlEvalReport::table() const {
  std::string out = "section   precision     recall   sentence       full\n";
  out += row("cons", cons);
  out += row("img", img);
  out += "pairs: " + std::to_string(corpus_size) + "\n";
  return out;
}

// ---- answers -------------------------------------------------------------

std::string_view to_string(AnswerMode mode) { return mode == AnswerMode::Choice ? "choice" : "open-ended"; }

std::optional<AnswerMode> answer_mode_from(std::string_view name) {
  if (name == "choice") return AnswerMode::Choice;
  if (name == "open-ended" || name == "open") return AnswerMode::OpenEnded;
  return std::nullopt;
}

Answer extract_answer(std::string_view output, AnswerMode mode) {
  if (mode == AnswerMode::Choice) {
    auto hit = last_marker_letter(output);
    if (!hit) hit = last_bare_letter(output);
    if (!hit) return {};
    return {Answer::Kind::Letter, hit->letter, 0};
  }
  const std::string text = strip_degrees(output);
  if (const auto boxed = last_boxed(text)) {
    const auto nums = numbers(std::string(*boxed));
    if (!nums.empty()) return {Answer::Kind::Number, 0, nums.back().value};
  }
  const auto all = numbers(text);
  if (all.empty()) return {};
  const auto marker = lower(text).rfind("answer");
  if (marker != std::string::npos) {
    for (const auto& n : all)
      if (n.pos > marker) return {Answer::Kind::Number, 0, n.value};
  }
  return {Answer::Kind::Number, 0, all.back().value};
}

bool is_correct(const AnswerRecord& r, const Answer& a) {
  if (r.mode == AnswerMode::Choice) return a.kind == Answer::Kind::Letter && a.letter == r.gold_letter;
  if (a.kind != Answer::Kind::Number) return false;
  return std::abs(a.value - r.gold_value) <= r.tolerance * std::max(1.0, std::abs(r.gold_value));
}

AnswerScore score_answers(const std::vector<AnswerRecord>& records) {
  if (records.empty()) throw EmptyCorpus("no answer records to score");
  AnswerScore s;
  for (const auto& r : records) {
    const auto a = extract_answer(r.output, r.mode);
    ++s.total[r.mode];
    if (is_correct(r, a)) ++s.correct[r.mode];
    if (a.kind == Answer::Kind::NoAnswer) ++s.no_answer[r.mode];
  }
  return s;
}

std::optional<double> AnswerScore::accuracy(AnswerMode mode) const {
  const auto it = total.find(mode);
  if (it == total.end() || it->second == 0) return std::nullopt;
  const auto c = correct.count(mode) ? correct.at(mode) : 0;
  return 100.0 * static_cast<double>(c) / static_cast<double>(it->second);
}

double AnswerScore::overall() const {
  std::size_t t = 0, c = 0;
  for (const auto& [m, n] : total) t += n;
  for (const auto& [m, n] : correct) c += n;
  return t ? 100.0 * static_cast<double>(c) / static_cast<double>(t) : 0.0;
}

std::string AnswerScore::to_json() const {
  json j;
  for (auto mode : {AnswerMode::Choice, AnswerMode::OpenEnded}) {
    if (!total.count(mode)) continue;
    j[std::string(eval::to_string(mode))] = {{"total", total.at(mode)},
                                            {"correct", correct.count(mode) ? correct.at(mode) : 0},
                                            {"no_answer", no_answer.count(mode) ? no_answer.at(mode) : 0},
                                            {"accuracy", *accuracy(mode)}};
  }
  j["overall_accuracy"] = overall();
  return j.dump();
}

std::string AnswerScore::table() const {
  std::string out = "mode          total   correct  no-answer   accuracy\n";
  for (auto mode : {AnswerMode::Choice, AnswerMode::OpenEnded}) {
    if (!total.count(mode)) continue;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-11s %7zu %9zu %10zu %10.2f\n", std::string(eval::to_string(mode)).c_str(),
                  total.at(mode), correct.count(mode) ? correct.at(mode) : 0,
                  no_answer.count(mode) ? no_answer.at(mode) : 0, *accuracy(mode));
    out += buf;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "overall %32.2f\n", overall());
  return out + buf;
}

}  // namespace geocdl::eval
