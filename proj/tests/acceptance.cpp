// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "eval_oracle.hpp"
#include "geocdl/dataset.hpp"
#include "geocdl/eval.hpp"
#include "geocdl/kernel.hpp"
#include "geocdl/templates.hpp"
#include "geocdl/util.hpp"
#include "kernel_fixtures.hpp"

using namespace geocdl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

const std::string kLibrary = std::string(GEOCDL_DATA_DIR) + "/starter_library.txt";

const templates::Library& library() {
  static const templates::Library lib = templates::load_library(kLibrary);
  return lib;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("geocdl_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---- 1 -------------------------------------------------------------------

void round_trip(Outcome& o) {
  const auto t0 = Clock::now();
  std::size_t docs = 0, ok = 0;
  for (const auto& t : library().templates) {
    for (std::uint64_t s = 0; s < 125; ++s) {
      const auto doc = templates::instantiate(t, derive_seed(1, t.id + "#" + std::to_string(s))).doc;
      ++docs;
      const auto text = cdl::print(doc);
      const auto back = cdl::parse(text);
      bool good = back == doc && cdl::print(back) == text;
      for (const auto& st : doc.statements()) good = good && cdl::canonicalize(st) == st;
      ok += good;
      if (!good) o.require(false, t.id + " seed " + std::to_string(s));
    }
  }
  const double secs = seconds_since(t0);
  o.require(docs >= 10000, "fewer than 10000 documents");
  o.require(secs < 10.0, "over 10 s");
  o.detail << ok << "/" << docs << " documents round-trip, " << secs << " s";
}

// ---- 2 -------------------------------------------------------------------

void solver(Outcome& o) {
  std::size_t total = 0, converged = 0, verified = 0;
  double worst_rate = 1.0;
  std::string worst;
  for (const auto& t : library().templates) {
    std::size_t hits = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto inst = templates::instantiate(t, derive_seed(2, t.id + "#" + std::to_string(s)));
      ++total;
      const auto out = kernel::solve(kernel::compile(inst.doc), inst.seed);
      if (!std::holds_alternative<kernel::Figure>(out)) continue;
      ++hits;
      const auto bad = kernel::verify(std::get<kernel::Figure>(out), inst.doc, 1e-6);
      verified += bad.empty();
      if (!bad.empty()) o.require(false, t.id + " seed " + std::to_string(s) + ": " + bad.front());
    }
    converged += hits;
    const double rate = static_cast<double>(hits) / 100.0;
    if (rate < worst_rate) {
      worst_rate = rate;
      worst = t.id;
    }
  }
  const double rate = static_cast<double>(converged) / static_cast<double>(total);
  o.require(library().templates.size() >= 60, "fewer than 60 templates");
  o.require(rate >= 0.95, "convergence below 95%");

  Rng rng(2024);
  std::size_t gradients = 0, gradient_ok = 0;
  for (const auto kind : fixtures::all_kinds()) {
    for (int checked = 0; checked < 100;) {
      auto sample = fixtures::random_configuration(kind, rng);
      if (!sample) continue;
      auto& [fig, c] = *sample;
      const Eigen::VectorXd g = kernel::residual_gradient(fig, c);
      const Eigen::VectorXd fd = fixtures::central_difference(fig, c, 1e-6);
      const double tol = 1e-5 * std::max(1.0, g.lpNorm<Eigen::Infinity>());
      const bool good = g.size() == fd.size() && (g - fd).lpNorm<Eigen::Infinity>() <= tol;
      gradient_ok += good;
      if (!good) o.require(false, std::string("gradient ") + std::string(kernel::to_string(kind)));
      ++gradients;
      ++checked;
    }
  }
  o.detail << converged << "/" << total << " converged (" << 100.0 * rate << "%, lowest " << worst << " at "
           << 100.0 * worst_rate << "%), " << verified << "/" << converged << " verify, " << gradient_ok << "/"
           << gradients << " gradient checks";
}

// ---- 3 and 7 -------------------------------------------------------------

dataset::GenerationConfig desk_config(const fs::path& out, int workers) {
  auto cfg = dataset::load_config(std::string(GEOCDL_CONFIG_DIR) + "/desk.cfg");
  cfg.output = out.string();
  cfg.workers = workers;
  return cfg;
}

void self_consistency(Outcome& o, const dataset::GenerationResult& run, const fs::path& out) {
  std::size_t ok = 0;
  for (const auto& r : run.manifest) {
    const auto fig = kernel::deserialize_figure(read_file((out / r.figure_path).string()));
    const auto mined = kernel::extract_cdl(fig);
    const auto doc = dataset::record_document(r);
    bool good = true;
    for (const auto& s : doc.cons()) good = good && mined.cons().count(s) == 1;
    ok += good;
    if (!good) o.require(false, r.id);
  }
  o.require(run.manifest.size() == 2000, "desk run did not produce 2000 records");
  o.detail << ok << "/" << run.manifest.size() << " records recover their construction statements";
}

void desk_pipeline(Outcome& o, const dataset::GenerationResult& first, double first_secs, const fs::path& first_dir) {
  std::set<std::string> ids, keys;
  for (const auto& r : first.manifest) {
    ids.insert(r.id);
    const auto doc = dataset::record_document(r);
    o.require(dataset::record_id(doc, r.rotation) == r.id, "id mismatch for " + r.id);
    keys.insert(cdl::print(doc) + "@" + std::to_string(dataset::rotation_bucket(r.rotation)));
  }
  o.require(ids.size() == 2000, "unique ids != 2000");
  o.require(keys.size() == ids.size(), "duplicate document and rotation pairs");
  o.require(first_secs < 600.0, "over 600 s");

  const auto second_dir = scratch("desk_rerun");
  const auto cfg = desk_config(second_dir, 3);
  const auto t0 = Clock::now();
  const auto second = dataset::generate(cfg);
  const double second_secs = seconds_since(t0);
  const bool same = read_file((first_dir / "manifest.jsonl").string()) == read_file((second_dir / "manifest.jsonl").string());
  o.require(same, "manifest differs across worker counts");
  o.detail << ids.size() << " unique records in " << first_secs << " s (8 workers), rerun with " << cfg.workers << " workers in " << second_secs << " s, manifests "
           << (same ? "identical" : "differ");
  fs::remove_all(second_dir);
}

// ---- 4 -------------------------------------------------------------------

void rotation_invariance(Outcome& o) {
  Rng rng(4);
  std::size_t pairs = 0, equal = 0;
  const auto& lib = library().templates;
  while (pairs < 500) {
    const auto& t = lib[rng.index(lib.size())];
    const auto inst = templates::instantiate(t, rng.next());
    const auto out = kernel::solve(kernel::compile(inst.doc), inst.seed);
    if (!std::holds_alternative<kernel::Figure>(out)) continue;
    const auto& fig = std::get<kernel::Figure>(out);
    const double theta = rng.uniform(0.0, 360.0);
    const bool same = kernel::extract_cdl(fig) == kernel::extract_cdl(kernel::rotate(fig, theta));
    equal += same;
    if (!same) o.require(false, t.id + " at " + std::to_string(theta));
    ++pairs;
  }
  o.detail << equal << "/" << pairs << " figures extract identically after rotation";
}

// ---- 5 -------------------------------------------------------------------

bool all_equal(const eval::SectionReport& s, double v) {
  return s.sentence_precision == v && s.sentence_recall == v && s.sentence_accuracy == v &&
         s.full_expression_accuracy == v;
}

void metric_fidelity(Outcome& o) {
  std::vector<eval::CdlPair> pairs;
  Rng rng(5);
  const auto& lib = library().templates;
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto gold = templates::instantiate(lib[i % lib.size()], derive_seed(5, i)).doc;
    const dataset::PerturbationSpec spec{rng.uniform(0, 0.4), rng.uniform(0, 0.3), rng.uniform(0, 0.4), derive_seed(6, i)};
    pairs.push_back({dataset::perturb(gold, spec).doc, gold});
  }
  double worst = 0;
  auto compare = [&](const std::vector<eval::CdlPair>& subset) {
    const auto r = eval::score_cdl(subset);
    const auto [c, m] = oracle::score(subset);
    for (const auto& [s, t] : {std::pair{&r.cons, c}, std::pair{&r.img, m}}) {
      worst = std::max({worst, std::abs(s->sentence_precision - t.precision), std::abs(s->sentence_recall - t.recall),
                        std::abs(s->sentence_accuracy - t.accuracy), std::abs(s->full_expression_accuracy - t.full)});
    }
  };
  compare(pairs);
  for (std::size_t i = 0; i < pairs.size(); ++i) compare({pairs[i]});
  o.require(worst <= 1e-9, "scorer deviates from the oracle");

  std::vector<eval::CdlPair> same;
  for (const auto& p : pairs) same.push_back({p.gold, p.gold});
  const auto id = eval::score_cdl(same);
  o.require(all_equal(id.cons, 100.0) && all_equal(id.img, 100.0), "identical pairs");
  const cdl::ParseOptions lenient{.require_label_closure = false};
  const auto disjoint = eval::score_cdl({{cdl::parse("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),3)\n", lenient),
                                          cdl::parse("Shape(DE,EF,FD)\nEqual(LengthOfLine(DE),4)\n", lenient)}});
  o.require(all_equal(disjoint.cons, 0.0) && all_equal(disjoint.img, 0.0), "disjoint pairs");
  o.detail << "max deviation " << worst << " over 1000 pairs (corpus and per pair), identical 100, disjoint 0";
}

// ---- 6 -------------------------------------------------------------------

void perturbation_statistics(Outcome& o) {
  std::size_t statements = 0, drops = 0, replayed = 0, docs = 0;
  std::uint64_t seed = 600;
  for (std::uint64_t s = 0; statements < 10000; ++s) {
    for (const auto& t : library().templates) {
      const auto doc = templates::instantiate(t, derive_seed(6, t.id + "#" + std::to_string(s))).doc;
      const auto res = dataset::perturb(doc, {0.2, 0, 0, ++seed});
      statements += doc.statements().size();
      for (const auto& e : res.log) drops += e.kind == dataset::EditKind::Drop;
      std::vector<dataset::Edit> decoded;
      for (const auto& e : res.log) decoded.push_back(dataset::edit_from_json(dataset::edit_to_json(e)));
      const bool exact = dataset::replay(doc, decoded) == res.doc;
      replayed += exact;
      ++docs;
      if (!exact) o.require(false, "replay of " + t.id);
      const auto mixed = dataset::perturb(doc, {0.2, 0.2, 0.2, seed + 1'000'000});
      o.require(dataset::replay(doc, mixed.log) == mixed.doc, "mixed replay of " + t.id);
    }
  }
  const double frac = static_cast<double>(drops) / static_cast<double>(statements);
  o.require(frac >= 0.18 && frac <= 0.22, "drop fraction out of range");
  o.detail << "drop fraction " << frac << " over " << statements << " statements, " << replayed << "/" << docs
           << " logs replay";
}

// ---- 8 -------------------------------------------------------------------

std::string fenced(double a, double b, double c) {
  std::ostringstream os;
  os << "```json\n{\"calculation_accuracy\": " << a << ", \"logical_coherence\": " << b << ", \"conciseness\": " << c
     << "}\n```\n";
  return os.str();
}

class LookupJudge : public eval::Judge {
 public:
  explicit LookupJudge(std::map<std::string, std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const std::string& prompt) override {
    for (const auto& [needle, reply] : replies_)
      if (prompt.find(needle) != std::string::npos) return reply;
    return "no idea";
  }
  std::string name() const override { return "lookup"; }

 private:
  std::map<std::string, std::string> replies_;
};

void pes_harness(Outcome& o) {
  eval::StubJudge fixed(80, 90, 70);
  const double single = eval::pes_evaluate("steps", "reference", fixed, {}).pes;
  o.require(single == 80.0, "stub mean");

  const double scores[10][3] = {{80, 90, 70}, {100, 100, 100}, {0, 0, 0},   {60, 70, 80}, {50, 50, 50},
                                {90, 60, 30}, {75, 85, 95},    {40, 20, 60}, {100, 90, 80}, {55, 65, 75}};
  std::map<std::string, std::string> replies;
  std::vector<eval::PesItem> items;
  double hand = 0;
  for (int i = 0; i < 10; ++i) {
    const std::string sol = "solution-" + std::to_string(i) + "-end";
    replies[sol] = fenced(scores[i][0], scores[i][1], scores[i][2]);
    items.push_back({"item" + std::to_string(i), sol, "reference"});
    hand += (scores[i][0] + scores[i][1] + scores[i][2]) / 3.0;
  }
  hand /= 10.0;
  LookupJudge lookup(replies);
  const auto report = eval::pes_corpus(items, lookup, {});
  o.require(report.scored == 10 && std::abs(report.mean_pes - 64.0) <= 1e-12 && std::abs(hand - 64.0) <= 1e-12,
            "ten-item aggregate");

  eval::ScriptedJudge flaky({"!unreachable", "not a score", fenced(60, 70, 80)});
  const auto retried = eval::pes_evaluate("s", "r", flaky, {});
  o.require(retried.attempts == 3 && retried.pes == 70.0 && flaky.calls() == 3, "flaky retry");
  eval::JudgeEndpointConfig strict;
  strict.max_retries = 1;
  eval::ScriptedJudge down({"!unreachable"});
  bool raised = false;
  try {
    eval::pes_evaluate("s", "r", down, strict);
  } catch (const eval::JudgeUnreachable&) {
    raised = true;
  }
  o.require(raised && down.calls() == 2, "retry budget");

  const auto path = (scratch("pes") / "cache.jsonl").string();
  {
    eval::PesCache cache(path);
    eval::ScriptedJudge once({"!unreachable", fenced(90, 90, 60)});
    const auto first = eval::pes_evaluate("s", "r", once, {}, &cache);
    const auto second = eval::pes_evaluate("s", "r", once, {}, &cache);
    o.require(!first.cached && second.cached && second.pes == 80.0 && once.calls() == 2, "cache hit");
  }
  eval::PesCache reloaded(path);
  eval::ScriptedJudge unused({"!unreachable"});
  const auto hit = eval::pes_evaluate("s", "r", unused, {}, &reloaded);
  o.require(hit.cached && hit.pes == 80.0 && unused.calls() == 0, "persisted cache");
  o.detail << "stub " << single << ", aggregate " << report.mean_pes << " (hand " << hand
           << "), flaky judge retried, cache persisted";
}

// ---- 9 -------------------------------------------------------------------

void answer_fixture(Outcome& o) {
  std::istringstream in(read_file(std::string(GEOCDL_TEST_DATA) + "/answers_fixture.jsonl"));
  std::vector<eval::AnswerRecord> records;
  std::size_t agree = 0, labeled_correct = 0;
  for (std::string line; std::getline(in, line);) {
    const auto j = nlohmann::json::parse(line);
    eval::AnswerRecord r;
    r.id = j.at("id").get<std::string>();
    r.mode = *eval::answer_mode_from(j.at("mode").get<std::string>());
    r.output = j.at("prediction").get<std::string>();
    if (r.mode == eval::AnswerMode::Choice) r.gold_letter = j.at("gold").get<std::string>()[0];
    else r.gold_value = j.at("gold").get<double>();
    const auto a = eval::extract_answer(r.output, r.mode);
    const auto& want = j.at("extracted");
    bool same;
    if (want.is_null()) same = a.kind == eval::Answer::Kind::NoAnswer;
    else if (r.mode == eval::AnswerMode::Choice)
      same = a == eval::Answer{eval::Answer::Kind::Letter, want.get<std::string>()[0], 0};
    else same = a == eval::Answer{eval::Answer::Kind::Number, 0, want.get<double>()};
    same = same && eval::is_correct(r, a) == j.at("correct").get<bool>();
    agree += same;
    if (!same) o.require(false, r.id);
    labeled_correct += j.at("correct").get<bool>();
    records.push_back(r);
  }
  o.require(records.size() == 50, "fixture size");
  const auto score = eval::score_answers(records);
  const double hand = 100.0 * static_cast<double>(labeled_correct) / static_cast<double>(records.size());
  o.require(score.overall() == hand, "overall accuracy");
  o.detail << agree << "/" << records.size() << " cases agree, overall accuracy " << score.overall();
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const char* name, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      body(o);
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::printf("%s %d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.str().c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  };

  report(1, "round-trip and canonicalization", round_trip);
  report(2, "solver correctness", solver);

  const auto desk_dir = scratch("desk");
  std::optional<dataset::GenerationResult> desk;
  double desk_secs = 0;
  std::string desk_error;
  try {
    const auto t0 = Clock::now();
    desk = dataset::generate(desk_config(desk_dir, 8));
    desk_secs = seconds_since(t0);
  } catch (const std::exception& e) {
    desk_error = e.what();
  }
  auto with_desk = [&](auto body) {
    return [&, body](Outcome& o) {
      if (!desk) throw std::runtime_error("desk run failed: " + desk_error);
      body(o);
    };
  };

  report(3, "self-consistency oracle", with_desk([&](Outcome& o) { self_consistency(o, *desk, desk_dir); }));
  report(4, "rotation invariance", rotation_invariance);
  report(5, "metric fidelity", metric_fidelity);
  report(6, "perturbation statistics", perturbation_statistics);
  report(7, "desk-scale pipeline", with_desk([&](Outcome& o) { desk_pipeline(o, *desk, desk_secs, desk_dir); }));
  report(8, "PES harness", pes_harness);
  report(9, "answer extraction", answer_fixture);

  fs::remove_all(desk_dir);
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
