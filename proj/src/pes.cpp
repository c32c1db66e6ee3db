#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <regex>
#include <sstream>

#include "geocdl/eval.hpp"
#include "geocdl/util.hpp"

namespace geocdl::eval {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kCriteria[3] = {"calculation_accuracy", "logical_coherence", "conciseness"};

std::string fenced_reply(double a, double b, double c) {
  json j;
  j[kCriteria[0]] = a;
  j[kCriteria[1]] = b;
  j[kCriteria[2]] = c;
  return "Scores for the solution:\n```json\n" + j.dump() + "\n```\n";
}

std::optional<JudgeScores> scores_from_object(const nlohmann::json& j) {
  if (!j.is_object()) return std::nullopt;
  double v[3];
  for (int i = 0; i < 3; ++i) {
    if (!j.contains(kCriteria[i]) || !j.at(kCriteria[i]).is_number()) return std::nullopt;
    v[i] = j.at(kCriteria[i]).get<double>();
    if (!(v[i] >= 0 && v[i] <= 100)) return std::nullopt;
  }
  return JudgeScores{v[0], v[1], v[2], false};
}

}  // namespace

void JudgeEndpointConfig::check() const {
  if (!(timeout_seconds > 0)) throw EvalError("judge timeout must be positive");
  if (max_retries < 0) throw EvalError("judge retries must be non-negative");
  if (parallelism < 1) throw EvalError("judge parallelism must be at least 1");
}

void set_judge_value(JudgeEndpointConfig& cfg, std::string_view key, std::string_view raw) {
  const std::string value = trim(raw);
  auto number = [&] {
    try {
      std::size_t used = 0;
      const double d = std::stod(value, &used);
      if (used == value.size()) return d;
    } catch (const std::exception&) {
    }
    throw EvalError("'" + std::string(key) + "' expects a number, got '" + value + "'");
  };
  auto integer = [&] {
    const double d = number();
    if (d != std::floor(d)) throw EvalError("'" + std::string(key) + "' expects an integer, got '" + value + "'");
    return static_cast<int>(d);
  };
  if (key == "base_url") cfg.base_url = value;
  else if (key == "model") cfg.model = value;
  else if (key == "credential_env") cfg.credential_env = value;
  else if (key == "timeout") cfg.timeout_seconds = number();
  else if (key == "max_retries") cfg.max_retries = integer();
  else if (key == "parallelism") cfg.parallelism = integer();
  else if (key == "prompt") cfg.prompt_path = value;
  else throw EvalError("unknown judge config key '" + std::string(key) + "'");
}

JudgeEndpointConfig load_judge_config(const std::string& path) {
  JudgeEndpointConfig cfg;
  std::vector<KeyValue> entries;
  try {
    entries = parse_key_values(read_file(path));
  } catch (const std::exception& e) {
    throw EvalError("judge config " + path + ": " + e.what());
  }
  for (const auto& kv : entries) {
    try {
      set_judge_value(cfg, kv.key, kv.value);
    } catch (const EvalError& e) {
      throw EvalError("judge config line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  if (!cfg.prompt_path.empty() && std::filesystem::path(cfg.prompt_path).is_relative())
    cfg.prompt_path = (std::filesystem::path(path).parent_path() / cfg.prompt_path).lexically_normal().string();
  cfg.check();
  return cfg;
}

// ---- judges --------------------------------------------------------------

StubJudge::StubJudge(double calculation, double logic, double conciseness)
    : fixed_(std::array<double, 3>{calculation, logic, conciseness}) {}

std::string StubJudge::complete(const std::string& prompt) {
  {
    std::lock_guard lock(mu_);
    ++calls_;
  }
  if (fixed_) return fenced_reply((*fixed_)[0], (*fixed_)[1], (*fixed_)[2]);
  const std::uint64_t h = fnv1a64(prompt);
  return fenced_reply(static_cast<double>(40 + h % 61), static_cast<double>(40 + (h >> 16) % 61),
                      static_cast<double>(40 + (h >> 32) % 61));
}

std::string StubJudge::name() const {
  if (!fixed_) return "stub";
  std::ostringstream os;
  os.precision(17);
  os << "stub:" << (*fixed_)[0] << "," << (*fixed_)[1] << "," << (*fixed_)[2];
  return os.str();
}

std::size_t StubJudge::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

ScriptedJudge::ScriptedJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {
  if (replies_.empty()) throw EvalError("scripted judge needs at least one reply");
}

std::string ScriptedJudge::complete(const std::string&) {
  std::string reply;
  {
    std::lock_guard lock(mu_);
    reply = replies_[std::min(calls_, replies_.size() - 1)];
    ++calls_;
  }
  if (reply == "!unreachable") throw JudgeUnreachable("scripted transport failure");
  return reply;
}

std::size_t ScriptedJudge::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

// ---- cache ---------------------------------------------------------------

PesCache::PesCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  for (std::string line; std::getline(in, line);) {
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      entries_[j.at("key").get<std::string>()] = j.at("reply").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      // a torn trailing line from an interrupted run is ignored
    }
  }
}

std::optional<std::string> PesCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void PesCache::put(const std::string& key, const std::string& reply) {
  std::lock_guard lock(mu_);
  if (!entries_.emplace(key, reply).second) return;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  json j;
  j["key"] = key;
  j["reply"] = reply;
  out << j.dump() << "\n";
}

std::size_t PesCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---- prompt and reply ----------------------------------------------------

std::string default_prompt_template() {
  return R"(You are grading the reasoning of a solution to a plane geometry problem.

Compare the model solution with the reference solution and score three criteria, each from 0 to 100:
- calculation_accuracy: the numeric computations and algebraic manipulations in every step are correct.
- logical_coherence: every step follows from the givens, earlier steps and valid geometry theorems.
- conciseness: the solution reaches its result without redundant or irrelevant steps.

Review each reasoning step before scoring. A correct final answer reached through faulty steps must not receive full marks.

Reference solution:
{{reference}}

Model solution:
{{solution}}

Reply with a short justification followed by exactly one fenced block of this form:
```json
{"calculation_accuracy": <0-100>, "logical_coherence": <0-100>, "conciseness": <0-100>}
```
)";
}

std::string load_prompt_template(const JudgeEndpointConfig& cfg) {
  if (cfg.prompt_path.empty()) return default_prompt_template();
  try {
    return read_file(cfg.prompt_path);
  } catch (const std::exception& e) {
    throw EvalError(std::string("cannot load judge prompt: ") + e.what());
  }
}

std::string build_prompt(std::string_view prompt_template, std::string_view solution, std::string_view reference) {
  std::string out(prompt_template);
  auto substitute = [&](const std::string& slot, std::string_view value) {
    for (std::size_t at = out.find(slot); at != std::string::npos; at = out.find(slot, at + value.size()))
      out.replace(at, slot.size(), value);
  };
  substitute("{{solution}}", solution);
  substitute("{{reference}}", reference);
  return out;
}

std::optional<JudgeScores> parse_judge_reply(std::string_view reply) {
  const std::string text(reply);
  std::optional<JudgeScores> fenced;
  for (std::size_t open = text.find("```"); open != std::string::npos;) {
    const std::size_t body = text.find('\n', open);
    if (body == std::string::npos) break;
    const std::size_t close = text.find("```", body);
    if (close == std::string::npos) break;
    try {
      if (auto s = scores_from_object(nlohmann::json::parse(text.substr(body + 1, close - body - 1)))) fenced = s;
    } catch (const nlohmann::json::exception&) {
    }
    open = text.find("```", close + 3);
  }
  if (fenced) return fenced;

  static const std::regex phrase[3] = {
      std::regex(R"(calculation[ _]accuracy\D{0,20}?(\d+(?:\.\d+)?))", std::regex::icase),
      std::regex(R"(logical[ _]coherence\D{0,20}?(\d+(?:\.\d+)?))", std::regex::icase),
      std::regex(R"(conciseness\D{0,20}?(\d+(?:\.\d+)?))", std::regex::icase),
  };
  double v[3];
  for (int i = 0; i < 3; ++i) {
    std::smatch m;
    std::string::const_iterator from = text.begin();
    bool found = false;
    for (std::smatch cur; std::regex_search(from, text.end(), cur, phrase[i]); from = cur[0].second) {
      m = cur;
      found = true;
    }
    if (!found) return std::nullopt;
    v[i] = std::stod(m[1].str());
    if (v[i] > 100) return std::nullopt;
  }
  return JudgeScores{v[0], v[1], v[2], true};
}

// ---- evaluation ----------------------------------------------------------

PesResult pes_evaluate(std::string_view solution, std::string_view reference, Judge& judge,
                       const JudgeEndpointConfig& cfg, PesCache* cache, std::string_view prompt_template) {
  cfg.check();
  const std::string tmpl = prompt_template.empty() ? load_prompt_template(cfg) : std::string(prompt_template);
  const std::string prompt = build_prompt(tmpl, solution, reference);
  const std::string key = content_hash(judge.name() + "\x1f" + prompt);

  auto finish = [](const JudgeScores& s, std::string raw, int attempts, bool cached) {
    PesResult r;
    r.calculation_accuracy = s.calculation_accuracy;
    r.logical_coherence = s.logical_coherence;
    r.conciseness = s.conciseness;
    r.pes = (s.calculation_accuracy + s.logical_coherence + s.conciseness) / 3.0;
    r.low_confidence = s.low_confidence;
    r.raw_reply = std::move(raw);
    r.attempts = attempts;
    r.cached = cached;
    return r;
  };

  if (cache)
    if (auto hit = cache->get(key))
      if (auto s = parse_judge_reply(*hit)) return finish(*s, *hit, 0, true);

  bool transport_failure = false;
  std::string last;
  const int attempts = 1 + cfg.max_retries;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    std::string reply;
    try {
      reply = judge.complete(prompt);
    } catch (const JudgeUnreachable& e) {
      transport_failure = true;
      last = e.what();
      continue;
    }
    transport_failure = false;
    if (auto s = parse_judge_reply(reply)) {
      if (cache) cache->put(key, reply);
      return finish(*s, reply, attempt, false);
    }
    last = reply;
  }
  if (transport_failure)
    throw JudgeUnreachable("judge unreachable after " + std::to_string(attempts) + " attempts: " + last);
  throw UnparseableJudgeReply("judge reply unparseable after " + std::to_string(attempts) + " attempts");
}

PesCorpusReport pes_corpus(const std::vector<PesItem>& items, Judge& judge, const JudgeEndpointConfig& cfg,
                           PesCache* cache) {
  if (items.empty()) throw EmptyCorpus("no items to judge");
  cfg.check();
  const std::string tmpl = load_prompt_template(cfg);
  PesCorpusReport report;
  report.items.resize(items.size());
  std::vector<int> failure(items.size(), 0);  // 1 unparseable, 2 unreachable
  parallel_for(items.size(), static_cast<std::size_t>(cfg.parallelism), [&](std::size_t i) {
    auto& out = report.items[i];
    out.id = items[i].id;
    try {
      out.result = pes_evaluate(items[i].solution, items[i].reference, judge, cfg, cache, tmpl);
    } catch (const UnparseableJudgeReply& e) {
      out.error = e.what();
      failure[i] = 1;
    } catch (const JudgeUnreachable& e) {
      out.error = e.what();
      failure[i] = 2;
    }
  });
  double sums[4] = {0, 0, 0, 0};
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (failure[i] == 1) ++report.unparseable;
    if (failure[i] == 2) ++report.unreachable;
    if (!report.items[i].result) continue;
    const auto& r = *report.items[i].result;
    ++report.scored;
    sums[0] += r.calculation_accuracy;
    sums[1] += r.logical_coherence;
    sums[2] += r.conciseness;
    sums[3] += r.pes;
  }
  if (report.scored) {
    const double n = static_cast<double>(report.scored);
    report.mean_calculation_accuracy = sums[0] / n;
    report.mean_logical_coherence = sums[1] / n;
    report.mean_conciseness = sums[2] / n;
    report.mean_pes = sums[3] / n;
  }
  return report;
}

std::string PesCorpusReport::to_jsonl() const {
  std::string out;
  for (const auto& item : items) {
    json j;
    j["id"] = item.id;
    if (item.result) {
      j[kCriteria[0]] = item.result->calculation_accuracy;
      j[kCriteria[1]] = item.result->logical_coherence;
      j[kCriteria[2]] = item.result->conciseness;
      j["pes"] = item.result->pes;
      j["low_confidence"] = item.result->low_confidence;
    } else {
      j["error"] = item.error;
    }
    out += j.dump() + "\n";
  }
  json s;
  s["scored"] = scored;
  s["unparseable"] = unparseable;
  s["unreachable"] = unreachable;
  s["mean_calculation_accuracy"] = mean_calculation_accuracy;
  s["mean_logical_coherence"] = mean_logical_coherence;
  s["mean_conciseness"] = mean_conciseness;
  s["mean_pes"] = mean_pes;
  out += json{{"summary", s}}.dump() + "\n";
  return out;
}

std::string PesCorpusReport::table() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "items %zu  scored %zu  unparseable %zu  unreachable %zu\n"
                "calculation accuracy %8.2f\nlogical coherence    %8.2f\nconciseness          %8.2f\nPES                  %8.2f\n",
                items.size(), scored, unparseable, unreachable, mean_calculation_accuracy, mean_logical_coherence,
                mean_conciseness, mean_pes);
  return buf;
}

}  // namespace geocdl::eval
