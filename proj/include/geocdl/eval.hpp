#pragma once

// Evaluation: CDL statement-set scoring, answer extraction and accuracy, and
// the process evaluation score obtained from a judge endpoint.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geocdl/cdl.hpp"

namespace geocdl::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class EmptyCorpus : public EvalError {
 public:
  using EvalError::EvalError;
};
class JudgeUnreachable : public EvalError {
 public:
  using EvalError::EvalError;
};
class UnparseableJudgeReply : public EvalError {
 public:
  using EvalError::EvalError;
};

// ---- CDL scoring ---------------------------------------------------------

struct SectionReport {
  double sentence_precision = 0;
  double sentence_recall = 0;
  double sentence_accuracy = 0;  // hits / |pred ∪ gold|, the headline number
  double full_expression_accuracy = 0;
  std::size_t hits = 0;
  std::size_t predicted = 0;
  std::size_t gold = 0;
  std::size_t exact = 0;  // pairs whose section matches as a set
};

struct CdlEvalReport {
  SectionReport cons;
  SectionReport img;
  std::size_t corpus_size = 0;

  std::string to_json() const;
  std::string table() const;
};

struct CdlPair {
  cdl::CdlDocument pred;
  cdl::CdlDocument gold;
};

/// Corpus-level ratios. A ratio with an empty denominator is 100 when the
/// section is empty on both sides across the corpus and 0 otherwise.
CdlEvalReport score_cdl(const std::vector<CdlPair>& pairs);

// ---- answers -------------------------------------------------------------

enum class AnswerMode { Choice, OpenEnded };
std::string_view to_string(AnswerMode mode);
std::optional<AnswerMode> answer_mode_from(std::string_view name);

struct Answer {
  enum class Kind { Letter, Number, NoAnswer } kind = Kind::NoAnswer;
  char letter = 0;
  double value = 0;
  friend bool operator==(const Answer&, const Answer&) = default;
};

/// Choice mode, in priority order, taking the last match of the first
/// pattern family that matches anywhere:
///   1. an answer marker ("answer", "option", "choice", "choose", "select")
///      followed by a letter A-D, optionally parenthesized, or \boxed{B};
///      a lowercase letter counts only when nothing alphanumeric follows it
///      on its line;
///   2. a parenthesized letter "(C)", or a line holding only the letter.
/// Open-ended mode: the last number inside the last \boxed{...}; else the
/// first number after the last "answer" marker; else the last numeric
/// literal. Numbers may be integers, decimals, "a/b" fractions or
/// \frac{a}{b}; degree signs and thousands separators are ignored.
Answer extract_answer(std::string_view output, AnswerMode mode);

struct AnswerRecord {
  std::string id;
  AnswerMode mode = AnswerMode::Choice;
  std::string output;
  char gold_letter = 0;   // choice mode
  double gold_value = 0;  // open-ended mode
  double tolerance = 1e-4;  // relative, with a floor of 1 on |gold|
};

bool is_correct(const AnswerRecord& r, const Answer& a);

struct AnswerScore {
  std::map<AnswerMode, std::size_t> total;
  std::map<AnswerMode, std::size_t> correct;
  std::map<AnswerMode, std::size_t> no_answer;

  /// Percent correct for the mode; nullopt when the mode has no records.
  std::optional<double> accuracy(AnswerMode mode) const;
  double overall() const;
  std::string to_json() const;
  std::string table() const;
};

/// Throws EmptyCorpus when `records` is empty.
AnswerScore score_answers(const std::vector<AnswerRecord>& records);

// ---- process evaluation score --------------------------------------------

struct JudgeEndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4o-mini";
  std::string credential_env = "GEOCDL_JUDGE_API_KEY";
  double timeout_seconds = 60;
  int max_retries = 3;
  int parallelism = 4;
  std::string prompt_path;  // empty uses the built-in rubric

  /// Throws EvalError on a non-positive timeout, negative retries or
  /// parallelism below 1.
  void check() const;
};

/// Keys: base_url, model, credential_env, timeout, max_retries, parallelism,
/// prompt. Throws EvalError on an unknown key or malformed value.
void set_judge_value(JudgeEndpointConfig& cfg, std::string_view key, std::string_view value);
/// Key-value text as for generation configs; a relative prompt path
/// resolves against the config file's directory.
JudgeEndpointConfig load_judge_config(const std::string& path);

/// A chat-completion endpoint. complete() throws JudgeUnreachable on
/// transport failure; implementations are called concurrently.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  /// Identifies the judge in cache keys.
  virtual std::string name() const = 0;
};

/// Deterministic offline judge. With fixed scores it always replies with
/// them; otherwise each score is derived from a hash of the prompt.
class StubJudge : public Judge {
 public:
  StubJudge() = default;
  StubJudge(double calculation, double logic, double conciseness);
  std::string complete(const std::string& prompt) override;
  /// "stub", or "stub:a,b,c" with fixed scores.
  std::string name() const override;
  std::size_t calls() const;

 private:
  std::optional<std::array<double, 3>> fixed_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

/// Replies from a fixed script in order, then repeats the last entry. An
/// entry of "!unreachable" raises JudgeUnreachable for that call.
class ScriptedJudge : public Judge {
 public:
  explicit ScriptedJudge(std::vector<std::string> replies);
  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "scripted"; }
  std::size_t calls() const;

 private:
  std::vector<std::string> replies_;
  mutable std::mutex mu_;
  std::size_t calls_ = 0;
};

/// OpenAI-style POST {base_url}/chat/completions with a bearer token read
/// from the configured environment variable.
class HttpJudge : public Judge {
 public:
  explicit HttpJudge(JudgeEndpointConfig cfg);
  std::string complete(const std::string& prompt) override;
  std::string name() const override { return "http:" + cfg_.base_url + ":" + cfg_.model; }

 private:
  JudgeEndpointConfig cfg_;
};

/// Reply cache keyed by the content hash of (judge name, prompt). Optional
/// JSON-lines persistence; insertions are atomic per key.
class PesCache {
 public:
  PesCache() = default;
  explicit PesCache(std::string path);  // loads existing entries
  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& reply);
  std::size_t size() const;

 private:
  std::string path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

struct JudgeScores {
  double calculation_accuracy = 0;
  double logical_coherence = 0;
  double conciseness = 0;
  bool low_confidence = false;  // recovered from free text, not a fenced block
};

/// Scores from a judge reply: a fenced ```json block holding the three
/// criteria, else "criterion: number" phrases. Scores outside [0,100] or a
/// missing criterion make the reply unparseable.
std::optional<JudgeScores> parse_judge_reply(std::string_view reply);

struct PesResult {
  double calculation_accuracy = 0;
  double logical_coherence = 0;
  double conciseness = 0;
  double pes = 0;
  bool low_confidence = false;
  bool cached = false;
  int attempts = 0;
  std::string raw_reply;
};

/// The rubric prompt with {{solution}} and {{reference}} substituted.
std::string build_prompt(std::string_view prompt_template, std::string_view solution, std::string_view reference);
std::string default_prompt_template();
std::string load_prompt_template(const JudgeEndpointConfig& cfg);

/// Up to 1 + cfg.max_retries judge calls. Throws JudgeUnreachable or
/// UnparseableJudgeReply once retries are spent.
PesResult pes_evaluate(std::string_view solution, std::string_view reference, Judge& judge,
                       const JudgeEndpointConfig& cfg, PesCache* cache = nullptr,
                       std::string_view prompt_template = {});

struct PesItem {
  std::string id;
  std::string solution;
  std::string reference;
};

struct PesItemOutcome {
  std::string id;
  std::optional<PesResult> result;
  std::string error;  // set when result is empty
};

struct PesCorpusReport {
  std::vector<PesItemOutcome> items;  // input order
  std::size_t scored = 0;
  std::size_t unparseable = 0;
  std::size_t unreachable = 0;
  double mean_calculation_accuracy = 0;
  double mean_logical_coherence = 0;
  double mean_conciseness = 0;
  double mean_pes = 0;

  std::string to_jsonl() const;  // one line per item, then a summary line
  std::string table() const;
};

/// Scores items with at most cfg.parallelism concurrent judge calls. Failed
/// items are excluded from the means and counted. Throws EmptyCorpus.
PesCorpusReport pes_corpus(const std::vector<PesItem>& items, Judge& judge, const JudgeEndpointConfig& cfg,
                           PesCache* cache = nullptr);

}  // namespace geocdl::eval
