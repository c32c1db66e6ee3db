// geocdl: command-line front end for generation, rendering, validation,
// perturbation and evaluation.
//
// Exit status: 0 success, 1 domain error, 2 usage error.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geocdl/cdl.hpp"
#include "geocdl/dataset.hpp"
#include "geocdl/eval.hpp"
#include "geocdl/kernel.hpp"
#include "geocdl/render.hpp"
#include "geocdl/templates.hpp"
#include "geocdl/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace geocdl;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DomainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;
  bool verbose = false;
};

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") {
    std::ostringstream ss;
    ss << std::cin.rdbuf();
    return ss.str();
  }
  if (!fs::exists(path)) throw DomainError("cannot read " + path);
  return read_file(path);
}

void write_output(const std::string& path, std::string_view content) {
  if (path.empty() || path == "-") {
    std::cout << content;
    return;
  }
  write_file(path, content);
}

std::vector<json> read_jsonl(const std::string& path) {
  std::vector<json> rows;
  std::istringstream in(read_input(path));
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (trim(line).empty()) continue;
    try {
      rows.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw DomainError((path.empty() ? std::string("<stdin>") : path) + ":" + std::to_string(n) +
                        ": malformed JSON line");
    }
  }
  return rows;
}

std::string field(const json& row, const char* key, std::size_t n) {
  if (!row.contains(key) || !row[key].is_string())
    throw DomainError("line " + std::to_string(n) + ": missing string field '" + key + "'");
  return row[key].get<std::string>();
}

std::string positioned(const std::string& name, const cdl::ParseError& e) {
  std::string_view detail = e.what();
  if (const auto at = detail.find(": "); at != std::string_view::npos) detail.remove_prefix(at + 2);
  return name + ":" + std::to_string(e.line()) + ":" + std::to_string(e.column()) + ": " +
         std::string(cdl::to_string(e.kind())) + ": " + std::string(detail);
}

// Config keys surfaced as --dashed-flags. Booleans become --key / --no-key.
struct ConfigFlag {
  const char* key;
  const char* type;
  const char* help;
};

constexpr ConfigFlag kGenerateFlags[] = {
    {"library", "FILE", "Template library file"},
    {"samples", "INT", "Instantiations per template"},
    {"rotations", "LIST", "Comma-separated rotation angles in degrees"},
    {"output", "DIR", "Output directory"},
    {"splits", "LIST", "Train, val and test fractions, comma-separated"},
    {"workers", "INT", "Worker threads"},
    {"max_records", "INT", "Keep at most this many unique records (0 keeps all)"},
    {"audit_fraction", "FLOAT", "Fraction of records re-checked against their figure"},
    {"nonconvergence_budget", "FLOAT", "Largest tolerated fraction of unsolved instantiations"},
    {"templates", "LIST", "Comma-separated template ids (default: whole library)"},
};

constexpr ConfigFlag kStyleFlags[] = {
    {"canvas", "INT", "Canvas size in pixels"},
    {"margin", "FLOAT", "Canvas margin in pixels"},
    {"stroke_width", "FLOAT", "Stroke width in pixels"},
    {"point_radius", "FLOAT", "Point marker radius in pixels"},
    {"font_size", "FLOAT", "Label font size in pixels"},
    {"label_offset", "FLOAT", "Label distance from its point in pixels"},
    {"background", "COLOR", "Background color"},
};

std::string dashed(std::string key) {
  for (auto& c : key)
    if (c == '_') c = '-';
  return "--" + key;
}

struct Overrides {
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::map<std::string, bool> switches;

  void add(CLI::App& app, const ConfigFlag& f, const char* group) {
    options[f.key] = app.add_option(dashed(f.key), values[f.key], f.help)->type_name(f.type)->group(group);
  }
  void add_switch(CLI::App& app, const char* key, const char* help, const char* group) {
    const std::string flag = dashed(key);
    options[key] = app.add_flag(flag + ",!--no-" + flag.substr(2), switches[key], help)->group(group);
  }
  void apply(dataset::GenerationConfig& cfg) const {
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (auto it = switches.find(key); it != switches.end())
        dataset::set_config_value(cfg, key, it->second ? "on" : "off");
      else
        dataset::set_config_value(cfg, key, values.at(key));
    }
  }
};

void add_style_flags(CLI::App& app, Overrides& o) {
  for (const auto& f : kStyleFlags) o.add(app, f, "Style");
  o.add_switch(app, "monochrome", "Draw every element in black", "Style");
}

// ---- generate ------------------------------------------------------------

struct GenerateArgs {
  std::string config;
  Overrides overrides;
};

int run_generate(const GenerateArgs& a, const Globals& g) {
  dataset::GenerationConfig cfg = a.config.empty() ? dataset::GenerationConfig{} : dataset::load_config(a.config);
  a.overrides.apply(cfg);
  if (g.seed_opt->count()) cfg.seed = g.seed;
  cfg.check();
  const auto result = dataset::generate(cfg);
  const auto& s = result.summary;
  if (g.verbose)
    for (const auto& line : result.log) std::cerr << line << "\n";
  std::cerr << "generated " << s.records << " records from " << s.converged << "/" << s.attempted
            << " solved instantiations (" << s.duplicates << " duplicates, " << s.audit_failures
            << " audit failures) into " << cfg.output << "\n";
  std::cout << s.to_json();
  if (s.budget_exceeded) {
    std::cerr << "error: non-convergence budget exceeded\n";
    return 1;
  }
  return 0;
}

// ---- render --------------------------------------------------------------

struct RenderArgs {
  std::string figure;
  std::string cdl;
  std::string template_id;
  std::string library = "data/starter_library.txt";
  double rotation = 0;
  std::string output;
  std::string png;
  std::string save_figure;
  Overrides overrides;
};

int run_render(const RenderArgs& a, const Globals& g) {
  if (a.figure.empty() == a.template_id.empty()) throw UsageError("render needs exactly one of --figure or --template");
  dataset::GenerationConfig cfg;
  a.overrides.apply(cfg);
  try {
    cfg.style.check();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  kernel::Figure figure;
  cdl::CdlDocument doc;
  if (!a.template_id.empty()) {
    const auto lib = templates::load_library(a.library);
    const auto* t = lib.find(a.template_id);
    if (!t) throw DomainError("library has no template '" + a.template_id + "'");
    auto r = dataset::realize(*t, g.seed);
    if (!r.figure) throw DomainError("template '" + a.template_id + "' did not converge");
    figure = std::move(*r.figure);
    doc = r.inst.doc;
    if (g.verbose) std::cerr << r.inst.caption << "\n";
  } else {
    figure = kernel::deserialize_figure(read_input(a.figure));
  }
  if (!a.cdl.empty()) {
    try {
      doc = cdl::parse(read_input(a.cdl), {.require_label_closure = false});
    } catch (const cdl::ParseError& e) {
      throw DomainError(positioned(a.cdl, e));
    }
  }
  if (a.rotation != 0) figure = kernel::rotate(figure, a.rotation);
  if (!a.save_figure.empty()) write_file(a.save_figure, kernel::serialize(figure));

  const auto svg = render::render_vector(figure, doc, cfg.style);
  if (!a.png.empty()) {
    const auto bytes = render::rasterize(svg, cfg.style);
    write_file(a.png, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
  if (!a.output.empty() || a.png.empty()) write_output(a.output, svg);
  return 0;
}

// ---- validate ------------------------------------------------------------

struct ValidateArgs {
  std::string input;
  bool lenient = false;
  std::string library;
  std::string output;
};

int run_validate(const ValidateArgs& a, const Globals& g) {
  if (!a.library.empty()) {
    try {
      const auto lib = templates::load_library(a.library);
      for (const auto& w : lib.warnings) std::cerr << a.library << ": warning: " << w << "\n";
      for (const auto& t : lib.templates) templates::validate(t);
      std::cerr << a.library << ": " << lib.templates.size() << " templates ok\n";
      if (g.verbose) write_output(a.output, templates::print_library(lib.templates));
    } catch (const templates::TemplateError& e) {
      std::cerr << a.library << ":" << e.line() << ": " << templates::to_string(e.kind()) << ": " << e.what()
                << "\n";
      return 1;
    }
    return 0;
  }
  const std::string name = a.input.empty() || a.input == "-" ? "<stdin>" : a.input;
  const auto text = read_input(a.input);
  try {
    const auto doc = cdl::parse(text, {.require_label_closure = !a.lenient});
    write_output(a.output, cdl::print(doc));
    if (g.verbose)
      std::cerr << name << ": " << doc.cons().size() << " cons, " << doc.img().size() << " img statements\n";
  } catch (const cdl::ParseError& e) {
    std::cerr << positioned(name, e) << "\n";
    return 1;
  }
  return 0;
}

// ---- perturb -------------------------------------------------------------

struct PerturbArgs {
  std::string input;
  std::string output;
  std::string log;
  dataset::PerturbationSpec spec;
};

int run_perturb(PerturbArgs a, const Globals& g) {
  a.spec.seed = g.seed;
  a.spec.check();
  std::string out, log;
  std::size_t statements = 0, edits = 0;
  if (a.input.ends_with(".jsonl")) {
    for (const auto& r : dataset::read_manifest(a.input)) {
      const auto gold = dataset::record_document(r);
      auto spec = a.spec;
      spec.seed = derive_seed(g.seed, r.id);
      const auto res = dataset::perturb(gold, spec);
      json row;
      row["id"] = r.id;
      row["prediction"] = cdl::print(res.doc);
      row["gold"] = cdl::print(gold);
      out += row.dump() + "\n";
      json edit_row;
      edit_row["id"] = r.id;
      edit_row["edits"] = json::array();
      for (const auto& e : res.log) edit_row["edits"].push_back(json::parse(dataset::edit_to_json(e)));
      log += edit_row.dump() + "\n";
      statements += gold.statements().size();
      edits += res.log.size();
    }
  } else {
    const std::string name = a.input.empty() || a.input == "-" ? "<stdin>" : a.input;
    cdl::CdlDocument doc;
    try {
      doc = cdl::parse(read_input(a.input), {.require_label_closure = false});
    } catch (const cdl::ParseError& e) {
      throw DomainError(positioned(name, e));
    }
    const auto res = dataset::perturb(doc, a.spec);
    out = cdl::print(res.doc);
    for (const auto& e : res.log) log += dataset::edit_to_json(e) + "\n";
    statements = doc.statements().size();
    edits = res.log.size();
  }
  write_output(a.output, out);
  if (!a.log.empty()) write_file(a.log, log);
  if (g.verbose) std::cerr << edits << " edits over " << statements << " statements\n";
  return 0;
}

// ---- evaluation reports --------------------------------------------------

// With --report the JSON lines go to the file and the table to stdout;
// otherwise the JSON lines go to stdout and the table to stderr.
void emit_report(const std::string& report, const std::string& jsonl, const std::string& table) {
  if (report.empty()) {
    std::cout << jsonl;
    std::cerr << table;
  } else {
    write_file(report, jsonl);
    std::cout << table;
  }
}

struct EvalCdlArgs {
  std::string input;
  std::string report;
};

int run_eval_cdl(const EvalCdlArgs& a, const Globals& g) {
  const auto rows = read_jsonl(a.input);
  std::vector<eval::CdlPair> pairs;
  std::size_t unparseable = 0;
  const cdl::ParseOptions lenient{.require_label_closure = false};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto id = rows[i].value("id", std::to_string(i + 1));
    eval::CdlPair p;
    try {
      p.gold = cdl::parse(field(rows[i], "gold", i + 1), lenient);
    } catch (const cdl::ParseError& e) {
      throw DomainError(positioned(id + " gold", e));
    }
    try {
      p.pred = cdl::parse(field(rows[i], "prediction", i + 1), lenient);
    } catch (const cdl::ParseError& e) {
      ++unparseable;
      if (g.verbose) std::cerr << positioned(id + " prediction", e) << "\n";
    }
    pairs.push_back(std::move(p));
  }
  const auto report = eval::score_cdl(pairs);
  auto j = json::parse(report.to_json());
  j["unparseable_predictions"] = unparseable;
  emit_report(a.report, j.dump() + "\n",
              report.table() + "unparseable predictions: " + std::to_string(unparseable) + "\n");
  return 0;
}

struct EvalAnswersArgs {
  std::string input;
  std::string report;
  double tolerance = 1e-4;
};

int run_eval_answers(const EvalAnswersArgs& a, const Globals&) {
  const auto rows = read_jsonl(a.input);
  std::vector<eval::AnswerRecord> records;
  std::string jsonl;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& row = rows[i];
    eval::AnswerRecord r;
    r.id = row.value("id", std::to_string(i + 1));
    const auto mode = eval::answer_mode_from(field(row, "mode", i + 1));
    if (!mode) throw DomainError("line " + std::to_string(i + 1) + ": mode must be 'choice' or 'open-ended'");
    r.mode = *mode;
    r.output = field(row, "prediction", i + 1);
    r.tolerance = row.value("tolerance", a.tolerance);
    const json& gold = row.contains("gold") ? row["gold"] : json();
    if (r.mode == eval::AnswerMode::Choice) {
      const auto s = gold.is_string() ? gold.get<std::string>() : "";
      if (s.size() != 1 || s[0] < 'A' || s[0] > 'D')
        throw DomainError("line " + std::to_string(i + 1) + ": choice gold must be one of A-D");
      r.gold_letter = s[0];
    } else if (gold.is_number()) {
      r.gold_value = gold.get<double>();
    } else {
      const auto s = gold.is_string() ? gold.get<std::string>() : "";
      const auto parsed = eval::extract_answer(s, eval::AnswerMode::OpenEnded);
      if (parsed.kind != eval::Answer::Kind::Number)
        throw DomainError("line " + std::to_string(i + 1) + ": open-ended gold must be numeric");
      r.gold_value = parsed.value;
    }
    const auto extracted = eval::extract_answer(r.output, r.mode);
    json item;
    item["id"] = r.id;
    item["mode"] = eval::to_string(r.mode);
    if (extracted.kind == eval::Answer::Kind::Letter) item["extracted"] = std::string(1, extracted.letter);
    else if (extracted.kind == eval::Answer::Kind::Number) item["extracted"] = extracted.value;
    else item["extracted"] = nullptr;
    item["correct"] = eval::is_correct(r, extracted);
    jsonl += item.dump() + "\n";
    records.push_back(std::move(r));
  }
  const auto score = eval::score_answers(records);
  emit_report(a.report, jsonl + score.to_json() + "\n", score.table());
  return 0;
}

struct EvalPesArgs {
  std::string input;
  std::string judge = "stub";
  std::string config;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
  std::string cache;
  std::string report;
};

int run_eval_pes(const EvalPesArgs& a, const Globals& g) {
  eval::JudgeEndpointConfig cfg;
  try {
    if (!a.config.empty()) cfg = eval::load_judge_config(a.config);
    for (const auto& [key, opt] : a.options)
      if (opt->count()) eval::set_judge_value(cfg, key, a.values.at(key));
    cfg.check();
  } catch (const eval::EvalError& e) {
    throw UsageError(e.what());
  }

  const auto rows = read_jsonl(a.input);
  std::vector<eval::PesItem> items;
  for (std::size_t i = 0; i < rows.size(); ++i)
    items.push_back({rows[i].value("id", std::to_string(i + 1)), field(rows[i], "solution", i + 1),
                     field(rows[i], "reference", i + 1)});

  std::unique_ptr<eval::Judge> judge;
  if (a.judge == "http") judge = std::make_unique<eval::HttpJudge>(cfg);
  else judge = std::make_unique<eval::StubJudge>();
  std::optional<eval::PesCache> cache;
  if (!a.cache.empty()) cache.emplace(a.cache);

  const auto report = eval::pes_corpus(items, *judge, cfg, cache ? &*cache : nullptr);
  if (g.verbose)
    for (const auto& it : report.items)
      if (!it.result) std::cerr << it.id << ": " << it.error << "\n";
  emit_report(a.report, report.to_jsonl(), report.table());
  return report.scored > 0 ? 0 : 1;
}

// ---- library-stats -------------------------------------------------------

struct StatsArgs {
  std::string library = "data/starter_library.txt";
};

int run_library_stats(const StatsArgs& a, const Globals&) {
  const auto lib = templates::load_library(a.library);
  for (const auto& w : lib.warnings) std::cerr << a.library << ": warning: " << w << "\n";
  const auto s = templates::library_stats(lib.templates);
  json j;
  j["templates"] = s.templates;
  j["parametric"] = s.parametric;
  j["primitive_kinds"] = s.primitive_kinds;
  json by = json::object();
  for (const auto& [n, c] : s.by_primitive_count) by[std::to_string(n)] = c;
  j["by_primitive_count"] = by;
  j["relation_kinds"] = s.relation_kinds;
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic geometry diagrams with formal CDL annotations, and their evaluation."};
  app.name("geocdl");
  app.require_subcommand(1);
  app.fallthrough();
  app.get_formatter()->column_width(40);

  Globals g;
  g.seed_opt = app.add_option("--seed", g.seed, "Root seed for all randomness")->default_val(0);
  app.add_flag("-v,--verbose", g.verbose, "Print per-item diagnostics to standard error");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "Generate a dataset: images, figures, manifest and splits");
  generate->add_option("--config", gen.config, "Generation config file; flags override its values")
      ->check(CLI::ExistingFile);
  for (const auto& f : kGenerateFlags) gen.overrides.add(*generate, f, "Config overrides");
  gen.overrides.add_switch(*generate, "raster", "Also write PNG images", "Config overrides");
  add_style_flags(*generate, gen.overrides);

  RenderArgs ren;
  auto* render = app.add_subcommand("render", "Render one figure to SVG (and optionally PNG)");
  auto* figure_opt = render->add_option("--figure", ren.figure, "Figure file written by generate (.fig)");
  render->add_option("--template", ren.template_id, "Instantiate and solve this template with --seed")
      ->excludes(figure_opt);
  render->add_option("--library", ren.library, "Template library file")->capture_default_str();
  render->add_option("--cdl", ren.cdl, "CDL document supplying right-angle marks");
  render->add_option("--rotation", ren.rotation, "Rotate the figure by this many degrees")->capture_default_str();
  render->add_option("-o,--output", ren.output, "SVG output file (default: standard output)");
  render->add_option("--png", ren.png, "PNG output file");
  render->add_option("--save-figure", ren.save_figure, "Also write the (rotated) figure file");
  add_style_flags(*render, ren.overrides);

  ValidateArgs val;
  auto* validate = app.add_subcommand("validate", "Check a CDL document and print its canonical form");
  validate->add_option("-i,--input", val.input, "CDL file (default: standard input)");
  validate->add_flag("--lenient", val.lenient, "Accept img statements over labels no cons statement declares");
  validate->add_option("--library", val.library, "Validate a template library instead");
  validate->add_option("-o,--output", val.output, "Output file (default: standard output)");

  PerturbArgs per;
  auto* perturb = app.add_subcommand("perturb", "Drop, mutate and insert statements of a CDL document or manifest");
  perturb->add_option("-i,--input", per.input, "CDL file, or a .jsonl manifest (default: standard input)");
  perturb->add_option("-o,--output", per.output, "Perturbed output (default: standard output)");
  perturb->add_option("--log", per.log, "Edit log file (JSON lines)");
  perturb->add_option("--drop", per.spec.drop, "Drop probability per statement")->capture_default_str();
  perturb->add_option("--mutate", per.spec.mutate, "Mutation probability per statement")->capture_default_str();
  perturb->add_option("--insert", per.spec.insert, "Spurious insertion probability per statement")
      ->capture_default_str();

  EvalCdlArgs ecdl;
  auto* eval_cdl = app.add_subcommand("eval-cdl", "Score predicted CDL against gold CDL");
  eval_cdl->add_option("-i,--input", ecdl.input, "JSON lines with id, prediction, gold (default: standard input)");
  eval_cdl->add_option("--report", ecdl.report, "Write the JSON report here and the table to standard output");

  EvalAnswersArgs eans;
  auto* eval_answers = app.add_subcommand("eval-answers", "Extract and score final answers");
  eval_answers->add_option("-i,--input", eans.input,
                           "JSON lines with id, mode, prediction, gold (default: standard input)");
  eval_answers->add_option("--tolerance", eans.tolerance, "Relative tolerance for numeric answers")
      ->capture_default_str();
  eval_answers->add_option("--report", eans.report, "Write the JSON report here and the table to standard output");

  EvalPesArgs epes;
  auto* eval_pes = app.add_subcommand("eval-pes", "Score reasoning with a judge (process evaluation score)");
  eval_pes->add_option("-i,--input", epes.input,
                       "JSON lines with id, solution, reference (default: standard input)");
  eval_pes->add_option("--judge", epes.judge, "Judge backend")
      ->check(CLI::IsMember({"stub", "http"}))
      ->capture_default_str();
  eval_pes->add_option("--config", epes.config, "Judge endpoint config file; flags override its values")
      ->check(CLI::ExistingFile);
  for (const auto& [flag, key, type, help] :
       {std::tuple{"--base-url", "base_url", "URL", "Chat-completion endpoint base URL"},
        std::tuple{"--model", "model", "NAME", "Judge model name"},
        std::tuple{"--credential-env", "credential_env", "VAR", "Environment variable holding the API key"},
        std::tuple{"--timeout", "timeout", "SECONDS", "Request timeout in seconds"},
        std::tuple{"--retries", "max_retries", "INT", "Retries after a failed or unparseable reply"},
        std::tuple{"--parallelism", "parallelism", "INT", "Concurrent judge requests"},
        std::tuple{"--prompt", "prompt", "FILE", "Rubric prompt template file"}})
    epes.options[key] = eval_pes->add_option(flag, epes.values[key], help)->type_name(type)->group("Judge endpoint");
  eval_pes->add_option("--cache", epes.cache, "Reply cache file (JSON lines), reused across runs");
  eval_pes->add_option("--report", epes.report, "Write the JSON report here and the table to standard output");

  StatsArgs stats;
  auto* library_stats = app.add_subcommand("library-stats", "Summarize a template library");
  library_stats->add_option("--library", stats.library, "Template library file")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*generate) return run_generate(gen, g);
    if (*render) return run_render(ren, g);
    if (*validate) return run_validate(val, g);
    if (*perturb) return run_perturb(per, g);
    if (*eval_cdl) return run_eval_cdl(ecdl, g);
    if (*eval_answers) return run_eval_answers(eans, g);
    if (*eval_pes) return run_eval_pes(epes, g);
    if (*library_stats) return run_library_stats(stats, g);
  } catch (const dataset::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
