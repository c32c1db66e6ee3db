#include <doctest.h>

#include <filesystem>
#include <set>

#include "geocdl/dataset.hpp"
#include "geocdl/kernel.hpp"
#include "geocdl/templates.hpp"
#include "geocdl/util.hpp"

using namespace geocdl;
using namespace geocdl::dataset;
namespace fs = std::filesystem;

namespace {

const std::string kLibrary = std::string(GEOCDL_DATA_DIR) + "/starter_library.txt";

const templates::Library& starter() {
  static const templates::Library lib = templates::load_library(kLibrary);
  return lib;
}

std::string scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("geocdl_dataset_" + name);
  fs::remove_all(dir);
  return dir.string();
}

GenerationConfig small_config(const std::string& out) {
  GenerationConfig cfg;
  cfg.library = kLibrary;
  cfg.samples = 3;
  cfg.output = out;
  cfg.templates = {"square-plain", "triangle-side-angle", "triangle-in-circle", "trapezoid-midpoints", "chord-with-point"};
  return cfg;
}

ConfigError config_error(std::string_view text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e;
  }
  FAIL("expected a config error");
  return ConfigError("");
}

// Documents from the starter library, one per (template, seed).
std::vector<cdl::CdlDocument> corpus(std::size_t seeds) {
  std::vector<cdl::CdlDocument> docs;
  for (const auto& t : starter().templates)
    for (std::size_t s = 0; s < seeds; ++s) docs.push_back(templates::instantiate(t, derive_seed(7, s)).doc);
  return docs;
}

}  // namespace

// ---- config --------------------------------------------------------------

TEST_CASE("config: defaults validate and print/parse round-trips") {
  GenerationConfig cfg;
  CHECK_NOTHROW(cfg.check());
  cfg.samples = 4;
  cfg.rotations = {0, 45.5};
  cfg.templates = {"a", "b"};
  cfg.raster = true;
  cfg.style.monochrome = true;
  cfg.seed = 123456789012345ULL;
  const auto again = parse_config(print_config(cfg));
  CHECK(print_config(again) == print_config(cfg));
  CHECK(again.rotations == cfg.rotations);
  CHECK(again.templates == cfg.templates);
  CHECK(again.seed == cfg.seed);
}

TEST_CASE("config: invalid values are rejected") {
  CHECK_THROWS_AS(parse_config("samples = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("workers = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("splits = 0.5, 0.5, 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("splits = 0.5, 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("rotations =\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("audit_fraction = 1.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("raster = maybe\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("canvas = 40\nmargin = 30\n"), ConfigError);
  CHECK(std::string(config_error("colour = red\n").what()).find("colour") != std::string::npos);
  CHECK(std::string(config_error("# c\n\nsamples 3\n").what()).find("line 3") != std::string::npos);
}

TEST_CASE("config: relative paths resolve against the config directory") {
  const auto cfg = parse_config("library = lib.txt\noutput = out\n", "/srv/run");
  CHECK(fs::path(cfg.library) == fs::path("/srv/run/lib.txt"));
  CHECK(fs::path(cfg.output) == fs::path("/srv/run/out"));
  CHECK(parse_config("library = /abs/lib.txt\n", "/srv/run").library == "/abs/lib.txt");
}

TEST_CASE("config: overrides use the file syntax") {
  GenerationConfig cfg;
  set_config_value(cfg, "rotations", "0, 30");
  set_config_value(cfg, "monochrome", "on");
  CHECK(cfg.rotations == std::vector<double>{0, 30});
  CHECK(cfg.style.monochrome);
  CHECK_THROWS_AS(set_config_value(cfg, "nope", "1"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "samples", "three"), ConfigError);
}

// ---- ids and manifest ----------------------------------------------------

TEST_CASE("rotation buckets quantize to 15 degrees") {
  CHECK(rotation_bucket(0) == 0);
  CHECK(rotation_bucket(7.4) == 0);
  CHECK(rotation_bucket(7.6) == 1);
  CHECK(rotation_bucket(90) == 6);
  CHECK(rotation_bucket(359) == 0);
  CHECK(rotation_bucket(-90) == 18);
  CHECK(rotation_bucket(450) == 6);
}

TEST_CASE("record ids depend on the document and the rotation bucket only") {
  const auto doc = cdl::parse("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),3)\n");
  const auto same = cdl::parse("Equal(LengthOfLine(BA),3)\nShape(CA,AB,BC)\n");
  CHECK(record_id(doc, 0) == record_id(same, 0));
  CHECK(record_id(doc, 0) == record_id(doc, 3));
  CHECK(record_id(doc, 0) != record_id(doc, 90));
  CHECK(record_id(doc, 0).size() == 32);
  CHECK(record_id(doc, 0) != record_id(cdl::parse("Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),4)\n"), 0));
}

TEST_CASE("manifest lines round-trip and keep their field order") {
  DatasetRecord r{"0123", "t", 18446744073709551615ULL, 90, "images/t/0123.svg", "", "figures/t/0123.fig",
                  "Shape(AB,BC,CA)\n", "Equal(LengthOfLine(AB),3)\n", "A \"quoted\" caption."};
  const auto line = to_json_line(r);
  CHECK(line.find("raster_path") == std::string::npos);
  CHECK(line.find("\"id\"") < line.find("\"template_id\""));
  CHECK(line.find("\"figure_path\"") < line.find("\"cons_cdl\""));
  CHECK(record_from_json(line) == r);
  r.raster_path = "images/t/0123.png";
  CHECK(record_from_json(to_json_line(r)) == r);
  CHECK(cdl::print(record_document(r)) == "Shape(AB,BC,CA)\nEqual(LengthOfLine(AB),3)\n");
}

// ---- generation ----------------------------------------------------------

TEST_CASE("generate: records are unique, re-parse and point at existing files") {
  const auto out = scratch("basic");
  const auto cfg = small_config(out);
  const auto res = generate(cfg);
  const auto& s = res.summary;
  CHECK(s.attempted == 15);
  CHECK(s.converged == 15);
  CHECK(s.candidates == 60);
  CHECK(s.records + s.duplicates + s.audit_failures == s.candidates);
  CHECK(s.records == res.manifest.size());
  CHECK(s.vector_only);
  CHECK_FALSE(s.budget_exceeded);

  std::set<std::string> ids;
  for (std::size_t i = 0; i < res.manifest.size(); ++i) {
    const auto& r = res.manifest[i];
    if (i) CHECK(res.manifest[i - 1].id < r.id);
    ids.insert(r.id);
    CHECK(r.raster_path.empty());
    CHECK(fs::exists(fs::path(out) / r.image_path));
    CHECK(fs::exists(fs::path(out) / r.figure_path));
    const auto doc = record_document(r);
    CHECK(record_id(doc, r.rotation) == r.id);
    const auto inst = templates::instantiate(*starter().find(r.template_id), r.seed);
    CHECK(cdl::print(inst.doc) == cdl::print(doc));
    CHECK(inst.caption == r.caption);
    const auto fig = kernel::deserialize_figure(read_file((fs::path(out) / r.figure_path).string()));
    CHECK(kernel::verify(fig, doc).empty());
  }
  CHECK(ids.size() == res.manifest.size());
  CHECK(read_manifest((fs::path(out) / "manifest.jsonl").string()) == res.manifest);
  for (const char* f : {"train.jsonl", "val.jsonl", "test.jsonl", "summary.json", "generation.log", "config.cfg"})
    CHECK(fs::exists(fs::path(out) / f));
  CHECK(print_config(load_config((fs::path(out) / "config.cfg").string())) == print_config(cfg));
}

TEST_CASE("generate: the manifest is independent of the worker count") {
  auto one = small_config(scratch("w1"));
  auto four = small_config(scratch("w4"));
  one.workers = 1;
  four.workers = 4;
  const auto a = generate(one);
  const auto b = generate(four);
  CHECK(a.manifest == b.manifest);
  CHECK(a.log == b.log);
  CHECK(read_file(one.output + "/manifest.jsonl") == read_file(four.output + "/manifest.jsonl"));
  CHECK(read_file(one.output + "/train.jsonl") == read_file(four.output + "/train.jsonl"));
  for (const auto& r : a.manifest)
    CHECK(read_file(one.output + "/" + r.image_path) == read_file(four.output + "/" + r.image_path));
}

TEST_CASE("generate: seed changes the corpus") {
  auto a = small_config(scratch("s0"));
  auto b = small_config(scratch("s1"));
  b.seed = 1;
  CHECK(generate(a).manifest != generate(b).manifest);
}

TEST_CASE("generate: max_records caps the unique records") {
  auto cfg = small_config(scratch("cap"));
  cfg.max_records = 7;
  const auto res = generate(cfg);
  CHECK(res.manifest.size() == 7);
  CHECK(res.summary.capped > 0);
  CHECK(res.summary.split_sizes[0] + res.summary.split_sizes[1] + res.summary.split_sizes[2] == 7);
}

TEST_CASE("generate: full audit finds no inconsistencies") {
  auto cfg = small_config(scratch("audit"));
  cfg.audit_fraction = 1.0;
  const auto res = generate(cfg);
  CHECK(res.summary.audited == res.summary.candidates - res.summary.duplicates);
  CHECK(res.summary.audit_failures == 0);
}

TEST_CASE("generate: unknown templates and unwritable output are reported") {
  auto cfg = small_config(scratch("bad"));
  cfg.templates = {"no-such-template"};
  CHECK_THROWS_AS(generate(cfg), LibraryLoadError);
  cfg = small_config(scratch("bad"));
  cfg.library = "/nonexistent/library.txt";
  CHECK_THROWS_AS(generate(cfg), LibraryLoadError);
  cfg = small_config("/proc/geocdl-not-writable");
  CHECK_THROWS_AS(generate(cfg), OutputNotWritable);
}

TEST_CASE("realize re-seeds after non-convergence") {
  const auto& t = *starter().find("square-plain");
  const auto r = realize(t, 42);
  REQUIRE(r.figure);
  CHECK(r.rejections == 0);
  CHECK(r.seed == 42);
  CHECK(kernel::verify(*r.figure, r.inst.doc).empty());
}

// ---- splits --------------------------------------------------------------

TEST_CASE("splits partition the manifest per template") {
  const auto res = generate(small_config(scratch("splits")));
  const auto sp = split(res.manifest, {0.8, 0.1, 0.1}, 0);
  CHECK(sp.train.size() + sp.val.size() + sp.test.size() == res.manifest.size());
  std::set<std::string> seen;
  for (const auto* part : {&sp.train, &sp.val, &sp.test})
    for (const auto& r : *part) CHECK(seen.insert(r.id).second);
  CHECK(seen.size() == res.manifest.size());

  std::map<std::string, std::array<std::size_t, 3>> per;
  for (const auto& r : sp.train) ++per[r.template_id][0];
  for (const auto& r : sp.val) ++per[r.template_id][1];
  for (const auto& r : sp.test) ++per[r.template_id][2];
  for (const auto& [id, n] : per) {
    const std::size_t total = n[0] + n[1] + n[2];
    CHECK(n[1] >= 1);
    CHECK(n[2] >= 1);
    CHECK(std::abs(static_cast<double>(n[0]) - 0.8 * static_cast<double>(total)) <= 2.0);
  }
  const auto again = split(res.manifest, {0.8, 0.1, 0.1}, 0);
  CHECK(again.train == sp.train);
  CHECK(again.test == sp.test);
  CHECK(split(res.manifest, {0.8, 0.1, 0.1}, 9).train != sp.train);
}

TEST_CASE("splits with a zero fraction leave that split empty") {
  const auto res = generate(small_config(scratch("splits0")));
  const auto sp = split(res.manifest, {1.0, 0.0, 0.0}, 3);
  CHECK(sp.train.size() == res.manifest.size());
  CHECK(sp.val.empty());
  CHECK(sp.test.empty());
}

// ---- perturbation --------------------------------------------------------

TEST_CASE("perturb: rate validation") {
  CHECK_THROWS_AS((PerturbationSpec{-0.1, 0, 0, 0}.check()), ConfigError);
  CHECK_THROWS_AS((PerturbationSpec{0.7, 0, 0.4, 0}.check()), ConfigError);
  CHECK_THROWS_AS((PerturbationSpec{0, 1.5, 0, 0}.check()), ConfigError);
  CHECK_NOTHROW((PerturbationSpec{1, 1, 0, 0}.check()));
}

TEST_CASE("perturb: zero rates are the identity, drop rate one empties the document") {
  for (const auto& doc : corpus(2)) {
    const auto same = perturb(doc, {0, 0, 0, 5});
    CHECK(same.log.empty());
    CHECK(same.doc == doc);
    const auto gone = perturb(doc, {1, 0, 0, 5});
    CHECK(gone.doc.statements().empty());
    CHECK(gone.log.size() == doc.statements().size());
  }
}

TEST_CASE("perturb: output parses leniently and every log replays") {
  std::size_t mutations = 0, inserts = 0;
  std::uint64_t seed = 0;
  for (const auto& doc : corpus(5)) {
    const auto res = perturb(doc, {0.2, 0.2, 0.3, ++seed});
    CHECK(cdl::parse(cdl::print(res.doc), {.require_label_closure = false}) == res.doc);
    CHECK(replay(doc, res.log) == res.doc);
    std::vector<Edit> decoded;
    for (const auto& e : res.log) decoded.push_back(edit_from_json(edit_to_json(e)));
    CHECK(decoded == res.log);
    CHECK(replay(doc, decoded) == res.doc);
    for (const auto& e : res.log) {
      if (e.kind == EditKind::Mutate) {
        ++mutations;
        REQUIRE(e.before);
        REQUIRE(e.after);
        CHECK(*e.before != *e.after);
        CHECK_FALSE(cdl::validate(*e.after));
      }
      if (e.kind == EditKind::Insert) {
        ++inserts;
        REQUIRE(e.after);
        CHECK_FALSE(doc.contains(*e.after));
        for (const auto& l : cdl::labels_of(*e.after)) CHECK(doc.labels().count(l) == 1);
      }
    }
  }
  CHECK(mutations > 50);
  CHECK(inserts > 50);
}

TEST_CASE("perturb: deterministic per seed") {
  const auto doc = corpus(1)[10];
  CHECK(perturb(doc, {0.3, 0.3, 0.3, 11}).log == perturb(doc, {0.3, 0.3, 0.3, 11}).log);
}

TEST_CASE("perturb: observed drop fraction tracks the drop rate") {
  std::size_t statements = 0, drops = 0;
  std::uint64_t seed = 100;
  const auto docs = corpus(30);
  for (const auto& doc : docs) {
    const auto res = perturb(doc, {0.2, 0, 0, ++seed});
    statements += doc.statements().size();
    for (const auto& e : res.log) drops += e.kind == EditKind::Drop;
  }
  REQUIRE(statements >= 10000);
  const double frac = static_cast<double>(drops) / static_cast<double>(statements);
  MESSAGE("drop fraction " << frac << " over " << statements << " statements");
  CHECK(frac >= 0.18);
  CHECK(frac <= 0.22);
}
