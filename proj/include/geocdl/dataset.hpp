#pragma once

// End-to-end corpus generation (instantiate, solve, rotate, render, record),
// manifest I/O, splits and CDL perturbation.

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geocdl/cdl.hpp"
#include "geocdl/kernel.hpp"
#include "geocdl/render.hpp"
#include "geocdl/templates.hpp"

namespace geocdl::dataset {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ConfigError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class LibraryLoadError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class OutputNotWritable : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

/// One manifest line. Paths are relative to the output directory.
struct DatasetRecord {
  std::string id;
  std::string template_id;
  std::uint64_t seed = 0;
  double rotation = 0.0;
  std::string image_path;
  std::string raster_path;  // empty in vector-only runs
  std::string figure_path;
  std::string cons_cdl;
  std::string img_cdl;
  std::string caption;
  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

/// Field order: id, template_id, seed, rotation, image_path, raster_path
/// (omitted when empty), figure_path, cons_cdl, img_cdl, caption.
std::string to_json_line(const DatasetRecord& r);
DatasetRecord record_from_json(std::string_view line);
std::vector<DatasetRecord> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<DatasetRecord>& records);

/// The record's document; throws cdl::ParseError if a field does not parse.
cdl::CdlDocument record_document(const DatasetRecord& r);

/// Rotation quantized to 15 degree buckets in [0, 24).
int rotation_bucket(double degrees);
std::string record_id(const cdl::CdlDocument& doc, double rotation);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct GenerationConfig {
  std::string library = "data/starter_library.txt";
  int samples = 10;  // per template
  std::vector<double> rotations{0, 90, 180, 270};
  std::string output = "out";
  SplitFractions splits;
  int workers = 1;
  bool raster = false;
  std::uint64_t seed = 0;
  std::size_t max_records = 0;  // 0 keeps every unique record
  double audit_fraction = 0.05;
  /// Largest tolerated fraction of instantiations that fail to solve.
  double nonconvergence_budget = 0.1;
  std::vector<std::string> templates;  // empty selects the whole library
  render::RenderStyle style;

  /// Throws ConfigError.
  void check() const;
};

/// Key-value text (see parse_key_values). Relative library and output
/// paths resolve against `base_dir`. Unknown keys are rejected.
GenerationConfig parse_config(std::string_view text, const std::string& base_dir = "");
GenerationConfig load_config(const std::string& path);
std::string print_config(const GenerationConfig& cfg);
/// Applies one `key=value` override using the config-file syntax.
void set_config_value(GenerationConfig& cfg, std::string_view key, std::string_view value, const std::string& base_dir = "");

struct TemplateSummary {
  std::size_t attempted = 0;  // instantiations
  std::size_t converged = 0;
  std::size_t rejections = 0;  // non-converged attempts replaced by a re-seed
  std::size_t failed = 0;  // instantiate or solve errors other than non-convergence
  std::size_t candidates = 0;  // converged x rotations
  std::size_t duplicates = 0;
  std::size_t audited = 0;
  std::size_t audit_failures = 0;
  std::size_t records = 0;
};

struct GenerationSummary {
  std::map<std::string, TemplateSummary> templates;
  std::size_t attempted = 0;
  std::size_t converged = 0;
  std::size_t rejections = 0;
  std::size_t candidates = 0;
  std::size_t duplicates = 0;
  std::size_t capped = 0;
  std::size_t audited = 0;
  std::size_t audit_failures = 0;
  std::size_t records = 0;
  bool vector_only = true;
  bool budget_exceeded = false;
  std::size_t split_sizes[3] = {0, 0, 0};

  std::string to_json() const;
};

struct GenerationResult {
  std::vector<DatasetRecord> manifest;  // sorted by id
  GenerationSummary summary;
  std::vector<std::string> log;  // skipped tasks and fallbacks, task order
};

struct Realization {
  templates::Instantiation inst;
  std::optional<kernel::Figure> figure;  // empty when no attempt converged
  std::uint64_t seed = 0;                // seed of the last attempt
  std::size_t rejections = 0;
  double best_residual = 0;
};

/// Instantiates and solves one template sample. A non-converging attempt is
/// rejected and retried under a derived seed, at most 20 times.
Realization realize(const templates::Template& t, std::uint64_t seed);

/// Writes manifest.jsonl, train/val/test.jsonl, summary.json,
/// generation.log, config.cfg, and per-record images/<template>/<id>.svg
/// (plus .png with raster on) and figures/<template>/<id>.fig.
GenerationResult generate(const GenerationConfig& cfg);

struct Splits {
  std::vector<DatasetRecord> train, val, test;
};

/// Template-stratified shuffle: each template's records are divided by
/// largest remainder, then every split with a positive fraction receives at
/// least one record of the template when it has enough of them.
Splits split(const std::vector<DatasetRecord>& manifest, const SplitFractions& fractions, std::uint64_t seed);

struct PerturbationSpec {
  double drop = 0.1;
  double insert = 0.05;
  double mutate = 0.1;
  std::uint64_t seed = 0;

  /// Throws ConfigError on a rate outside [0, 1] or drop + mutate > 1.
  void check() const;
};

enum class EditKind { Drop, Mutate, Insert };
std::string_view to_string(EditKind kind);

struct Edit {
  EditKind kind = EditKind::Drop;
  std::string detail;  // mutation or insertion flavor
  std::optional<cdl::Statement> before;
  std::optional<cdl::Statement> after;
  friend bool operator==(const Edit&, const Edit&) = default;
};

struct PerturbResult {
  cdl::CdlDocument doc;
  std::vector<Edit> log;
};

PerturbResult perturb(const cdl::CdlDocument& doc, const PerturbationSpec& spec);
/// Applies the edits in order: drop erases `before`, mutate replaces
/// `before` with `after`, insert adds `after`.
cdl::CdlDocument replay(const cdl::CdlDocument& doc, const std::vector<Edit>& log);

std::string edit_to_json(const Edit& e);
Edit edit_from_json(std::string_view line);

}  // namespace geocdl::dataset
