#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <tuple>

#include "geocdl/dataset.hpp"
#include "geocdl/kernel.hpp"
#include "geocdl/templates.hpp"
#include "geocdl/util.hpp"

namespace geocdl::dataset {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kMaxRejections = 20;

cdl::CdlDocument cons_only(const cdl::CdlDocument& doc) {
  cdl::CdlDocument out;
  for (const auto& s : doc.cons()) out.insert(s);
  return out;
}

cdl::CdlDocument img_only(const cdl::CdlDocument& doc) {
  cdl::CdlDocument out;
  for (const auto& s : doc.img()) out.insert(s);
  return out;
}

std::string resolve(std::string_view path, const std::string& base_dir) {
  fs::path p{std::string(path)};
  if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
  return p.lexically_normal().string();
}

double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(std::string(v), &used);
    if (used != v.size()) throw std::invalid_argument("trailing text");
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(v) + "'");
  }
}

long long to_int(std::string_view key, std::string_view v) {
  const double d = to_double(key, v);
  if (d != std::floor(d)) throw ConfigError("'" + std::string(key) + "' expects an integer, got '" + std::string(v) + "'");
  return static_cast<long long>(d);
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  const std::string s(v);
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    throw ConfigError("'" + std::string(key) + "' expects an unsigned integer, got '" + s + "'");
  return std::stoull(s);
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("'" + std::string(key) + "' expects on or off, got '" + std::string(v) + "'");
}

std::vector<double> to_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  for (const auto& part : geocdl::split(v, ',')) out.push_back(to_double(key, trim(part)));
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct TaskOutcome {
  enum class Status { Converged, NonConvergence, Failed } status = Status::Failed;
  templates::Instantiation inst;
  kernel::Figure figure;
  std::uint64_t seed = 0;  // seed of the accepted attempt
  std::size_t rejections = 0;
  std::string message;
};

struct Candidate {
  DatasetRecord record;
  kernel::Figure figure;
  cdl::CdlDocument doc;
};

bool audit_selected(const std::string& id, double fraction) {
  if (fraction >= 1.0) return true;
  return static_cast<double>(fnv1a64(id) % 1000000ULL) < fraction * 1e6;
}

bool is_superset(const cdl::CdlDocument& extracted, const cdl::CdlDocument& doc) {
  return std::all_of(doc.cons().begin(), doc.cons().end(),
                     [&](const auto& s) { return extracted.contains(cdl::Statement{s}); });
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  write_file(path, text);
}

}  // namespace

// ---- records -------------------------------------------------------------

std::string to_json_line(const DatasetRecord& r) {
  json j;
  j["id"] = r.id;
  j["template_id"] = r.template_id;
  j["seed"] = r.seed;
  j["rotation"] = r.rotation;
  j["image_path"] = r.image_path;
  if (!r.raster_path.empty()) j["raster_path"] = r.raster_path;
  j["figure_path"] = r.figure_path;
  j["cons_cdl"] = r.cons_cdl;
  j["img_cdl"] = r.img_cdl;
  j["caption"] = r.caption;
  return j.dump();
}

DatasetRecord record_from_json(std::string_view line) {
  try {
    const auto j = json::parse(line);
    DatasetRecord r;
    r.id = j.at("id").get<std::string>();
    r.template_id = j.at("template_id").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.rotation = j.at("rotation").get<double>();
    r.image_path = j.at("image_path").get<std::string>();
    if (j.contains("raster_path")) r.raster_path = j.at("raster_path").get<std::string>();
    r.figure_path = j.at("figure_path").get<std::string>();
    r.cons_cdl = j.at("cons_cdl").get<std::string>();
    r.img_cdl = j.at("img_cdl").get<std::string>();
    r.caption = j.at("caption").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw DatasetError(std::string("malformed manifest line: ") + e.what());
  }
}

std::vector<DatasetRecord> read_manifest(const std::string& path) {
  std::vector<DatasetRecord> out;
  std::istringstream in(read_file(path));
  for (std::string line; std::getline(in, line);)
    if (!trim(line).empty()) out.push_back(record_from_json(line));
  return out;
}

void write_manifest(const std::string& path, const std::vector<DatasetRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(to_json_line(r));
  write_lines(path, lines);
}

cdl::CdlDocument record_document(const DatasetRecord& r) { return cdl::parse(r.cons_cdl + "\n" + r.img_cdl); }

int rotation_bucket(double degrees) {
  double d = std::fmod(degrees, 360.0);
  if (d < 0) d += 360.0;
  return static_cast<int>(std::lround(d / 15.0)) % 24;
}

std::string record_id(const cdl::CdlDocument& doc, double rotation) {
  return content_hash(cdl::print(cons_only(doc)) + "\x1f" + cdl::print(img_only(doc)) + "\x1f" +
                      std::to_string(rotation_bucket(rotation)));
}

// ---- config --------------------------------------------------------------

void GenerationConfig::check() const {
  if (samples < 1) throw ConfigError("samples must be at least 1");
  if (rotations.empty()) throw ConfigError("rotations must list at least one angle");
  for (double r : rotations)
    if (!std::isfinite(r)) throw ConfigError("rotation angles must be finite");
  if (splits.train < 0 || splits.val < 0 || splits.test < 0) throw ConfigError("split fractions must be non-negative");
  if (std::abs(splits.train + splits.val + splits.test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (!(audit_fraction >= 0 && audit_fraction <= 1)) throw ConfigError("audit_fraction must lie in [0, 1]");
  if (!(nonconvergence_budget >= 0 && nonconvergence_budget <= 1))
    throw ConfigError("nonconvergence_budget must lie in [0, 1]");
  if (output.empty()) throw ConfigError("output directory is empty");
  try {
    style.check();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void set_config_value(GenerationConfig& cfg, std::string_view key, std::string_view raw, const std::string& base_dir) {
  const std::string value = trim(raw);
  if (key == "library") cfg.library = resolve(value, base_dir);
  else if (key == "samples") cfg.samples = static_cast<int>(to_int(key, value));
  else if (key == "rotations") cfg.rotations = to_list(key, value);
  else if (key == "output") cfg.output = resolve(value, base_dir);
  else if (key == "splits") {
    const auto f = to_list(key, value);
    if (f.size() != 3) throw ConfigError("splits expects three fractions: train, val, test");
    cfg.splits = {f[0], f[1], f[2]};
  } else if (key == "workers") cfg.workers = static_cast<int>(to_int(key, value));
  else if (key == "raster") cfg.raster = to_bool(key, value);
  else if (key == "seed") cfg.seed = to_u64(key, value);
  else if (key == "max_records") cfg.max_records = static_cast<std::size_t>(to_u64(key, value));
  else if (key == "audit_fraction") cfg.audit_fraction = to_double(key, value);
  else if (key == "nonconvergence_budget") cfg.nonconvergence_budget = to_double(key, value);
  else if (key == "templates") {
    cfg.templates.clear();
    for (const auto& id : geocdl::split(value, ','))
      if (!trim(id).empty()) cfg.templates.push_back(trim(id));
  } else if (key == "canvas") cfg.style.canvas = static_cast<int>(to_int(key, value));
  else if (key == "margin") cfg.style.margin = to_double(key, value);
  else if (key == "stroke_width") cfg.style.stroke_width = to_double(key, value);
  else if (key == "point_radius") cfg.style.point_radius = to_double(key, value);
  else if (key == "font_size") cfg.style.font_size = to_double(key, value);
  else if (key == "label_offset") cfg.style.label_offset = to_double(key, value);
  else if (key == "background") cfg.style.background = value;
  else if (key == "monochrome") cfg.style.monochrome = to_bool(key, value);
  else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

GenerationConfig parse_config(std::string_view text, const std::string& base_dir) {
  GenerationConfig cfg;
  std::vector<KeyValue> entries;
  try {
    entries = parse_key_values(text);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config ") + e.what());
  }
  for (const auto& kv : entries) {
    try {
      set_config_value(cfg, kv.key, kv.value, base_dir);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(kv.line) + ": " + e.what());
    }
  }
  cfg.check();
  return cfg;
}

GenerationConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text, fs::path(path).parent_path().string());
}

std::string print_config(const GenerationConfig& cfg) {
  std::string rot;
  for (std::size_t i = 0; i < cfg.rotations.size(); ++i) rot += (i ? ", " : "") + fmt(cfg.rotations[i]);
  std::string ids;
  for (std::size_t i = 0; i < cfg.templates.size(); ++i) ids += (i ? ", " : "") + cfg.templates[i];
  std::string out;
  out += "library = " + cfg.library + "\n";
  out += "samples = " + std::to_string(cfg.samples) + "\n";
  out += "rotations = " + rot + "\n";
  out += "output = " + cfg.output + "\n";
  out += "splits = " + fmt(cfg.splits.train) + ", " + fmt(cfg.splits.val) + ", " + fmt(cfg.splits.test) + "\n";
  out += "workers = " + std::to_string(cfg.workers) + "\n";
  out += std::string("raster = ") + (cfg.raster ? "on" : "off") + "\n";
  out += "seed = " + std::to_string(cfg.seed) + "\n";
  out += "max_records = " + std::to_string(cfg.max_records) + "\n";
  out += "audit_fraction = " + fmt(cfg.audit_fraction) + "\n";
  out += "nonconvergence_budget = " + fmt(cfg.nonconvergence_budget) + "\n";
  out += "templates = " + ids + "\n";
  out += "canvas = " + std::to_string(cfg.style.canvas) + "\n";
  out += "margin = " + fmt(cfg.style.margin) + "\n";
  out += "stroke_width = " + fmt(cfg.style.stroke_width) + "\n";
  out += "point_radius = " + fmt(cfg.style.point_radius) + "\n";
  out += "font_size = " + fmt(cfg.style.font_size) + "\n";
  out += "label_offset = " + fmt(cfg.style.label_offset) + "\n";
  out += "background = " + cfg.style.background + "\n";
  out += std::string("monochrome = ") + (cfg.style.monochrome ? "on" : "off") + "\n";
  return out;
}

std::string GenerationSummary::to_json() const {
  json j;
  j["attempted"] = attempted;
  j["converged"] = converged;
  j["convergence_rate"] = attempted ? static_cast<double>(converged) / static_cast<double>(attempted) : 0.0;
  j["rejections"] = rejections;
  j["candidates"] = candidates;
  j["duplicates"] = duplicates;
  j["capped"] = capped;
  j["audited"] = audited;
  j["audit_failures"] = audit_failures;
  j["records"] = records;
  j["vector_only"] = vector_only;
  j["budget_exceeded"] = budget_exceeded;
  j["splits"] = {{"train", split_sizes[0]}, {"val", split_sizes[1]}, {"test", split_sizes[2]}};
  json per = json::object();
  for (const auto& [id, t] : templates) {
    per[id] = {{"attempted", t.attempted},   {"converged", t.converged}, {"rejections", t.rejections},
               {"failed", t.failed},
               {"candidates", t.candidates}, {"duplicates", t.duplicates}, {"audited", t.audited},
               {"audit_failures", t.audit_failures}, {"records", t.records}};
  }
  j["templates"] = per;
  return j.dump(2) + "\n";
}

// ---- generation ----------------------------------------------------------

Realization realize(const templates::Template& t, std::uint64_t seed) {
  Realization r;
  for (std::size_t attempt = 0;; ++attempt) {
    r.seed = attempt == 0 ? seed : derive_seed(seed, "reseed-" + std::to_string(attempt));
    r.inst = templates::instantiate(t, r.seed);
    auto solved = kernel::solve(kernel::compile(r.inst.doc), r.seed);
    if (auto* f = std::get_if<kernel::Figure>(&solved)) {
      r.figure = std::move(*f);
      return r;
    }
    r.best_residual = std::get<kernel::NonConvergence>(solved).best_residual;
    if (attempt == kMaxRejections) return r;
    ++r.rejections;
  }
}

GenerationResult generate(const GenerationConfig& cfg) {
  cfg.check();
  templates::Library lib;
  try {
    lib = templates::load_library(cfg.library);
  } catch (const std::exception& e) {
    throw LibraryLoadError(e.what());
  }
  std::vector<const templates::Template*> chosen;
  if (cfg.templates.empty()) {
    for (const auto& t : lib.templates) chosen.push_back(&t);
  } else {
    for (const auto& id : cfg.templates) {
      const auto* t = lib.find(id);
      if (!t) throw LibraryLoadError("library has no template '" + id + "'");
      chosen.push_back(t);
    }
  }
  if (chosen.empty()) throw LibraryLoadError("library holds no templates");

  try {
    fs::create_directories(cfg.output);
    write_file((fs::path(cfg.output) / "config.cfg").string(), print_config(cfg));
  } catch (const std::exception& e) {
    throw OutputNotWritable("cannot write to " + cfg.output + ": " + e.what());
  }

  GenerationResult result;
  auto& summary = result.summary;
  const bool raster = cfg.raster && render::raster_available();
  summary.vector_only = !raster;
  if (cfg.raster && !raster) result.log.push_back("raster backend unavailable; writing vector images only");

  const std::size_t samples = static_cast<std::size_t>(cfg.samples);
  std::vector<TaskOutcome> outcomes(chosen.size() * samples);
  parallel_for(outcomes.size(), static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
    const auto& t = *chosen[i / samples];
    const std::uint64_t seed = derive_seed(derive_seed(cfg.seed, t.id), i % samples);
    auto& out = outcomes[i];
    try {
      auto r = realize(t, seed);
      out.seed = r.seed;
      out.rejections = r.rejections;
      out.inst = std::move(r.inst);
      if (r.figure) {
        out.figure = std::move(*r.figure);
        out.status = TaskOutcome::Status::Converged;
      } else {
        out.status = TaskOutcome::Status::NonConvergence;
        out.message = "non-convergence, best residual " + fmt(r.best_residual) + " after " +
                      std::to_string(r.rejections + 1) + " seeds";
      }
    } catch (const std::exception& e) {
      out.seed = seed;
      out.status = TaskOutcome::Status::Failed;
      out.message = e.what();
    }
  });

  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& out = outcomes[i];
    const auto& t = *chosen[i / samples];
    auto& ts = summary.templates[t.id];
    ++ts.attempted;
    ++summary.attempted;
    const std::uint64_t seed = out.seed;
    ts.rejections += out.rejections;
    summary.rejections += out.rejections;
    if (out.status != TaskOutcome::Status::Converged) {
      if (out.status == TaskOutcome::Status::Failed) ++ts.failed;
      result.log.push_back("skip " + t.id + " seed " + std::to_string(seed) + ": " + out.message);
      continue;
    }
    ++ts.converged;
    ++summary.converged;
    for (double rot : cfg.rotations) {
      Candidate c;
      c.doc = out.inst.doc;
      c.figure = kernel::rotate(out.figure, rot);
      auto& r = c.record;
      r.id = record_id(c.doc, rot);
      r.template_id = t.id;
      r.seed = seed;
      r.rotation = rot;
      r.cons_cdl = cdl::print(cons_only(c.doc));
      r.img_cdl = cdl::print(img_only(c.doc));
      r.caption = out.inst.caption;
      const std::string stem = t.id + "/" + r.id;
      r.image_path = "images/" + stem + ".svg";
      if (raster) r.raster_path = "images/" + stem + ".png";
      r.figure_path = "figures/" + stem + ".fig";
      candidates.push_back(std::move(c));
      ++ts.candidates;
      ++summary.candidates;
    }
  }

  std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
    const auto& x = a.record;
    const auto& y = b.record;
    return std::tie(x.id, x.template_id, x.seed, x.rotation) < std::tie(y.id, y.template_id, y.seed, y.rotation);
  });
  std::vector<Candidate> unique;
  for (auto& c : candidates) {
    if (!unique.empty() && unique.back().record.id == c.record.id) {
      ++summary.templates[c.record.template_id].duplicates;
      ++summary.duplicates;
      continue;
    }
    unique.push_back(std::move(c));
  }
  candidates.clear();

  std::vector<char> audit_ok(unique.size(), 1);
  std::vector<char> audited(unique.size(), 0);
  parallel_for(unique.size(), static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
    if (!audit_selected(unique[i].record.id, cfg.audit_fraction)) return;
    audited[i] = 1;
    try {
      audit_ok[i] = is_superset(kernel::extract_cdl(unique[i].figure), unique[i].doc);
    } catch (const kernel::DegenerateFigure&) {
      audit_ok[i] = 0;
    }
  });
  std::vector<Candidate> kept;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    auto& ts = summary.templates[unique[i].record.template_id];
    if (audited[i]) {
      ++ts.audited;
      ++summary.audited;
    }
    if (!audit_ok[i]) {
      ++ts.audit_failures;
      ++summary.audit_failures;
      result.log.push_back("drop " + unique[i].record.id + " (" + unique[i].record.template_id +
                           "): extracted construction misses declared statements");
      continue;
    }
    kept.push_back(std::move(unique[i]));
  }
  unique.clear();
  if (cfg.max_records && kept.size() > cfg.max_records) {
    summary.capped = kept.size() - cfg.max_records;
    kept.resize(cfg.max_records);
  }

  std::vector<std::string> render_errors(kept.size());
  const fs::path root(cfg.output);
  parallel_for(kept.size(), static_cast<std::size_t>(cfg.workers), [&](std::size_t i) {
    const auto& c = kept[i];
    try {
      const auto svg = render::render_vector(c.figure, c.doc, cfg.style);
      write_file((root / c.record.image_path).string(), svg);
      write_file((root / c.record.figure_path).string(), kernel::serialize(c.figure));
      if (!c.record.raster_path.empty()) {
        const auto png = render::rasterize(svg, cfg.style);
        write_file((root / c.record.raster_path).string(), std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      }
    } catch (const kernel::KernelError& e) {
      render_errors[i] = e.what();
    } catch (const std::runtime_error& e) {
      throw OutputNotWritable(e.what());
    }
  });
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!render_errors[i].empty()) {
      result.log.push_back("drop " + kept[i].record.id + ": " + render_errors[i]);
      continue;
    }
    ++summary.templates[kept[i].record.template_id].records;
    result.manifest.push_back(std::move(kept[i].record));
  }
  summary.records = result.manifest.size();
  const double failed = static_cast<double>(summary.attempted - summary.converged);
  summary.budget_exceeded = failed > cfg.nonconvergence_budget * static_cast<double>(summary.attempted);

  const auto parts = split(result.manifest, cfg.splits, derive_seed(cfg.seed, "split"));
  summary.split_sizes[0] = parts.train.size();
  summary.split_sizes[1] = parts.val.size();
  summary.split_sizes[2] = parts.test.size();
  try {
    write_manifest((root / "manifest.jsonl").string(), result.manifest);
    write_manifest((root / "train.jsonl").string(), parts.train);
    write_manifest((root / "val.jsonl").string(), parts.val);
    write_manifest((root / "test.jsonl").string(), parts.test);
    write_file((root / "summary.json").string(), summary.to_json());
    write_lines((root / "generation.log").string(), result.log);
  } catch (const std::runtime_error& e) {
    throw OutputNotWritable(e.what());
  }
  return result;
}

// ---- splits --------------------------------------------------------------

Splits split(const std::vector<DatasetRecord>& manifest, const SplitFractions& fractions, std::uint64_t seed) {
  const double f[3] = {fractions.train, fractions.val, fractions.test};
  std::map<std::string, std::vector<std::size_t>> by_template;
  for (std::size_t i = 0; i < manifest.size(); ++i) by_template[manifest[i].template_id].push_back(i);

  std::vector<std::size_t> parts[3];
  for (auto& [id, idx] : by_template) {
    Rng rng(derive_seed(seed, id));
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    std::size_t count[3];
    std::pair<double, int> rem[3];
    std::size_t given = 0;
    for (int k = 0; k < 3; ++k) {
      const double q = f[k] * static_cast<double>(n);
      count[k] = static_cast<std::size_t>(std::floor(q + 1e-9));
      given += count[k];
      rem[k] = {q - static_cast<double>(count[k]), k};
    }
    std::stable_sort(rem, rem + 3, [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int r = 0; given < n; ++r, ++given) ++count[rem[r % 3].second];

    const std::size_t positive = static_cast<std::size_t>(std::count_if(f, f + 3, [](double x) { return x > 0; }));
    if (n >= positive) {
      for (int k = 0; k < 3; ++k) {
        if (f[k] <= 0 || count[k] > 0) continue;
        const int donor = static_cast<int>(std::max_element(count, count + 3) - count);
        --count[donor];
        ++count[k];
      }
    }
    std::size_t at = 0;
    for (int k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < count[k]; ++c) parts[k].push_back(idx[at++]);
  }

  Splits out;
  std::vector<DatasetRecord>* dst[3] = {&out.train, &out.val, &out.test};
  for (int k = 0; k < 3; ++k) {
    std::sort(parts[k].begin(), parts[k].end());
    for (std::size_t i : parts[k]) dst[k]->push_back(manifest[i]);
  }
  return out;
}

}  // namespace geocdl::dataset
