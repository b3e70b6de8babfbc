#pragma once

// Implementations of the provenance CLI subcommands. Each takes a plain
// options struct and writes to the given streams; the exit code follows
// 0 = success, 1 = user error, 2 = internal error.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "provenance/corpus.hpp"
#include "provenance/disasm.hpp"
#include "provenance/error.hpp"
#include "provenance/features.hpp"
#include "provenance/hierarchy.hpp"
#include "provenance/learn.hpp"
#include "provenance/parallel.hpp"

namespace provenance::cli {

using nlohmann::json;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUser = 1;
inline constexpr int kExitInternal = 2;

/// Failure to write a requested output file; reported as an internal error.
struct OutputError : Error {
  using Error::Error;
};

struct CommonOptions {
  std::string isa = "auto";
  unsigned jobs = 1;
  bool json = false;
  std::string out;
  std::string objdump;  // empty = PROVENANCE_OBJDUMP or "objdump"
  bool timing = true;
};

inline std::optional<Isa> isa_option(const std::string& s) {
  if (s == "auto" || s.empty()) return std::nullopt;
  auto isa = parse_isa(s);
  if (!isa) throw Error(ErrorCode::InvalidArgument, "unknown --isa '" + s + "'");
  return isa;
}

inline DisassemblerConfig disassembler_for(const CommonOptions& o) {
  auto cfg = DisassemblerConfig::from_environment();
  if (!o.objdump.empty()) cfg.executable = o.objdump;
  return cfg;
}

/// Writes `text` to --out, or to `out` when no file was requested.
inline void emit(const CommonOptions& o, std::ostream& out, const std::string& text) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  std::ofstream f(o.out, std::ios::binary | std::ios::trunc);
  if (!f) throw OutputError(ErrorCode::IoFailure, "cannot write " + o.out);
  f << text;
  f.flush();
  if (!f) throw OutputError(ErrorCode::IoFailure, "write failed for " + o.out);
}

inline json timing_json(double wall, double cpu, std::size_t n) {
  const double denom = n == 0 ? 1.0 : static_cast<double>(n);
  return {{"wall_s", wall}, {"cpu_s", cpu}, {"wall_ms_per_binary", 1e3 * wall / denom}, {"cpu_ms_per_binary", 1e3 * cpu / denom}};
}

// ---------------------------------------------------------------------------
// Sample collection shared by extract / train / cross-validate

struct Record {
  std::string path;
  std::optional<BinaryFeatures> features;
  std::string error;
  // labels when the record came from a manifest
  std::string family;
  std::string version;
  std::string optimization;
  std::string checksum;
  std::uint64_t size = 0;
};

inline json record_to_json(const Record& r, bool with_labels) {
  json j;
  j["path"] = r.path;
  if (with_labels) {
    j["family"] = r.family;
    j["version"] = r.version;
    j["optimization"] = r.optimization;
    j["checksum"] = r.checksum;
    j["size"] = r.size;
  }
  if (r.features)
    j["features"] = to_json(*r.features);
  else
    j["error"] = r.error;
  return j;
}

inline Record extract_one(const std::string& path, std::optional<Isa> isa, const DisassemblerConfig& cfg) {
  Record r;
  r.path = path;
  try {
    r.features = extract_features(obtain_listing(path, isa, cfg));
  } catch (const Error& e) {
    r.error = e.what();
  }
  return r;
}

struct CorpusLoad {
  std::vector<Record> records;  // successfully extracted, manifest order
  std::vector<Record> failed;
  CorpusSummary summary;
  std::size_t missing = 0;
  std::size_t feature_duplicates = 0;
  double extract_wall = 0.0;
  double extract_cpu = 0.0;
};

struct CorpusOptions {
  std::string manifest;
  std::string features;  // JSON from `extract --json` over a manifest
  std::uint64_t max_size = kDefaultSizeLimit;
  bool dedup_features = false;
};

inline std::string feature_key(const BinaryFeatures& b) { return to_json(b).dump(); }

inline CorpusLoad load_corpus(const CorpusOptions& co, const CommonOptions& o, std::ostream& err) {
  CorpusLoad c;
  if (co.manifest.empty() == co.features.empty())
    throw Error(ErrorCode::InvalidArgument, "give exactly one of --manifest or --features");
  if (!co.features.empty()) {
    std::ifstream in(co.features, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + co.features);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::MalformedManifest, co.features + ": " + e.what());
    }
    if (!j.is_array()) throw Error(ErrorCode::MalformedManifest, co.features + ": expected a JSON array");
    std::vector<ManifestEntry> entries;
    for (const auto& item : j) {
      if (!item.contains("features") || !item.contains("family")) continue;
      Record r;
      r.path = item.at("path").get<std::string>();
      r.family = item.at("family").get<std::string>();
      r.version = item.value("version", "");
      r.optimization = item.value("optimization", "");
      r.checksum = item.value("checksum", "");
      r.size = item.value("size", std::uint64_t{0});
      r.features = binary_features_from_json(item.at("features"));
      ManifestEntry e;
      e.path = r.path;
      e.isa = r.features->isa;
      e.family = r.family;
      e.version = r.version;
      e.optimization = r.optimization;
      e.checksum = r.checksum;
      e.size = r.size;
      entries.push_back(e);
      c.records.push_back(std::move(r));
    }
    c.summary = summarize(entries);
    return c;
  }

  Manifest m = load_manifest(co.manifest, LabelSpace{}, o.jobs);
  c.missing = m.missing.size();
  for (const auto& p : m.missing) err << "warning: missing file " << p.string() << "\n";
  const auto dedup = dedup_by_checksum(m.entries);
  const auto sized = filter_by_size(dedup.entries, co.max_size);
  const auto isa = isa_option(o.isa);
  const auto cfg = disassembler_for(o);
  Stopwatch sw;
  auto recs = parallel_map(sized.entries.size(), o.jobs, [&](std::size_t i) {
    const auto& e = sized.entries[i];
    Record r = extract_one(e.path.string(), isa ? isa : std::optional<Isa>(e.isa), cfg);
    r.family = e.family;
    r.version = e.version;
    r.optimization = e.optimization;
    r.checksum = e.checksum;
    r.size = e.size;
    return r;
  });
  c.extract_wall = sw.wall_seconds();
  c.extract_cpu = sw.cpu_seconds();
  std::vector<ManifestEntry> kept;
  std::vector<std::string> keys;
  std::vector<Record> ok;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i].features) {
      kept.push_back(sized.entries[i]);
      keys.push_back(feature_key(*recs[i].features));
      ok.push_back(std::move(recs[i]));
    } else {
      err << "warning: " << recs[i].path << ": " << recs[i].error << "\n";
      c.failed.push_back(std::move(recs[i]));
    }
  }
  if (co.dedup_features) {
    std::set<std::string> seen;
    for (std::size_t i = 0; i < ok.size(); ++i) {
      if (seen.insert(keys[i]).second)
        c.records.push_back(std::move(ok[i]));
      else
        ++c.feature_duplicates;
    }
    kept = dedup_by_feature_key(kept, keys).entries;
  } else {
    c.records = std::move(ok);
  }
  c.summary = summarize(kept, dedup.removed + c.feature_duplicates, sized.removed);
  return c;
}

inline std::vector<LabeledSample> to_samples(const std::vector<Record>& records) {
  std::vector<LabeledSample> s;
  for (const auto& r : records) s.push_back({*r.features, r.family, r.version, r.optimization});
  return s;
}

// ---------------------------------------------------------------------------
// extract

struct ExtractOptions {
  std::vector<std::string> paths;
  std::string manifest;
};

inline int cmd_extract(const ExtractOptions& eo, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  std::vector<Record> records;
  bool labels = false;
  if (!eo.manifest.empty()) {
    CorpusOptions co;
    co.manifest = eo.manifest;
    auto c = load_corpus(co, o, err);
    records = std::move(c.records);
    for (auto& f : c.failed) records.push_back(std::move(f));
    labels = true;
  } else {
    if (eo.paths.empty()) throw Error(ErrorCode::InvalidArgument, "no input files");
    const auto isa = isa_option(o.isa);
    const auto cfg = disassembler_for(o);
    records = parallel_map(eo.paths.size(), o.jobs, [&](std::size_t i) { return extract_one(eo.paths[i], isa, cfg); });
  }
  bool failed = false;
  for (const auto& r : records) {
    if (!r.features) {
      err << r.path << ": " << r.error << "\n";
      failed = true;
    }
  }
  std::ostringstream text;
  if (o.json) {
    json arr = json::array();
    for (const auto& r : records)
      if (r.features) arr.push_back(record_to_json(r, labels));
    text << arr.dump(1) << "\n";
  } else {
    std::set<Isa> isas;
    for (const auto& r : records)
      if (r.features) isas.insert(r.features->isa);
    for (Isa isa : isas) {
      const auto& regs = register_set(isa);
      text << "path,isa,instructions";
      for (const auto& rg : regs) text << ",src_" << rg;
      for (const auto& rg : regs) text << ",dst_" << rg;
      text << ",fp_sp_ratio,opcode_counts\n";
      for (const auto& r : records) {
        if (!r.features || r.features->isa != isa) continue;
        const auto& p = r.features->profile;
        text << r.path << ',' << isa_name(isa) << ',' << r.features->terms.instruction_count;
        for (const auto& rg : regs) text << ',' << json(p.src_freq.contains(rg) ? p.src_freq.at(rg) : 0.0).dump();
        for (const auto& rg : regs) text << ',' << json(p.dst_freq.contains(rg) ? p.dst_freq.at(rg) : 0.0).dump();
        text << ',' << json(p.fp_sp_ratio).dump() << ',';
        bool first = true;
        for (const auto& [m, c] : r.features->terms.counts) {
          text << (first ? "" : ";") << m << '=' << c;
          first = false;
        }
        text << '\n';
      }
    }
  }
  emit(o, out, text.str());
  return failed ? kExitUser : kExitOk;
}

// ---------------------------------------------------------------------------
// cross-validate

struct TrainingOptions {
  double C = 1.0;
  double tolerance = 1e-4;
  int max_epochs = 1000;
  std::string weighting = "balanced";
  std::uint64_t seed = 0;

  TrainConfig config() const {
    TrainConfig c;
    c.C = C;
    c.tolerance = tolerance;
    c.max_epochs = max_epochs;
    if (weighting != "balanced" && weighting != "uniform")
      throw Error(ErrorCode::InvalidArgument, "--class-weight must be balanced or uniform");
    c.weighting = weighting == "balanced" ? ClassWeighting::Balanced : ClassWeighting::Uniform;
    c.seed = seed;
    return c;
  }
};

struct CrossValidateOptions {
  CorpusOptions corpus;
  TrainingOptions training;
  std::string task = "family";
  std::string scheme = "5";
  int k = 10;
  std::string family;              // version task: restrict to one family
  std::string positive = "compcert";  // binary task
};

inline json cv_json(const CvResult& r) {
  return {{"fold_accuracies", r.fold_accuracies}, {"mean_accuracy", r.mean_accuracy}, {"evaluated", r.evaluated}};
}

inline int cmd_cross_validate(const CrossValidateOptions& cv, const CommonOptions& o, std::ostream& out,
                              std::ostream& err) {
  if (cv.k < 2) throw Error(ErrorCode::InvalidArgument, "--k must be at least 2");
  const auto scheme = parse_scheme(cv.scheme);
  if (!scheme) throw Error(ErrorCode::InvalidArgument, "--scheme must be 5, 4 or 2");
  const TrainConfig config = cv.training.config();
  const CorpusLoad corpus = load_corpus(cv.corpus, o, err);
  if (corpus.records.empty()) throw Error(ErrorCode::EmptyCorpus, "no usable binaries");

  // Each run is (name, features, labels).
  struct Run {
    std::string name;
    std::vector<BinaryFeatures> features;
    std::vector<std::string> labels;
  };
  std::vector<Run> runs;
  const auto add = [&](std::string name, auto&& select, auto&& label) {
    Run r{std::move(name), {}, {}};
    for (const auto& rec : corpus.records) {
      if (!select(rec)) continue;
      r.features.push_back(*rec.features);
      r.labels.push_back(label(rec));
    }
    runs.push_back(std::move(r));
  };
  const auto all = [](const Record&) { return true; };
  if (cv.task == "family") {
    add("family", all, [](const Record& r) { return r.family; });
  } else if (cv.task == "optimization") {
    add("optimization", all, [&](const Record& r) { return map_optimization(r.optimization, *scheme); });
  } else if (cv.task == "binary") {
    add("binary:" + cv.positive, all,
        [&](const Record& r) { return r.family == cv.positive ? cv.positive : std::string("conventional"); });
  } else if (cv.task == "version") {
    std::map<std::string, std::set<std::string>> versions;
    for (const auto& r : corpus.records)
      if (!r.version.empty()) versions[r.family].insert(r.version);
    for (const auto& [fam, vs] : versions) {
      if (!cv.family.empty() && fam != cv.family) continue;
      if (vs.size() < 2) {
        err << "warning: family " << fam << " has fewer than two versions; skipped\n";
        continue;
      }
      add(fam + "_version", [&, f = fam](const Record& r) { return r.family == f && !r.version.empty(); },
          [](const Record& r) { return r.version; });
    }
    if (runs.empty()) throw Error(ErrorCode::InsufficientLabels, "no family has two or more version labels");
  } else {
    throw Error(ErrorCode::InvalidArgument, "--task must be family, version, optimization or binary");
  }

  json report;
  report["report"] = "cross_validate";
  report["schema_version"] = 1;
  report["task"] = cv.task;
  report["scheme"] = cv.scheme;
  report["k"] = cv.k;
  report["seed"] = config.seed;
  report["corpus"] = to_json(corpus.summary);
  report["samples"] = corpus.records.size();
  report["failed_extractions"] = corpus.failed.size();
  json results = json::object();
  double train_wall = 0.0;
  double train_cpu = 0.0;
  std::size_t evaluated = 0;
  for (const auto& r : runs) {
    std::map<std::string, std::size_t> counts;
    for (const auto& l : r.labels) ++counts[l];
    Stopwatch sw;
    const CvResult res = cross_validate(r.features, r.labels, config, cv.k, config.seed);
    train_wall += sw.wall_seconds();
    train_cpu += sw.cpu_seconds();
    evaluated += res.evaluated;
    json j = cv_json(res);
    j["label_counts"] = counts;
    results[r.name] = j;
  }
  report["results"] = results;
  if (o.timing) {
    report["timing"] = {{"extraction", timing_json(corpus.extract_wall, corpus.extract_cpu, corpus.records.size())},
                        {"train_evaluate", timing_json(train_wall, train_cpu, evaluated)}};
  }

  std::ostringstream text;
  if (o.json) {
    text << report.dump(1) << "\n";
  } else {
    text << "samples: " << corpus.records.size() << "\n";
    for (const auto& [name, j] : results.items()) {
      text << name << ": mean accuracy " << std::fixed << std::setprecision(4) << j["mean_accuracy"].get<double>()
           << "  folds [";
      bool first = true;
      for (double a : j["fold_accuracies"]) {
        text << (first ? "" : ", ") << std::setprecision(4) << a;
        first = false;
      }
      text << "]\n";
    }
    if (o.timing) {
      const auto& t = report["timing"];
      text << std::setprecision(3) << "extraction: " << t["extraction"]["cpu_ms_per_binary"].get<double>()
           << " ms cpu/binary, " << t["extraction"]["wall_s"].get<double>() << " s wall\n"
           << "train+evaluate: " << t["train_evaluate"]["cpu_ms_per_binary"].get<double>() << " ms cpu/binary, "
           << t["train_evaluate"]["wall_s"].get<double>() << " s wall\n";
    }
  }
  emit(o, out, text.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
  CorpusOptions corpus;
  TrainingOptions training;
  std::string scheme = "5";
};

inline int cmd_train(const TrainOptions& t, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out model.json is required");
  const auto scheme = parse_scheme(t.scheme);
  if (!scheme) throw Error(ErrorCode::InvalidArgument, "--scheme must be 5, 4 or 2");
  const TrainConfig config = t.training.config();
  const CorpusLoad corpus = load_corpus(t.corpus, o, err);
  if (corpus.records.empty()) throw Error(ErrorCode::EmptyCorpus, "no usable binaries");
  const auto samples = to_samples(corpus.records);
  Stopwatch sw;
  const ProvenanceModel model = train_hierarchy(samples, *scheme, config);
  const double wall = sw.wall_seconds();
  const double cpu = sw.cpu_seconds();
  if (!model.gcc_version) err << "warning: gcc version classifier unavailable (needs two or more gcc versions)\n";
  if (!model.clang_version) err << "warning: clang version classifier unavailable (needs two or more clang versions)\n";
  if (!model.optimization) err << "warning: optimization classifier unavailable (single optimization label)\n";

  emit(o, out, serialize_model(model));

  json report;
  report["report"] = "train";
  report["schema_version"] = 1;
  report["model"] = o.out;
  report["samples"] = samples.size();
  json tasks = json::object();
  const auto describe = [&](const char* name, const std::optional<TaskModel>& tm) {
    tasks[name] = tm ? json{{"labels", tm->labels}, {"dimensions", tm->layout.size()}} : json(nullptr);
  };
  describe("family", model.family);
  describe("gcc_version", model.gcc_version);
  describe("clang_version", model.clang_version);
  describe("optimization", model.optimization);
  report["tasks"] = tasks;
  if (o.timing)
    report["timing"] = {{"extraction", timing_json(corpus.extract_wall, corpus.extract_cpu, samples.size())},
                        {"training", timing_json(wall, cpu, samples.size())}};
  if (o.json) {
    out << report.dump(1) << "\n";
  } else {
    out << "trained " << samples.size() << " samples -> " << o.out << "\n";
    for (const auto& [name, v] : tasks.items())
      out << "  " << name << ": " << (v.is_null() ? std::string("unavailable") : v["labels"].dump()) << "\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict

inline json prediction_json(const std::string& path, const Prediction& p) {
  json j;
  j["path"] = path;
  j["family"] = p.family;
  j["version"] = p.version ? json(*p.version) : json(nullptr);
  j["optimization"] = p.optimization;
  j["margins"] = p.margins;
  return j;
}

struct PredictOptions {
  std::string model;
  std::vector<std::string> paths;
};

struct PredictOutcome {
  std::string path;
  std::optional<Prediction> prediction;
  std::string error;
};

inline std::vector<PredictOutcome> predict_paths(const ProvenanceModel& model, const std::vector<std::string>& paths,
                                                 const CommonOptions& o) {
  const auto isa = isa_option(o.isa);
  const auto cfg = disassembler_for(o);
  return parallel_map(paths.size(), o.jobs, [&](std::size_t i) {
    PredictOutcome r;
    r.path = paths[i];
    try {
      r.prediction = predict_provenance(model, obtain_listing(paths[i], isa, cfg));
    } catch (const Error& e) {
      r.error = e.what();
    }
    return r;
  });
}

inline int cmd_predict(const PredictOptions& p, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  if (p.paths.empty()) throw Error(ErrorCode::InvalidArgument, "no input binaries");
  const ProvenanceModel model = load_model(p.model);
  const auto results = predict_paths(model, p.paths, o);
  std::ostringstream text;
  json arr = json::array();
  for (const auto& r : results) {
    if (r.prediction) {
      arr.push_back(prediction_json(r.path, *r.prediction));
      if (!o.json)
        text << r.path << "\t" << r.prediction->family << "\t" << r.prediction->version.value_or("unavailable") << "\t"
             << r.prediction->optimization << "\n";
    } else {
      arr.push_back({{"path", r.path}, {"error", r.error}});
      err << r.path << ": " << r.error << "\n";
      if (!o.json) text << r.path << "\terror\t" << r.error << "\n";
    }
  }
  if (o.json) text << arr.dump(1) << "\n";
  emit(o, out, text.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// explain

struct ExplainOptions {
  std::string model;
  std::string task = "all";
  std::size_t top = 5;
};

inline int cmd_explain(const ExplainOptions& e, const CommonOptions& o, std::ostream& out, std::ostream&) {
  const ProvenanceModel model = load_model(e.model);
  std::vector<std::pair<std::string, const std::optional<TaskModel>*>> tasks = {
      {"family", &model.family},
      {"gcc_version", &model.gcc_version},
      {"clang_version", &model.clang_version},
      {"optimization", &model.optimization}};
  if (e.task != "all") {
    std::erase_if(tasks, [&](const auto& t) { return t.first != e.task; });
    if (tasks.empty()) throw Error(ErrorCode::InvalidArgument, "unknown --task '" + e.task + "'");
    if (!tasks.front().second->has_value()) throw Error(ErrorCode::InsufficientLabels, "task " + e.task + " is unavailable");
  }
  json report = json::object();
  std::ostringstream text;
  for (const auto& [name, tm] : tasks) {
    if (!tm->has_value()) continue;
    const TaskModel& t = **tm;
    json tables = json::array();
    const auto table = [&](const LinearModel& m, const std::string& label) {
      json rows = json::array();
      for (const auto& w : top_weights(m, t.layout.names, e.top)) rows.push_back({{"feature", w.feature}, {"weight", w.weight}});
      tables.push_back({{"label", label}, {"rows", rows}});
    };
    if (const auto* b = std::get_if<LinearModel>(&t.classifier))
      table(*b, b->positive_label + " vs " + b->negative_label);
    else
      for (const auto& m : std::get<OneVsRestModel>(t.classifier).models) table(m, m.positive_label);
    report[name] = tables;
    for (const auto& tb : tables) {
      text << name << " [" << tb["label"].get<std::string>() << "]\n";
      for (const auto& row : tb["rows"])
        text << "  " << std::left << std::setw(24) << row["feature"].get<std::string>() << std::right << std::showpos
             << std::fixed << std::setprecision(4) << row["weight"].get<double>() << std::noshowpos << "\n";
    }
  }
  emit(o, out, o.json ? report.dump(1) + "\n" : text.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// scan

struct ScanOptions {
  std::string model;
  std::string directory;
  std::string report;  // .csv or .json
  bool per_file = false;
};

inline bool looks_like_elf(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && magic[0] == 0x7f && magic[1] == 'E' && magic[2] == 'L' && magic[3] == 'F';
}

inline int cmd_scan(const ScanOptions& s, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  const ProvenanceModel model = load_model(s.model);
  std::error_code ec;
  if (!std::filesystem::is_directory(s.directory, ec)) throw Error(ErrorCode::IoFailure, "not a directory: " + s.directory);
  std::vector<std::string> files;
  std::size_t skipped = 0;
  for (const auto& ent : std::filesystem::recursive_directory_iterator(s.directory)) {
    if (!ent.is_regular_file()) continue;
    if (looks_like_elf(ent.path()))
      files.push_back(ent.path().string());
    else
      ++skipped;
  }
  std::sort(files.begin(), files.end());
  auto results = predict_paths(model, files, o);
  std::map<std::string, std::size_t> family;
  std::map<std::string, std::size_t> optimization;
  std::map<std::string, std::size_t> version;
  std::size_t ok = 0;
  json per_file = json::array();
  for (const auto& r : results) {
    if (!r.prediction) {
      err << r.path << ": " << r.error << "\n";
      if (s.per_file) per_file.push_back({{"path", r.path}, {"error", r.error}});
      continue;
    }
    ++ok;
    ++family[r.prediction->family];
    if (!r.prediction->optimization.empty()) ++optimization[r.prediction->optimization];
    ++version[r.prediction->family + "/" + r.prediction->version.value_or("unavailable")];
    if (s.per_file) per_file.push_back(prediction_json(r.path, *r.prediction));
  }
  json report = {{"report", "scan"},
                 {"schema_version", 1},
                 {"directory", s.directory},
                 {"scanned", ok},
                 {"failed", results.size() - ok},
                 {"skipped_non_elf", skipped},
                 {"family", family},
                 {"optimization", optimization},
                 {"version", version}};
  if (s.per_file) report["files"] = per_file;

  if (!s.report.empty()) {
    std::ostringstream r;
    if (std::filesystem::path(s.report).extension() == ".csv") {
      r << "stage,label,count\n";
      for (const auto& [l, n] : family) r << "family," << l << ',' << n << '\n';
      for (const auto& [l, n] : optimization) r << "optimization," << l << ',' << n << '\n';
      for (const auto& [l, n] : version) r << "version," << l << ',' << n << '\n';
    } else {
      r << report.dump(1) << "\n";
    }
    CommonOptions file = o;
    file.out = s.report;
    emit(file, out, r.str());
  }
  std::ostringstream text;
  if (o.json) {
    text << report.dump(1) << "\n";
  } else {
    text << "scanned " << ok << " binaries (" << skipped << " non-ELF skipped, " << (results.size() - ok) << " failed)\n";
    for (const auto& [l, n] : family) text << "  family " << l << ": " << n << "\n";
    for (const auto& [l, n] : optimization) text << "  optimization " << l << ": " << n << "\n";
  }
  emit(o, out, text.str());
  if (ok == 0) {
    err << "no ingestible binaries in " << s.directory << " (skipped " << skipped << ")\n";
    return kExitUser;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// summarize

struct SummarizeOptions {
  std::string manifest;
  std::uint64_t max_size = kDefaultSizeLimit;
  bool csv = false;
};

inline int cmd_summarize(const SummarizeOptions& s, const CommonOptions& o, std::ostream& out, std::ostream& err) {
  Manifest m = load_manifest(s.manifest, LabelSpace{}, o.jobs);
  for (const auto& p : m.missing) err << "warning: missing file " << p.string() << "\n";
  const auto dedup = dedup_by_checksum(m.entries);
  const auto sized = filter_by_size(dedup.entries, s.max_size);
  const auto summary = summarize(sized.entries, dedup.removed, sized.removed);
  std::ostringstream text;
  if (s.csv)
    write_size_histogram_csv(text, summary);
  else
    text << to_json(summary).dump(1) << "\n";
  emit(o, out, text.str());
  return kExitOk;
}

/// Maps an exception escaping a command to the exit-code contract.
inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const OutputError*>(&e) != nullptr) return kExitInternal;
  if (dynamic_cast<const Error*>(&e) != nullptr) return kExitUser;
  return kExitInternal;
}

}  // namespace provenance::cli
