#pragma once

// The four-classifier hierarchy: family and optimization are predicted side
// by side, and the predicted family picks the version classifier. Each task
// keeps its own TF-IDF model and layout. Models persist as JSON.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "provenance/disasm.hpp"
#include "provenance/error.hpp"
#include "provenance/features.hpp"
#include "provenance/learn.hpp"

namespace provenance {

inline constexpr int kModelSchemaVersion = 1;

enum class OptimizationScheme { Five, Four, Two };

inline std::string_view scheme_name(OptimizationScheme s) {
  switch (s) {
    case OptimizationScheme::Five: return "5";
    case OptimizationScheme::Four: return "4";
    case OptimizationScheme::Two: return "2";
  }
  return "5";
}

inline std::optional<OptimizationScheme> parse_scheme(std::string_view s) {
  if (s == "5" || s == "five") return OptimizationScheme::Five;
  if (s == "4" || s == "four") return OptimizationScheme::Four;
  if (s == "2" || s == "two") return OptimizationScheme::Two;
  return std::nullopt;
}

/// Maps a raw optimization flag into the scheme's label space.
inline std::string map_optimization(const std::string& flag, OptimizationScheme scheme) {
  switch (scheme) {
    case OptimizationScheme::Five: return flag;
    case OptimizationScheme::Four: return (flag == "-O2" || flag == "-O3") ? "-O2/-O3" : flag;
    case OptimizationScheme::Two: return flag == "-O0" ? "-O0" : "optimized";
  }
  return flag;
}

/// Two-label task such as CompCert against everything else.
struct BinaryTask {
  std::string positive_label;
  std::string negative_label;
};

/// One classifier together with the features it was trained on.
struct TaskModel {
  std::vector<std::string> labels;
  TfidfModel tfidf;
  FeatureLayout layout;
  Classifier classifier;
  TrainConfig config;

  FeatureVector features(const BinaryFeatures& b) const { return vectorize(b, tfidf, layout); }
  std::string predict(const BinaryFeatures& b) const { return provenance::predict(classifier, features(b).values); }
};

struct LabeledSample {
  BinaryFeatures features;
  std::string family;
  std::string version;       // empty when unknown
  std::string optimization;  // raw flag, e.g. "-O2"
};

struct ProvenanceModel {
  int schema_version = kModelSchemaVersion;
  Isa isa = Isa::Arm32;
  OptimizationScheme scheme = OptimizationScheme::Five;
  std::string created;  // YYYY-MM-DD
  std::optional<TaskModel> family;
  std::optional<TaskModel> gcc_version;
  std::optional<TaskModel> clang_version;
  std::optional<TaskModel> optimization;
};

struct Prediction {
  std::string family;
  std::optional<std::string> version;  // nullopt = Unavailable
  std::string version_task;            // which version classifier answered, empty if none
  std::string optimization;
  std::map<std::string, std::vector<double>> margins;
};

// ---------------------------------------------------------------------------
// Training

/// Fits TF-IDF on `samples` and trains one task classifier. Throws
/// InsufficientLabels if fewer than two labels are present.
inline TaskModel train_task(std::span<const BinaryFeatures> samples, std::span<const std::string> labels,
                            const TrainConfig& config) {
  if (samples.empty()) throw Error(ErrorCode::EmptyCorpus, "no samples for task");
  const auto ls = sorted_labels(labels);
  if (ls.size() < 2) throw Error(ErrorCode::InsufficientLabels, "task needs two labels, found " + std::to_string(ls.size()));
  TaskModel t;
  t.labels = ls;
  t.config = config;
  t.tfidf = fit_tfidf(samples);
  t.layout = make_layout(t.tfidf, samples.front().isa);
  Matrix X(samples.size(), t.layout.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto v = t.features(samples[i]);
    std::copy(v.values.begin(), v.values.end(), X.data.begin() + static_cast<std::ptrdiff_t>(i * X.cols));
  }
  t.classifier = train_classifier(X, labels, config);
  return t;
}

inline bool is_gcc(const std::string& family) { return detail::lower(family) == "gcc"; }
inline bool is_clang(const std::string& family) { return detail::lower(family) == "clang"; }

namespace detail {

inline std::optional<TaskModel> train_version(std::span<const LabeledSample> samples, bool (*match)(const std::string&),
                                              const TrainConfig& config) {
  std::vector<BinaryFeatures> feats;
  std::vector<std::string> labels;
  for (const auto& s : samples) {
    if (!match(s.family) || s.version.empty()) continue;
    feats.push_back(s.features);
    labels.push_back(s.version);
  }
  if (sorted_labels(labels).size() < 2) return std::nullopt;
  return train_task(feats, labels, config);
}

inline std::string model_date() {
  std::time_t t = std::time(nullptr);
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e != nullptr && *e != '\0') t = static_cast<std::time_t>(std::atoll(e));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[16];
  std::strftime(buf, sizeof buf, "%Y-%m-%d", &tm);
  return buf;
}

}  // namespace detail

inline ProvenanceModel train_hierarchy(std::span<const LabeledSample> samples, OptimizationScheme scheme,
                                       const TrainConfig& config) {
  if (samples.empty()) throw Error(ErrorCode::EmptyCorpus, "no training samples");
  const Isa isa = samples.front().features.isa;
  std::vector<BinaryFeatures> feats;
  std::vector<std::string> families;
  std::vector<std::string> opts;
  for (const auto& s : samples) {
    if (s.features.isa != isa) throw Error(ErrorCode::IsaMismatch, "training corpus mixes ISAs");
    feats.push_back(s.features);
    families.push_back(s.family);
    opts.push_back(map_optimization(s.optimization, scheme));
  }
  if (sorted_labels(families).size() < 2) throw Error(ErrorCode::InsufficientLabels, "corpus needs at least two families");
  ProvenanceModel m;
  m.isa = isa;
  m.scheme = scheme;
  m.created = detail::model_date();
  m.family = train_task(feats, families, config);
  if (sorted_labels(opts).size() >= 2) m.optimization = train_task(feats, opts, config);
  m.gcc_version = detail::train_version(samples, is_gcc, config);
  m.clang_version = detail::train_version(samples, is_clang, config);
  return m;
}

inline TaskModel train_binary_task(std::span<const LabeledSample> samples, const BinaryTask& task, const TrainConfig& config) {
  std::vector<BinaryFeatures> feats;
  std::vector<std::string> labels;
  for (const auto& s : samples) {
    feats.push_back(s.features);
    labels.push_back(s.family == task.positive_label ? task.positive_label : task.negative_label);
  }
  if (sorted_labels(labels).size() < 2)
    throw Error(ErrorCode::InsufficientLabels, "binary task needs both '" + task.positive_label + "' and '" +
                                                   task.negative_label + "' samples");
  return train_task(feats, labels, config);
}

/// k-fold CV where TF-IDF and class weights are refit on each training split.
inline CvResult cross_validate(std::span<const BinaryFeatures> samples, std::span<const std::string> labels,
                               const TrainConfig& config, int k, std::uint64_t seed) {
  if (samples.size() != labels.size()) throw Error(ErrorCode::DimensionMismatch, "samples and labels differ in length");
  if (sorted_labels(labels).size() < 2) throw Error(ErrorCode::InsufficientLabels, "task needs at least two labels");
  const auto folds = stratified_kfold(labels, k, seed);
  return run_folds(folds, [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
    std::vector<BinaryFeatures> tf;
    std::vector<std::string> tl;
    for (std::size_t i : train) {
      tf.push_back(samples[i]);
      tl.push_back(labels[i]);
    }
    const TaskModel t = train_task(tf, tl, config);
    std::size_t correct = 0;
    for (std::size_t i : test) correct += t.predict(samples[i]) == labels[i] ? 1 : 0;
    return correct;
  });
}

// ---------------------------------------------------------------------------
// Prediction

inline Prediction predict_provenance(const ProvenanceModel& model, const BinaryFeatures& b) {
  if (b.isa != model.isa)
    throw Error(ErrorCode::IsaMismatch, "binary is " + std::string(isa_name(b.isa)) + ", model is " +
                                            std::string(isa_name(model.isa)));
  if (!model.family) throw Error(ErrorCode::ModelSchemaMismatch, "model has no family classifier");
  Prediction p;
  const auto run = [&](const TaskModel& t, const std::string& stage) {
    const auto x = t.features(b);
    p.margins[stage] = decision_values(t.classifier, x.values);
    return provenance::predict(t.classifier, x.values);
  };
  p.family = run(*model.family, "family");
  if (model.optimization) p.optimization = run(*model.optimization, "optimization");
  const std::optional<TaskModel>* version = nullptr;
  if (is_gcc(p.family)) {
    version = &model.gcc_version;
    p.version_task = "gcc_version";
  } else if (is_clang(p.family)) {
    version = &model.clang_version;
    p.version_task = "clang_version";
  }
  if (version != nullptr && version->has_value()) {
    p.version = run(**version, p.version_task);
  } else {
    p.version_task.clear();
  }
  return p;
}

inline Prediction predict_provenance(const ProvenanceModel& model, const Listing& listing) {
  return predict_provenance(model, extract_features(listing));
}

// ---------------------------------------------------------------------------
// Persistence

namespace detail {

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"C", c.C},
          {"tolerance", c.tolerance},
          {"max_epochs", c.max_epochs},
          {"class_weighting", c.weighting == ClassWeighting::Balanced ? "balanced" : "uniform"},
          {"seed", c.seed}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.C = j.at("C").get<double>();
  c.tolerance = j.at("tolerance").get<double>();
  c.max_epochs = j.at("max_epochs").get<int>();
  const auto w = j.at("class_weighting").get<std::string>();
  if (w != "balanced" && w != "uniform") throw Error(ErrorCode::ModelSchemaMismatch, "unknown class weighting " + w);
  c.weighting = w == "balanced" ? ClassWeighting::Balanced : ClassWeighting::Uniform;
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline nlohmann::json info_to_json(const TrainingInfo& i) {
  return {{"objective", i.objective}, {"epochs", i.epochs}, {"converged", i.converged}};
}

inline TrainingInfo info_from_json(const nlohmann::json& j) {
  TrainingInfo i;
  i.objective = j.at("objective").get<double>();
  i.epochs = j.at("epochs").get<int>();
  i.converged = j.at("converged").get<bool>();
  return i;
}

inline nlohmann::json task_to_json(const TaskModel& t) {
  nlohmann::json j;
  j["labels"] = t.labels;
  j["layout_names"] = t.layout.names;
  j["vocabulary"] = t.tfidf.vocabulary;
  j["idf"] = t.tfidf.idf;
  j["corpus_size"] = t.tfidf.corpus_size;
  j["train_config"] = config_to_json(t.config);
  if (const auto* b = std::get_if<LinearModel>(&t.classifier)) {
    j["kind"] = "binary";
    j["positive_label"] = b->positive_label;
    j["weights"] = b->weights;
    j["bias"] = b->bias;
    j["training"] = info_to_json(b->info);
  } else {
    const auto& o = std::get<OneVsRestModel>(t.classifier);
    j["kind"] = "one_vs_rest";
    nlohmann::json w = nlohmann::json::array();
    nlohmann::json bias = nlohmann::json::array();
    nlohmann::json info = nlohmann::json::array();
    for (const auto& m : o.models) {
      w.push_back(m.weights);
      bias.push_back(m.bias);
      info.push_back(info_to_json(m.info));
    }
    j["weights"] = w;
    j["bias"] = bias;
    j["training"] = info;
  }
  return j;
}

inline TaskModel task_from_json(const nlohmann::json& j, Isa isa) {
  TaskModel t;
  t.labels = j.at("labels").get<std::vector<std::string>>();
  t.tfidf.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
  t.tfidf.idf = j.at("idf").get<std::vector<double>>();
  t.tfidf.corpus_size = j.at("corpus_size").get<std::uint64_t>();
  t.config = config_from_json(j.at("train_config"));
  if (t.tfidf.idf.size() != t.tfidf.vocabulary.size())
    throw Error(ErrorCode::ModelSchemaMismatch, "idf and vocabulary lengths differ");
  t.layout = make_layout(isa, t.tfidf.vocabulary);
  if (j.at("layout_names").get<std::vector<std::string>>() != t.layout.names)
    throw Error(ErrorCode::ModelSchemaMismatch, "stored layout does not match vocabulary and ISA");
  const auto kind = j.at("kind").get<std::string>();
  const std::size_t dims = t.layout.size();
  if (kind == "binary") {
    if (t.labels.size() != 2) throw Error(ErrorCode::ModelSchemaMismatch, "binary task must have two labels");
    LinearModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.positive_label = j.at("positive_label").get<std::string>();
    if (m.positive_label != t.labels[0] && m.positive_label != t.labels[1])
      throw Error(ErrorCode::ModelSchemaMismatch, "positive label not in label list");
    m.negative_label = m.positive_label == t.labels[0] ? t.labels[1] : t.labels[0];
    if (j.contains("training")) m.info = info_from_json(j.at("training"));
    if (m.weights.size() != dims) throw Error(ErrorCode::ModelSchemaMismatch, "weight length differs from layout");
    t.classifier = std::move(m);
  } else if (kind == "one_vs_rest") {
    OneVsRestModel o;
    o.labels = t.labels;
    const auto& w = j.at("weights");
    const auto& b = j.at("bias");
    if (w.size() != t.labels.size() || b.size() != t.labels.size())
      throw Error(ErrorCode::ModelSchemaMismatch, "one model per label expected");
    for (std::size_t i = 0; i < t.labels.size(); ++i) {
      LinearModel m;
      m.weights = w.at(i).get<std::vector<double>>();
      m.bias = b.at(i).get<double>();
      m.positive_label = t.labels[i];
      m.negative_label = "rest";
      if (j.contains("training")) m.info = info_from_json(j.at("training").at(i));
      if (m.weights.size() != dims) throw Error(ErrorCode::ModelSchemaMismatch, "weight length differs from layout");
      o.models.push_back(std::move(m));
    }
    t.classifier = std::move(o);
  } else {
    throw Error(ErrorCode::ModelSchemaMismatch, "unknown classifier kind " + kind);
  }
  return t;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ProvenanceModel& m) {
  nlohmann::json j;
  j["schema_version"] = m.schema_version;
  j["isa"] = isa_name(m.isa);
  j["optimization_scheme"] = scheme_name(m.scheme);
  j["created"] = m.created;
  nlohmann::json tasks = nlohmann::json::object();
  const auto put = [&](const char* name, const std::optional<TaskModel>& t) {
    tasks[name] = t ? detail::task_to_json(*t) : nlohmann::json(nullptr);
  };
  put("family", m.family);
  put("gcc_version", m.gcc_version);
  put("clang_version", m.clang_version);
  put("optimization", m.optimization);
  j["tasks"] = tasks;
  return j;
}

inline ProvenanceModel model_from_json(const nlohmann::json& j) {
  try {
    ProvenanceModel m;
    m.schema_version = j.at("schema_version").get<int>();
    if (m.schema_version != kModelSchemaVersion)
      throw Error(ErrorCode::ModelSchemaMismatch, "unsupported schema version " + std::to_string(m.schema_version));
    const auto isa = parse_isa(j.at("isa").get<std::string>());
    if (!isa) throw Error(ErrorCode::ModelSchemaMismatch, "unknown isa");
    m.isa = *isa;
    const auto scheme = parse_scheme(j.at("optimization_scheme").get<std::string>());
    if (!scheme) throw Error(ErrorCode::ModelSchemaMismatch, "unknown optimization scheme");
    m.scheme = *scheme;
    m.created = j.value("created", "");
    const auto& tasks = j.at("tasks");
    const auto get = [&](const char* name) -> std::optional<TaskModel> {
      if (!tasks.contains(name) || tasks.at(name).is_null()) return std::nullopt;
      return detail::task_from_json(tasks.at(name), m.isa);
    };
    m.family = get("family");
    m.gcc_version = get("gcc_version");
    m.clang_version = get("clang_version");
    m.optimization = get("optimization");
    if (!m.family) throw Error(ErrorCode::ModelSchemaMismatch, "model has no family task");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ModelSchemaMismatch, e.what());
  }
}

inline std::string serialize_model(const ProvenanceModel& m) { return model_to_json(m).dump(1) + "\n"; }

inline void save_model(const ProvenanceModel& m, const std::filesystem::path& path) {
  const std::string text = serialize_model(m);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::IoFailure, "write failed for " + path.string());
}

inline ProvenanceModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open model " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::IoFailure, "model file " + path.string() + " is truncated or not JSON: " + e.what());
  }
  return model_from_json(j);
}

}  // namespace provenance
