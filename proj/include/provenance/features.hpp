#pragma once

// Per-binary features: register source/destination distributions, the fp/sp
// ratio, opcode term frequencies, and corpus-fitted TF-IDF scores.

#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "provenance/disasm.hpp"
#include "provenance/error.hpp"

namespace provenance {

struct RegisterProfile {
  std::map<std::string, double> src_freq;
  std::map<std::string, double> dst_freq;
  double fp_sp_ratio = 0.0;
  std::uint64_t src_total = 0;
  std::uint64_t dst_total = 0;
  std::uint64_t fp_refs = 0;
  std::uint64_t sp_refs = 0;
};

struct TermFrequencies {
  std::map<std::string, double> tf;
  std::map<std::string, std::uint64_t> counts;
  std::uint64_t instruction_count = 0;
};

/// Feature source for one binary; TF-IDF is applied later against a fitted model.
struct BinaryFeatures {
  Isa isa = Isa::Arm32;
  RegisterProfile profile;
  TermFrequencies terms;
};

inline std::string_view frame_pointer_name(Isa isa) { return isa == Isa::Arm32 ? "fp" : "x29"; }

inline RegisterProfile profile_registers(std::span<const Instruction> instructions, Isa isa) {
  if (instructions.empty()) throw Error(ErrorCode::EmptyStream, "no instructions to profile");
  std::map<std::string, std::uint64_t> src;
  std::map<std::string, std::uint64_t> dst;
  RegisterProfile p;
  const std::string_view fp = frame_pointer_name(isa);
  for (const auto& ins : instructions) {
    for (const auto& op : ins.operands) {
      for (const auto& reg : op.registers) {
        if (reads(op.role)) {
          ++src[reg.token];
          ++p.src_total;
        }
        if (writes(op.role)) {
          ++dst[reg.token];
          ++p.dst_total;
        }
        if (reg.token == fp) ++p.fp_refs;
        if (reg.token == "sp") ++p.sp_refs;
      }
    }
  }
  for (const auto& [r, c] : src) p.src_freq[r] = static_cast<double>(c) / static_cast<double>(p.src_total);
  for (const auto& [r, c] : dst) p.dst_freq[r] = static_cast<double>(c) / static_cast<double>(p.dst_total);
  const std::uint64_t both = p.fp_refs + p.sp_refs;
  p.fp_sp_ratio = both == 0 ? 0.0 : static_cast<double>(p.fp_refs) / static_cast<double>(both);
  return p;
}

inline TermFrequencies opcode_term_frequencies(std::span<const Instruction> instructions) {
  if (instructions.empty()) throw Error(ErrorCode::EmptyStream, "no instructions for term frequencies");
  TermFrequencies t;
  for (const auto& ins : instructions) ++t.counts[ins.mnemonic];
  t.instruction_count = instructions.size();
  for (const auto& [m, c] : t.counts) t.tf[m] = static_cast<double>(c) / static_cast<double>(t.instruction_count);
  return t;
}

inline BinaryFeatures extract_features(std::span<const Instruction> instructions, Isa isa) {
  return BinaryFeatures{isa, profile_registers(instructions, isa), opcode_term_frequencies(instructions)};
}

inline BinaryFeatures extract_features(const Listing& listing) {
  const auto instructions = parse_listing(listing.text, listing.isa);
  return extract_features(instructions, listing.isa);
}

// ---------------------------------------------------------------------------
// TF-IDF

struct TfidfModel {
  std::vector<std::string> vocabulary;  // sorted
  std::vector<double> idf;
  std::uint64_t corpus_size = 0;
};

inline TfidfModel fit_tfidf(std::span<const TermFrequencies> corpus) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot fit TF-IDF on an empty corpus");
  std::map<std::string, std::uint64_t> doc_freq;
  for (const auto& doc : corpus)
    for (const auto& [m, v] : doc.tf)
      if (v > 0.0) ++doc_freq[m];
  TfidfModel model;
  model.corpus_size = corpus.size();
  const double n = static_cast<double>(corpus.size());
  for (const auto& [m, df] : doc_freq) {
    model.vocabulary.push_back(m);
    model.idf.push_back(std::log(n / static_cast<double>(df)));
  }
  return model;
}

inline TfidfModel fit_tfidf(std::span<const BinaryFeatures> corpus) {
  std::vector<TermFrequencies> docs;
  docs.reserve(corpus.size());
  for (const auto& b : corpus) docs.push_back(b.terms);
  return fit_tfidf(std::span<const TermFrequencies>(docs));
}

inline std::vector<double> transform_tfidf(const TermFrequencies& tf, const TfidfModel& model) {
  std::vector<double> out(model.vocabulary.size(), 0.0);
  double sq = 0.0;
  for (std::size_t i = 0; i < model.vocabulary.size(); ++i) {
    auto it = tf.tf.find(model.vocabulary[i]);
    if (it == tf.tf.end()) continue;
    out[i] = it->second * model.idf[i];
    sq += out[i] * out[i];
  }
  if (sq == 0.0) return std::vector<double>(out.size(), 0.0);
  const double norm = std::sqrt(sq);
  for (double& v : out) v /= norm;
  return out;
}

// ---------------------------------------------------------------------------
// Layout and assembly

struct FeatureLayout {
  Isa isa = Isa::Arm32;
  std::vector<std::string> names;
  std::size_t register_count = 0;   // bins per role
  std::size_t vocabulary_size = 0;

  std::size_t src_offset() const { return 0; }
  std::size_t dst_offset() const { return register_count; }
  std::size_t fp_sp_offset() const { return 2 * register_count; }
  std::size_t op_offset() const { return 2 * register_count + 1; }
  std::size_t size() const { return names.size(); }
};

inline FeatureLayout make_layout(Isa isa, const std::vector<std::string>& vocabulary) {
  FeatureLayout l;
  l.isa = isa;
  const auto& regs = register_set(isa);
  l.register_count = regs.size();
  l.vocabulary_size = vocabulary.size();
  for (const auto& r : regs) l.names.push_back("src_" + r);
  for (const auto& r : regs) l.names.push_back("dst_" + r);
  l.names.push_back("fp_sp_ratio");
  for (const auto& m : vocabulary) l.names.push_back("op_" + m);
  return l;
}

inline FeatureLayout make_layout(const TfidfModel& model, Isa isa) { return make_layout(isa, model.vocabulary); }

struct FeatureVector {
  std::vector<double> values;
};

inline FeatureVector assemble_feature_vector(const RegisterProfile& profile, std::span<const double> tfidf,
                                             const FeatureLayout& layout) {
  if (tfidf.size() != layout.vocabulary_size)
    throw Error(ErrorCode::LayoutMismatch, "TF-IDF length " + std::to_string(tfidf.size()) + " but layout has " +
                                               std::to_string(layout.vocabulary_size) + " opcode columns");
  FeatureVector v;
  v.values.assign(layout.size(), 0.0);
  const auto& regs = register_set(layout.isa);
  for (std::size_t i = 0; i < regs.size(); ++i) {
    if (auto it = profile.src_freq.find(regs[i]); it != profile.src_freq.end()) v.values[layout.src_offset() + i] = it->second;
    if (auto it = profile.dst_freq.find(regs[i]); it != profile.dst_freq.end()) v.values[layout.dst_offset() + i] = it->second;
  }
  v.values[layout.fp_sp_offset()] = profile.fp_sp_ratio;
  std::copy(tfidf.begin(), tfidf.end(), v.values.begin() + static_cast<std::ptrdiff_t>(layout.op_offset()));
  return v;
}

inline FeatureVector vectorize(const BinaryFeatures& b, const TfidfModel& model, const FeatureLayout& layout) {
  const auto scores = transform_tfidf(b.terms, model);
  return assemble_feature_vector(b.profile, scores, layout);
}

// ---------------------------------------------------------------------------
// Export

inline nlohmann::json to_json(const BinaryFeatures& b) {
  nlohmann::json j;
  j["isa"] = isa_name(b.isa);
  j["instruction_count"] = b.terms.instruction_count;
  j["src_freq"] = b.profile.src_freq;
  j["dst_freq"] = b.profile.dst_freq;
  j["fp_sp_ratio"] = b.profile.fp_sp_ratio;
  j["opcode_counts"] = b.terms.counts;
  return j;
}

inline BinaryFeatures binary_features_from_json(const nlohmann::json& j) {
  BinaryFeatures b;
  const auto isa = parse_isa(j.at("isa").get<std::string>());
  if (!isa) throw Error(ErrorCode::InvalidArgument, "unknown isa in feature record");
  b.isa = *isa;
  b.profile.src_freq = j.at("src_freq").get<std::map<std::string, double>>();
  b.profile.dst_freq = j.at("dst_freq").get<std::map<std::string, double>>();
  b.profile.fp_sp_ratio = j.at("fp_sp_ratio").get<double>();
  b.terms.counts = j.at("opcode_counts").get<std::map<std::string, std::uint64_t>>();
  b.terms.instruction_count = j.at("instruction_count").get<std::uint64_t>();
  for (const auto& [m, c] : b.terms.counts)
    b.terms.tf[m] = static_cast<double>(c) / static_cast<double>(b.terms.instruction_count);
  return b;
}

/// One CSV row per vector, header = layout names.
inline void write_csv(std::ostream& out, const FeatureLayout& layout, std::span<const FeatureVector> rows) {
  for (std::size_t i = 0; i < layout.names.size(); ++i) out << (i ? "," : "") << layout.names[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.values.size(); ++i) out << (i ? "," : "") << nlohmann::json(r.values[i]).dump();
    out << '\n';
  }
}

}  // namespace provenance
