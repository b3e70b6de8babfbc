#pragma once

// Labeled corpora: manifest loading (CSV or JSON), SHA-256 checksums,
// duplicate and size filters, and summaries for plotting.

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "provenance/disasm.hpp"
#include "provenance/error.hpp"

namespace provenance {

inline constexpr std::uint64_t kDefaultSizeLimit = 1'048'576;

struct LabelSpace {
  std::set<std::string> families = {"gcc", "clang", "compcert"};
  std::set<std::string> optimizations = {"-O0", "-O1", "-O2", "-O3", "-Os"};
};

struct ManifestEntry {
  std::filesystem::path path;
  Isa isa = Isa::Arm32;
  std::string family;
  std::string version;
  std::string optimization;
  std::string checksum;  // lowercase hex SHA-256
  std::uint64_t size = 0;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  std::vector<std::filesystem::path> missing;  // listed but not found on disk
};

// ---------------------------------------------------------------------------
// Checksums

namespace detail {
inline std::string to_hex(const unsigned char* md, unsigned len) {
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}
}  // namespace detail

inline std::string sha256_hex(std::span<const std::uint8_t> data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error(ErrorCode::IoFailure, "SHA-256 computation failed");
  return detail::to_hex(md, len);
}

inline std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  return detail::to_hex(md, len);
}

/// Fills size and checksum for every entry, `jobs` files at a time.
inline void compute_checksums(std::vector<ManifestEntry>& entries, unsigned jobs = 1) {
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(entries.size());
  const auto worker = [&] {
    for (std::size_t i = next++; i < entries.size(); i = next++) {
      try {
        entries[i].size = std::filesystem::file_size(entries[i].path);
        entries[i].checksum = sha256_file(entries[i].path);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(entries.size())));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw Error(ErrorCode::IoFailure, entries[i].path.string() + ": " + errors[i]);
}

// ---------------------------------------------------------------------------
// Manifest parsing

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::string(trim(cur)));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw Error(ErrorCode::MalformedManifest, "unterminated quote");
  out.push_back(std::string(trim(cur)));
  return out;
}

using Row = std::map<std::string, std::string>;

inline ManifestEntry entry_from_row(const Row& row, const LabelSpace& space, const std::filesystem::path& base,
                                    std::size_t line) {
  const auto get = [&](const char* key) -> std::string {
    auto it = row.find(key);
    return it == row.end() ? std::string() : it->second;
  };
  const std::string where = " (entry " + std::to_string(line) + ")";
  ManifestEntry e;
  const std::string path = get("path");
  if (path.empty()) throw Error(ErrorCode::MalformedManifest, "empty path" + where);
  e.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path) : base / path;
  const auto isa = parse_isa(get("isa"));
  if (!isa) throw Error(ErrorCode::UnknownLabel, "isa '" + get("isa") + "'" + where);
  e.isa = *isa;
  e.family = lower(get("family"));
  if (!space.families.contains(e.family)) throw Error(ErrorCode::UnknownLabel, "family '" + get("family") + "'" + where);
  e.version = get("version");
  e.optimization = get("optimization");
  if (!space.optimizations.contains(e.optimization))
    throw Error(ErrorCode::UnknownLabel, "optimization '" + e.optimization + "'" + where);
  return e;
}

}  // namespace detail

inline std::vector<ManifestEntry> parse_manifest_csv(const std::string& text, const LabelSpace& space = {},
                                                     const std::filesystem::path& base = {}) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<ManifestEntry> out;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty() || line.front() == '#') continue;
    auto cells = detail::split_csv_line(line);
    if (header.empty()) {
      for (auto& c : cells) c = detail::lower(c);
      header = cells;
      for (const char* need : {"path", "isa", "family", "version", "optimization"})
        if (std::find(header.begin(), header.end(), need) == header.end())
          throw Error(ErrorCode::MalformedManifest, std::string("missing column '") + need + "'");
      continue;
    }
    if (cells.size() != header.size())
      throw Error(ErrorCode::MalformedManifest, "line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                                    " fields, header has " + std::to_string(header.size()));
    detail::Row row;
    for (std::size_t i = 0; i < cells.size(); ++i) row[header[i]] = cells[i];
    out.push_back(detail::entry_from_row(row, space, base, lineno));
  }
  if (header.empty()) throw Error(ErrorCode::MalformedManifest, "manifest is empty");
  return out;
}

inline std::vector<ManifestEntry> parse_manifest_json(const std::string& text, const LabelSpace& space = {},
                                                      const std::filesystem::path& base = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::MalformedManifest, e.what());
  }
  const nlohmann::json& arr = j.is_object() && j.contains("entries") ? j.at("entries") : j;
  if (!arr.is_array()) throw Error(ErrorCode::MalformedManifest, "expected an array of entries");
  std::vector<ManifestEntry> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_object()) throw Error(ErrorCode::MalformedManifest, "entry " + std::to_string(i) + " is not an object");
    detail::Row row;
    for (const auto& [k, v] : arr[i].items()) row[k] = v.is_string() ? v.get<std::string>() : v.dump();
    out.push_back(detail::entry_from_row(row, space, base, i + 1));
  }
  return out;
}

/// Loads a manifest; relative paths resolve against the manifest's
/// directory. Listed files that do not exist go to `missing`.
inline Manifest load_manifest(const std::filesystem::path& path, const LabelSpace& space = {}, unsigned jobs = 1) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open manifest " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (detail::trim(text).empty()) throw Error(ErrorCode::MalformedManifest, "manifest is empty");
  const auto base = path.parent_path();
  const auto first = detail::trim(text).front();
  auto entries = (first == '[' || first == '{') ? parse_manifest_json(text, space, base) : parse_manifest_csv(text, space, base);
  Manifest m;
  for (auto& e : entries) {
    if (std::filesystem::is_regular_file(e.path))
      m.entries.push_back(std::move(e));
    else
      m.missing.push_back(e.path);
  }
  compute_checksums(m.entries, jobs);
  return m;
}

inline void write_manifest_csv(std::ostream& out, std::span<const ManifestEntry> entries) {
  out << "path,isa,family,version,optimization\n";
  for (const auto& e : entries)
    out << e.path.string() << ',' << isa_name(e.isa) << ',' << e.family << ',' << e.version << ',' << e.optimization << '\n';
}

// ---------------------------------------------------------------------------
// Filters

struct FilterResult {
  std::vector<ManifestEntry> entries;
  std::size_t removed = 0;
};

/// Keeps the first entry for every key; `key(entry)` returns the dedup key.
template <class KeyFn>
FilterResult dedup_by(std::span<const ManifestEntry> entries, KeyFn&& key) {
  FilterResult r;
  std::unordered_set<std::string> seen;
  for (const auto& e : entries) {
    if (seen.insert(key(e)).second)
      r.entries.push_back(e);
    else
      ++r.removed;
  }
  return r;
}

inline FilterResult dedup_by_checksum(std::span<const ManifestEntry> entries) {
  return dedup_by(entries, [](const ManifestEntry& e) { return e.checksum; });
}

/// Second pass over feature keys (e.g. serialized feature vectors) aligned with `entries`.
inline FilterResult dedup_by_feature_key(std::span<const ManifestEntry> entries, std::span<const std::string> keys) {
  if (keys.size() != entries.size()) throw Error(ErrorCode::DimensionMismatch, "one feature key per entry expected");
  FilterResult r;
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (seen.insert(keys[i]).second)
      r.entries.push_back(entries[i]);
    else
      ++r.removed;
  }
  return r;
}

inline FilterResult filter_by_size(std::span<const ManifestEntry> entries, std::uint64_t limit = kDefaultSizeLimit) {
  if (limit == 0) throw Error(ErrorCode::InvalidArgument, "size limit must be positive");
  FilterResult r;
  for (const auto& e : entries) {
    if (e.size > limit)
      ++r.removed;
    else
      r.entries.push_back(e);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Summary

struct CorpusSummary {
  std::size_t total = 0;
  std::map<std::string, std::size_t> isa_counts;
  std::map<std::string, std::size_t> family_counts;
  std::map<std::string, std::size_t> version_counts;
  std::map<std::string, std::size_t> optimization_counts;
  std::map<std::uint64_t, std::size_t> size_buckets;  // key = bucket lower bound, a power of two (0 for empty files)
  std::size_t duplicates_removed = 0;
  std::size_t oversize_removed = 0;
};

inline std::uint64_t size_bucket(std::uint64_t size) { return size == 0 ? 0 : std::bit_floor(size); }

inline CorpusSummary summarize(std::span<const ManifestEntry> entries, std::size_t duplicates_removed = 0,
                               std::size_t oversize_removed = 0) {
  CorpusSummary s;
  s.total = entries.size();
  s.duplicates_removed = duplicates_removed;
  s.oversize_removed = oversize_removed;
  for (const auto& e : entries) {
    ++s.isa_counts[std::string(isa_name(e.isa))];
    ++s.family_counts[e.family];
    if (!e.version.empty()) ++s.version_counts[e.family + "/" + e.version];
    ++s.optimization_counts[e.optimization];
    ++s.size_buckets[size_bucket(e.size)];
  }
  return s;
}

inline nlohmann::json to_json(const CorpusSummary& s) {
  nlohmann::json buckets = nlohmann::json::array();
  for (const auto& [lo, n] : s.size_buckets)
    buckets.push_back({{"lower_bytes", lo}, {"upper_bytes", lo == 0 ? 1 : 2 * lo}, {"count", n}});
  return {{"total", s.total},
          {"isa", s.isa_counts},
          {"family", s.family_counts},
          {"version", s.version_counts},
          {"optimization", s.optimization_counts},
          {"size_histogram", buckets},
          {"duplicates_removed", s.duplicates_removed},
          {"oversize_removed", s.oversize_removed}};
}

/// Histogram rows "lower_bytes,upper_bytes,count".
inline void write_size_histogram_csv(std::ostream& out, const CorpusSummary& s) {
  out << "lower_bytes,upper_bytes,count\n";
  for (const auto& [lo, n] : s.size_buckets) out << lo << ',' << (lo == 0 ? 1 : 2 * lo) << ',' << n << '\n';
}

}  // namespace provenance
