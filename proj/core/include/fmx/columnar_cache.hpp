#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "fmx/corpus_store.hpp"
#include "fmx/work_record.hpp"

namespace fmx {

// Binary columnar file:
//   "FMX1" | u32 version | str digest | u32 n_columns |
//   per column: str name | u8 type | u64 n | payload
// where str = u32 length + bytes, and payload is n little-endian i64/f64
// values or n strs. A version bump invalidates every existing cache.
inline constexpr char kCacheMagic[4] = {'F', 'M', 'X', '1'};
inline constexpr std::uint32_t kCacheVersion = 2;

using Column = std::variant<std::vector<std::int64_t>, std::vector<double>, std::vector<std::string>>;

class ColumnarTable {
 public:
  void add(std::string name, Column column);

  const std::vector<std::int64_t>& i64(const std::string& name) const;
  const std::vector<double>& f64(const std::string& name) const;
  const std::vector<std::string>& str(const std::string& name) const;
  bool has(const std::string& name) const { return columns_.contains(name); }

  void write(const std::filesystem::path& path, const std::string& digest) const;

  // Throws InputError on bad magic, version mismatch, or truncation.
  static ColumnarTable read(const std::filesystem::path& path, std::string* digest = nullptr);
  // Header-only probe: the stored digest, or nullopt when absent/stale format.
  static std::optional<std::string> peek_digest(const std::filesystem::path& path);

 private:
  std::map<std::string, Column> columns_;
};

struct StoredCorpus {
  Corpus corpus;
  SampleSelection sample;
  CorpusManifest manifest;
};

void save_corpus(const std::filesystem::path& path, const StoredCorpus& stored);
StoredCorpus load_corpus(const std::filesystem::path& path);
// Returns nullopt when the file is missing or was written for another digest.
std::optional<StoredCorpus> load_corpus_if_fresh(const std::filesystem::path& path,
                                                 const std::string& digest);

}  // namespace fmx
