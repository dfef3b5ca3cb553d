#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fmx {

// Numeric subfield identifier; the top-level field is the leading two digits
// (OpenAlex convention: subfield 3104 belongs to field 31).
using SubfieldId = std::int32_t;
using FieldId = std::int32_t;

constexpr FieldId field_of(SubfieldId subfield) noexcept { return subfield / 100; }

enum class DocType : std::uint8_t { article, other };

struct Authorship {
  std::string author_id;
  std::vector<std::string> institution_ids;
  std::string country_code;  // empty when unknown

  friend bool operator==(const Authorship&, const Authorship&) = default;
};

struct SubfieldShare {
  SubfieldId subfield = 0;
  double weight = 0.0;

  friend bool operator==(const SubfieldShare&, const SubfieldShare&) = default;
};

struct WorkRecord {
  std::string work_id;
  std::string doi;  // canonical, empty when absent
  int year = 0;
  std::string journal_id;  // empty when absent
  DocType doc_type = DocType::article;
  std::string language;
  std::vector<std::string> title_tokens;
  std::vector<std::string> referenced_work_ids;
  std::vector<SubfieldShare> subfield_shares;  // ascending subfield id, weights sum to 1
  std::vector<Authorship> authorships;
  std::int64_t citation_count = 0;
  std::vector<std::string> facility_ids;  // sorted, unique

  bool is_bsf() const noexcept { return !facility_ids.empty(); }
  std::size_t facility_count() const noexcept { return facility_ids.size(); }

  // Argmax share, ties broken by the smaller id; -1 when there are no shares.
  SubfieldId primary_subfield() const noexcept;

  friend bool operator==(const WorkRecord&, const WorkRecord&) = default;
};

inline constexpr int kMinYear = 1900;
inline constexpr int kMaxYear = 2100;

/// Immutable-after-build collection of works ordered by work_id.
class Corpus {
 public:
  Corpus() = default;
  // Sorts by work_id. Throws InputError on duplicate ids or a record that
  // violates the WorkRecord invariants.
  explicit Corpus(std::vector<WorkRecord> works);

  std::span<const WorkRecord> works() const noexcept { return works_; }
  std::size_t size() const noexcept { return works_.size(); }
  bool empty() const noexcept { return works_.empty(); }
  const WorkRecord& operator[](std::size_t i) const { return works_[i]; }

  // Index of work_id, or npos.
  std::size_t find(std::string_view work_id) const noexcept;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  // Replaces facility annotations; `facilities[i]` must be sorted and unique.
  void set_facilities(std::vector<std::vector<std::string>> facilities);

 private:
  std::vector<WorkRecord> works_;
};

/// Hash lookup from work_id to corpus index; views into the corpus strings.
class WorkIndex {
 public:
  explicit WorkIndex(const Corpus& corpus);
  std::size_t find(std::string_view work_id) const noexcept;

 private:
  std::unordered_map<std::string_view, std::uint32_t> map_;
};

void validate_record(const WorkRecord& w);

}  // namespace fmx
