#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dsc/dicom.hpp"
#include "dsc/sme.hpp"

namespace dsc {

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class TagKind { categorical, continuous, flag };

struct TagEntry {
  std::string name;
  Tag tag = 0;
  TagKind kind = TagKind::continuous;
  std::vector<std::string> vocab;  // categorical: one column per token
  std::string token;  // flag: set when any value component equals it;
                      // empty token means "set when the tag is non-empty"
  bool has_stats = false;  // continuous normalization (value - mean) / stddev
  double mean = 0.0;
  double stddev = 1.0;
};

// Feature layout: all value columns first, in entry order (a categorical
// entry contributes vocab.size() columns, continuous and flag entries one
// each), followed by one presence-indicator column per entry, in the same
// order. Indicator columns are always observed.
class TagSchema {
 public:
  TagSchema() = default;
  explicit TagSchema(std::vector<TagEntry> entries);

  const std::vector<TagEntry>& entries() const { return entries_; }
  long feature_count() const { return feature_count_; }
  long value_column(size_t entry_index) const;      // first value column
  long indicator_column(size_t entry_index) const;
  std::vector<std::string> column_names() const;

  // FNV-1a over the canonical serialization; changes whenever any entry,
  // vocab token, or frozen statistic changes.
  uint64_t fingerprint() const;

  std::string to_json() const;
  static TagSchema from_json(const std::string& text);

  void save(const std::filesystem::path& path) const;
  static TagSchema load(const std::filesystem::path& path);

 private:
  std::vector<TagEntry> entries_;
  std::vector<long> value_offsets_;
  long value_columns_ = 0;
  long feature_count_ = 0;
};

struct FeatureTable {
  long slices = 0;
  long features = 0;
  std::vector<double> values;     // slices x features, row-major
  std::vector<uint8_t> observed;  // same layout

  double at(long s, long f) const {
    return values[static_cast<size_t>(s * features + f)];
  }
  bool seen(long s, long f) const {
    return observed[static_cast<size_t>(s * features + f)] != 0;
  }
  // Observed (column, value) pairs of one slice, ascending by column.
  SparseRow observed_pairs(long s) const;
};

// Maps the six ImageOrientationPatient direction cosines to AX, COR or SAG
// by the dominant axis of the slice normal. Empty optional when the string
// does not parse as six numbers.
std::optional<std::string> classify_orientation(const std::string& iop);

// Builds the per-slice feature rows for one series. Missing tags leave their
// value columns unobserved; the matching indicator column is always observed
// and records presence as 0/1. Unparseable continuous values count as
// missing. Categorical matching is case-insensitive on the first value
// component (orientation vectors are first mapped to plane tokens); unknown
// tokens yield an observed all-zero one-hot block.
FeatureTable build_feature_table(
    const TagSchema& schema,
    const std::vector<std::map<Tag, std::string>>& slice_tags);

// Running mean / standard deviation accumulator for freezing continuous
// statistics from a training split.
class StatAccumulator {
 public:
  void add(double v);
  long count() const { return n_; }
  double mean() const;
  double stddev() const;  // population; at least 1e-6

 private:
  long n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// Streams training slices and freezes the schema's continuous statistics
// without holding the split in memory. Entries that never observe a value
// keep mean 0, stddev 1 and has_stats false.
class StatFreezer {
 public:
  explicit StatFreezer(TagSchema schema);
  void add(const std::map<Tag, std::string>& slice_tags);
  TagSchema freeze() const;

 private:
  TagSchema schema_;
  std::vector<StatAccumulator> accum_;
};

// Copies `schema` with continuous statistics frozen from the given slices.
TagSchema freeze_statistics(
    const TagSchema& schema,
    const std::vector<std::map<Tag, std::string>>& slice_tags);

}  // namespace dsc
