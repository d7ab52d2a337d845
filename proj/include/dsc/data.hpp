#pragma once

#include <filesystem>
#include <unordered_map>
#include <vector>

#include "dsc/ingest.hpp"
#include "dsc/model.hpp"
#include "dsc/schema.hpp"
#include "dsc/synth.hpp"

namespace dsc {

struct SeriesMeta {
  std::string uid;
  std::string patient;
  int class_id = -1;  // -1 when unlabeled
  long n_slices = 0;
};

// Uniform access to labeled series. sample() pairs planes and metadata rows
// from the same equidistant slice picks; images can be skipped for
// metadata-only consumers. Feature rows and preprocessed planes are cached,
// so repeated epochs touch the expensive sources once.
class DataProvider {
 public:
  virtual ~DataProvider() = default;
  virtual long size() const = 0;
  virtual const SeriesMeta& info(long i) const = 0;
  virtual const TagSchema& schema() const = 0;
  // Freezes continuous statistics over the given series (the training
  // split); cached feature rows are rebuilt under the new normalization.
  virtual void freeze_schema(const std::vector<long>& series) = 0;
  virtual SeriesSample sample(long i, long slices, long target,
                              bool with_images) = 0;
};

// In-memory synthetic series; images are rendered lazily per slice.
class SynthDataset : public DataProvider {
 public:
  SynthDataset(const SynthSpec& spec, TagSchema schema);

  long size() const override { return src_.count(); }
  const SeriesMeta& info(long i) const override;
  const TagSchema& schema() const override { return schema_; }
  void freeze_schema(const std::vector<long>& series) override;
  SeriesSample sample(long i, long slices, long target,
                      bool with_images) override;

 private:
  const std::vector<SparseRow>& rows_for(long i);

  SynthSource src_;
  TagSchema schema_;
  std::vector<SeriesMeta> metas_;
  std::unordered_map<long, std::vector<SparseRow>> row_cache_;
  std::unordered_map<uint64_t, std::vector<float>> plane_cache_;
};

// Series scanned from a directory tree of DICOM files, with classes taken
// from labels.json beside them when present.
class DiskDataset : public DataProvider {
 public:
  DiskDataset(const std::filesystem::path& root, TagSchema schema);

  long size() const override { return static_cast<long>(scan_.series.size()); }
  const SeriesMeta& info(long i) const override;
  const TagSchema& schema() const override { return schema_; }
  void freeze_schema(const std::vector<long>& series) override;
  SeriesSample sample(long i, long slices, long target,
                      bool with_images) override;

  const ScanReport& report() const { return scan_; }

 private:
  const std::vector<SparseRow>& rows_for(long i);

  ScanReport scan_;
  TagSchema schema_;
  std::vector<SeriesMeta> metas_;
  std::unordered_map<long, std::vector<SparseRow>> row_cache_;
  std::unordered_map<uint64_t, std::vector<float>> plane_cache_;
};

}  // namespace dsc
