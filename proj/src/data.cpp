#include "dsc/data.hpp"

#include <algorithm>
#include <stdexcept>

namespace dsc {

namespace {

// One entry per (series, slice, crop size); n_slices and target both fit in
// 16 bits by construction.
uint64_t plane_key(long series, long slice, long target) {
  return (static_cast<uint64_t>(series) << 32) |
         (static_cast<uint64_t>(slice) << 16) | static_cast<uint64_t>(target);
}

std::vector<float> to_floats(const Tensor& t) {
  std::vector<float> out(t.vec().size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<float>(t.vec()[i]);
  return out;
}

Tensor to_plane(const std::vector<float>& v, long target) {
  Tensor t = Tensor::zeros({1, target, target});
  if (static_cast<long>(v.size()) != target * target)
    throw std::logic_error("plane cache entry has wrong size");
  for (size_t i = 0; i < v.size(); ++i) t.vec()[i] = v[i];
  return t;
}

void check_sample_args(long i, long n, long slices, long target) {
  if (i < 0 || i >= n) throw std::out_of_range("series index out of range");
  if (slices < 1) throw std::invalid_argument("sample: slices must be >= 1");
  if (target < 1 || target >= (1 << 16))
    throw std::invalid_argument("sample: bad crop size");
}

}  // namespace

SynthDataset::SynthDataset(const SynthSpec& spec, TagSchema schema)
    : src_(spec), schema_(std::move(schema)) {
  metas_.reserve(static_cast<size_t>(src_.count()));
  for (long i = 0; i < src_.count(); ++i) {
    SynthSeries s = src_.make_meta(i);
    metas_.push_back({s.series_uid, s.patient_id, s.class_id,
                      static_cast<long>(s.slices.size())});
  }
}

const SeriesMeta& SynthDataset::info(long i) const {
  if (i < 0 || i >= size()) throw std::out_of_range("series index");
  return metas_[static_cast<size_t>(i)];
}

const std::vector<SparseRow>& SynthDataset::rows_for(long i) {
  auto it = row_cache_.find(i);
  if (it != row_cache_.end()) return it->second;
  SynthSeries s = src_.make_meta(i);
  std::vector<std::map<Tag, std::string>> tag_maps;
  tag_maps.reserve(s.slices.size());
  for (const auto& sl : s.slices) tag_maps.push_back(sl.tags);
  FeatureTable table = build_feature_table(schema_, tag_maps);
  std::vector<SparseRow> rows;
  rows.reserve(static_cast<size_t>(table.slices));
  for (long r = 0; r < table.slices; ++r)
    rows.push_back(table.observed_pairs(r));
  return row_cache_.emplace(i, std::move(rows)).first->second;
}

void SynthDataset::freeze_schema(const std::vector<long>& series) {
  StatFreezer f(schema_);
  for (long i : series) {
    if (i < 0 || i >= size()) throw std::out_of_range("series index");
    SynthSeries s = src_.make_meta(i);
    for (const auto& sl : s.slices) f.add(sl.tags);
  }
  schema_ = f.freeze();
  row_cache_.clear();
}

SeriesSample SynthDataset::sample(long i, long slices, long target,
                                  bool with_images) {
  check_sample_args(i, size(), slices, target);
  const SeriesMeta& meta = metas_[static_cast<size_t>(i)];
  std::vector<long> picks = equidistant_indices(meta.n_slices, slices);

  SeriesSample out;
  out.class_id = meta.class_id;
  const auto& rows = rows_for(i);
  for (long p : picks) out.rows.push_back(rows[static_cast<size_t>(p)]);
  if (!with_images) return out;

  std::vector<long> missing;
  for (long p : picks)
    if (!plane_cache_.count(plane_key(i, p, target)) &&
        std::find(missing.begin(), missing.end(), p) == missing.end())
      missing.push_back(p);
  if (!missing.empty()) {
    SynthSeries s = src_.make_meta(i);
    src_.render_images(i, s, missing);
    for (long p : missing)
      plane_cache_.emplace(
          plane_key(i, p, target),
          to_floats(preprocess_slice(s.slices[static_cast<size_t>(p)].image,
                                     target)));
  }
  for (long p : picks)
    out.planes.push_back(to_plane(plane_cache_.at(plane_key(i, p, target)),
                                  target));
  return out;
}

DiskDataset::DiskDataset(const std::filesystem::path& root, TagSchema schema)
    : scan_(scan_and_group(root)), schema_(std::move(schema)) {
  if (scan_.series.empty())
    throw std::runtime_error("no readable series under " + root.string());
  std::map<std::string, int> labels;
  if (std::filesystem::exists(root / "labels.json"))
    labels = read_labels(root / "labels.json");
  metas_.reserve(scan_.series.size());
  for (const auto& rec : scan_.series) {
    auto it = labels.find(rec.series_uid);
    metas_.push_back({rec.series_uid, rec.patient_id,
                      it == labels.end() ? -1 : it->second,
                      static_cast<long>(rec.slices.size())});
  }
}

const SeriesMeta& DiskDataset::info(long i) const {
  if (i < 0 || i >= size()) throw std::out_of_range("series index");
  return metas_[static_cast<size_t>(i)];
}

const std::vector<SparseRow>& DiskDataset::rows_for(long i) {
  auto it = row_cache_.find(i);
  if (it != row_cache_.end()) return it->second;
  const SeriesRecord& rec = scan_.series[static_cast<size_t>(i)];
  std::vector<std::map<Tag, std::string>> tag_maps;
  tag_maps.reserve(rec.slices.size());
  for (const auto& sl : rec.slices) tag_maps.push_back(sl.tags);
  FeatureTable table = build_feature_table(schema_, tag_maps);
  std::vector<SparseRow> rows;
  rows.reserve(static_cast<size_t>(table.slices));
  for (long r = 0; r < table.slices; ++r)
    rows.push_back(table.observed_pairs(r));
  return row_cache_.emplace(i, std::move(rows)).first->second;
}

void DiskDataset::freeze_schema(const std::vector<long>& series) {
  StatFreezer f(schema_);
  for (long i : series) {
    if (i < 0 || i >= size()) throw std::out_of_range("series index");
    for (const auto& sl : scan_.series[static_cast<size_t>(i)].slices)
      f.add(sl.tags);
  }
  schema_ = f.freeze();
  row_cache_.clear();
}

SeriesSample DiskDataset::sample(long i, long slices, long target,
                                 bool with_images) {
  check_sample_args(i, size(), slices, target);
  const SeriesRecord& rec = scan_.series[static_cast<size_t>(i)];
  std::vector<long> picks =
      equidistant_indices(static_cast<long>(rec.slices.size()), slices);

  SeriesSample out;
  out.class_id = metas_[static_cast<size_t>(i)].class_id;
  const auto& rows = rows_for(i);
  for (long p : picks) out.rows.push_back(rows[static_cast<size_t>(p)]);
  if (!with_images) return out;

  for (long p : picks) {
    uint64_t key = plane_key(i, p, target);
    auto hit = plane_cache_.find(key);
    if (hit == plane_cache_.end()) {
      const SliceRecord& sl = rec.slices[static_cast<size_t>(p)];
      DicomFile f = read_dicom(sl.file, true);
      if (!f.pixels.present)
        throw DecodeError(sl.file.string() + ": no pixel data");
      Tensor plane =
          Tensor::from({1, f.pixels.rows, f.pixels.cols}, f.pixels.values);
      hit = plane_cache_
                .emplace(key, to_floats(preprocess_slice(plane, target)))
                .first;
    }
    out.planes.push_back(to_plane(hit->second, target));
  }
  return out;
}

}  // namespace dsc
