#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsc/dicom.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

// Where the class signal lives:
//  - image_only:     textures identify the class, metadata is uninformative
//  - metadata_only:  tag values identify the class, pixels are pure noise
//  - joint:          metadata identifies the protocol family, textures the
//                    member within it; both are needed for the full label
//  - mid_slice_only: like image_only, but the texture appears only in a
//                    central band of slices
enum class SignalMode { image_only, metadata_only, joint, mid_slice_only };

SignalMode signal_mode_from_string(const std::string& s);
std::string to_string(SignalMode m);

struct SynthSpec {
  long series_count = 130;
  uint64_t seed = 1;
  SignalMode mode = SignalMode::joint;
  // Per (slice, tag) drop probability. The underlying uniform draws depend
  // only on (seed, series, slice, tag), so the tags dropped at a lower rate
  // are a subset of those dropped at a higher rate, and pixel content is
  // unchanged.
  double missing_rate = 0.0;
  // The class-identifying tag (SequenceName) is normally exempt from drops
  // in metadata_only mode, where no other signal path exists.
  bool allow_class_tag_missing = false;
  long slices_min = 12, slices_max = 28;
  long size_min = 180, size_max = 320;
  double mid_band = 0.34;        // fraction of slices carrying signal
  long series_per_patient = 4;

  void validate() const;  // throws std::invalid_argument
};

struct SynthSlice {
  std::map<Tag, std::string> tags;  // after missingness
  Tensor image;                     // {1, H, W}, values before quantization
  double rescale_slope = 1.0;       // quantization used by the writer
  double rescale_intercept = 0.0;
};

struct SynthSeries {
  std::string series_uid;
  std::string study_uid;
  std::string patient_id;
  int class_id = 0;
  std::vector<SynthSlice> slices;  // spatial order
  // Filename index per slice; shuffled so that lexical file order disagrees
  // with spatial order.
  std::vector<long> file_order;
};

// Deterministic lazy dataset: every accessor depends only on (spec, index).
class SynthSource {
 public:
  explicit SynthSource(SynthSpec spec);
  long count() const { return spec_.series_count; }
  const SynthSpec& spec() const { return spec_; }

  // Tags and pixels for every slice.
  SynthSeries make(long index) const;
  // Tags only; images stay empty and the rescale tags are absent (they
  // depend on the rendered value range).
  SynthSeries make_meta(long index) const;
  // Fills images (and rescale tags) for the given slice indices of a series
  // produced by make_meta.
  void render_images(long index, SynthSeries& series,
                     const std::vector<long>& picked) const;

 private:
  SynthSpec spec_;
};

struct SynthWriteResult {
  long series_written = 0;
  long files_written = 0;
  std::filesystem::path labels_file;
};

// Writes <out>/<patient>/<series_uid>/img_###.dcm for every generated series
// plus <out>/labels.json mapping series UID to class name.
SynthWriteResult write_synth_dataset(const SynthSpec& spec,
                                     const std::filesystem::path& out);

// labels.json access: series UID -> class id.
std::map<std::string, int> read_labels(const std::filesystem::path& file);

}  // namespace dsc
