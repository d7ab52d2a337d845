#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dsc/dicom.hpp"
#include "dsc/tensor.hpp"

namespace dsc {

// S indices spread evenly over [0, n); endpoints included, rounded half away
// from zero. Repeats occur when s > n.
std::vector<long> equidistant_indices(long n, long s);

// Pads below `target` with the slice minimum (extra pixel on the leading side
// when the deficit is odd), center-crops to target x target (offset
// floor((size - target) / 2)), then z-scores over the crop. A crop with
// standard deviation below 1e-8 becomes all zeros.
Tensor preprocess_slice(const Tensor& plane, long target);

struct SliceRecord {
  std::filesystem::path file;
  long instance_number = 0;
  bool has_instance_number = false;
  double position = 0.0;  // projection of ImagePositionPatient on the
  bool has_position = false;  // slice normal (row x column direction)
  std::map<Tag, std::string> tags;
};

struct SeriesRecord {
  std::string series_uid;
  std::string study_uid;
  std::string patient_id;
  std::vector<SliceRecord> slices;  // in scan order
};

struct ScanReport {
  std::vector<SeriesRecord> series;  // sorted by series_uid
  std::vector<std::string> warnings;
};

// Walks `root` recursively, parses every regular file as DICOM (headers
// only), groups by SeriesInstanceUID and sorts each group: by position along
// the slice normal when every slice has one, else by InstanceNumber, with
// the file path as the final tie-break. Unreadable files and files without a
// SeriesInstanceUID are skipped with a warning.
ScanReport scan_and_group(const std::filesystem::path& root);

struct SeriesPixels {
  std::vector<long> picked;     // indices into SeriesRecord::slices
  std::vector<Tensor> planes;   // one {1, target, target} tensor per pick
};

// Reads pixels for `s` equidistant slices of the series and preprocesses
// them to target x target.
SeriesPixels load_series_pixels(const SeriesRecord& series, long s,
                                long target);

}  // namespace dsc
