#include "dsc/ingest.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace dsc {

std::vector<long> equidistant_indices(long n, long s) {
  if (n < 1 || s < 1)
    throw std::invalid_argument("equidistant_indices: need n >= 1 and s >= 1");
  std::vector<long> out(s);
  if (s == 1) {
    out[0] = 0;
    return out;
  }
  for (long k = 0; k < s; ++k)
    out[k] = std::llround(static_cast<double>(k) * static_cast<double>(n - 1) /
                          static_cast<double>(s - 1));
  return out;
}

Tensor preprocess_slice(const Tensor& plane, long target) {
  if (plane.ndim() != 3 || plane.shape()[0] != 1)
    throw std::invalid_argument("preprocess_slice: expected a {1,H,W} tensor");
  long h = plane.shape()[1], w = plane.shape()[2];
  if (h < 1 || w < 1 || target < 1)
    throw std::invalid_argument("preprocess_slice: empty input");

  double lo = *std::min_element(plane.vec().begin(), plane.vec().end());

  long ph = std::max<long>(0, target - h);
  long pw = std::max<long>(0, target - w);
  long top = (ph + 1) / 2, left = (pw + 1) / 2;
  long fh = h + ph, fw = w + pw;
  long off_y = (fh - target) / 2;
  long off_x = (fw - target) / 2;

  Tensor out = Tensor::zeros({1, target, target});
  double sum = 0.0, sq = 0.0;
  for (long y = 0; y < target; ++y) {
    for (long x = 0; x < target; ++x) {
      long sy = off_y + y - top;
      long sx = off_x + x - left;
      double v = (sy >= 0 && sy < h && sx >= 0 && sx < w)
                     ? plane[sy * w + sx]
                     : lo;
      out[y * target + x] = v;
      sum += v;
      sq += v * v;
    }
  }
  double n = static_cast<double>(target) * static_cast<double>(target);
  double mean = sum / n;
  double var = std::max(0.0, sq / n - mean * mean);
  double sd = std::sqrt(var);
  if (sd < 1e-8) {
    out.fill(0.0);
    return out;
  }
  for (double& v : out.vec()) v = (v - mean) / sd;
  return out;
}

namespace {

bool parse_doubles(const std::string& s, double* out, int n) {
  size_t pos = 0;
  for (int i = 0; i < n; ++i) {
    size_t next = s.find('\\', pos);
    std::string part = s.substr(pos, next == std::string::npos
                                         ? std::string::npos
                                         : next - pos);
    try {
      size_t used = 0;
      out[i] = std::stod(part, &used);
      if (used == 0) return false;
    } catch (const std::exception&) {
      return false;
    }
    if (i + 1 < n) {
      if (next == std::string::npos) return false;
      pos = next + 1;
    }
  }
  return true;
}

}  // namespace

ScanReport scan_and_group(const std::filesystem::path& root) {
  namespace fs = std::filesystem;
  if (!fs::exists(root))
    throw std::invalid_argument("scan_and_group: no such path " +
                                root.string());
  std::vector<fs::path> files;
  if (fs::is_regular_file(root)) {
    files.push_back(root);
  } else {
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  ScanReport report;
  std::map<std::string, SeriesRecord> groups;
  for (const auto& file : files) {
    DicomFile f;
    try {
      f = read_dicom(file, false);
    } catch (const DecodeError& e) {
      report.warnings.push_back(std::string("skipped ") + file.string() +
                                ": " + e.what());
      continue;
    }
    std::string uid = f.value(tags::series_uid);
    if (uid.empty()) {
      report.warnings.push_back("skipped " + file.string() +
                                ": no SeriesInstanceUID");
      continue;
    }
    SeriesRecord& series = groups[uid];
    if (series.series_uid.empty()) {
      series.series_uid = uid;
      series.study_uid = f.value(tags::study_uid);
      series.patient_id = f.value(tags::patient_id);
    }
    SliceRecord rec;
    rec.file = file;
    rec.tags = std::move(f.elements);
    if (auto it = rec.tags.find(tags::instance_number);
        it != rec.tags.end()) {
      try {
        rec.instance_number = std::stol(it->second);
        rec.has_instance_number = true;
      } catch (const std::exception&) {
      }
    }
    std::array<double, 6> iop;
    std::array<double, 3> ipp;
    if (parse_doubles(rec.tags.count(tags::image_orientation)
                          ? rec.tags.at(tags::image_orientation)
                          : "",
                      iop.data(), 6) &&
        parse_doubles(rec.tags.count(tags::image_position)
                          ? rec.tags.at(tags::image_position)
                          : "",
                      ipp.data(), 3)) {
      double nx = iop[1] * iop[5] - iop[2] * iop[4];
      double ny = iop[2] * iop[3] - iop[0] * iop[5];
      double nz = iop[0] * iop[4] - iop[1] * iop[3];
      rec.position = ipp[0] * nx + ipp[1] * ny + ipp[2] * nz;
      rec.has_position = true;
    }
    series.slices.push_back(std::move(rec));
  }

  for (auto& [uid, series] : groups) {
    bool all_pos = !series.slices.empty();
    for (const auto& s : series.slices) all_pos = all_pos && s.has_position;
    auto by_path = [](const SliceRecord& a, const SliceRecord& b) {
      return a.file < b.file;
    };
    if (all_pos) {
      std::stable_sort(series.slices.begin(), series.slices.end(),
                       [&](const SliceRecord& a, const SliceRecord& b) {
                         if (a.position != b.position)
                           return a.position < b.position;
                         if (a.has_instance_number && b.has_instance_number &&
                             a.instance_number != b.instance_number)
                           return a.instance_number < b.instance_number;
                         return by_path(a, b);
                       });
    } else {
      std::stable_sort(series.slices.begin(), series.slices.end(),
                       [&](const SliceRecord& a, const SliceRecord& b) {
                         if (a.has_instance_number != b.has_instance_number)
                           return a.has_instance_number;
                         if (a.has_instance_number &&
                             a.instance_number != b.instance_number)
                           return a.instance_number < b.instance_number;
                         return by_path(a, b);
                       });
    }
    report.series.push_back(std::move(series));
  }
  return report;
}

SeriesPixels load_series_pixels(const SeriesRecord& series, long s,
                                long target) {
  if (series.slices.empty())
    throw std::invalid_argument("load_series_pixels: series " +
                                series.series_uid + " has no slices");
  SeriesPixels out;
  out.picked =
      equidistant_indices(static_cast<long>(series.slices.size()), s);
  out.planes.reserve(out.picked.size());
  for (long idx : out.picked) {
    const SliceRecord& rec = series.slices[static_cast<size_t>(idx)];
    DicomFile f = read_dicom(rec.file, true);
    if (!f.pixels.present)
      throw DecodeError(rec.file.string() + ": no pixel data");
    Tensor plane =
        Tensor::from({1, f.pixels.rows, f.pixels.cols}, f.pixels.values);
    out.planes.push_back(preprocess_slice(plane, target));
  }
  return out;
}

}  // namespace dsc
