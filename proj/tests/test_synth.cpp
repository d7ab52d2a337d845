#include <cmath>
#include <set>

#include "doctest.h"
#include "dsc/ingest.hpp"
#include "dsc/labels.hpp"
#include "dsc/schema.hpp"
#include "dsc/synth.hpp"
#include "temp_dir.hpp"

using namespace dsc;

namespace {

SynthSpec base_spec() {
  SynthSpec spec;
  spec.series_count = 13;
  spec.seed = 42;
  spec.mode = SignalMode::joint;
  spec.slices_min = 5;
  spec.slices_max = 9;
  spec.size_min = 24;
  spec.size_max = 40;
  return spec;
}

std::set<Tag> keys(const std::map<Tag, std::string>& m) {
  std::set<Tag> out;
  for (const auto& [k, v] : m) out.insert(k);
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic and balanced over classes") {
  SynthSource a(base_spec()), b(base_spec());
  for (long i : {0L, 5L, 12L}) {
    SynthSeries x = a.make(i), y = b.make(i);
    CHECK(x.class_id == static_cast<int>(i % 13));
    CHECK(x.series_uid == y.series_uid);
    REQUIRE(x.slices.size() == y.slices.size());
    for (size_t s = 0; s < x.slices.size(); ++s) {
      CHECK(x.slices[s].tags == y.slices[s].tags);
      CHECK(x.slices[s].image.vec() == y.slices[s].image.vec());
    }
  }
}

TEST_CASE("lazy rendering matches full generation") {
  SynthSource src(base_spec());
  SynthSeries full = src.make(3);
  SynthSeries lazy = src.make_meta(3);
  CHECK(lazy.slices[0].image.empty());
  CHECK_FALSE(lazy.slices[0].tags.count(tags::rescale_slope));
  src.render_images(3, lazy, {1, 2});
  CHECK(lazy.slices[1].image.vec() == full.slices[1].image.vec());
  CHECK(lazy.slices[2].image.vec() == full.slices[2].image.vec());
  CHECK(lazy.slices[1].tags == full.slices[1].tags);
  CHECK(lazy.slices[0].image.empty());
}

TEST_CASE("higher missingness drops a superset of tags, content unchanged") {
  SynthSpec lo = base_spec(), hi = base_spec();
  lo.missing_rate = 0.3;
  hi.missing_rate = 0.6;
  SynthSource src_lo(lo), src_hi(hi);
  long dropped_lo = 0, dropped_hi = 0;
  for (long i = 0; i < 13; ++i) {
    SynthSeries a = src_lo.make(i), b = src_hi.make(i);
    REQUIRE(a.slices.size() == b.slices.size());
    for (size_t s = 0; s < a.slices.size(); ++s) {
      std::set<Tag> ka = keys(a.slices[s].tags), kb = keys(b.slices[s].tags);
      // Every tag surviving the high rate also survived the low rate.
      for (Tag t : kb) CHECK(ka.count(t) == 1);
      dropped_lo += static_cast<long>(kb.size());
      dropped_hi += static_cast<long>(ka.size() - kb.size());
      // Shared tags carry identical values; pixels are untouched.
      for (Tag t : kb)
        CHECK(a.slices[s].tags.at(t) == b.slices[s].tags.at(t));
      CHECK(a.slices[s].image.vec() == b.slices[s].image.vec());
    }
  }
  CHECK(dropped_hi > 0);
}

TEST_CASE("missing rate roughly matches the requested fraction") {
  SynthSpec spec = base_spec();
  spec.series_count = 65;
  spec.missing_rate = 0.4;
  SynthSource src(spec);
  long present = 0, total = 0;
  for (long i = 0; i < src.count(); ++i) {
    SynthSeries s = src.make_meta(i);
    for (const auto& slice : s.slices) {
      // echo_time is always emitted pre-missingness.
      total += 1;
      present += slice.tags.count(tags::echo_time);
    }
  }
  double kept = static_cast<double>(present) / static_cast<double>(total);
  CHECK(kept == doctest::Approx(0.6).epsilon(0.08));
}

TEST_CASE("metadata_only protects the class tag unless told otherwise") {
  SynthSpec spec = base_spec();
  spec.mode = SignalMode::metadata_only;
  spec.missing_rate = 0.9;
  SynthSource src(spec);
  for (long i = 0; i < 13; ++i)
    for (const auto& slice : src.make_meta(i).slices)
      CHECK(slice.tags.count(tags::sequence_name) == 1);

  spec.allow_class_tag_missing = true;
  CHECK_THROWS_WITH_AS(SynthSource{spec},
                       doctest::Contains("no reliable signal path"),
                       std::invalid_argument);

  spec.mode = SignalMode::joint;  // other modes may drop it freely
  CHECK_NOTHROW(SynthSource{spec});
}

TEST_CASE("spec validation catches bad ranges") {
  SynthSpec spec = base_spec();
  spec.missing_rate = 1.5;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.slices_min = 0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.size_min = 500;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  spec = base_spec();
  spec.mid_band = 0.0;
  CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("written dataset round trips tags, tables and pixels") {
  TempDir tmp("synth_rt");
  SynthSpec spec = base_spec();
  spec.series_count = 6;
  spec.missing_rate = 0.25;
  SynthWriteResult res = write_synth_dataset(spec, tmp.path);
  CHECK(res.series_written == 6);
  CHECK(res.files_written >= 6 * spec.slices_min);

  std::map<std::string, int> labels = read_labels(res.labels_file);
  REQUIRE(labels.size() == 6);

  SynthSource src(spec);
  TagSchema schema = TagSchema::load(std::string(DSC_SOURCE_DIR) +
                                     "/configs/reference_schema.json");
  ScanReport report = scan_and_group(tmp.path);
  REQUIRE(report.series.size() == 6);

  std::map<std::string, long> index_of;
  for (long i = 0; i < src.count(); ++i)
    index_of[src.make_meta(i).series_uid] = i;

  for (const SeriesRecord& disk : report.series) {
    REQUIRE(index_of.count(disk.series_uid) == 1);
    long idx = index_of[disk.series_uid];
    SynthSeries mem = src.make(idx);
    CHECK(labels.at(disk.series_uid) == mem.class_id);
    REQUIRE(disk.slices.size() == mem.slices.size());

    // Tag maps agree exactly once the file meta group is set aside.
    std::vector<std::map<Tag, std::string>> disk_tags, mem_tags;
    for (size_t s = 0; s < disk.slices.size(); ++s) {
      std::map<Tag, std::string> dt = disk.slices[s].tags;
      for (auto it = dt.begin(); it != dt.end();)
        it = tag_group(it->first) == 0x0002 ? dt.erase(it) : std::next(it);
      disk_tags.push_back(dt);
      mem_tags.push_back(mem.slices[s].tags);
      CHECK(dt == mem.slices[s].tags);
    }

    // Identical feature tables from both paths.
    FeatureTable td = build_feature_table(schema, disk_tags);
    FeatureTable tm = build_feature_table(schema, mem_tags);
    CHECK(td.values == tm.values);
    CHECK(td.observed == tm.observed);

    // Pixels survive quantization within half a quantization step.
    for (size_t s = 0; s < disk.slices.size(); ++s) {
      DicomFile f = read_dicom(disk.slices[s].file, true);
      REQUIRE(f.pixels.values.size() == mem.slices[s].image.vec().size());
      double tol = mem.slices[s].rescale_slope * 0.51 + 1e-9;
      double worst = 0;
      for (size_t k = 0; k < f.pixels.values.size(); ++k)
        worst = std::max(worst, std::fabs(f.pixels.values[k] -
                                          mem.slices[s].image[k]));
      CHECK(worst <= tol);
    }
  }
}

TEST_CASE("mid_slice_only confines texture to the central band") {
  SynthSpec spec = base_spec();
  spec.mode = SignalMode::mid_slice_only;
  spec.slices_min = 20;
  spec.slices_max = 20;
  spec.size_min = 64;
  spec.size_max = 64;
  spec.mid_band = 0.3;
  SynthSource src(spec);
  SynthSeries s = src.make(1);

  auto stddev = [](const Tensor& t) {
    double mean = 0;
    for (double v : t.vec()) mean += v;
    mean /= static_cast<double>(t.numel());
    double var = 0;
    for (double v : t.vec()) var += (v - mean) * (v - mean);
    return std::sqrt(var / static_cast<double>(t.numel()));
  };
  // Band slices carry the grating on top of noise: clearly larger spread.
  double in_band = stddev(s.slices[10].image);
  double out_band = (stddev(s.slices[0].image) +
                     stddev(s.slices[19].image)) /
                    2.0;
  CHECK(in_band > out_band * 1.25);
}

TEST_CASE("identifiers are unique and well formed") {
  SynthSpec spec = base_spec();
  spec.series_count = 8;
  spec.series_per_patient = 3;
  SynthSource src(spec);
  std::set<std::string> sops, series;
  std::set<std::string> patients;
  for (long i = 0; i < src.count(); ++i) {
    SynthSeries s = src.make_meta(i);
    series.insert(s.series_uid);
    patients.insert(s.patient_id);
    for (const auto& slice : s.slices) {
      sops.insert(slice.tags.at(tags::sop_instance_uid));
      CHECK(slice.tags.at(tags::series_uid).rfind("2.25.", 0) == 0);
    }
    CHECK(s.file_order.size() == s.slices.size());
  }
  CHECK(series.size() == 8);
  CHECK(patients.size() == 3);  // ceil(8 / 3)
  size_t total = 0;
  for (long i = 0; i < src.count(); ++i)
    total += src.make_meta(i).slices.size();
  CHECK(sops.size() == total);
}
