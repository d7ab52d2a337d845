#include <cmath>
#include <map>
#include <stdexcept>

#include "doctest.h"
#include "dsc/data.hpp"
#include "temp_dir.hpp"

using namespace dsc;

namespace {

TagSchema ref_schema() {
  return TagSchema::load(std::string(DSC_SOURCE_DIR) +
                         "/configs/reference_schema.json");
}

SynthSpec small_spec() {
  SynthSpec spec;
  spec.series_count = 12;
  spec.seed = 91;
  spec.mode = SignalMode::joint;
  spec.missing_rate = 0.3;
  spec.slices_min = 8;
  spec.slices_max = 14;
  spec.size_min = 48;
  spec.size_max = 72;
  return spec;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (size_t i = 0; i < a.vec().size(); ++i)
    worst = std::max(worst, std::fabs(a.vec()[i] - b.vec()[i]));
  return worst;
}

}  // namespace

TEST_CASE("synthetic provider mirrors the generator") {
  SynthSpec spec = small_spec();
  SynthDataset data(spec, ref_schema());
  SynthSource direct(spec);

  REQUIRE(data.size() == spec.series_count);
  for (long i = 0; i < data.size(); ++i) {
    SynthSeries s = direct.make_meta(i);
    const SeriesMeta& m = data.info(i);
    CHECK(m.uid == s.series_uid);
    CHECK(m.patient == s.patient_id);
    CHECK(m.class_id == s.class_id);
    CHECK(m.n_slices == static_cast<long>(s.slices.size()));
  }
  CHECK_THROWS_AS(data.info(-1), std::out_of_range);
  CHECK_THROWS_AS(data.info(data.size()), std::out_of_range);
}

TEST_CASE("samples pair rows and planes from the same equidistant picks") {
  SynthSpec spec = small_spec();
  TagSchema schema = ref_schema();
  SynthDataset data(spec, schema);
  SynthSource direct(spec);

  const long i = 3, S = 4, target = 32;
  SeriesSample got = data.sample(i, S, target, true);
  REQUIRE(got.planes.size() == static_cast<size_t>(S));
  REQUIRE(got.rows.size() == static_cast<size_t>(S));
  CHECK(got.class_id == data.info(i).class_id);

  SynthSeries s = direct.make(i);
  std::vector<std::map<Tag, std::string>> tag_maps;
  for (const auto& sl : s.slices) tag_maps.push_back(sl.tags);
  FeatureTable table = build_feature_table(schema, tag_maps);
  std::vector<long> picks =
      equidistant_indices(static_cast<long>(s.slices.size()), S);

  for (long k = 0; k < S; ++k) {
    SparseRow want = table.observed_pairs(picks[static_cast<size_t>(k)]);
    const SparseRow& row = got.rows[static_cast<size_t>(k)];
    CHECK(row.idx == want.idx);
    CHECK(row.val == want.val);
    Tensor plane = preprocess_slice(
        s.slices[static_cast<size_t>(picks[static_cast<size_t>(k)])].image,
        target);
    // Cached planes are stored in f32.
    CHECK(max_abs_diff(got.planes[static_cast<size_t>(k)], plane) < 1e-6);
  }

  SUBCASE("images can be skipped") {
    SeriesSample lean = data.sample(i, S, target, false);
    CHECK(lean.planes.empty());
    CHECK(lean.rows.size() == static_cast<size_t>(S));
  }
  SUBCASE("repeated sampling is deterministic") {
    SeriesSample again = data.sample(i, S, target, true);
    for (long k = 0; k < S; ++k) {
      CHECK(again.rows[static_cast<size_t>(k)].val ==
            got.rows[static_cast<size_t>(k)].val);
      CHECK(again.planes[static_cast<size_t>(k)].vec() ==
            got.planes[static_cast<size_t>(k)].vec());
    }
  }
  SUBCASE("a single slice means the first slice") {
    SeriesSample one = data.sample(i, 1, target, false);
    CHECK(one.rows[0].idx == table.observed_pairs(0).idx);
  }
}

TEST_CASE("freezing statistics rescales continuous features") {
  SynthSpec spec = small_spec();
  spec.missing_rate = 0.0;  // keep the probed tag observed everywhere
  SynthDataset data(spec, ref_schema());

  SeriesSample before = data.sample(0, 3, 32, false);
  std::vector<long> all;
  for (long i = 0; i < data.size(); ++i) all.push_back(i);
  data.freeze_schema(all);

  bool stats_present = false;
  size_t echo_entry = 0;
  const auto& entries = data.schema().entries();
  for (size_t e = 0; e < entries.size(); ++e)
    if (entries[e].name == "echo_time") {
      echo_entry = e;
      stats_present = entries[e].has_stats;
    }
  CHECK(stats_present);

  // The echo-time column is observed on every slice and now z-scored, so
  // the same sample reads differently.
  SeriesSample after = data.sample(0, 3, 32, false);
  long echo_col = data.schema().value_column(echo_entry);
  auto value_of = [&](const SeriesSample& s) {
    for (size_t k = 0; k < s.rows[0].size(); ++k)
      if (s.rows[0].idx[k] == echo_col) return s.rows[0].val[k];
    throw std::logic_error("echo time not observed");
  };
  CHECK(value_of(before) != value_of(after));
}

TEST_CASE("disk provider round trips the synthetic dataset") {
  TempDir dir("disk_data");
  SynthSpec spec = small_spec();
  SynthWriteResult written = write_synth_dataset(spec, dir.path);
  REQUIRE(written.series_written == spec.series_count);

  TagSchema schema = ref_schema();
  SynthDataset mem(spec, schema);
  DiskDataset disk(dir.path, schema);
  REQUIRE(disk.size() == mem.size());

  // Disk series come back sorted by UID; match them up by UID.
  std::map<std::string, long> disk_at;
  for (long i = 0; i < disk.size(); ++i) disk_at[disk.info(i).uid] = i;

  for (long i = 0; i < mem.size(); ++i) {
    const SeriesMeta& want = mem.info(i);
    REQUIRE(disk_at.count(want.uid) == 1);
    long j = disk_at[want.uid];
    const SeriesMeta& got = disk.info(j);
    CHECK(got.patient == want.patient);
    CHECK(got.class_id == want.class_id);
    CHECK(got.n_slices == want.n_slices);

    SeriesSample a = mem.sample(i, 3, 32, true);
    SeriesSample b = disk.sample(j, 3, 32, true);
    for (long k = 0; k < 3; ++k) {
      // Feature rows must agree exactly: mask and values.
      CHECK(a.rows[static_cast<size_t>(k)].idx ==
            b.rows[static_cast<size_t>(k)].idx);
      CHECK(a.rows[static_cast<size_t>(k)].val ==
            b.rows[static_cast<size_t>(k)].val);
      // Pixels pass through the writer's u16 quantization.
      CHECK(max_abs_diff(a.planes[static_cast<size_t>(k)],
                         b.planes[static_cast<size_t>(k)]) < 1e-3);
    }
  }

  SUBCASE("freezing over matching series gives matching schemas") {
    std::vector<long> mem_idx, disk_idx;
    for (long i = 0; i < mem.size(); ++i) {
      mem_idx.push_back(i);
      disk_idx.push_back(disk_at[mem.info(i).uid]);
    }
    mem.freeze_schema(mem_idx);
    disk.freeze_schema(disk_idx);
    CHECK(mem.schema().fingerprint() == disk.schema().fingerprint());
  }
}

TEST_CASE("labels are optional for scanned data") {
  TempDir dir("disk_nolabel");
  SynthSpec spec = small_spec();
  spec.series_count = 3;
  write_synth_dataset(spec, dir.path);
  std::filesystem::remove(dir.path / "labels.json");
  DiskDataset disk(dir.path, ref_schema());
  REQUIRE(disk.size() == 3);
  for (long i = 0; i < disk.size(); ++i) CHECK(disk.info(i).class_id == -1);
}

TEST_CASE("an empty tree is an error") {
  TempDir dir("disk_empty");
  CHECK_THROWS_AS(DiskDataset(dir.path, ref_schema()), std::runtime_error);
}
