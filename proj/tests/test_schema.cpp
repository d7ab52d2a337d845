#include <cmath>

#include "doctest.h"
#include "dsc/schema.hpp"
#include "dsc/rng.hpp"
#include "temp_dir.hpp"

using namespace dsc;

namespace {

TagSchema small_schema(bool with_stats) {
  TagEntry cat;
  cat.name = "scanning_sequence";
  cat.tag = tags::scanning_sequence;
  cat.kind = TagKind::categorical;
  cat.vocab = {"SE", "GR"};
  TagEntry cont;
  cont.name = "echo_time";
  cont.tag = tags::echo_time;
  cont.kind = TagKind::continuous;
  if (with_stats) {
    cont.has_stats = true;
    cont.mean = 50.0;
    cont.stddev = 10.0;
  }
  TagEntry flag;
  flag.name = "fat_sat";
  flag.tag = tags::scan_options;
  flag.kind = TagKind::flag;
  flag.token = "FS";
  return TagSchema({cat, cont, flag});
}

}  // namespace

TEST_CASE("reference schema has the frozen feature width") {
  TagSchema schema =
      TagSchema::load(std::string(DSC_SOURCE_DIR) +
                      "/configs/reference_schema.json");
  CHECK(schema.entries().size() == 33);
  CHECK(schema.feature_count() == 119);
  CHECK(schema.column_names().size() == 119);
  // 65 one-hot + 16 continuous + 5 flags, then 33 indicators.
  CHECK(schema.indicator_column(0) == 86);
  CHECK(schema.column_names()[0] == "plane=AX");
  CHECK(schema.column_names()[86] == "plane.present");
}

TEST_CASE("schema JSON round trip preserves the fingerprint") {
  TagSchema a = TagSchema::load(std::string(DSC_SOURCE_DIR) +
                                "/configs/reference_schema.json");
  TagSchema b = TagSchema::from_json(a.to_json());
  CHECK(a.fingerprint() == b.fingerprint());
  CHECK(a.feature_count() == b.feature_count());

  // Any entry change moves the fingerprint.
  std::vector<TagEntry> entries = a.entries();
  entries[0].vocab.push_back("OBLIQUE");
  CHECK(TagSchema(entries).fingerprint() != a.fingerprint());
  entries = a.entries();
  entries[12].has_stats = true;
  entries[12].mean = 1.0;
  entries[12].stddev = 2.0;
  CHECK(TagSchema(entries).fingerprint() != a.fingerprint());
}

TEST_CASE("schema validation rejects malformed entries") {
  TagEntry e;
  e.name = "x";
  e.tag = tags::echo_time;
  e.kind = TagKind::categorical;
  CHECK_THROWS_AS(TagSchema({e}), SchemaError);  // no vocab
  e.kind = TagKind::continuous;
  e.has_stats = true;
  e.stddev = 0.0;
  CHECK_THROWS_AS(TagSchema({e}), SchemaError);  // bad stddev
  CHECK_THROWS_AS(TagSchema::from_json("{not json"), SchemaError);
  CHECK_THROWS_AS(TagSchema::from_json("{\"version\": 2, \"entries\": []}"),
                  SchemaError);
}

TEST_CASE("feature table semantics: one-hot, stats, flags, indicators") {
  TagSchema schema = small_schema(true);
  REQUIRE(schema.feature_count() == 2 + 1 + 1 + 3);

  std::vector<std::map<Tag, std::string>> slices(5);
  slices[0][tags::scanning_sequence] = "se";  // case-folded match
  slices[0][tags::echo_time] = "72.5";
  slices[0][tags::scan_options] = "PFP\\FS\\SAT";  // component match
  slices[1][tags::scanning_sequence] = "IR";  // not in vocab
  slices[1][tags::scan_options] = "PFP";
  slices[2][tags::echo_time] = "abc";  // unparseable -> missing
  // slice 3: empty map
  slices[4][tags::echo_time] = "50";
  slices[4][tags::scan_options] = "fs ";  // trailing space + fold

  FeatureTable t = build_feature_table(schema, slices);
  REQUIRE(t.slices == 5);
  REQUIRE(t.features == 7);

  // slice 0: SE one-hot, normalized TE, flag on.
  CHECK(t.at(0, 0) == 1.0);
  CHECK(t.at(0, 1) == 0.0);
  CHECK(t.seen(0, 0));
  CHECK(t.seen(0, 1));
  CHECK(t.at(0, 2) == doctest::Approx((72.5 - 50.0) / 10.0));
  CHECK(t.at(0, 3) == 1.0);
  CHECK(t.at(0, 4) == 1.0);  // indicators
  CHECK(t.at(0, 5) == 1.0);
  CHECK(t.at(0, 6) == 1.0);

  // slice 1: unknown token -> observed all-zero block; flag off.
  CHECK(t.seen(1, 0));
  CHECK(t.at(1, 0) == 0.0);
  CHECK(t.at(1, 1) == 0.0);
  CHECK_FALSE(t.seen(1, 2));
  CHECK(t.at(1, 3) == 0.0);
  CHECK(t.seen(1, 3));
  CHECK(t.at(1, 4) == 1.0);
  CHECK(t.at(1, 5) == 0.0);
  CHECK(t.at(1, 6) == 1.0);

  // slice 2: unparseable continuous counts as missing.
  CHECK_FALSE(t.seen(2, 2));
  CHECK(t.at(2, 5) == 0.0);

  // slice 3: nothing observed except indicators.
  for (long f = 0; f < 4; ++f) CHECK_FALSE(t.seen(3, f));
  for (long f = 4; f < 7; ++f) {
    CHECK(t.seen(3, f));
    CHECK(t.at(3, f) == 0.0);
  }

  // slice 4: exact mean -> 0 after normalization but still observed.
  CHECK(t.seen(4, 2));
  CHECK(t.at(4, 2) == 0.0);
  CHECK(t.at(4, 3) == 1.0);

  SparseRow row0 = t.observed_pairs(0);
  REQUIRE(row0.size() == 7);
  SparseRow row3 = t.observed_pairs(3);
  REQUIRE(row3.size() == 3);
  CHECK(row3.idx == std::vector<long>{4, 5, 6});
  CHECK(row3.val == std::vector<double>{0.0, 0.0, 0.0});
}

TEST_CASE("orientation cosines map to plane tokens") {
  CHECK(*classify_orientation("1\\0\\0\\0\\1\\0") == "AX");
  CHECK(*classify_orientation("1\\0\\0\\0\\0\\-1") == "COR");
  CHECK(*classify_orientation("0\\1\\0\\0\\0\\-1") == "SAG");
  // Oblique but z-dominant.
  CHECK(*classify_orientation("0.98\\0.2\\0\\-0.2\\0.98\\0") == "AX");
  CHECK_FALSE(classify_orientation("1\\0\\0").has_value());
  CHECK_FALSE(classify_orientation("a\\b\\c\\d\\e\\f").has_value());

  TagEntry plane;
  plane.name = "plane";
  plane.tag = tags::image_orientation;
  plane.kind = TagKind::categorical;
  plane.vocab = {"AX", "COR", "SAG"};
  TagSchema schema({plane});
  std::vector<std::map<Tag, std::string>> slices(1);
  slices[0][tags::image_orientation] = "1\\0\\0\\0\\0\\-1";
  FeatureTable t = build_feature_table(schema, slices);
  CHECK(t.at(0, 0) == 0.0);
  CHECK(t.at(0, 1) == 1.0);
  CHECK(t.at(0, 2) == 0.0);
}

TEST_CASE("statistics freezing matches a two-pass reference") {
  TagSchema schema = small_schema(false);
  Rng rng(21);
  std::vector<std::map<Tag, std::string>> slices;
  std::vector<double> values;
  for (int i = 0; i < 200; ++i) {
    std::map<Tag, std::string> m;
    if (rng.uniform() < 0.7) {
      double v = rng.uniform(20, 120);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.4f", v);
      m[tags::echo_time] = buf;
      values.push_back(std::stod(buf));
    }
    slices.push_back(std::move(m));
  }
  TagSchema frozen = freeze_statistics(schema, slices);
  const TagEntry& te = frozen.entries()[1];
  REQUIRE(te.has_stats);

  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  CHECK(te.mean == doctest::Approx(mean).epsilon(1e-10));
  CHECK(te.stddev == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
  CHECK(frozen.fingerprint() != schema.fingerprint());

  // Constant feature: stddev clamps to the floor instead of zero.
  std::vector<std::map<Tag, std::string>> constant(3);
  for (auto& m : constant) m[tags::echo_time] = "5.0";
  TagSchema frozen2 = freeze_statistics(schema, constant);
  CHECK(frozen2.entries()[1].stddev == 1e-6);

  // Never observed: no stats.
  std::vector<std::map<Tag, std::string>> nothing(3);
  TagSchema frozen3 = freeze_statistics(schema, nothing);
  CHECK_FALSE(frozen3.entries()[1].has_stats);
}

TEST_CASE("schema files round trip through disk") {
  TempDir tmp("schema_io");
  TagSchema schema = small_schema(true);
  schema.save(tmp.path / "s.json");
  TagSchema back = TagSchema::load(tmp.path / "s.json");
  CHECK(back.fingerprint() == schema.fingerprint());
  CHECK_THROWS_AS(TagSchema::load(tmp.path / "missing.json"), SchemaError);
}
