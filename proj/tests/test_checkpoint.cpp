#include <fstream>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "dsc/checkpoint.hpp"
#include "dsc/rng.hpp"
#include "temp_dir.hpp"

using namespace dsc;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.kind = ModelKind::full;
  c.slices = 3;
  c.target = 16;
  c.feature_count = 119;
  c.d_visual = 8;
  c.d_meta = 8;
  c.d_attn = 8;
  c.d_out = 8;
  c.sme_dim = 6;
  c.heads = 2;
  c.pool_hidden = 5;
  return c;
}

SeriesSample make_sample(Rng& rng, const ModelConfig& cfg) {
  SeriesSample s;
  s.class_id = 1;
  for (long i = 0; i < cfg.slices; ++i) {
    Tensor plane = Tensor::zeros({1, cfg.target, cfg.target});
    for (auto& v : plane.vec()) v = rng.normal();
    s.planes.push_back(std::move(plane));
    SparseRow row;
    for (long f = 0; f < cfg.feature_count; f += 7)
      row.add(f, rng.uniform(-1, 1));
    s.rows.push_back(std::move(row));
  }
  return s;
}

std::vector<double> forward_logits(Classifier& m, const SeriesSample& s) {
  Graph g;
  Ctx ctx(g, false);
  ModelOutput out = m.forward(ctx, s);
  return g.val(*out.joint).vec();
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

TagSchema test_schema() {
  return TagSchema::load(std::string(DSC_SOURCE_DIR) +
                         "/configs/reference_schema.json");
}

}  // namespace

TEST_CASE("checkpoint round trip restores config, schema and outputs") {
  TempDir dir("ckpt");
  ModelConfig cfg = tiny_config();
  TagSchema schema = test_schema();
  auto m = make_classifier(cfg, 77);
  Rng rng(5);
  SeriesSample s = make_sample(rng, cfg);

  // Rounding before use makes the on-disk f32 values exact.
  snap_params_to_f32(*m);
  std::vector<double> before = forward_logits(*m, s);

  auto file = dir.path / "model.ckpt";
  save_checkpoint(file, *m, schema);
  LoadedCheckpoint loaded = load_checkpoint(file);

  CHECK(loaded.config.to_json() == cfg.to_json());
  CHECK(loaded.schema.fingerprint() == schema.fingerprint());
  std::vector<double> after = forward_logits(*loaded.model, s);
  CHECK(before == after);  // bit-identical, not merely close
}

TEST_CASE("unsnapped parameters still reload within f32 accuracy") {
  TempDir dir("ckpt_f32");
  ModelConfig cfg = tiny_config();
  auto m = make_classifier(cfg, 78);
  Rng rng(6);
  SeriesSample s = make_sample(rng, cfg);
  std::vector<double> before = forward_logits(*m, s);

  auto file = dir.path / "model.ckpt";
  save_checkpoint(file, *m, test_schema());
  LoadedCheckpoint loaded = load_checkpoint(file);
  std::vector<double> after = forward_logits(*loaded.model, s);
  REQUIRE(before.size() == after.size());
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(after[i] == doctest::Approx(before[i]).epsilon(1e-5));
}

TEST_CASE("corrupted files are rejected") {
  TempDir dir("ckpt_bad");
  ModelConfig cfg = tiny_config();
  auto m = make_classifier(cfg, 79);
  auto file = dir.path / "model.ckpt";
  save_checkpoint(file, *m, test_schema());
  std::vector<char> bytes = slurp(file);
  REQUIRE(bytes.size() > 64);

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    spit(file, bytes);
    CHECK_THROWS_AS(load_checkpoint(file), std::runtime_error);
  }
  SUBCASE("unsupported version") {
    bytes[8] = 99;
    spit(file, bytes);
    CHECK_THROWS_AS(load_checkpoint(file), std::runtime_error);
  }
  SUBCASE("fingerprint no longer matches the stored schema") {
    // The fingerprint sits right after magic and version.
    bytes[12] ^= 0x5a;
    spit(file, bytes);
    CHECK_THROWS_AS(load_checkpoint(file), std::runtime_error);
  }
  SUBCASE("truncated tensor data") {
    bytes.resize(bytes.size() - 16);
    spit(file, bytes);
    CHECK_THROWS_AS(load_checkpoint(file), std::runtime_error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_checkpoint(dir.path / "nope.ckpt"),
                    std::runtime_error);
  }
}

TEST_CASE("checkpoints from every model kind reload") {
  TempDir dir("ckpt_kinds");
  Rng rng(7);
  for (ModelKind k :
       {ModelKind::image_only, ModelKind::metadata_only,
        ModelKind::concat_zero, ModelKind::concat_learned}) {
    CAPTURE(to_string(k));
    ModelConfig cfg = tiny_config();
    cfg.kind = k;
    cfg.concat_hidden = 8;
    auto m = make_classifier(cfg, 80);
    snap_params_to_f32(*m);
    SeriesSample s = make_sample(rng, cfg);
    std::vector<double> before = forward_logits(*m, s);

    auto file = dir.path / (to_string(k) + ".ckpt");
    save_checkpoint(file, *m, test_schema());
    LoadedCheckpoint loaded = load_checkpoint(file);
    CHECK(forward_logits(*loaded.model, s) == before);
  }
}
