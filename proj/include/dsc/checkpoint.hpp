#pragma once

#include <filesystem>
#include <memory>

#include "dsc/model.hpp"
#include "dsc/schema.hpp"

namespace dsc {

// Binary checkpoint: magic, format version, schema fingerprint, the model
// config and feature schema as JSON, then every named parameter as 32-bit
// little-endian floats. Parameters are rounded to f32 on save, so snap the
// model first when bit-identical reload matters.
inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'C', 'C',
                                             'K', 'P', 'T', '1'};
inline constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, Classifier& model,
                     const TagSchema& schema);

struct LoadedCheckpoint {
  ModelConfig config;
  TagSchema schema;
  std::unique_ptr<Classifier> model;
};

// Rebuilds the model from the stored config and restores every parameter.
// Unknown, missing or reshaped tensors are errors.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Rounds every parameter to f32 precision in place.
void snap_params_to_f32(Classifier& model);

}  // namespace dsc
