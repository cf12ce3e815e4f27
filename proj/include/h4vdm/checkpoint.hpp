#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "h4vdm/model.hpp"

namespace h4vdm {

// Binary checkpoint layout (all integers little-endian):
//   [u32 header_len][JSON header, header_len bytes]
//   [float32 parameter payload, header order]
//   [u32 CRC-32 over every preceding byte]
// The header records format_version, kind, the full model config, the input
// scaling conventions, the pooling tag and the ordered (name, rows, cols)
// parameter list, plus optional training metadata.

struct CheckpointMeta {
  std::optional<double> threshold;
  std::optional<uint64_t> seed;
  std::optional<double> val_auc;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);

// Throws ConfigError on missing/invalid fields.
ModelConfig model_config_from_json(const nlohmann::json& j);

// Serializes the model's current weights. Throws IoError on write failure.
void save_checkpoint(const std::filesystem::path& path, FeatureExtractor<float>& model,
                     const CheckpointMeta& meta = {});

// Reconstructs the model recorded in the header and loads its weights.
// Throws IoError (unreadable), FormatError (malformed/truncated header,
// parameter-list drift), ShapeMismatch (a named parameter changed shape) and
// ChecksumMismatch (payload corruption).
FeatureExtractor<float> load_checkpoint(const std::filesystem::path& path,
                                        CheckpointMeta* meta_out = nullptr);

// Header-only peek (no payload verification); useful for config inspection.
nlohmann::json read_checkpoint_header(const std::filesystem::path& path);

}  // namespace h4vdm
