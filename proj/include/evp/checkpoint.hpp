#pragma once

#include <filesystem>
#include <optional>

#include "evp/encoder.hpp"
#include "evp/evp.hpp"

namespace evp {

struct Checkpoint {
  EncoderParams encoder;
  std::optional<EvpParams> prompts;
};

/// Serializes to JSON. The encoder section stores its config, a config hash
/// and every tensor; prompts, when present, go in a separate section.
nlohmann::json checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// Writes to a sibling temporary file and renames it into place, so an
/// interrupted save never leaves a partial file at `path`.
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `text` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace evp
