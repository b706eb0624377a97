#include "evp/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace evp {

namespace {

constexpr const char* kFormat = "evp-checkpoint";
constexpr int kVersion = 1;

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& c) {
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["encoder"] = {{"config", c.encoder.config().to_json()},
                  {"config_hash", c.encoder.config().hash()},
                  {"tensors", c.encoder.tensors().to_json()}};
  if (c.prompts) {
    j["prompts"] = {{"config", c.prompts->config().to_json()}, {"tensors", c.prompts->tensors().to_json()}};
  }
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format").get<std::string>() != kFormat) throw CheckpointError("not an evp checkpoint");
    if (j.at("version").get<int>() != kVersion) throw CheckpointError("unsupported checkpoint version");
    const auto& enc = j.at("encoder");
    const EncoderConfig cfg = EncoderConfig::from_json(enc.at("config"));
    if (cfg.hash() != enc.at("config_hash").get<std::uint64_t>()) {
      throw CheckpointError("encoder config hash mismatch");
    }
    Checkpoint c;
    c.encoder = EncoderParams::init(cfg);
    c.encoder.tensors().load_json(enc.at("tensors"));
    if (j.contains("prompts")) {
      const auto& pr = j.at("prompts");
      EvpParams p = EvpParams::init(EvpConfig::from_json(pr.at("config")));
      p.tensors().load_json(pr.at("tensors"));
      c.prompts = std::move(p);
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("invalid checkpoint config: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out << text;
    out.flush();
    if (!out) throw CheckpointError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw CheckpointError("cannot move checkpoint into " + path.string() + ": " + ec.message());
  }
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_json(c).dump());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace evp
