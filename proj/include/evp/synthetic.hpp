#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "evp/temporal_graph.hpp"

namespace evp {

enum class SignatureRule { modulo, random };

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 50;
  double horizon = 600.0;
  double period = 100.0;
  SignatureRule signature_rule = SignatureRule::random;
  /// Fraction of all events that are uniformly random (user, item, time).
  double noise_rate = 0.3;
  std::uint64_t seed = 0;
  /// Width of the per-item random edge-feature code.
  std::size_t edge_dim = 16;
  /// Node labels are signature_item_index % num_classes.
  std::size_t num_classes = 2;
  /// Std of Gaussian noise added to each event's feature code.
  double feature_noise = 0.0;

  void validate() const;
};

/// Reads `key = value` lines; '#' starts a comment. Unknown keys and bad
/// values throw ConfigError.
SynthConfig parse_synth_config(std::istream& in, const std::string& source = "<stream>");
SynthConfig load_synth_config(const std::filesystem::path& path);

struct SyntheticGraph {
  SynthConfig config;
  TemporalGraph graph;
  /// Per user: node id of its signature item.
  std::vector<NodeId> signature;
  /// Per user: offset of its periodic schedule in [0, period).
  std::vector<double> phase;
  std::size_t num_signal = 0;
  std::size_t num_noise = 0;

  /// The item user v interacts with next on its schedule.
  NodeId oracle(NodeId v, double t) const;
};

/// User v meets signature(v) at phase_v + j * period for j >= 1 up to the
/// horizon; round(r / (1 - r) * signal) noise events are added uniformly.
SyntheticGraph generate(const SynthConfig& cfg);

}  // namespace evp
