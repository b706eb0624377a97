#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "evp/encoder.hpp"
#include "evp/losses.hpp"
#include "evp/rng.hpp"
#include "evp/temporal_graph.hpp"

namespace evp {

/// Earliest interaction time of every node pair (either direction).
class ContactIndex {
 public:
  ContactIndex() = default;
  explicit ContactIndex(const TemporalGraph& g, EventRange range);
  explicit ContactIndex(const TemporalGraph& g) : ContactIndex(g, {0, g.num_events()}) {}

  /// True if v and b interacted at some time <= t.
  bool connected(NodeId v, NodeId b, double t) const;

 private:
  static std::uint64_t key(NodeId a, NodeId b);
  std::unordered_map<std::uint64_t, double> first_;
};

/// Sorted distinct destination nodes of events in `range`.
std::vector<NodeId> destination_pool(const TemporalGraph& g, EventRange range);

/// A node b from `pool` with b != v and no (v, b) interaction at time <= t.
/// Tries `max_retries` uniform draws, then picks uniformly among all valid
/// candidates. Throws SamplingError when no candidate exists.
NodeId negative_sample(const ContactIndex& contacts, const std::vector<NodeId>& pool, NodeId v, double t, Rng& rng,
                       std::size_t max_retries = 64);

struct PretrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 200;
  /// Events per recorded tape; gradients are accumulated across them.
  std::size_t micro_batch = 25;
  double lr = 1e-4;
  std::size_t negatives = 1;
  std::uint64_t seed = 0;
  double tau = 0.2;
  LinkLossForm loss_form = LinkLossForm::ratio;
  /// Size of the fixed validation batch drawn from the validation pool.
  std::size_t val_batch = 64;

  void validate() const;
};

struct PretrainResult {
  EncoderParams params;
  /// Mean per-event training loss of each epoch.
  std::vector<double> epoch_loss;
  /// Mean loss on the fixed validation batch after each epoch.
  std::vector<double> val_loss;
  /// Latest event time that entered a training step (-inf when none did).
  double max_train_time = 0.0;
};

using PretrainProgress = std::function<void(std::size_t epoch, double train_loss, double val_loss)>;

/// Link-prediction pre-training over splits.pretrain in chronological
/// mini-batches with Adam. `init` is returned unchanged when epochs == 0.
PretrainResult pretrain(const TemporalGraph& g, const ChronoSplits& splits, const EncoderParams& init,
                        const PretrainConfig& cfg, const PretrainProgress& progress = {});

/// Mean link loss of `events` (indices into g) under frozen params, with
/// negatives drawn from `rng`. Uses the neighbor index `idx`.
double mean_link_loss(const EncoderParams& params, const TemporalGraph& g, const NeighborIndex& idx,
                      const ContactIndex& contacts, const std::vector<NodeId>& pool,
                      const std::vector<std::size_t>& events, double tau, LinkLossForm form, Rng& rng);

}  // namespace evp
