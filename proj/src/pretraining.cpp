#include "evp/pretraining.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>

namespace evp {

ContactIndex::ContactIndex(const TemporalGraph& g, EventRange range) {
  for (std::size_t i = range.begin; i < range.end; ++i) {
    const Event& e = g.event(i);
    // Events are time-sorted, so the first insert per pair is the earliest.
    first_.emplace(key(e.src, e.dst), e.time);
  }
}

std::uint64_t ContactIndex::key(NodeId a, NodeId b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

bool ContactIndex::connected(NodeId v, NodeId b, double t) const {
  const auto it = first_.find(key(v, b));
  return it != first_.end() && it->second <= t;
}

std::vector<NodeId> destination_pool(const TemporalGraph& g, EventRange range) {
  std::set<NodeId> nodes;
  for (std::size_t i = range.begin; i < range.end; ++i) nodes.insert(g.event(i).dst);
  return {nodes.begin(), nodes.end()};
}

NodeId negative_sample(const ContactIndex& contacts, const std::vector<NodeId>& pool, NodeId v, double t, Rng& rng,
                       std::size_t max_retries) {
  const auto valid = [&](NodeId b) { return b != v && !contacts.connected(v, b, t); };
  if (!pool.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < max_retries; ++i) {
      const NodeId b = pool[pick(rng)];
      if (valid(b)) return b;
    }
  }
  std::vector<NodeId> candidates;
  for (NodeId b : pool) {
    if (valid(b)) candidates.push_back(b);
  }
  if (candidates.empty()) {
    throw SamplingError("no negative candidate for node " + std::to_string(v) + " at time " + std::to_string(t) +
                        ": it is connected to every node in the pool");
  }
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng)];
}

void PretrainConfig::validate() const {
  if (batch_size == 0 || micro_batch == 0) throw ConfigError("batch sizes must be positive");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (negatives == 0) throw ConfigError("negatives per positive must be positive");
  if (!(tau > 0.0)) throw ConfigError("pre-training temperature must be positive");
}

double mean_link_loss(const EncoderParams& params, const TemporalGraph& g, const NeighborIndex& idx,
                      const ContactIndex& contacts, const std::vector<NodeId>& pool,
                      const std::vector<std::size_t>& events, double tau, LinkLossForm form, Rng& rng) {
  if (events.empty()) return 0.0;
  PlainOps ops;
  EncoderPass<PlainOps> pass(ops, params, g, idx);
  double total = 0.0;
  for (std::size_t i : events) {
    const Event& e = g.event(i);
    const NodeId b = negative_sample(contacts, pool, e.src, e.time, rng);
    const Mat hv = pass.embed(e.src, e.time);
    const Mat ha = pass.embed(e.dst, e.time);
    const Mat hb = pass.embed(b, e.time);
    total += link_loss(ops, hv, ha, hb, tau, form)(0, 0);
  }
  return total / static_cast<double>(events.size());
}

PretrainResult pretrain(const TemporalGraph& g, const ChronoSplits& splits, const EncoderParams& init,
                        const PretrainConfig& cfg, const PretrainProgress& progress) {
  cfg.validate();
  if (splits.pretrain.empty()) throw SplitError("pre-training range is empty");
  PretrainResult result;
  result.params = init;
  result.max_train_time = -std::numeric_limits<double>::infinity();
  if (cfg.epochs == 0) return result;

  // The encoder only ever sees the pre-training prefix while training.
  const TemporalGraph train_g = g.prefix(splits.pretrain.end);
  const NeighborIndex train_idx(train_g);
  const ContactIndex train_contacts(train_g);
  const std::vector<NodeId> pool = destination_pool(train_g, splits.pretrain);

  const TemporalGraph val_g = g.prefix(splits.val_pool.end);
  const NeighborIndex val_idx(val_g);
  const ContactIndex val_contacts(val_g);
  std::vector<std::size_t> val_events;
  for (std::size_t i = splits.val_pool.begin; i < splits.val_pool.end && val_events.size() < cfg.val_batch; ++i) {
    val_events.push_back(i);
  }

  ParamSet& ps = result.params.tensors();
  Adam adam(cfg.lr);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, "pretrain", epoch);
    double epoch_total = 0.0;
    std::size_t epoch_terms = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = splits.pretrain.begin; start < splits.pretrain.end; start += cfg.batch_size, ++batch_no) {
      const std::size_t stop = std::min(start + cfg.batch_size, splits.pretrain.end);
      const double terms = static_cast<double>((stop - start) * cfg.negatives);
      std::vector<Mat> grads;
      for (std::size_t m0 = start; m0 < stop; m0 += cfg.micro_batch) {
        const std::size_t m1 = std::min(m0 + cfg.micro_batch, stop);
        ad::Tape tape;
        TapeOps ops(tape);
        EncoderPass<TapeOps> pass(ops, result.params, train_g, train_idx);
        ad::Var total;
        for (std::size_t i = m0; i < m1; ++i) {
          const Event& e = train_g.event(i);
          result.max_train_time = std::max(result.max_train_time, e.time);
          const ad::Var hv = pass.embed(e.src, e.time);
          const ad::Var ha = pass.embed(e.dst, e.time);
          for (std::size_t n = 0; n < cfg.negatives; ++n) {
            const NodeId b = negative_sample(train_contacts, pool, e.src, e.time, rng);
            const ad::Var hb = pass.embed(b, e.time);
            const ad::Var l = link_loss(ops, hv, ha, hb, cfg.tau, cfg.loss_form);
            total = total.valid() ? ops.add(total, l) : l;
          }
        }
        const double value = total.value()(0, 0);
        if (!std::isfinite(value)) {
          throw TrainingError("pre-training diverged at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(batch_no) + ": loss is " + std::to_string(value));
        }
        epoch_total += value;
        epoch_terms += (m1 - m0) * cfg.negatives;
        tape.backward(ops.scale(total, 1.0 / terms));
        std::vector<Mat> g_micro = ops.gradients(ps);
        if (grads.empty()) {
          grads = std::move(g_micro);
        } else {
          for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += g_micro[k];
        }
      }
      adam.step(ps, grads);
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(epoch_terms));

    Rng val_rng = make_rng(cfg.seed, "pretrain-val");
    const double val = mean_link_loss(result.params, val_g, val_idx, val_contacts, pool, val_events, cfg.tau,
                                      cfg.loss_form, val_rng);
    if (!std::isfinite(val)) {
      throw TrainingError("validation loss is not finite after epoch " + std::to_string(epoch));
    }
    result.val_loss.push_back(val);
    if (progress) progress(epoch, result.epoch_loss.back(), val);
  }
  return result;
}

std::string to_string(LinkLossForm f) { return f == LinkLossForm::ratio ? "ratio" : "softmax"; }

LinkLossForm link_loss_form_from_string(const std::string& s) {
  if (s == "ratio") return LinkLossForm::ratio;
  if (s == "softmax") return LinkLossForm::softmax;
  throw ConfigError("unknown link loss form '" + s + "'");
}

}  // namespace evp
