#pragma once

// Temporal-attention dynamic graph encoder.
//
// Layer l at (v, t) attends from the fused self state
//     fuse(h^{l-1}(v, t), TE(0))
// over the fused states of v's most recent neighbors
//     fuse(h^{l-1}(u, t'), TE(t - t'))   for (u, t') with t' < t
// and maps the concatenated head outputs through an affine output layer.
// Neighbor states are evaluated at their own interaction time t'.
// Layer 0 is the static node feature plus, optionally, the mean edge
// feature over the node's sampled events.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "evp/autograd.hpp"
#include "evp/errors.hpp"
#include "evp/params.hpp"
#include "evp/temporal_graph.hpp"
#include "evp/time_encoding.hpp"

namespace evp {

struct EncoderConfig {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 172;
  std::size_t num_layers = 2;
  std::size_t num_heads = 2;
  std::size_t neighbor_budget = 20;
  bool layer0_edge_mean = true;
  bool learnable_time = false;
  FrequencyScheme time_scheme = FrequencyScheme::geometric;
  /// Time deltas are divided by this before encoding.
  double time_unit = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static EncoderConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
};

class EncoderParams {
 public:
  enum class Init { xavier, identity };

  struct LayerIndex {
    std::size_t fuse_w, fuse_b, wq, wk, wv, wo, bo;
  };

  EncoderParams() = default;

  /// Xavier-uniform weights drawn from config.seed, zero biases, and
  /// frequencies from config.time_scheme. `identity` sets every square
  /// projection to I and the fuse map to [I 0] (needs input_dim == hidden_dim).
  static EncoderParams init(const EncoderConfig& config, Init init = Init::xavier);

  const EncoderConfig& config() const { return config_; }
  ParamSet& tensors() { return tensors_; }
  const ParamSet& tensors() const { return tensors_; }

  std::size_t omega() const { return 0; }
  LayerIndex layer(std::size_t l) const;
  std::size_t layer_input_dim(std::size_t l) const {
    return l == 0 ? config_.input_dim : config_.hidden_dim;
  }

  TimeEncoderParams time_encoder() const;
  std::uint64_t checksum() const { return tensors_.checksum(); }

 private:
  EncoderConfig config_;
  ParamSet tensors_;
};

/// Concatenate h and te (row-wise, column by column) and apply W x + b.
template <class Ops>
typename Ops::T fuse(Ops& ops, const typename Ops::T& w, const typename Ops::T& b,
                     const typename Ops::T& h, const typename Ops::T& te) {
  const Mat& wv = ops.value(w);
  if (wv.cols() != ops.value(h).rows() + ops.value(te).rows() || wv.rows() != ops.value(b).rows() ||
      ops.value(h).cols() != ops.value(te).cols()) {
    throw ShapeError("fuse: dimensions do not match the projection");
  }
  const typename Ops::T parts[2] = {h, te};
  return ops.add_bias(ops.matmul(w, ops.vcat(parts)), b);
}

template <class Ops>
struct LayerOutput {
  typename Ops::T out;
  /// Attention weights per head (values only); empty without neighbors.
  std::vector<Vec> attention;
};

/// One attention layer (0-based parameter layer `l`). `deltas` are
/// already-normalized t - t' for each neighbor state.
template <class Ops>
LayerOutput<Ops> layer_forward(Ops& ops, const EncoderParams& p, std::size_t l,
                               const typename Ops::T& self_state,
                               std::span<const typename Ops::T> neighbor_states,
                               std::span<const double> deltas) {
  using T = typename Ops::T;
  if (neighbor_states.size() != deltas.size()) throw ShapeError("layer_forward: one delta per neighbor required");
  const auto idx = p.layer(l);
  const ParamSet& ps = p.tensors();
  decltype(auto) omega = ops.param(ps, p.omega());
  decltype(auto) fw = ops.param(ps, idx.fuse_w);
  decltype(auto) fb = ops.param(ps, idx.fuse_b);

  const double zero[1] = {0.0};
  const T fused_self = fuse(ops, fw, fb, self_state, ops.time_encode(omega, zero));

  LayerOutput<Ops> result;
  T z;
  if (neighbor_states.empty()) {
    z = fused_self;
  } else {
    const T x = ops.hcat(neighbor_states);
    const T fused = fuse(ops, fw, fb, x, ops.time_encode(omega, deltas));
    decltype(auto) wq = ops.param(ps, idx.wq);
    decltype(auto) wk = ops.param(ps, idx.wk);
    decltype(auto) wv = ops.param(ps, idx.wv);
    const T q = ops.matmul(wq, fused_self);
    const T k = ops.matmul(wk, fused);
    const T v = ops.matmul(wv, fused);
    const auto heads = static_cast<Eigen::Index>(p.config().num_heads);
    const Eigen::Index dh = static_cast<Eigen::Index>(p.config().hidden_dim) / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<T> head_out;
    head_out.reserve(static_cast<std::size_t>(heads));
    for (Eigen::Index h = 0; h < heads; ++h) {
      const T scores = ops.scale(ops.tmatmul(ops.rows(k, h * dh, dh), ops.rows(q, h * dh, dh)), inv_sqrt);
      const T alpha = ops.softmax(scores);
      result.attention.push_back(ops.value(alpha).col(0));
      head_out.push_back(ops.matmul(ops.rows(v, h * dh, dh), alpha));
    }
    z = ops.vcat(std::span<const T>(head_out));
  }
  result.out = ops.add_bias(ops.matmul(ops.param(ps, idx.wo), z), ops.param(ps, idx.bo));
  return result;
}

/// Recursive multi-layer evaluation with per-(layer, node, time) memoization.
/// Not thread-safe; use one pass per thread.
template <class Ops>
class EncoderPass {
 public:
  using T = typename Ops::T;

  EncoderPass(Ops& ops, const EncoderParams& params, const TemporalGraph& g, const NeighborIndex& idx)
      : ops_(ops), params_(params), g_(g), idx_(idx) {
    if (params.config().input_dim != g.feature_dim()) {
      throw ShapeError("encoder input_dim " + std::to_string(params.config().input_dim) +
                       " does not match graph feature_dim " + std::to_string(g.feature_dim()));
    }
  }

  /// Final-layer embedding of v at time t (d x 1).
  const T& embed(NodeId v, double t) { return state(params_.config().num_layers, v, t); }

  const T& state(std::size_t layer, NodeId v, double t) {
    if (v >= g_.num_nodes()) throw LookupError("unknown node id " + std::to_string(v));
    const Key key{static_cast<std::uint32_t>(layer), v, std::bit_cast<std::uint64_t>(t)};
    if (const auto it = memo_.find(key); it != memo_.end()) return it->second;
    T value = compute(layer, v, t);
    return memo_.emplace(key, std::move(value)).first->second;
  }

  std::size_t memo_size() const { return memo_.size(); }
  void clear() { memo_.clear(); }

 private:
  struct Key {
    std::uint32_t layer;
    NodeId node;
    std::uint64_t time_bits;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = k.time_bits * 0x9E3779B97F4A7C15ULL;
      h ^= (static_cast<std::uint64_t>(k.node) << 8 | k.layer) + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
      return static_cast<std::size_t>(h);
    }
  };

  T compute(std::size_t layer, NodeId v, double t) {
    const EncoderConfig& cfg = params_.config();
    const auto neighbors = idx_.recent(v, t, cfg.neighbor_budget);
    if (layer == 0) {
      Mat x = g_.node_features().col(static_cast<Eigen::Index>(v));
      if (cfg.layer0_edge_mean && g_.feature_dim() > 0 && !neighbors.empty()) {
        Vec mean = Vec::Zero(static_cast<Eigen::Index>(g_.feature_dim()));
        for (const auto& n : neighbors) mean += g_.edge_feature(n.event_id);
        x.col(0) += mean / static_cast<double>(neighbors.size());
      }
      return ops_.constant(std::move(x));
    }
    const T self = state(layer - 1, v, t);
    std::vector<T> states;
    std::vector<double> deltas;
    states.reserve(neighbors.size());
    deltas.reserve(neighbors.size());
    for (const auto& n : neighbors) {
      states.push_back(state(layer - 1, n.neighbor, n.time));
      deltas.push_back((t - n.time) / cfg.time_unit);
    }
    return layer_forward(ops_, params_, layer - 1, self, std::span<const T>(states), deltas).out;
  }

  Ops& ops_;
  const EncoderParams& params_;
  const TemporalGraph& g_;
  const NeighborIndex& idx_;
  std::unordered_map<Key, T, KeyHash> memo_;
};

struct NodeEmbedding {
  Vec h;
  NodeId node = 0;
  double time = 0.0;
};

/// One-off embedding with a fresh memo.
NodeEmbedding embed(const EncoderParams& params, const TemporalGraph& g, const NeighborIndex& idx, NodeId v,
                    double t);

/// Inference-only encoder whose memo persists across calls, for use while
/// the parameters are frozen.
class FrozenEncoder {
 public:
  FrozenEncoder(const EncoderParams& params, const TemporalGraph& g, const NeighborIndex& idx)
      : params_(params), pass_(ops_, params, g, idx) {}

  const Mat& embed(NodeId v, double t) { return pass_.embed(v, t); }
  const EncoderParams& params() const { return params_; }
  std::size_t cache_size() const { return pass_.memo_size(); }
  void clear() { pass_.clear(); }

 private:
  PlainOps ops_;
  const EncoderParams& params_;
  EncoderPass<PlainOps> pass_;
};

}  // namespace evp
