#pragma once

// Event-aware prompting on top of a frozen encoder.
//
// For a node v at time t:
//   extract   the K most recent events (v, u_k, z_k), z_k < t
//   embed     e_k = h(v, z_k) + h(u_k, z_k)
//   adapt     e^_k = p_e (.) e_k, or Cond(e_k; phi) (.) e_k
//   aggregate e~ = sum_k w_k e^_k, w_k = exp(-lambda (t - z_k)) * p_dy[k]
//   integrate h^ = h(v, t) + e~
//
// Each stage can be switched off independently; with every stage off the
// plug-in is the identity and h^ = h(v, t).

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "evp/autograd.hpp"
#include "evp/encoder.hpp"
#include "evp/errors.hpp"
#include "evp/params.hpp"
#include "evp/temporal_graph.hpp"

namespace evp {

enum class AdaptationMode { elementwise, conditional };

std::string to_string(AdaptationMode m);
AdaptationMode adaptation_mode_from_string(const std::string& s);

struct EvpFlags {
  bool event_prompt = true;
  bool dynamic_prompt = true;
  bool time_decay = true;

  bool any() const { return event_prompt || dynamic_prompt || time_decay; }
  bool operator==(const EvpFlags&) const = default;
};

struct EvpConfig {
  std::size_t dim = 172;
  std::size_t num_events = 9;  // K
  AdaptationMode mode = AdaptationMode::elementwise;
  std::size_t cond_hidden = 0;  // 0 means dim / 2
  EvpFlags flags;
  double init_decay_rate = 1.0;
  /// Adds a trainable elementwise output scale on h^ (the "head" group).
  bool use_head = false;
  std::uint64_t seed = 0;

  std::size_t condition_hidden() const { return cond_hidden == 0 ? dim / 2 : cond_hidden; }
  void validate() const;
  nlohmann::json to_json() const;
  static EvpConfig from_json(const nlohmann::json& j);
};

/// Trainable prompt tensors. Prompts start at the identity: p_e = 1,
/// p_dy = 1, and the condition net's output bias is 1 with small weights.
class EvpParams {
 public:
  EvpParams() = default;
  static EvpParams init(const EvpConfig& config);

  const EvpConfig& config() const { return config_; }
  ParamSet& tensors() { return tensors_; }
  const ParamSet& tensors() const { return tensors_; }

  std::size_t event_prompt() const { return 0; }
  std::size_t dynamic_prompt() const { return 1; }
  std::size_t decay_rate() const { return 2; }
  std::size_t head() const { return 3; }
  std::size_t cond_w1() const { return 4; }
  std::size_t cond_b1() const { return 5; }
  std::size_t cond_w2() const { return 6; }
  std::size_t cond_b2() const { return 7; }
  bool has_condition_net() const { return config_.mode == AdaptationMode::conditional; }

  /// Marks exactly the tensors that the enabled stages use as trainable.
  void set_trainable_from_flags();

  /// Projects lambda back onto [0, inf).
  void clamp_decay();

  std::uint64_t checksum() const { return tensors_.checksum(); }

 private:
  EvpConfig config_;
  ParamSet tensors_;
};

struct ExtractedEvent {
  NodeId partner = 0;
  double time = 0.0;
  std::size_t rank = 1;  // 1 = most recent
  std::size_t event_id = 0;
};

/// The K most recent interactions of v strictly before t, most recent first.
std::vector<ExtractedEvent> extract_events(const NeighborIndex& idx, NodeId v, double t, std::size_t k);

/// e_k = h(v, z_k) + h(u_k, z_k).
Vec event_embedding(FrozenEncoder& encoder, NodeId v, const ExtractedEvent& e);

/// Inputs needed to evaluate the plug-in for one (v, t) with a frozen
/// encoder: h(v, t), the event embedding matrix (one column per extracted
/// event, most recent first) and normalized ages (t - z_k) / time_unit.
struct EvpQuery {
  Mat h;
  Mat events;
  std::vector<double> ages;
};

EvpQuery make_query(FrozenEncoder& encoder, const NeighborIndex& idx, NodeId v, double t, std::size_t k);

/// Adapt one event embedding (d x 1) or a block of them (d x n).
template <class Ops>
typename Ops::T adapt(Ops& ops, const EvpParams& p, const typename Ops::T& e) {
  const auto d = static_cast<Eigen::Index>(p.config().dim);
  if (ops.value(e).rows() != d) throw ShapeError("adapt: event embedding has wrong dimension");
  if (!p.config().flags.event_prompt) return e;
  const ParamSet& ps = p.tensors();
  if (p.config().mode == AdaptationMode::elementwise) {
    return ops.mul_cols(e, ops.param(ps, p.event_prompt()));
  }
  const auto hidden = ops.tanh(ops.add_bias(ops.matmul(ops.param(ps, p.cond_w1()), e), ops.param(ps, p.cond_b1())));
  const auto prompt = ops.add_bias(ops.matmul(ops.param(ps, p.cond_w2()), hidden), ops.param(ps, p.cond_b2()));
  return ops.cmul(prompt, e);
}

/// Per-event weights w_k for n events with the given normalized ages.
template <class Ops>
typename Ops::T aggregation_weights(Ops& ops, const EvpParams& p, std::span<const double> ages) {
  const auto n = static_cast<Eigen::Index>(ages.size());
  const EvpFlags& f = p.config().flags;
  const ParamSet& ps = p.tensors();
  typename Ops::T w = ops.constant(Mat::Ones(n, 1));
  if (f.time_decay) {
    Mat neg_age(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) neg_age(i, 0) = -ages[static_cast<std::size_t>(i)];
    w = ops.exp(ops.smul(ops.param(ps, p.decay_rate()), ops.constant(std::move(neg_age))));
  }
  if (f.dynamic_prompt) {
    const auto dyn = ops.rows(ops.param(ps, p.dynamic_prompt()), 0, n);
    w = f.time_decay ? ops.cmul(w, dyn) : dyn;
  }
  return w;
}

/// e~ = sum_k w_k e^_k over adapted events (d x n); zero when n = 0.
template <class Ops>
typename Ops::T aggregate(Ops& ops, const EvpParams& p, const typename Ops::T& adapted,
                          std::span<const double> ages) {
  const auto d = static_cast<Eigen::Index>(p.config().dim);
  const Mat& a = ops.value(adapted);
  if (static_cast<std::size_t>(a.cols()) > p.config().num_events) {
    throw ContractError("aggregate: " + std::to_string(a.cols()) + " events exceed K = " +
                        std::to_string(p.config().num_events));
  }
  if (static_cast<std::size_t>(a.cols()) != ages.size()) throw ShapeError("aggregate: one age per event required");
  if (a.cols() == 0) return ops.constant(Mat::Zero(d, 1));
  return ops.matmul(adapted, aggregation_weights(ops, p, ages));
}

/// h^ = h + e~.
template <class Ops>
typename Ops::T integrate(Ops& ops, const typename Ops::T& h, const typename Ops::T& e) {
  if (ops.value(h).rows() != ops.value(e).rows() || ops.value(h).cols() != ops.value(e).cols()) {
    throw ShapeError("integrate: dimension mismatch");
  }
  return ops.add(h, e);
}

/// Full plug-in on a prepared query. With every flag off this returns h.
template <class Ops>
typename Ops::T evp_forward(Ops& ops, const EvpParams& p, const EvpQuery& q) {
  typename Ops::T h = ops.constant(q.h);
  if (static_cast<std::size_t>(q.h.rows()) != p.config().dim) throw ShapeError("evp: embedding dimension mismatch");
  if (p.config().flags.any() && q.events.cols() > 0) {
    const auto adapted = adapt(ops, p, ops.constant(q.events));
    h = integrate(ops, h, aggregate(ops, p, adapted, q.ages));
  }
  if (p.config().use_head) h = ops.cmul(h, ops.param(p.tensors(), p.head()));
  return h;
}

/// extract -> embed -> adapt -> aggregate -> integrate for (v, t).
Vec evp_embed(FrozenEncoder& encoder, const NeighborIndex& idx, const EvpParams& p, NodeId v, double t);

}  // namespace evp
