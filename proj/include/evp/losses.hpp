#pragma once

#include <span>
#include <string>
#include <vector>

#include "evp/autograd.hpp"
#include "evp/errors.hpp"

namespace evp {

/// Cosine similarity guard added to both norms.
inline constexpr double kCosineEps = 1e-12;

/// `ratio`:   -ln[exp(s_a / tau) / exp(s_b / tau)] = (s_b - s_a) / tau
/// `softmax`: -ln[exp(s_a / tau) / (exp(s_a / tau) + exp(s_b / tau))]
enum class LinkLossForm { ratio, softmax };

std::string to_string(LinkLossForm f);
LinkLossForm link_loss_form_from_string(const std::string& s);

/// Per-triple link loss on embeddings h_v, h_a (positive) and h_b (negative).
template <class Ops>
typename Ops::T link_loss(Ops& ops, const typename Ops::T& hv, const typename Ops::T& ha,
                          const typename Ops::T& hb, double tau, LinkLossForm form = LinkLossForm::ratio) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  const auto sa = ops.scale(ops.cosine(hv, ha, kCosineEps), 1.0 / tau);
  const auto sb = ops.scale(ops.cosine(hv, hb, kCosineEps), 1.0 / tau);
  if (form == LinkLossForm::ratio) return ops.sub(sb, sa);
  const typename Ops::T both[2] = {sa, sb};
  return ops.sub(ops.logsumexp(ops.vcat(both)), sa);
}

/// Cross-entropy of softmax over sim(h, prototype_c) / tau against class y.
/// `prototypes` is d x C.
template <class Ops>
typename Ops::T node_class_loss(Ops& ops, const typename Ops::T& h, std::size_t y,
                                std::span<const typename Ops::T> prototypes, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (y >= prototypes.size()) throw PrototypeError("no prototype for class index " + std::to_string(y));
  std::vector<typename Ops::T> logits;
  logits.reserve(prototypes.size());
  for (const auto& p : prototypes) logits.push_back(ops.scale(ops.cosine(h, p, kCosineEps), 1.0 / tau));
  const auto z = ops.vcat(std::span<const typename Ops::T>(logits));
  return ops.sub(ops.logsumexp(z), logits[y]);
}

}  // namespace evp
