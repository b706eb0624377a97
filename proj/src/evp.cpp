#include "evp/evp.hpp"

#include "evp/rng.hpp"

#include <algorithm>
#include <random>

namespace evp {

std::string to_string(AdaptationMode m) {
  return m == AdaptationMode::elementwise ? "elementwise" : "conditional";
}

AdaptationMode adaptation_mode_from_string(const std::string& s) {
  if (s == "elementwise") return AdaptationMode::elementwise;
  if (s == "conditional") return AdaptationMode::conditional;
  throw ConfigError("unknown adaptation mode '" + s + "'");
}

void EvpConfig::validate() const {
  if (dim == 0) throw ConfigError("evp dim must be positive");
  if (num_events == 0) throw ConfigError("K must be at least 1");
  if (mode == AdaptationMode::conditional && condition_hidden() == 0) {
    throw ConfigError("conditional adaptation needs a positive hidden size");
  }
  if (mode == AdaptationMode::conditional && condition_hidden() >= dim) {
    throw ConfigError("conditional hidden size must be smaller than dim");
  }
  if (!(init_decay_rate >= 0.0)) throw ConfigError("initial decay rate must be non-negative");
}

nlohmann::json EvpConfig::to_json() const {
  return {{"dim", dim},
          {"num_events", num_events},
          {"mode", to_string(mode)},
          {"cond_hidden", cond_hidden},
          {"event_prompt", flags.event_prompt},
          {"dynamic_prompt", flags.dynamic_prompt},
          {"time_decay", flags.time_decay},
          {"init_decay_rate", init_decay_rate},
          {"use_head", use_head},
          {"seed", seed}};
}

EvpConfig EvpConfig::from_json(const nlohmann::json& j) {
  EvpConfig c;
  c.dim = j.at("dim").get<std::size_t>();
  c.num_events = j.at("num_events").get<std::size_t>();
  c.mode = adaptation_mode_from_string(j.at("mode").get<std::string>());
  c.cond_hidden = j.at("cond_hidden").get<std::size_t>();
  c.flags.event_prompt = j.at("event_prompt").get<bool>();
  c.flags.dynamic_prompt = j.at("dynamic_prompt").get<bool>();
  c.flags.time_decay = j.at("time_decay").get<bool>();
  c.init_decay_rate = j.at("init_decay_rate").get<double>();
  c.use_head = j.at("use_head").get<bool>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

EvpParams EvpParams::init(const EvpConfig& config) {
  config.validate();
  EvpParams p;
  p.config_ = config;
  const auto d = static_cast<Eigen::Index>(config.dim);
  const auto k = static_cast<Eigen::Index>(config.num_events);
  const auto hid = static_cast<Eigen::Index>(config.condition_hidden());

  p.tensors_.add("event_prompt", Mat::Ones(d, 1));
  p.tensors_.add("dynamic_prompt", Mat::Ones(k, 1));
  p.tensors_.add("decay_rate", Mat::Constant(1, 1, config.init_decay_rate));
  p.tensors_.add("head", Mat::Ones(d, 1));

  Rng rng = make_rng(config.seed, "evp-condition-init");
  std::normal_distribution<double> n(0.0, 0.01);
  Mat w1(hid, d);
  Mat w2(d, hid);
  for (Eigen::Index i = 0; i < w1.size(); ++i) w1.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < w2.size(); ++i) w2.data()[i] = n(rng);
  p.tensors_.add("cond.w1", std::move(w1));
  p.tensors_.add("cond.b1", Mat::Zero(hid, 1));
  p.tensors_.add("cond.w2", std::move(w2));
  p.tensors_.add("cond.b2", Mat::Ones(d, 1));
  p.set_trainable_from_flags();
  return p;
}

void EvpParams::set_trainable_from_flags() {
  const EvpFlags& f = config_.flags;
  const bool elementwise = config_.mode == AdaptationMode::elementwise;
  tensors_.set_trainable(event_prompt(), f.event_prompt && elementwise);
  tensors_.set_trainable(dynamic_prompt(), f.dynamic_prompt);
  tensors_.set_trainable(decay_rate(), f.time_decay);
  tensors_.set_trainable(head(), config_.use_head);
  for (std::size_t i : {cond_w1(), cond_b1(), cond_w2(), cond_b2()}) {
    tensors_.set_trainable(i, f.event_prompt && !elementwise);
  }
}

void EvpParams::clamp_decay() {
  Mat& lambda = tensors_.value(decay_rate());
  lambda(0, 0) = std::max(lambda(0, 0), 0.0);
}

std::vector<ExtractedEvent> extract_events(const NeighborIndex& idx, NodeId v, double t, std::size_t k) {
  const auto recent = idx.recent(v, t, k);
  std::vector<ExtractedEvent> out;
  out.reserve(recent.size());
  for (std::size_t i = 0; i < recent.size(); ++i) {
    out.push_back({recent[i].neighbor, recent[i].time, i + 1, recent[i].event_id});
  }
  return out;
}

Vec event_embedding(FrozenEncoder& encoder, NodeId v, const ExtractedEvent& e) {
  Vec out = encoder.embed(v, e.time).col(0);
  out += encoder.embed(e.partner, e.time).col(0);
  return out;
}

EvpQuery make_query(FrozenEncoder& encoder, const NeighborIndex& idx, NodeId v, double t, std::size_t k) {
  EvpQuery q;
  q.h = encoder.embed(v, t);
  const auto events = extract_events(idx, v, t, k);
  const double unit = encoder.params().config().time_unit;
  q.events.resize(q.h.rows(), static_cast<Eigen::Index>(events.size()));
  q.ages.reserve(events.size());
  for (std::size_t i = 0; i < events.size(); ++i) {
    q.events.col(static_cast<Eigen::Index>(i)) = event_embedding(encoder, v, events[i]);
    q.ages.push_back((t - events[i].time) / unit);
  }
  return q;
}

Vec evp_embed(FrozenEncoder& encoder, const NeighborIndex& idx, const EvpParams& p, NodeId v, double t) {
  const EvpQuery q = make_query(encoder, idx, v, t, p.config().num_events);
  PlainOps ops;
  return evp_forward(ops, p, q).col(0);
}

}  // namespace evp
