#include "evp/encoder.hpp"

#include "evp/rng.hpp"

#include <random>

namespace evp {

void EncoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("encoder needs at least one layer");
  if (hidden_dim == 0 || hidden_dim % 2 != 0) throw ConfigError("hidden_dim must be even and positive");
  if (num_heads == 0 || hidden_dim % num_heads != 0) throw ConfigError("hidden_dim must be divisible by num_heads");
  if (neighbor_budget == 0) throw ConfigError("neighbor_budget must be positive");
  if (!(time_unit > 0.0)) throw ConfigError("time_unit must be positive");
}

nlohmann::json EncoderConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"hidden_dim", hidden_dim},
          {"num_layers", num_layers},
          {"num_heads", num_heads},
          {"neighbor_budget", neighbor_budget},
          {"layer0_edge_mean", layer0_edge_mean},
          {"learnable_time", learnable_time},
          {"time_scheme", to_string(time_scheme)},
          {"time_unit", time_unit},
          {"seed", seed}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json& j) {
  EncoderConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.neighbor_budget = j.at("neighbor_budget").get<std::size_t>();
  c.layer0_edge_mean = j.at("layer0_edge_mean").get<bool>();
  c.learnable_time = j.at("learnable_time").get<bool>();
  c.time_scheme = frequency_scheme_from_string(j.at("time_scheme").get<std::string>());
  c.time_unit = j.at("time_unit").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.validate();
  return c;
}

std::uint64_t EncoderConfig::hash() const { return fnv1a(to_json().dump()); }

namespace {

Mat xavier(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  Mat m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  }
  return m;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& config, Init init) {
  config.validate();
  EncoderParams p;
  p.config_ = config;
  const auto d = static_cast<Eigen::Index>(config.hidden_dim);
  const TimeEncoderParams te = init_frequencies(config.hidden_dim, config.time_scheme, config.seed);
  p.tensors_.add("time.omega", te.frequencies, config.learnable_time);

  Rng rng = make_rng(config.seed, "encoder-init");
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const auto in = static_cast<Eigen::Index>(p.layer_input_dim(l));
    const std::string prefix = "layer" + std::to_string(l) + ".";
    Mat fuse_w;
    Mat wq;
    Mat wk;
    Mat wv;
    Mat wo;
    if (init == Init::identity) {
      if (in != d) throw ConfigError("identity init requires input_dim == hidden_dim");
      fuse_w = Mat::Zero(d, in + d);
      fuse_w.leftCols(in) = Mat::Identity(d, in);
      wq = wk = wv = wo = Mat::Identity(d, d);
    } else {
      fuse_w = xavier(d, in + d, rng);
      wq = xavier(d, d, rng);
      wk = xavier(d, d, rng);
      wv = xavier(d, d, rng);
      wo = xavier(d, d, rng);
    }
    p.tensors_.add(prefix + "fuse_w", std::move(fuse_w));
    p.tensors_.add(prefix + "fuse_b", Mat::Zero(d, 1));
    p.tensors_.add(prefix + "wq", std::move(wq));
    p.tensors_.add(prefix + "wk", std::move(wk));
    p.tensors_.add(prefix + "wv", std::move(wv));
    p.tensors_.add(prefix + "wo", std::move(wo));
    p.tensors_.add(prefix + "bo", Mat::Zero(d, 1));
  }
  return p;
}

EncoderParams::LayerIndex EncoderParams::layer(std::size_t l) const {
  if (l >= config_.num_layers) throw LookupError("layer index out of range");
  const std::size_t base = 1 + 7 * l;
  return {base, base + 1, base + 2, base + 3, base + 4, base + 5, base + 6};
}

TimeEncoderParams EncoderParams::time_encoder() const {
  TimeEncoderParams te;
  te.frequencies = tensors_.value(omega()).col(0);
  te.learnable = config_.learnable_time;
  return te;
}

NodeEmbedding embed(const EncoderParams& params, const TemporalGraph& g, const NeighborIndex& idx, NodeId v,
                    double t) {
  PlainOps ops;
  EncoderPass<PlainOps> pass(ops, params, g, idx);
  return {pass.embed(v, t).col(0), v, t};
}

}  // namespace evp
