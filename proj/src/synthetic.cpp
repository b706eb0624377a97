#include "evp/synthetic.hpp"

#include "evp/errors.hpp"
#include "evp/rng.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <random>

namespace evp {

void SynthConfig::validate() const {
  if (n_users < 2 || n_items < 2) throw ConfigError("synthetic graph needs at least 2 users and 2 items");
  if (!(period > 0.0)) throw ConfigError("period must be positive");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(noise_rate >= 0.0 && noise_rate < 1.0)) throw ConfigError("noise_rate must lie in [0, 1)");
  if (num_classes == 0) throw ConfigError("num_classes must be positive");
  if (!(feature_noise >= 0.0)) throw ConfigError("feature_noise must be non-negative");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_value(const std::string& key, const std::string& value, const std::string& where) {
  T out{};
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(where + ": bad value '" + value + "' for " + key);
  }
  return out;
}

}  // namespace

SynthConfig parse_synth_config(std::istream& in, const std::string& source) {
  SynthConfig c;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "n_users") {
      c.n_users = parse_value<std::size_t>(key, value, where);
    } else if (key == "n_items") {
      c.n_items = parse_value<std::size_t>(key, value, where);
    } else if (key == "horizon") {
      c.horizon = parse_value<double>(key, value, where);
    } else if (key == "period") {
      c.period = parse_value<double>(key, value, where);
    } else if (key == "signature_rule") {
      if (value == "modulo") {
        c.signature_rule = SignatureRule::modulo;
      } else if (value == "random") {
        c.signature_rule = SignatureRule::random;
      } else {
        throw ConfigError(where + ": signature_rule must be modulo or random");
      }
    } else if (key == "noise_rate") {
      c.noise_rate = parse_value<double>(key, value, where);
    } else if (key == "seed") {
      c.seed = parse_value<std::uint64_t>(key, value, where);
    } else if (key == "edge_dim") {
      c.edge_dim = parse_value<std::size_t>(key, value, where);
    } else if (key == "num_classes") {
      c.num_classes = parse_value<std::size_t>(key, value, where);
    } else if (key == "feature_noise") {
      c.feature_noise = parse_value<double>(key, value, where);
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  }
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synthetic config " + path.string());
  return parse_synth_config(in, path.string());
}

NodeId SyntheticGraph::oracle(NodeId v, double) const {
  if (v >= signature.size()) throw LookupError("node " + std::to_string(v) + " is not a user");
  return signature[v];
}

SyntheticGraph generate(const SynthConfig& cfg) {
  cfg.validate();
  SyntheticGraph out;
  out.config = cfg;
  const auto users = cfg.n_users;
  const auto items = cfg.n_items;

  Rng sig_rng = make_rng(cfg.seed, "synth-signature");
  Rng phase_rng = make_rng(cfg.seed, "synth-phase");
  Rng code_rng = make_rng(cfg.seed, "synth-codes");
  Rng noise_rng = make_rng(cfg.seed, "synth-noise");
  Rng feat_rng = make_rng(cfg.seed, "synth-feature-noise");

  std::uniform_int_distribution<std::size_t> pick_item(0, items - 1);
  std::uniform_int_distribution<std::size_t> pick_user(0, users - 1);
  std::uniform_real_distribution<double> phase(0.0, cfg.period);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::size_t> sig_item(users);
  for (std::size_t v = 0; v < users; ++v) {
    sig_item[v] = cfg.signature_rule == SignatureRule::modulo ? v % items : pick_item(sig_rng);
    out.signature.push_back(static_cast<NodeId>(users + sig_item[v]));
    out.phase.push_back(phase(phase_rng));
  }

  Mat codes(static_cast<Eigen::Index>(cfg.edge_dim), static_cast<Eigen::Index>(items));
  for (Eigen::Index i = 0; i < codes.size(); ++i) codes.data()[i] = gauss(code_rng);

  std::vector<RawEvent> rows;
  const auto add = [&](std::size_t v, std::size_t item, double t) {
    RawEvent r;
    r.src = static_cast<NodeId>(v);
    r.dst = static_cast<NodeId>(users + item);
    r.time = t;
    r.state_label = static_cast<int>(sig_item[v] % cfg.num_classes);
    r.features.resize(cfg.edge_dim);
    for (std::size_t k = 0; k < cfg.edge_dim; ++k) {
      r.features[k] = codes(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(item));
      if (cfg.feature_noise > 0.0) r.features[k] += cfg.feature_noise * gauss(feat_rng);
    }
    rows.push_back(std::move(r));
  };

  for (std::size_t v = 0; v < users; ++v) {
    const auto periods = static_cast<std::size_t>(std::floor((cfg.horizon - out.phase[v]) / cfg.period));
    for (std::size_t j = 1; j <= periods; ++j) add(v, sig_item[v], out.phase[v] + static_cast<double>(j) * cfg.period);
  }
  out.num_signal = rows.size();

  const double ratio = cfg.noise_rate / (1.0 - cfg.noise_rate);
  out.num_noise = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(out.num_signal)));
  std::uniform_real_distribution<double> when(0.0, cfg.horizon);
  for (std::size_t n = 0; n < out.num_noise; ++n) {
    const std::size_t v = pick_user(noise_rng);
    const std::size_t item = pick_item(noise_rng);
    add(v, item, when(noise_rng));
  }

  out.graph = TemporalGraph(std::move(rows), users, users + items, cfg.edge_dim);
  return out;
}

}  // namespace evp
