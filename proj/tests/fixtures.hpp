#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <tuple>
#include <vector>

#include "evp/autograd.hpp"
#include "evp/encoder.hpp"
#include "evp/params.hpp"
#include "evp/temporal_graph.hpp"

namespace evp::test {

/// (src, dst, time) rows; edge features are deterministic functions of the row.
inline TemporalGraph make_graph(const std::vector<std::tuple<NodeId, NodeId, double>>& rows, std::size_t num_users,
                                std::size_t num_nodes, std::size_t dim = 3) {
  std::vector<RawEvent> raw;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    RawEvent r;
    std::tie(r.src, r.dst, r.time) = rows[i];
    r.state_label = static_cast<int>(i % 2);
    for (std::size_t k = 0; k < dim; ++k) r.features.push_back(std::sin(1.0 + 0.7 * static_cast<double>(i) + 1.3 * static_cast<double>(k)));
    raw.push_back(std::move(r));
  }
  return TemporalGraph(std::move(raw), num_users, num_nodes, dim);
}

/// Users 0, 1 and items 2, 3 with eight interactions.
inline TemporalGraph four_node_graph() {
  return make_graph({{0, 2, 1.0}, {1, 2, 1.5}, {0, 3, 2.0}, {1, 3, 2.5}, {0, 2, 3.0}, {1, 2, 3.5}, {0, 3, 4.0}, {1, 2, 4.5}},
                    2, 4);
}

/// Uniformly random bipartite events with distinct, sorted-ish random times.
inline TemporalGraph random_graph(std::size_t n_events, std::size_t n_users, std::size_t n_items, std::uint64_t seed,
                                  std::size_t dim = 4, bool integer_times = false) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> user(0, n_users - 1);
  std::uniform_int_distribution<std::size_t> item(0, n_items - 1);
  std::uniform_real_distribution<double> when(0.0, 100.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<RawEvent> raw;
  for (std::size_t i = 0; i < n_events; ++i) {
    RawEvent r;
    r.src = static_cast<NodeId>(user(rng));
    r.dst = static_cast<NodeId>(n_users + item(rng));
    r.time = integer_times ? std::floor(when(rng)) : when(rng);
    r.state_label = static_cast<int>(rng() % 3);
    for (std::size_t k = 0; k < dim; ++k) r.features.push_back(gauss(rng));
    raw.push_back(std::move(r));
  }
  return TemporalGraph(std::move(raw), n_users, n_users + n_items, dim);
}

/// Max relative error between analytic gradients and central differences
/// for every trainable scalar of `ps`. `loss` evaluates the objective on
/// the given ops backend.
inline double gradient_error(ParamSet& ps, const std::function<ad::Var(TapeOps&)>& tape_loss,
                             const std::function<double()>& plain_loss, double h = 1e-6) {
  ad::Tape tape;
  TapeOps ops(tape);
  const ad::Var out = tape_loss(ops);
  tape.backward(out);
  const std::vector<Mat> grads = ops.gradients(ps);
  double worst = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (!ps.trainable(i)) continue;
    Mat& value = ps.value(i);
    for (Eigen::Index j = 0; j < value.size(); ++j) {
      const double saved = value.data()[j];
      value.data()[j] = saved + h;
      const double up = plain_loss();
      value.data()[j] = saved - h;
      const double down = plain_loss();
      value.data()[j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = grads[i].data()[j];
      const double err = std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace evp::test
