#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace evp {

using NodeId = std::uint32_t;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// One timestamped directed interaction. Edge features live in the owning
/// graph, column `event_id` of TemporalGraph::edge_features().
struct Event {
  std::size_t event_id = 0;
  NodeId src = 0;
  NodeId dst = 0;
  double time = 0.0;
  std::optional<int> state_label;
};

/// Raw row as read from (or written to) a JODIE file, before sorting.
struct RawEvent {
  NodeId src = 0;
  NodeId dst = 0;
  double time = 0.0;
  std::optional<int> state_label;
  std::vector<double> features;
};

/// Immutable, time-ordered event log plus per-node static features.
///
/// Node ids are contiguous: users occupy [0, num_users) and items follow.
/// Events are stably sorted by time, so rows sharing a timestamp keep their
/// ingest order, and event_id equals the position in the sorted log.
class TemporalGraph {
 public:
  TemporalGraph() = default;

  /// Validates and sorts. Throws IngestError on self-loops, negative times,
  /// out-of-range ids or inconsistent feature widths.
  TemporalGraph(std::vector<RawEvent> rows, std::size_t num_users,
                std::size_t num_nodes, std::size_t feature_dim);

  std::span<const Event> events() const { return events_; }
  const Event& event(std::size_t i) const { return events_.at(i); }
  std::size_t num_events() const { return events_.size(); }
  std::size_t num_nodes() const { return num_nodes_; }
  std::size_t num_users() const { return num_users_; }
  std::size_t feature_dim() const { return feature_dim_; }

  /// d_e x |E|; column i holds the features of event i.
  const Mat& edge_features() const { return edge_features_; }
  auto edge_feature(std::size_t i) const { return edge_features_.col(static_cast<Eigen::Index>(i)); }

  /// d x |V| static node features (all zero unless set).
  const Mat& node_features() const { return node_features_; }
  void set_node_features(Mat features);

  double t_min() const { return events_.empty() ? 0.0 : events_.front().time; }
  double t_max() const { return events_.empty() ? 0.0 : events_.back().time; }

  /// Sorted distinct state labels.
  std::vector<int> label_classes() const;

  /// First `n` events as a new graph (same id space and features).
  TemporalGraph prefix(std::size_t n) const;

 private:
  std::vector<Event> events_;
  Mat edge_features_;
  Mat node_features_;
  std::size_t num_nodes_ = 0;
  std::size_t num_users_ = 0;
  std::size_t feature_dim_ = 0;
};

/// Half-open range of event indices.
struct EventRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool empty() const { return begin == end; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

struct ChronoSplits {
  EventRange pretrain;
  EventRange tune_pool;
  EventRange val_pool;
  EventRange test;
  std::vector<NodeId> inductive_unseen;  // sorted

  bool is_unseen(NodeId v) const;
};

struct SplitFractions {
  double pretrain = 0.80;
  double tune = 0.01;
  double val = 0.01;
};

ChronoSplits chronological_split(const TemporalGraph& g,
                                 const SplitFractions& fractions = {});

struct NeighborEntry {
  NodeId neighbor = 0;
  double time = 0.0;
  std::size_t event_id = 0;
};

/// Per-node time-sorted interaction lists covering both edge directions.
class NeighborIndex {
 public:
  NeighborIndex() = default;
  explicit NeighborIndex(const TemporalGraph& g);

  std::span<const NeighborEntry> history(NodeId v) const;

  /// Up to n entries with time strictly before t, most recent first.
  std::vector<NeighborEntry> recent(NodeId v, double t, std::size_t n) const;

  std::size_t num_nodes() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<NeighborEntry> entries_;
};

inline std::vector<NeighborEntry> recent_neighbors(const NeighborIndex& idx,
                                                   NodeId v, double t,
                                                   std::size_t n) {
  return idx.recent(v, t, n);
}

/// Mean gap between consecutive interactions of the same node, over events
/// in `range`. Falls back to 1 when no positive gap exists.
double mean_node_gap(const TemporalGraph& g, EventRange range);

TemporalGraph load_jodie_csv(const std::filesystem::path& path);
TemporalGraph read_jodie_csv(std::istream& in, const std::string& source = "<stream>");

/// Writes rows in per-column id namespaces (items shifted back by num_users).
void write_jodie_csv(const TemporalGraph& g, std::ostream& out);
void write_jodie_csv(const TemporalGraph& g, const std::filesystem::path& path);

}  // namespace evp
