#include "evp/temporal_graph.hpp"

#include "evp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <string_view>

namespace evp {

TemporalGraph::TemporalGraph(std::vector<RawEvent> rows, std::size_t num_users,
                             std::size_t num_nodes, std::size_t feature_dim)
    : num_nodes_(num_nodes), num_users_(num_users), feature_dim_(feature_dim) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const RawEvent& r = rows[i];
    if (!(r.time >= 0.0) || !std::isfinite(r.time)) {
      throw IngestError("event " + std::to_string(i) + ": timestamp must be finite and non-negative");
    }
    if (r.src == r.dst) {
      throw IngestError("event " + std::to_string(i) + ": self-loop on node " + std::to_string(r.src));
    }
    if (r.src >= num_nodes || r.dst >= num_nodes) {
      throw IngestError("event " + std::to_string(i) + ": node id out of range");
    }
    if (r.features.size() != feature_dim) {
      throw IngestError("event " + std::to_string(i) + ": expected " + std::to_string(feature_dim) +
                        " edge features, got " + std::to_string(r.features.size()));
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return rows[a].time < rows[b].time; });

  events_.reserve(rows.size());
  edge_features_.resize(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const RawEvent& r = rows[order[pos]];
    events_.push_back(Event{pos, r.src, r.dst, r.time, r.state_label});
    for (std::size_t k = 0; k < feature_dim; ++k) {
      edge_features_(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(pos)) = r.features[k];
    }
  }
  node_features_ = Mat::Zero(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(num_nodes));
}

void TemporalGraph::set_node_features(Mat features) {
  if (features.rows() != static_cast<Eigen::Index>(feature_dim_) ||
      features.cols() != static_cast<Eigen::Index>(num_nodes_)) {
    throw ShapeError("node features must be feature_dim x num_nodes");
  }
  node_features_ = std::move(features);
}

std::vector<int> TemporalGraph::label_classes() const {
  std::set<int> labels;
  for (const Event& e : events_) {
    if (e.state_label) labels.insert(*e.state_label);
  }
  return {labels.begin(), labels.end()};
}

TemporalGraph TemporalGraph::prefix(std::size_t n) const {
  n = std::min(n, events_.size());
  TemporalGraph out;
  out.events_.assign(events_.begin(), events_.begin() + static_cast<std::ptrdiff_t>(n));
  out.edge_features_ = edge_features_.leftCols(static_cast<Eigen::Index>(n));
  out.node_features_ = node_features_;
  out.num_nodes_ = num_nodes_;
  out.num_users_ = num_users_;
  out.feature_dim_ = feature_dim_;
  return out;
}

bool ChronoSplits::is_unseen(NodeId v) const {
  return std::binary_search(inductive_unseen.begin(), inductive_unseen.end(), v);
}

ChronoSplits chronological_split(const TemporalGraph& g, const SplitFractions& f) {
  if (f.pretrain < 0 || f.tune < 0 || f.val < 0 || f.pretrain + f.tune + f.val >= 1.0) {
    throw ConfigError("split fractions must be non-negative and sum to less than 1");
  }
  const std::size_t n = g.num_events();
  if (n < 4) throw SplitError("graph has " + std::to_string(n) + " events; at least 4 are required");

  const auto count = [n](double frac) { return static_cast<std::size_t>(std::llround(frac * static_cast<double>(n))); };
  const std::size_t n_pre = count(f.pretrain);
  const std::size_t n_tune = count(f.tune);
  const std::size_t n_val = count(f.val);
  if (n_pre == 0 || n_tune == 0 || n_val == 0 || n_pre + n_tune + n_val >= n) {
    throw SplitError("graph with " + std::to_string(n) + " events is too small for non-empty splits");
  }

  ChronoSplits s;
  s.pretrain = {0, n_pre};
  s.tune_pool = {n_pre, n_pre + n_tune};
  s.val_pool = {n_pre + n_tune, n_pre + n_tune + n_val};
  s.test = {n_pre + n_tune + n_val, n};

  std::vector<bool> seen(g.num_nodes(), false);
  for (std::size_t i = 0; i < s.test.begin; ++i) {
    seen[g.event(i).src] = true;
    seen[g.event(i).dst] = true;
  }
  std::set<NodeId> unseen;
  for (std::size_t i = s.test.begin; i < n; ++i) {
    const Event& e = g.event(i);
    if (!seen[e.src]) unseen.insert(e.src);
    if (!seen[e.dst]) unseen.insert(e.dst);
  }
  s.inductive_unseen.assign(unseen.begin(), unseen.end());
  return s;
}

NeighborIndex::NeighborIndex(const TemporalGraph& g) {
  const std::size_t nv = g.num_nodes();
  std::vector<std::size_t> degree(nv, 0);
  for (const Event& e : g.events()) {
    ++degree[e.src];
    ++degree[e.dst];
  }
  offsets_.assign(nv + 1, 0);
  for (std::size_t v = 0; v < nv; ++v) offsets_[v + 1] = offsets_[v] + degree[v];
  entries_.resize(offsets_.back());
  std::vector<std::size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  // Events are already time-sorted, so appending keeps each list sorted.
  for (const Event& e : g.events()) {
    entries_[cursor[e.src]++] = {e.dst, e.time, e.event_id};
    entries_[cursor[e.dst]++] = {e.src, e.time, e.event_id};
  }
}

std::span<const NeighborEntry> NeighborIndex::history(NodeId v) const {
  if (static_cast<std::size_t>(v) + 1 >= offsets_.size()) {
    throw LookupError("unknown node id " + std::to_string(v));
  }
  return {entries_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
}

std::vector<NeighborEntry> NeighborIndex::recent(NodeId v, double t, std::size_t n) const {
  const auto hist = history(v);
  const auto it = std::lower_bound(hist.begin(), hist.end(), t,
                                   [](const NeighborEntry& e, double time) { return e.time < time; });
  const auto available = static_cast<std::size_t>(it - hist.begin());
  const std::size_t take = std::min(n, available);
  std::vector<NeighborEntry> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(hist[available - 1 - i]);
  return out;
}

double mean_node_gap(const TemporalGraph& g, EventRange range) {
  std::vector<double> last(g.num_nodes(), -1.0);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    const Event& e = g.event(i);
    for (NodeId v : {e.src, e.dst}) {
      if (last[v] >= 0.0) {
        sum += e.time - last[v];
        ++count;
      }
      last[v] = e.time;
    }
  }
  if (count == 0 || sum <= 0.0) return 1.0;
  return sum / static_cast<double>(count);
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    if (s.front() == '+') s.remove_prefix(1);
  }
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

TemporalGraph read_jodie_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(source + ": missing header line");

  std::vector<RawEvent> rows;
  std::size_t width = 0;
  std::size_t line_no = 1;
  std::int64_t max_user = -1;
  std::int64_t max_item = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    const auto fail = [&](const std::string& what) {
      return IngestError(source + ":" + std::to_string(line_no) + ": " + what);
    };
    if (fields.size() < 4) throw fail("expected at least 4 fields, got " + std::to_string(fields.size()));
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw fail("expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    }
    std::int64_t user = 0;
    std::int64_t item = 0;
    double time = 0.0;
    double label = 0.0;
    if (!parse_number(fields[0], user) || user < 0) throw fail("bad user id");
    if (!parse_number(fields[1], item) || item < 0) throw fail("bad item id");
    if (!parse_number(fields[2], time) || !std::isfinite(time)) throw fail("bad timestamp");
    if (time < 0.0) throw fail("negative timestamp");
    if (!parse_number(fields[3], label) || label != std::floor(label)) throw fail("bad state label");
    RawEvent r;
    r.src = static_cast<NodeId>(user);
    r.dst = static_cast<NodeId>(item);  // shifted once the user count is known
    r.time = time;
    r.state_label = static_cast<int>(label);
    r.features.resize(width - 4);
    for (std::size_t k = 4; k < width; ++k) {
      if (!parse_number(fields[k], r.features[k - 4])) throw fail("bad feature value in column " + std::to_string(k + 1));
    }
    max_user = std::max(max_user, user);
    max_item = std::max(max_item, item);
    rows.push_back(std::move(r));
  }

  const auto num_users = static_cast<std::size_t>(max_user + 1);
  const auto num_items = static_cast<std::size_t>(max_item + 1);
  for (RawEvent& r : rows) r.dst += static_cast<NodeId>(num_users);
  const std::size_t dim = rows.empty() ? 0 : width - 4;
  return TemporalGraph(std::move(rows), num_users, num_users + num_items, dim);
}

TemporalGraph load_jodie_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return read_jodie_csv(in, path.string());
}

namespace {

void append_number(std::string& out, double x) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  out.append(buf, ptr);
}

}  // namespace

void write_jodie_csv(const TemporalGraph& g, std::ostream& out) {
  out << "user_id,item_id,timestamp,state_label";
  for (std::size_t k = 0; k < g.feature_dim(); ++k) out << ",f_" << (k + 1);
  out << '\n';
  std::string row;
  for (const Event& e : g.events()) {
    row.clear();
    row += std::to_string(e.src);
    row += ',';
    row += std::to_string(e.dst - g.num_users());
    row += ',';
    append_number(row, e.time);
    row += ',';
    row += std::to_string(e.state_label.value_or(0));
    const auto feats = g.edge_feature(e.event_id);
    for (Eigen::Index k = 0; k < feats.size(); ++k) {
      row += ',';
      append_number(row, feats(k));
    }
    row += '\n';
    out << row;
  }
}

void write_jodie_csv(const TemporalGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestError("cannot write " + path.string());
  write_jodie_csv(g, out);
}

}  // namespace evp
