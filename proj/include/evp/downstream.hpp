#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "evp/encoder.hpp"
#include "evp/evp.hpp"
#include "evp/losses.hpp"
#include "evp/pretraining.hpp"
#include "evp/temporal_graph.hpp"

namespace evp {

enum class TaskKind { link_transductive, link_inductive, node_class };

std::string to_string(TaskKind k);
TaskKind task_kind_from_string(const std::string& s);
bool is_link(TaskKind k);

/// Default number of extracted events per task kind.
std::size_t default_k(TaskKind k);

/// Positive event (v, a, t) with a sampled negative destination b.
struct LinkInstance {
  NodeId v = 0;
  NodeId a = 0;
  NodeId b = 0;
  double t = 0.0;
};

/// Labelled node at an event time; `y` indexes the task's class list.
struct NodeInstance {
  NodeId v = 0;
  std::size_t y = 0;
  double t = 0.0;
};

struct Task {
  TaskKind kind = TaskKind::link_transductive;
  std::size_t task_id = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> support_events;
  std::vector<LinkInstance> link_support;
  std::vector<NodeInstance> node_support;
  std::vector<std::string> warnings;
};

struct TestSet {
  std::vector<LinkInstance> link;
  std::vector<NodeInstance> node;
};

/// Shared inputs for task construction.
struct TaskContext {
  const TemporalGraph& graph;
  const ChronoSplits& splits;
  const ContactIndex& contacts;
  /// Sorted class labels; node_class instances index into it.
  std::vector<int> classes;
};

/// Support event choice depends on (root_seed, task i); negatives depend on
/// (root_seed, seed, task i). Node tasks hold at least one example per class.
/// Throws TaskError if the tuning pool lacks a class entirely.
std::vector<Task> sample_tasks(const TaskContext& ctx, TaskKind kind, std::size_t n_tasks, std::uint64_t root_seed,
                               std::uint64_t seed, std::size_t support_size = 30);

/// Test instances from the test range. Inductive link tests keep only events
/// whose source node was unseen before the test range. Link negatives come
/// from the test-range destinations and depend on (root_seed, seed).
/// `max_test` > 0 keeps an evenly spaced subset of that size.
TestSet build_test_set(const TaskContext& ctx, TaskKind kind, std::uint64_t root_seed, std::uint64_t seed,
                       std::size_t max_test = 0);

/// Rank-based AUC: (concordant pairs + 0.5 tied pairs) / (P N).
/// Throws MetricError unless both classes are present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

/// Macro one-vs-rest AUC over columns of `probs` (n x C). Classes lacking
/// positives or negatives are skipped; with C = 2 it equals the binary AUC
/// of column 1.
double macro_auc(const Mat& probs, std::span<const std::size_t> labels);

/// prototype[c] = mean of the embeddings whose label is c. `embeddings` is
/// d x n. Throws PrototypeError for a class without examples.
Mat class_prototypes(const Mat& embeddings, std::span<const std::size_t> labels, std::size_t num_classes);

struct TuningConfig {
  double tau = 0.2;
  double lr = 0.01;
  std::size_t epochs = 100;
  std::size_t k = 9;
  LinkLossForm loss_form = LinkLossForm::ratio;
  AdaptationMode mode = AdaptationMode::elementwise;
  /// Also tune the elementwise output scale on h^.
  bool train_head = false;

  void validate() const;
};

/// Plug-in inputs keyed by (node, time), computed once with the frozen encoder.
class QueryCache {
 public:
  QueryCache(FrozenEncoder& encoder, const NeighborIndex& idx, std::size_t k) : encoder_(encoder), idx_(idx), k_(k) {}

  /// Computes and stores the query if absent. Not thread-safe.
  const EvpQuery& prepare(NodeId v, double t);
  /// Lookup of an already prepared query; safe for concurrent readers.
  const EvpQuery& at(NodeId v, double t) const;

  std::size_t k() const { return k_; }
  std::size_t size() const { return cache_.size(); }

 private:
  using Key = std::pair<NodeId, std::uint64_t>;
  FrozenEncoder& encoder_;
  const NeighborIndex& idx_;
  std::size_t k_;
  std::map<Key, EvpQuery> cache_;
};

struct TuneResult {
  EvpParams params;
  /// Support loss before each step, followed by the loss after the last one.
  std::vector<double> loss;
};

/// Support loss of `p` on a task.
double support_loss(const Task& task, const QueryCache& queries, const EvpParams& p, const TuningConfig& cfg,
                    std::size_t num_classes);

/// Adam over the trainable prompt tensors only; `init` is not modified and
/// the encoder is only read through the cached queries.
TuneResult prompt_tune(const Task& task, const QueryCache& queries, const EvpParams& init, const TuningConfig& cfg,
                       std::size_t num_classes);

/// AUC of `p` on a test set (link: cosine to candidate; node: softmax over
/// cosine to support prototypes).
double evaluate_task(const Task& task, const TestSet& test, const QueryCache& queries, const EvpParams& p,
                     const TuningConfig& cfg, std::size_t num_classes);

/// Named variants: full, EP, DP, TD, off (plug-in with every stage off) and
/// none (no plug-in, no tuning).
std::optional<EvpFlags> variant_flags(const std::string& variant);
const std::vector<std::string>& ablation_variants();

struct ProtocolConfig {
  TaskKind kind = TaskKind::link_transductive;
  std::string variant = "full";
  std::string dataset;
  TuningConfig tuning;
  std::size_t n_tasks = 100;
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::uint64_t root_seed = 0;
  std::size_t support_size = 30;
  std::size_t max_test = 0;
  std::size_t workers = 1;
};

struct RunRecord {
  std::size_t task = 0;
  std::uint64_t seed = 0;
  double auc = 0.0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::size_t support = 0;
  std::size_t test = 0;
};

struct Report {
  std::string setting;
  std::string dataset;
  std::string variant;
  std::size_t k = 0;
  std::string loss_form;
  std::vector<RunRecord> per_task;
  double mean = 0.0;
  double std = 0.0;
  double wallclock = 0.0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
  /// One row per run: task,seed,auc,initial_loss,final_loss,support,test.
  std::string to_csv() const;
};

/// Population mean and standard deviation.
std::pair<double, double> mean_std(std::span<const double> xs);

/// Tunes and scores every (task, seed) pair. Runs are independent and may
/// execute on `cfg.workers` threads; results do not depend on the count.
Report run_protocol(const TemporalGraph& g, const ChronoSplits& splits, const EncoderParams& encoder,
                    const ProtocolConfig& cfg);

}  // namespace evp
