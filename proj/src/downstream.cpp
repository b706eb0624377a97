#include "evp/downstream.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

namespace evp {

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::link_transductive:
      return "link_transductive";
    case TaskKind::link_inductive:
      return "link_inductive";
    case TaskKind::node_class:
      return "node_class";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "link_transductive" || s == "link") return TaskKind::link_transductive;
  if (s == "link_inductive") return TaskKind::link_inductive;
  if (s == "node_class" || s == "node") return TaskKind::node_class;
  throw ConfigError("unknown task kind '" + s + "'");
}

bool is_link(TaskKind k) { return k != TaskKind::node_class; }

std::size_t default_k(TaskKind k) { return is_link(k) ? 9 : 3; }

namespace {

std::size_t class_index(const std::vector<int>& classes, int label) {
  const auto it = std::lower_bound(classes.begin(), classes.end(), label);
  if (it == classes.end() || *it != label) throw TaskError("label " + std::to_string(label) + " is not a known class");
  return static_cast<std::size_t>(it - classes.begin());
}

int label_of(const Event& e) { return e.state_label.value_or(0); }

/// k distinct positions in [0, n), sorted, by partial Fisher-Yates.
std::vector<std::size_t> choose(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(all[i], all[pick(rng)]);
  }
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

void ensure_every_class(const TaskContext& ctx, std::vector<std::size_t>& chosen, Rng& rng) {
  const EventRange pool = ctx.splits.tune_pool;
  const std::size_t c = ctx.classes.size();
  std::vector<std::vector<std::size_t>> by_class(c);
  for (std::size_t i = pool.begin; i < pool.end; ++i) by_class[class_index(ctx.classes, label_of(ctx.graph.event(i)))].push_back(i);
  for (std::size_t cls = 0; cls < c; ++cls) {
    if (by_class[cls].empty()) {
      throw TaskError("class " + std::to_string(ctx.classes[cls]) + " has no examples in the tuning pool");
    }
  }
  for (std::size_t cls = 0; cls < c; ++cls) {
    std::vector<std::size_t> count(c, 0);
    for (std::size_t i : chosen) ++count[class_index(ctx.classes, label_of(ctx.graph.event(i)))];
    if (count[cls] > 0) continue;
    // Replace one example of the most frequent class.
    const auto big = static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
    std::vector<std::size_t> slots;
    for (std::size_t s = 0; s < chosen.size(); ++s) {
      if (class_index(ctx.classes, label_of(ctx.graph.event(chosen[s]))) == big) slots.push_back(s);
    }
    if (slots.size() < 2) throw TaskError("support set too small to cover every class");
    std::uniform_int_distribution<std::size_t> pick_slot(0, slots.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_event(0, by_class[cls].size() - 1);
    chosen[slots[pick_slot(rng)]] = by_class[cls][pick_event(rng)];
  }
  std::sort(chosen.begin(), chosen.end());
}

std::uint64_t seed_root(std::uint64_t root_seed, std::uint64_t seed) { return derive_seed(root_seed, "seed", seed); }

}  // namespace

std::vector<Task> sample_tasks(const TaskContext& ctx, TaskKind kind, std::size_t n_tasks, std::uint64_t root_seed,
                               std::uint64_t seed, std::size_t support_size) {
  const EventRange pool = ctx.splits.tune_pool;
  if (pool.empty()) throw TaskError("tuning pool is empty");
  if (support_size == 0) throw ConfigError("support size must be positive");
  if (kind == TaskKind::node_class && ctx.classes.empty()) throw TaskError("graph has no class labels");
  const std::vector<NodeId> neg_pool = destination_pool(ctx.graph, pool);

  std::vector<Task> tasks;
  tasks.reserve(n_tasks);
  for (std::size_t i = 0; i < n_tasks; ++i) {
    Task task;
    task.kind = kind;
    task.task_id = i;
    task.seed = seed;
    Rng event_rng = make_rng(root_seed, "task", i);
    std::vector<std::size_t> chosen;
    if (pool.size() <= support_size) {
      chosen.resize(pool.size());
      std::iota(chosen.begin(), chosen.end(), std::size_t{0});
      if (pool.size() < support_size) {
        task.warnings.push_back("tuning pool has " + std::to_string(pool.size()) + " events; requested " +
                                std::to_string(support_size) + ", using all of them");
      }
    } else {
      chosen = choose(pool.size(), support_size, event_rng);
    }
    for (std::size_t& c : chosen) c += pool.begin;
    if (kind == TaskKind::node_class) ensure_every_class(ctx, chosen, event_rng);
    task.support_events = chosen;

    Rng neg_rng = make_rng(seed_root(root_seed, seed), "support-negatives", i);
    for (std::size_t idx : chosen) {
      const Event& e = ctx.graph.event(idx);
      if (kind == TaskKind::node_class) {
        task.node_support.push_back({e.src, class_index(ctx.classes, label_of(e)), e.time});
      } else {
        const NodeId b = negative_sample(ctx.contacts, neg_pool, e.src, e.time, neg_rng);
        task.link_support.push_back({e.src, e.dst, b, e.time});
      }
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

TestSet build_test_set(const TaskContext& ctx, TaskKind kind, std::uint64_t root_seed, std::uint64_t seed,
                       std::size_t max_test) {
  const EventRange range = ctx.splits.test;
  std::vector<std::size_t> idx;
  for (std::size_t i = range.begin; i < range.end; ++i) {
    if (kind == TaskKind::link_inductive && !ctx.splits.is_unseen(ctx.graph.event(i).src)) continue;
    idx.push_back(i);
  }
  if (idx.empty()) throw TaskError("no test instances for " + to_string(kind));
  if (max_test > 0 && idx.size() > max_test) {
    std::vector<std::size_t> kept(max_test);
    for (std::size_t j = 0; j < max_test; ++j) kept[j] = idx[j * idx.size() / max_test];
    idx = std::move(kept);
  }

  TestSet out;
  if (kind == TaskKind::node_class) {
    for (std::size_t i : idx) {
      const Event& e = ctx.graph.event(i);
      out.node.push_back({e.src, class_index(ctx.classes, label_of(e)), e.time});
    }
    return out;
  }
  const std::vector<NodeId> neg_pool = destination_pool(ctx.graph, range);
  Rng rng = make_rng(seed_root(root_seed, seed), "test-negatives");
  for (std::size_t i : idx) {
    const Event& e = ctx.graph.event(i);
    out.link.push_back({e.src, e.dst, negative_sample(ctx.contacts, neg_pool, e.src, e.time, rng), e.time});
  }
  return out;
}

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw MetricError("auc_roc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    // Ranks i+1 .. j share their average.
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t m = i; m < j; ++m) {
      if (labels[order[m]] != 0) {
        pos_rank_sum += avg_rank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw MetricError("auc_roc needs at least one positive and one negative");
  const double p = static_cast<double>(pos);
  return (pos_rank_sum - 0.5 * p * (p + 1.0)) / (p * static_cast<double>(neg));
}

double macro_auc(const Mat& probs, std::span<const std::size_t> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) throw MetricError("macro_auc: row count mismatch");
  const auto c = static_cast<std::size_t>(probs.cols());
  std::vector<double> scores(labels.size());
  std::vector<int> bin(labels.size());
  const auto column_auc = [&](std::size_t cls) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      scores[i] = probs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cls));
      bin[i] = labels[i] == cls ? 1 : 0;
    }
    return auc_roc(scores, bin);
  };
  if (c == 2) return column_auc(1);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t cls = 0; cls < c; ++cls) {
    const auto npos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), cls));
    if (npos == 0 || npos == labels.size()) continue;
    total += column_auc(cls);
    ++used;
  }
  if (used == 0) throw MetricError("macro_auc: no class has both positives and negatives");
  return total / static_cast<double>(used);
}

Mat class_prototypes(const Mat& embeddings, std::span<const std::size_t> labels, std::size_t num_classes) {
  if (static_cast<std::size_t>(embeddings.cols()) != labels.size()) throw ShapeError("one label per embedding required");
  Mat sums = Mat::Zero(embeddings.rows(), static_cast<Eigen::Index>(num_classes));
  std::vector<std::size_t> count(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes) throw PrototypeError("label index " + std::to_string(labels[i]) + " out of range");
    sums.col(static_cast<Eigen::Index>(labels[i])) += embeddings.col(static_cast<Eigen::Index>(i));
    ++count[labels[i]];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (count[c] == 0) throw PrototypeError("class index " + std::to_string(c) + " has no support examples");
    sums.col(static_cast<Eigen::Index>(c)) /= static_cast<double>(count[c]);
  }
  return sums;
}

void TuningConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (k == 0) throw ConfigError("K must be at least 1");
}

const EvpQuery& QueryCache::prepare(NodeId v, double t) {
  const Key key{v, std::bit_cast<std::uint64_t>(t)};
  if (const auto it = cache_.find(key); it != cache_.end()) return it->second;
  return cache_.emplace(key, make_query(encoder_, idx_, v, t, k_)).first->second;
}

const EvpQuery& QueryCache::at(NodeId v, double t) const {
  const auto it = cache_.find(Key{v, std::bit_cast<std::uint64_t>(t)});
  if (it == cache_.end()) throw LookupError("query for node " + std::to_string(v) + " was not prepared");
  return it->second;
}

namespace {

template <class Ops>
typename Ops::T task_loss(Ops& ops, const Task& task, const QueryCache& q, const EvpParams& p,
                          const TuningConfig& cfg, std::size_t num_classes) {
  using T = typename Ops::T;
  T total;
  bool first = true;
  const auto add = [&](const T& l) {
    total = first ? l : ops.add(total, l);
    first = false;
  };
  if (is_link(task.kind)) {
    for (const LinkInstance& s : task.link_support) {
      const T hv = evp_forward(ops, p, q.at(s.v, s.t));
      const T ha = evp_forward(ops, p, q.at(s.a, s.t));
      const T hb = evp_forward(ops, p, q.at(s.b, s.t));
      add(link_loss(ops, hv, ha, hb, cfg.tau, cfg.loss_form));
    }
  } else {
    std::vector<T> hs;
    hs.reserve(task.node_support.size());
    std::vector<std::vector<std::size_t>> members(num_classes);
    for (std::size_t i = 0; i < task.node_support.size(); ++i) {
      const NodeInstance& s = task.node_support[i];
      if (s.y >= num_classes) throw PrototypeError("support label out of range");
      hs.push_back(evp_forward(ops, p, q.at(s.v, s.t)));
      members[s.y].push_back(i);
    }
    std::vector<T> protos;
    protos.reserve(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (members[c].empty()) throw PrototypeError("class index " + std::to_string(c) + " has no support examples");
      T sum = hs[members[c][0]];
      for (std::size_t m = 1; m < members[c].size(); ++m) sum = ops.add(sum, hs[members[c][m]]);
      protos.push_back(ops.scale(sum, 1.0 / static_cast<double>(members[c].size())));
    }
    for (std::size_t i = 0; i < hs.size(); ++i) {
      add(node_class_loss(ops, hs[i], task.node_support[i].y, std::span<const T>(protos), cfg.tau));
    }
  }
  if (first) throw TaskError("task has no support instances");
  return total;
}

}  // namespace

double support_loss(const Task& task, const QueryCache& queries, const EvpParams& p, const TuningConfig& cfg,
                    std::size_t num_classes) {
  PlainOps ops;
  return task_loss(ops, task, queries, p, cfg, num_classes)(0, 0);
}

TuneResult prompt_tune(const Task& task, const QueryCache& queries, const EvpParams& init, const TuningConfig& cfg,
                       std::size_t num_classes) {
  cfg.validate();
  TuneResult result{init, {}};
  ParamSet& ps = result.params.tensors();
  Adam adam(cfg.lr);
  for (std::size_t step = 0; step < cfg.epochs; ++step) {
    ad::Tape tape;
    TapeOps ops(tape);
    const ad::Var loss = task_loss(ops, task, queries, result.params, cfg, num_classes);
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw TrainingError("prompt tuning diverged on task " + std::to_string(task.task_id) + " at step " +
                          std::to_string(step));
    }
    result.loss.push_back(value);
    tape.backward(loss);
    adam.step(ps, ops.gradients(ps));
    result.params.clamp_decay();
  }
  result.loss.push_back(support_loss(task, queries, result.params, cfg, num_classes));
  return result;
}

double evaluate_task(const Task& task, const TestSet& test, const QueryCache& queries, const EvpParams& p,
                     const TuningConfig& cfg, std::size_t num_classes) {
  PlainOps ops;
  if (is_link(task.kind)) {
    std::vector<double> scores;
    std::vector<int> labels;
    scores.reserve(2 * test.link.size());
    labels.reserve(2 * test.link.size());
    for (const LinkInstance& s : test.link) {
      const Mat hv = evp_forward(ops, p, queries.at(s.v, s.t));
      const Mat ha = evp_forward(ops, p, queries.at(s.a, s.t));
      const Mat hb = evp_forward(ops, p, queries.at(s.b, s.t));
      scores.push_back(ops.cosine(hv, ha, kCosineEps)(0, 0));
      labels.push_back(1);
      scores.push_back(ops.cosine(hv, hb, kCosineEps)(0, 0));
      labels.push_back(0);
    }
    return auc_roc(scores, labels);
  }

  Mat support(static_cast<Eigen::Index>(p.config().dim), static_cast<Eigen::Index>(task.node_support.size()));
  std::vector<std::size_t> support_labels;
  for (std::size_t i = 0; i < task.node_support.size(); ++i) {
    const NodeInstance& s = task.node_support[i];
    support.col(static_cast<Eigen::Index>(i)) = evp_forward(ops, p, queries.at(s.v, s.t));
    support_labels.push_back(s.y);
  }
  const Mat protos = class_prototypes(support, support_labels, num_classes);
  Mat probs(static_cast<Eigen::Index>(test.node.size()), static_cast<Eigen::Index>(num_classes));
  std::vector<std::size_t> labels;
  labels.reserve(test.node.size());
  for (std::size_t i = 0; i < test.node.size(); ++i) {
    const NodeInstance& s = test.node[i];
    const Mat h = evp_forward(ops, p, queries.at(s.v, s.t));
    Mat logits(static_cast<Eigen::Index>(num_classes), 1);
    for (std::size_t c = 0; c < num_classes; ++c) {
      logits(static_cast<Eigen::Index>(c), 0) = ops.cosine(h, protos.col(static_cast<Eigen::Index>(c)), kCosineEps)(0, 0) / cfg.tau;
    }
    probs.row(static_cast<Eigen::Index>(i)) = ops.softmax(logits).col(0).transpose();
    labels.push_back(s.y);
  }
  return macro_auc(probs, labels);
}

std::optional<EvpFlags> variant_flags(const std::string& variant) {
  if (variant == "full") return EvpFlags{true, true, true};
  if (variant == "EP") return EvpFlags{true, false, false};
  if (variant == "DP") return EvpFlags{false, true, false};
  if (variant == "TD") return EvpFlags{false, false, true};
  if (variant == "off") return EvpFlags{false, false, false};
  if (variant == "none") return std::nullopt;
  throw ConfigError("unknown variant '" + variant + "' (expected full, EP, DP, TD, off or none)");
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"full", "EP", "DP", "TD", "none"};
  return v;
}

std::pair<double, double> mean_std(std::span<const double> xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

nlohmann::json Report::to_json() const {
  nlohmann::json runs = nlohmann::json::array();
  for (const RunRecord& r : per_task) {
    runs.push_back({{"task", r.task},
                    {"seed", r.seed},
                    {"auc", r.auc},
                    {"initial_loss", r.initial_loss},
                    {"final_loss", r.final_loss},
                    {"support", r.support},
                    {"test", r.test}});
  }
  return {{"setting", setting}, {"dataset", dataset}, {"variant", variant},   {"K", k},
          {"loss_form", loss_form}, {"per_task", runs}, {"mean", mean},     {"std", std},
          {"wallclock", wallclock}, {"warnings", warnings}};
}

std::string Report::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "task,seed,auc,initial_loss,final_loss,support,test\n";
  for (const RunRecord& r : per_task) {
    out << r.task << ',' << r.seed << ',' << r.auc << ',' << r.initial_loss << ',' << r.final_loss << ','
        << r.support << ',' << r.test << '\n';
  }
  return out.str();
}

Report run_protocol(const TemporalGraph& g, const ChronoSplits& splits, const EncoderParams& encoder,
                    const ProtocolConfig& cfg) {
  const auto started = std::chrono::steady_clock::now();
  cfg.tuning.validate();
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.n_tasks == 0) throw ConfigError("at least one task is required");
  const std::optional<EvpFlags> flags = variant_flags(cfg.variant);

  const NeighborIndex idx(g);
  const ContactIndex contacts(g);
  TaskContext ctx{g, splits, contacts, {}};
  if (cfg.kind == TaskKind::node_class) ctx.classes = g.label_classes();
  const std::size_t num_classes = ctx.classes.size();

  FrozenEncoder frozen(encoder, g, idx);
  QueryCache cache(frozen, idx, cfg.tuning.k);

  struct Job {
    std::size_t seed_pos;
    std::size_t task;
  };
  std::vector<std::vector<Task>> tasks;
  std::vector<TestSet> tests;
  std::vector<Job> jobs;
  std::set<std::string> warnings;
  for (std::size_t j = 0; j < cfg.seeds.size(); ++j) {
    tasks.push_back(sample_tasks(ctx, cfg.kind, cfg.n_tasks, cfg.root_seed, cfg.seeds[j], cfg.support_size));
    tests.push_back(build_test_set(ctx, cfg.kind, cfg.root_seed, cfg.seeds[j], cfg.max_test));
    for (const Task& t : tasks.back()) {
      for (const auto& s : t.link_support) {
        cache.prepare(s.v, s.t);
        cache.prepare(s.a, s.t);
        cache.prepare(s.b, s.t);
      }
      for (const auto& s : t.node_support) cache.prepare(s.v, s.t);
      warnings.insert(t.warnings.begin(), t.warnings.end());
      jobs.push_back({j, t.task_id});
    }
    for (const auto& s : tests.back().link) {
      cache.prepare(s.v, s.t);
      cache.prepare(s.a, s.t);
      cache.prepare(s.b, s.t);
    }
    for (const auto& s : tests.back().node) cache.prepare(s.v, s.t);
  }

  std::vector<RunRecord> records(jobs.size());
  const auto run_job = [&](std::size_t n) {
    const Job& job = jobs[n];
    const Task& task = tasks[job.seed_pos][job.task];
    const TestSet& test = tests[job.seed_pos];
    EvpConfig ec;
    ec.dim = encoder.config().hidden_dim;
    ec.num_events = cfg.tuning.k;
    ec.mode = cfg.tuning.mode;
    ec.flags = flags.value_or(EvpFlags{false, false, false});
    ec.use_head = flags.has_value() && cfg.tuning.train_head;
    ec.seed = derive_seed(seed_root(cfg.root_seed, cfg.seeds[job.seed_pos]), "prompt-init", job.task);
    const EvpParams init = EvpParams::init(ec);

    RunRecord r;
    r.task = job.task;
    r.seed = cfg.seeds[job.seed_pos];
    r.support = task.support_events.size();
    r.test = is_link(cfg.kind) ? test.link.size() : test.node.size();
    if (flags) {
      const TuneResult tuned = prompt_tune(task, cache, init, cfg.tuning, num_classes);
      r.initial_loss = tuned.loss.front();
      r.final_loss = tuned.loss.back();
      r.auc = evaluate_task(task, test, cache, tuned.params, cfg.tuning, num_classes);
    } else {
      r.initial_loss = r.final_loss = support_loss(task, cache, init, cfg.tuning, num_classes);
      r.auc = evaluate_task(task, test, cache, init, cfg.tuning, num_classes);
    }
    records[n] = r;
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, jobs.size()));
  if (workers == 1) {
    for (std::size_t n = 0; n < jobs.size(); ++n) run_job(n);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(jobs.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t n = next++; n < jobs.size(); n = next++) {
          try {
            run_job(n);
          } catch (...) {
            errors[n] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  Report report;
  report.setting = to_string(cfg.kind);
  report.dataset = cfg.dataset;
  report.variant = cfg.variant;
  report.k = cfg.tuning.k;
  report.loss_form = to_string(cfg.tuning.loss_form);
  report.per_task = std::move(records);
  std::vector<double> aucs;
  for (const RunRecord& r : report.per_task) aucs.push_back(r.auc);
  std::tie(report.mean, report.std) = mean_std(aucs);
  report.warnings.assign(warnings.begin(), warnings.end());
  report.wallclock = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

}  // namespace evp
