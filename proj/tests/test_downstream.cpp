#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "evp/downstream.hpp"
#include "evp/errors.hpp"
#include "evp/synthetic.hpp"
#include "fixtures.hpp"

using namespace evp;

namespace {

Mat col(std::initializer_list<double> xs) {
  Mat m(static_cast<Eigen::Index>(xs.size()), 1);
  Eigen::Index i = 0;
  for (double x : xs) m(i++, 0) = x;
  return m;
}

double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double num = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1.0;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / pairs;
}

/// Graph whose labels cycle through three classes, 1500 events.
TemporalGraph labelled_graph(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<RawEvent> rows;
  for (int i = 0; i < 1500; ++i) {
    const NodeId u = static_cast<NodeId>(rng() % 30);
    const NodeId item = static_cast<NodeId>(30 + (u % 6) * 2 + rng() % 2);
    rows.push_back({u, item, 0.5 * i, static_cast<int>(u % 3), {std::sin(0.1 * i), std::cos(0.3 * u), 0.5}});
  }
  return TemporalGraph(std::move(rows), 30, 42, 3);
}

SyntheticGraph small_synth() {
  SynthConfig c;
  c.n_users = 60;
  c.n_items = 20;
  c.horizon = 3000;
  c.period = 100;
  c.edge_dim = 4;
  c.seed = 3;
  return generate(c);
}

EncoderParams tiny_encoder(std::size_t input_dim) {
  EncoderConfig c;
  c.input_dim = input_dim;
  c.hidden_dim = 8;
  c.num_layers = 1;
  c.num_heads = 2;
  c.neighbor_budget = 5;
  c.time_unit = 50.0;
  c.seed = 7;
  return EncoderParams::init(c);
}

ProtocolConfig small_protocol(const std::string& variant) {
  ProtocolConfig p;
  p.variant = variant;
  p.dataset = "synth";
  p.n_tasks = 3;
  p.seeds = {0, 1};
  p.max_test = 80;
  p.tuning.epochs = 15;
  p.tuning.k = 3;
  return p;
}

}  // namespace

TEST(Losses, LinkExamples) {
  PlainOps ops;
  const Mat v = col({1, 0});
  EXPECT_NEAR(link_loss(ops, v, v, v, 0.2)(0, 0), 0.0, 1e-12);
  EXPECT_NEAR(link_loss(ops, v, v, col({-1, 0}), 1.0)(0, 0), -2.0, 1e-10);
  EXPECT_NEAR(link_loss(ops, v, v, col({-1, 0}), 1e12)(0, 0), 0.0, 1e-9);
  // Softmax form with orthogonal negative and tau = 1: ln(1 + e^-1).
  EXPECT_NEAR(link_loss(ops, v, v, col({0, 1}), 1.0, LinkLossForm::softmax)(0, 0), 0.31326, 1e-5);
  EXPECT_NEAR(link_loss(ops, v, v, v, 1.0, LinkLossForm::softmax)(0, 0), std::log(2.0), 1e-12);
  EXPECT_THROW(link_loss(ops, v, v, v, 0.0), ConfigError);
  EXPECT_EQ(link_loss_form_from_string("softmax"), LinkLossForm::softmax);
  EXPECT_THROW(link_loss_form_from_string("hinge"), ConfigError);
}

TEST(Losses, NodeExamples) {
  PlainOps ops;
  const std::vector<Mat> two = {col({1, 0}), col({0, 1})};
  EXPECT_NEAR(node_class_loss(ops, col({1, 1}), 0, std::span<const Mat>(two), 1.0)(0, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(node_class_loss(ops, col({1, 0}), 0, std::span<const Mat>(two), 1.0)(0, 0), 0.31326, 1e-5);
  const std::vector<Mat> five(5, col({0.3, 0.7}));
  EXPECT_NEAR(node_class_loss(ops, col({2, -1}), 3, std::span<const Mat>(five), 0.2)(0, 0), std::log(5.0), 1e-12);
  EXPECT_THROW(node_class_loss(ops, col({1, 0}), 2, std::span<const Mat>(two), 1.0), PrototypeError);
}

TEST(Losses, NodeLossGradientThroughPlugIn) {
  EvpConfig ec;
  ec.dim = 3;
  ec.num_events = 2;
  EvpParams p = EvpParams::init(ec);
  p.tensors().value(p.decay_rate())(0, 0) = 0.4;
  EvpQuery q{col({0.2, 0.5, -0.1}), Mat(3, 2), {0.3, 1.2}};
  q.events << 0.4, -0.2, 0.1, 0.9, -0.6, 0.3;
  const std::vector<Mat> protos = {col({1, 0.2, 0}), col({-0.3, 1, 0.5})};
  const auto run = [&](auto& ops) {
    using T = std::decay_t<decltype(ops.constant(Mat()))>;
    const std::vector<T> pr = {ops.constant(protos[0]), ops.constant(protos[1])};
    return node_class_loss(ops, evp_forward(ops, p, q), 1, std::span<const T>(pr), 0.5);
  };
  const auto tape_loss = [&](TapeOps& ops) { return run(ops); };
  const auto plain_loss = [&] {
    PlainOps ops;
    return run(ops)(0, 0);
  };
  EXPECT_LE(test::gradient_error(p.tensors(), tape_loss, plain_loss), 1e-4);
}

TEST(Auc, Examples) {
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y), 1.0);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y), 0.5);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.1, 0.4, 0.35, 0.8}, y), 0.75);
  EXPECT_DOUBLE_EQ(auc_roc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, y), 0.0);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 1}), MetricError);
  EXPECT_THROW(auc_roc(std::vector<double>{0.1}, std::vector<int>{1, 0}), MetricError);
}

TEST(Auc, MatchesPairCountingAndIsMonotoneInvariant) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 7);  // many ties
      y[i] = static_cast<int>(rng() % 2);
    }
    y[0] = 0;
    y[1] = 1;
    const double a = auc_roc(s, y);
    EXPECT_DOUBLE_EQ(a, brute_auc(s, y));
    std::vector<double> shifted(n);
    for (std::size_t i = 0; i < n; ++i) shifted[i] = std::exp(0.3 * s[i]) * 4.0 - 1.0;
    EXPECT_DOUBLE_EQ(auc_roc(shifted, y), a);
  }
}

TEST(Auc, MacroEqualsBinaryForTwoClasses) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat probs(50, 2);
  std::vector<std::size_t> labels(50);
  std::vector<double> col1(50);
  std::vector<int> bin(50);
  for (int i = 0; i < 50; ++i) {
    probs(i, 1) = u(rng);
    probs(i, 0) = 1.0 - probs(i, 1);
    labels[i] = static_cast<std::size_t>(i % 2);
    col1[i] = probs(i, 1);
    bin[i] = static_cast<int>(labels[i]);
  }
  EXPECT_DOUBLE_EQ(macro_auc(probs, labels), auc_roc(col1, bin));

  // Three classes: the mean of the one-vs-rest AUCs.
  Mat p3(6, 3);
  p3 << 0.8, 0.1, 0.1, 0.6, 0.3, 0.1, 0.2, 0.7, 0.1, 0.3, 0.4, 0.3, 0.1, 0.2, 0.7, 0.2, 0.5, 0.3;
  const std::vector<std::size_t> y3 = {0, 0, 1, 1, 2, 2};
  double expected = 0.0;
  for (int c = 0; c < 3; ++c) {
    std::vector<double> s(6);
    std::vector<int> y(6);
    for (int i = 0; i < 6; ++i) {
      s[i] = p3(i, c);
      y[i] = y3[i] == static_cast<std::size_t>(c) ? 1 : 0;
    }
    expected += auc_roc(s, y) / 3.0;
  }
  EXPECT_NEAR(macro_auc(p3, y3), expected, 1e-15);
}

TEST(Prototypes, MeanPerClass) {
  Mat e(2, 4);
  e << 1, 3, 0, 10, 2, 4, 0, 20;
  const std::vector<std::size_t> y = {0, 0, 1, 1};
  const Mat p = class_prototypes(e, y, 2);
  EXPECT_TRUE(p.col(0) == Vec(col({2, 3})));
  EXPECT_TRUE(p.col(1) == Vec(col({5, 10})));
  EXPECT_THROW(class_prototypes(e, y, 3), PrototypeError);
}

TEST(Tasks, SamplingIsDeterministicAndDrawnFromTheTuningPool) {
  const TemporalGraph g = test::random_graph(4000, 200, 100, 5);
  const ChronoSplits s = chronological_split(g);
  const ContactIndex contacts(g);
  const TaskContext ctx{g, s, contacts, {}};
  const auto a = sample_tasks(ctx, TaskKind::link_transductive, 4, 9, 0, 10);
  const auto b = sample_tasks(ctx, TaskKind::link_transductive, 4, 9, 0, 10);
  const auto c = sample_tasks(ctx, TaskKind::link_transductive, 4, 9, 1, 10);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(a[i].support_events, b[i].support_events);
    // The seed changes negatives but not the support events.
    EXPECT_EQ(a[i].support_events, c[i].support_events);
    EXPECT_EQ(a[i].support_events.size(), 10u);
    for (std::size_t j = 0; j < 10; ++j) {
      const std::size_t e = a[i].support_events[j];
      EXPECT_GE(e, s.tune_pool.begin);
      EXPECT_LT(e, s.tune_pool.end);
      const LinkInstance& li = a[i].link_support[j];
      EXPECT_EQ(li.b, b[i].link_support[j].b);
      EXPECT_FALSE(contacts.connected(li.v, li.b, li.t));
    }
  }
  EXPECT_NE(a[0].support_events, a[1].support_events);
}

TEST(Tasks, SmallPoolUsesEveryEventWithWarning) {
  const TemporalGraph g = test::random_graph(1200, 100, 50, 5);
  const ChronoSplits s = chronological_split(g);
  ASSERT_EQ(s.tune_pool.size(), 12u);
  const ContactIndex contacts(g);
  const TaskContext ctx{g, s, contacts, {}};
  const auto tasks = sample_tasks(ctx, TaskKind::link_transductive, 2, 0, 0, 30);
  EXPECT_EQ(tasks[0].support_events.size(), 12u);
  EXPECT_FALSE(tasks[0].warnings.empty());
}

TEST(Tasks, NodeTasksCoverEveryClass) {
  const TemporalGraph g = labelled_graph(1);
  const ChronoSplits s = chronological_split(g);
  const ContactIndex contacts(g);
  const TaskContext ctx{g, s, contacts, g.label_classes()};
  for (const Task& t : sample_tasks(ctx, TaskKind::node_class, 20, 4, 0, 3)) {
    std::vector<int> seen(3, 0);
    for (const NodeInstance& n : t.node_support) seen[n.y] = 1;
    EXPECT_EQ(seen, (std::vector<int>{1, 1, 1}));
  }
}

TEST(Tasks, MissingClassRaisesTaskError) {
  std::vector<RawEvent> rows;
  for (int i = 0; i < 1000; ++i) {
    // Class 1 only occurs in the pretraining range.
    const int label = i < 400 ? i % 2 : 0;
    rows.push_back({static_cast<NodeId>(i % 10), static_cast<NodeId>(10 + i % 5), 1.0 * i, label, {}});
  }
  const TemporalGraph g(std::move(rows), 10, 15, 0);
  const ChronoSplits s = chronological_split(g);
  const ContactIndex contacts(g);
  const TaskContext ctx{g, s, contacts, g.label_classes()};
  try {
    sample_tasks(ctx, TaskKind::node_class, 1, 0, 0);
    FAIL();
  } catch (const TaskError& e) {
    EXPECT_NE(std::string(e.what()).find("class 1"), std::string::npos);
  }
}

TEST(Tasks, InductiveTestKeepsOnlyUnseenSources) {
  std::vector<std::tuple<NodeId, NodeId, double>> rows;
  for (int i = 0; i < 900; ++i) rows.emplace_back(static_cast<NodeId>(i % 20), static_cast<NodeId>(30 + i % 7), i);
  for (int i = 0; i < 100; ++i) rows.emplace_back(static_cast<NodeId>(i % 30), static_cast<NodeId>(37 + i % 13), 900 + i);
  const TemporalGraph g = test::make_graph(rows, 30, 50);
  const ChronoSplits s = chronological_split(g);
  const ContactIndex contacts(g);
  const TaskContext ctx{g, s, contacts, {}};
  const TestSet ind = build_test_set(ctx, TaskKind::link_inductive, 0, 0);
  const TestSet tr = build_test_set(ctx, TaskKind::link_transductive, 0, 0);
  std::size_t unseen = 0;
  for (std::size_t e = s.test.begin; e < s.test.end; ++e) unseen += s.is_unseen(g.event(e).src) ? 1 : 0;
  EXPECT_GT(unseen, 0u);
  EXPECT_EQ(ind.link.size(), unseen);
  EXPECT_EQ(tr.link.size(), s.test.size());
  for (const LinkInstance& li : ind.link) EXPECT_TRUE(s.is_unseen(li.v));
  EXPECT_EQ(build_test_set(ctx, TaskKind::link_transductive, 0, 0, 50).link.size(), 50u);
}

TEST(Tuning, LeavesInitAndEncoderUntouchedAndLowersLoss) {
  const SyntheticGraph sg = small_synth();
  const TemporalGraph& g = sg.graph;
  const ChronoSplits s = chronological_split(g);
  const NeighborIndex idx(g);
  const ContactIndex contacts(g);
  const EncoderParams enc = tiny_encoder(g.feature_dim());
  const auto enc_sum = enc.checksum();
  FrozenEncoder frozen(enc, g, idx);
  QueryCache cache(frozen, idx, 3);
  const TaskContext ctx{g, s, contacts, {}};
  const auto tasks = sample_tasks(ctx, TaskKind::link_transductive, 5, 1, 0, 20);
  for (const Task& t : tasks) {
    for (const auto& li : t.link_support) {
      cache.prepare(li.v, li.t);
      cache.prepare(li.a, li.t);
      cache.prepare(li.b, li.t);
    }
  }
  TuningConfig tc;
  tc.k = 3;
  tc.epochs = 40;
  EvpConfig ec;
  ec.dim = 8;
  ec.num_events = 3;
  const EvpParams init = EvpParams::init(ec);
  const auto init_sum = init.checksum();

  tc.epochs = 0;
  const TuneResult none = prompt_tune(tasks[0], cache, init, tc, 0);
  EXPECT_EQ(none.params.checksum(), init_sum);
  EXPECT_EQ(none.loss.size(), 1u);

  tc.epochs = 40;
  int lowered = 0;
  for (const Task& t : tasks) {
    const TuneResult r = prompt_tune(t, cache, init, tc, 0);
    EXPECT_EQ(r.loss.size(), 41u);
    EXPECT_DOUBLE_EQ(r.loss.front(), support_loss(t, cache, init, tc, 0));
    EXPECT_GE(r.params.tensors().value(r.params.decay_rate())(0, 0), 0.0);
    if (r.loss.back() < r.loss.front()) ++lowered;
  }
  EXPECT_GE(lowered, 4);
  EXPECT_EQ(init.checksum(), init_sum);
  EXPECT_EQ(enc.checksum(), enc_sum);
  EXPECT_THROW(cache.at(0, -1.0), LookupError);
}

TEST(Variants, NamesMapToFlags) {
  EXPECT_FALSE(variant_flags("none").has_value());
  const EvpFlags full = *variant_flags("full");
  EXPECT_TRUE(full.event_prompt && full.dynamic_prompt && full.time_decay);
  const EvpFlags ep = *variant_flags("EP");
  EXPECT_TRUE(ep.event_prompt && !ep.dynamic_prompt && !ep.time_decay);
  const EvpFlags dp = *variant_flags("DP");
  EXPECT_TRUE(!dp.event_prompt && dp.dynamic_prompt && !dp.time_decay);
  const EvpFlags td = *variant_flags("TD");
  EXPECT_TRUE(!td.event_prompt && !td.dynamic_prompt && td.time_decay);
  EXPECT_FALSE(variant_flags("off")->any());
  EXPECT_THROW(variant_flags("XY"), ConfigError);
  EXPECT_EQ(ablation_variants().size(), 5u);
  EXPECT_EQ(task_kind_from_string("node"), TaskKind::node_class);
  EXPECT_EQ(default_k(TaskKind::node_class), 3u);
  EXPECT_EQ(default_k(TaskKind::link_inductive), 9u);
}

TEST(Protocol, SingleRunHasZeroStd) {
  const SyntheticGraph sg = small_synth();
  const ChronoSplits s = chronological_split(sg.graph);
  ProtocolConfig p = small_protocol("full");
  p.n_tasks = 1;
  p.seeds = {0};
  const Report r = run_protocol(sg.graph, s, tiny_encoder(sg.graph.feature_dim()), p);
  ASSERT_EQ(r.per_task.size(), 1u);
  EXPECT_EQ(r.std, 0.0);
  EXPECT_EQ(r.mean, r.per_task[0].auc);
  EXPECT_EQ(r.k, 3u);
}

TEST(Protocol, DisabledPlugInMatchesNoPlugIn) {
  const SyntheticGraph sg = small_synth();
  const ChronoSplits s = chronological_split(sg.graph);
  const EncoderParams enc = tiny_encoder(sg.graph.feature_dim());
  const Report off = run_protocol(sg.graph, s, enc, small_protocol("off"));
  const Report none = run_protocol(sg.graph, s, enc, small_protocol("none"));
  ASSERT_EQ(off.per_task.size(), none.per_task.size());
  for (std::size_t i = 0; i < off.per_task.size(); ++i) {
    EXPECT_EQ(off.per_task[i].auc, none.per_task[i].auc);
    EXPECT_EQ(off.per_task[i].final_loss, none.per_task[i].final_loss);
  }
  EXPECT_EQ(off.mean, none.mean);
}

TEST(Protocol, DeterministicAndIndependentOfWorkerCount) {
  const SyntheticGraph sg = small_synth();
  const ChronoSplits s = chronological_split(sg.graph);
  const EncoderParams enc = tiny_encoder(sg.graph.feature_dim());
  ProtocolConfig p = small_protocol("full");
  const Report a = run_protocol(sg.graph, s, enc, p);
  p.workers = 3;
  const Report b = run_protocol(sg.graph, s, enc, p);
  ASSERT_EQ(a.per_task.size(), 6u);
  for (std::size_t i = 0; i < a.per_task.size(); ++i) {
    EXPECT_EQ(a.per_task[i].auc, b.per_task[i].auc);
    EXPECT_EQ(a.per_task[i].final_loss, b.per_task[i].final_loss);
    EXPECT_LT(a.per_task[i].final_loss, a.per_task[i].initial_loss);
  }
  nlohmann::json ja = a.to_json();
  nlohmann::json jb = b.to_json();
  ja.erase("wallclock");
  jb.erase("wallclock");
  EXPECT_EQ(ja, jb);
  for (const char* key : {"setting", "dataset", "variant", "K", "loss_form", "per_task", "mean", "std", "warnings"}) {
    EXPECT_TRUE(ja.contains(key)) << key;
  }
  const std::string csv = a.to_csv();
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
}

TEST(Protocol, NodeClassificationRuns) {
  const TemporalGraph g = labelled_graph(3);
  const ChronoSplits s = chronological_split(g);
  ProtocolConfig p = small_protocol("full");
  p.kind = TaskKind::node_class;
  p.support_size = 6;
  const Report r = run_protocol(g, s, tiny_encoder(3), p);
  for (const RunRecord& rec : r.per_task) {
    EXPECT_GE(rec.auc, 0.0);
    EXPECT_LE(rec.auc, 1.0);
  }
}

TEST(Stats, PopulationMeanStd) {
  const std::vector<double> xs = {1.0, 3.0};
  const auto [m, sd] = mean_std(xs);
  EXPECT_DOUBLE_EQ(m, 2.0);
  EXPECT_DOUBLE_EQ(sd, 1.0);
}
