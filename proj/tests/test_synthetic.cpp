#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "evp/downstream.hpp"
#include "evp/errors.hpp"
#include "evp/synthetic.hpp"

using namespace evp;

namespace {

SynthConfig quiet(double noise) {
  SynthConfig c;
  c.n_users = 40;
  c.n_items = 15;
  c.horizon = 1000;
  c.period = 100;
  c.noise_rate = noise;
  c.edge_dim = 4;
  c.seed = 2;
  return c;
}

}  // namespace

TEST(Synthetic, NoiseFreeScheduleIsPeriodic) {
  const SyntheticGraph s = generate(quiet(0.0));
  EXPECT_EQ(s.num_noise, 0u);
  EXPECT_EQ(s.graph.num_events(), s.num_signal);
  const NeighborIndex idx(s.graph);
  for (NodeId v = 0; v < 40; ++v) {
    const auto hist = idx.recent(v, 1e9, 1000);
    const auto expected = static_cast<std::size_t>(std::floor((1000.0 - s.phase[v]) / 100.0));
    ASSERT_EQ(hist.size(), expected);
    for (std::size_t j = 0; j < hist.size(); ++j) {
      EXPECT_EQ(hist[j].neighbor, s.signature[v]);
      EXPECT_NEAR(hist[j].time, s.phase[v] + static_cast<double>(expected - j) * 100.0, 1e-9);
    }
    EXPECT_EQ(s.oracle(v, 500.0), s.signature[v]);
    EXPECT_GE(s.phase[v], 0.0);
    EXPECT_LT(s.phase[v], 100.0);
  }
}

TEST(Synthetic, NoiseCountFollowsTheRate) {
  for (double r : {0.1, 0.3, 0.5}) {
    const SyntheticGraph s = generate(quiet(r));
    EXPECT_EQ(s.num_noise, static_cast<std::size_t>(std::llround(r / (1.0 - r) * static_cast<double>(s.num_signal))));
    EXPECT_EQ(s.graph.num_events(), s.num_signal + s.num_noise);
    EXPECT_NEAR(static_cast<double>(s.num_noise) / static_cast<double>(s.graph.num_events()), r, 0.01);
  }
}

TEST(Synthetic, SameSeedSameGraph) {
  const SyntheticGraph a = generate(quiet(0.3));
  const SyntheticGraph b = generate(quiet(0.3));
  ASSERT_EQ(a.graph.num_events(), b.graph.num_events());
  for (std::size_t i = 0; i < a.graph.num_events(); ++i) {
    EXPECT_EQ(a.graph.event(i).src, b.graph.event(i).src);
    EXPECT_EQ(a.graph.event(i).dst, b.graph.event(i).dst);
    EXPECT_EQ(a.graph.event(i).time, b.graph.event(i).time);
  }
  EXPECT_TRUE(a.graph.edge_features() == b.graph.edge_features());
  SynthConfig other = quiet(0.3);
  other.seed = 3;
  EXPECT_NE(generate(other).signature, a.signature);
}

TEST(Synthetic, ModuloRuleAndLabels) {
  SynthConfig c = quiet(0.0);
  c.signature_rule = SignatureRule::modulo;
  c.num_classes = 3;
  const SyntheticGraph s = generate(c);
  for (NodeId v = 0; v < 40; ++v) EXPECT_EQ(s.signature[v], 40u + v % 15);
  for (const Event& e : s.graph.events()) EXPECT_EQ(e.state_label, static_cast<int>((e.dst - 40) % 3));
}

TEST(Synthetic, ConfigParsing) {
  std::istringstream in("# planted graph\nn_users = 7\nhorizon=250.5  # inline\nsignature_rule = modulo\n\nseed = 9\n");
  const SynthConfig c = parse_synth_config(in);
  EXPECT_EQ(c.n_users, 7u);
  EXPECT_EQ(c.horizon, 250.5);
  EXPECT_EQ(c.signature_rule, SignatureRule::modulo);
  EXPECT_EQ(c.seed, 9u);

  std::istringstream unknown("users = 3\n");
  EXPECT_THROW(parse_synth_config(unknown), ConfigError);
  std::istringstream bad("period = fast\n");
  EXPECT_THROW(parse_synth_config(bad), ConfigError);
  std::istringstream rule("signature_rule = cyclic\n");
  EXPECT_THROW(parse_synth_config(rule), ConfigError);
  std::istringstream noeq("n_users 3\n");
  EXPECT_THROW(parse_synth_config(noeq), ConfigError);
  SynthConfig r = quiet(1.0);
  EXPECT_THROW(r.validate(), ConfigError);
  EXPECT_THROW(load_synth_config("/nonexistent/synth.cfg"), ConfigError);
}

TEST(Synthetic, OnePeriodBackPredictorIsPerfectWithoutNoise) {
  const SyntheticGraph s = generate(quiet(0.0));
  const TemporalGraph& g = s.graph;
  const ChronoSplits splits = chronological_split(g);
  const ContactIndex contacts(g);
  const TaskContext ctx{g, splits, contacts, {}};
  const TestSet test = build_test_set(ctx, TaskKind::link_transductive, 0, 0);
  const NeighborIndex idx(g);
  // Score a candidate by whether v met it exactly one period earlier.
  const auto score = [&](NodeId v, NodeId x, double t) {
    for (const auto& n : idx.recent(v, t, 3)) {
      if (n.neighbor == x && std::abs(n.time - (t - 100.0)) < 1e-9) return 1.0;
    }
    return 0.0;
  };
  std::vector<double> scores;
  std::vector<int> labels;
  for (const LinkInstance& li : test.link) {
    scores.push_back(score(li.v, li.a, li.t));
    labels.push_back(1);
    scores.push_back(score(li.v, li.b, li.t));
    labels.push_back(0);
  }
  ASSERT_FALSE(test.link.empty());
  EXPECT_DOUBLE_EQ(auc_roc(scores, labels), 1.0);
}
