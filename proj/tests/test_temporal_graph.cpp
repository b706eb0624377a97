#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "evp/errors.hpp"
#include "evp/temporal_graph.hpp"
#include "fixtures.hpp"

using namespace evp;

namespace {

const char* kSmallCsv =
    "user_id,item_id,timestamp,state_label,f1,f2\n"
    "0,0,5.0,0,0.1,0.2\n"
    "1,1,2.0,1,0.3,0.4\n"
    "0,1,2.0,0,0.5,0.6\n";

}  // namespace

TEST(Ingest, ReadsRowsSortsStablyAndOffsetsItems) {
  std::istringstream in(kSmallCsv);
  const TemporalGraph g = read_jodie_csv(in);
  EXPECT_EQ(g.num_users(), 2u);
  EXPECT_EQ(g.num_nodes(), 4u);
  EXPECT_EQ(g.feature_dim(), 2u);
  ASSERT_EQ(g.num_events(), 3u);
  // Equal timestamps keep file order.
  EXPECT_EQ(g.event(0).src, 1u);
  EXPECT_EQ(g.event(0).dst, 3u);
  EXPECT_EQ(g.event(1).src, 0u);
  EXPECT_EQ(g.event(1).dst, 3u);
  EXPECT_EQ(g.event(2).dst, 2u);
  EXPECT_DOUBLE_EQ(g.edge_feature(1)(0), 0.5);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(g.event(i).event_id, i);
  EXPECT_EQ(g.label_classes(), (std::vector<int>{0, 1}));
}

TEST(Ingest, NegativeTimestampNamesTheLine) {
  std::istringstream in("u,i,t,l\n0,0,1,0\n0,1,-3,0\n");
  try {
    read_jodie_csv(in, "data.csv");
    FAIL() << "expected IngestError";
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("data.csv:3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("negative timestamp"), std::string::npos);
  }
}

TEST(Ingest, RejectsRaggedRowsAndBadNumbers) {
  std::istringstream ragged("u,i,t,l,f\n0,0,1,0,1.0\n0,1,2,0\n");
  EXPECT_THROW(read_jodie_csv(ragged), IngestError);
  std::istringstream bad("u,i,t,l\n0,x,1,0\n");
  EXPECT_THROW(read_jodie_csv(bad), IngestError);
}

TEST(Ingest, HeaderOnlyGivesEmptyGraph) {
  std::istringstream in("user_id,item_id,timestamp,state_label\n");
  const TemporalGraph g = read_jodie_csv(in);
  EXPECT_EQ(g.num_events(), 0u);
  EXPECT_EQ(g.num_nodes(), 0u);
}

TEST(Ingest, MissingFileMentionsPath) {
  try {
    load_jodie_csv("/nonexistent/wiki.csv");
    FAIL();
  } catch (const IngestError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/wiki.csv"), std::string::npos);
  }
}

TEST(Ingest, ConstructorRejectsSelfLoopsAndBadIds) {
  RawEvent loop{1, 1, 0.0, 0, {}};
  EXPECT_THROW(TemporalGraph({loop}, 1, 2, 0), IngestError);
  RawEvent far{0, 7, 0.0, 0, {}};
  EXPECT_THROW(TemporalGraph({far}, 1, 2, 0), IngestError);
  RawEvent wide{0, 1, 0.0, 0, {1.0}};
  EXPECT_THROW(TemporalGraph({wide}, 1, 2, 0), IngestError);
}

TEST(Ingest, CsvRoundTripIsExact) {
  const TemporalGraph g = test::random_graph(300, 20, 10, 5, 3);
  std::stringstream buf;
  write_jodie_csv(g, buf);
  const TemporalGraph back = read_jodie_csv(buf);
  ASSERT_EQ(back.num_events(), g.num_events());
  EXPECT_EQ(back.num_users(), g.num_users());
  for (std::size_t i = 0; i < g.num_events(); ++i) {
    EXPECT_EQ(back.event(i).src, g.event(i).src);
    EXPECT_EQ(back.event(i).dst, g.event(i).dst);
    EXPECT_EQ(back.event(i).time, g.event(i).time);
    EXPECT_EQ(back.event(i).state_label, g.event(i).state_label);
  }
  EXPECT_TRUE(back.edge_features() == g.edge_features());
}

TEST(Split, ChronologicalFractions) {
  const TemporalGraph g = test::random_graph(1000, 30, 15, 1);
  const ChronoSplits s = chronological_split(g);
  EXPECT_EQ(s.pretrain.size(), 800u);
  EXPECT_EQ(s.tune_pool.size(), 10u);
  EXPECT_EQ(s.val_pool.size(), 10u);
  EXPECT_EQ(s.test.size(), 180u);
  EXPECT_EQ(s.pretrain.end, s.tune_pool.begin);
  EXPECT_EQ(s.val_pool.end, s.test.begin);
  EXPECT_EQ(s.test.end, 1000u);
}

TEST(Split, ErrorsOnTinyGraphsAndBadFractions) {
  const TemporalGraph tiny = test::make_graph({{0, 1, 1.0}, {0, 1, 2.0}}, 1, 2);
  EXPECT_THROW(chronological_split(tiny), SplitError);
  const TemporalGraph g = test::random_graph(1000, 30, 15, 1);
  EXPECT_THROW(chronological_split(g, {0.9, 0.1, 0.1}), ConfigError);
  const TemporalGraph small = test::random_graph(20, 5, 5, 1);
  EXPECT_THROW(chronological_split(small), SplitError);
}

TEST(Split, InductiveNodesAreUnseenBeforeTest) {
  // Node 4 (an item) first appears in the last event.
  std::vector<std::tuple<NodeId, NodeId, double>> rows;
  for (int i = 0; i < 99; ++i) rows.emplace_back(static_cast<NodeId>(i % 2), static_cast<NodeId>(2 + i % 2), i);
  rows.emplace_back(0, 4, 200.0);
  const TemporalGraph g = test::make_graph(rows, 2, 5);
  const ChronoSplits s = chronological_split(g);
  EXPECT_EQ(s.inductive_unseen, (std::vector<NodeId>{4}));
  EXPECT_TRUE(s.is_unseen(4));
  EXPECT_FALSE(s.is_unseen(0));
}

TEST(NeighborIndex, RecentIsStrictlyBeforeAndMostRecentFirst) {
  const TemporalGraph g = test::make_graph({{0, 2, 1.0}, {0, 3, 3.0}, {1, 2, 5.0}, {0, 2, 7.0}}, 2, 4);
  const NeighborIndex idx(g);
  const auto r = idx.recent(0, 7.0, 10);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_EQ(r[0].neighbor, 3u);
  EXPECT_EQ(r[0].time, 3.0);
  EXPECT_EQ(r[1].neighbor, 2u);
  // Both directions are indexed.
  const auto items = idx.recent(2, 100.0, 10);
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[0].neighbor, 0u);
  EXPECT_EQ(items[1].neighbor, 1u);
  EXPECT_TRUE(idx.recent(0, 1.0, 5).empty());
  EXPECT_EQ(idx.recent(0, 100.0, 1).size(), 1u);
  EXPECT_THROW(idx.recent(9, 1.0, 1), LookupError);
}

TEST(NeighborIndex, MatchesBruteForce) {
  const TemporalGraph g = test::random_graph(400, 12, 8, 3, 1, true);
  const NeighborIndex idx(g);
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (double t : {0.0, 13.0, 50.0, 50.5, 99.0, 101.0}) {
      for (std::size_t k : {1u, 3u, 20u}) {
        std::vector<std::size_t> expected;
        for (std::size_t i = g.num_events(); i-- > 0;) {
          const Event& e = g.event(i);
          if (e.time < t && (e.src == v || e.dst == v)) expected.push_back(i);
          if (expected.size() == k) break;
        }
        const auto got = recent_neighbors(idx, v, t, k);
        ASSERT_EQ(got.size(), expected.size());
        for (std::size_t j = 0; j < got.size(); ++j) EXPECT_EQ(got[j].event_id, expected[j]);
      }
    }
  }
}

TEST(Graph, MeanNodeGapAndPrefix) {
  const TemporalGraph g = test::make_graph({{0, 2, 1.0}, {0, 2, 3.0}, {1, 2, 6.0}}, 2, 3);
  // Gaps: node 0: 2; node 2: 2, 3.
  EXPECT_DOUBLE_EQ(mean_node_gap(g, {0, 3}), 7.0 / 3.0);
  EXPECT_DOUBLE_EQ(mean_node_gap(g, {0, 1}), 1.0);
  const TemporalGraph p = g.prefix(2);
  EXPECT_EQ(p.num_events(), 2u);
  EXPECT_EQ(p.num_nodes(), 3u);
  EXPECT_EQ(p.edge_features().cols(), 2);
}
