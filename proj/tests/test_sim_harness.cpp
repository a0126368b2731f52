#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "bridge_fixtures.hpp"
#include "dnmpc/bridge_json.hpp"
#include "dnmpc/sim_harness.hpp"

using namespace dnmpc;
using namespace dnmpc::testing;

namespace {

using Trace = RunTrace<GridState, GridControl, Rational>;

NeighborRecord<GridState> rec(int source, Time solved_at) { return {AgentId{source}, solved_at, 0, {{solved_at, 0}}}; }

Trace run_bridge(int horizon, RunOptions opts = {}, const std::string& world = "bridge_default") {
  const auto sc = bridge::build_scenario(world, {}, horizon);
  return run_closed_loop(sc, rules::lexicographic(), rules::drop_all(), opts);
}

std::string jsonl(const Trace& t) {
  std::ostringstream os;
  write_jsonl(t, os);
  return os.str();
}

std::vector<Rational> ints(std::initializer_list<int> v) {
  std::vector<Rational> out;
  for (int x : v) out.emplace_back(x);
  return out;
}

}  // namespace

TEST(InfoStore, OnlyStrictlyNewerRecordsReplace) {
  InfoStore<GridState> store;
  EXPECT_TRUE(store.offer(AgentId{2}, rec(1, 3)));
  EXPECT_FALSE(store.offer(AgentId{2}, rec(1, 3)));
  EXPECT_FALSE(store.offer(AgentId{2}, rec(1, 1)));
  EXPECT_EQ(store.find(AgentId{2}, AgentId{1})->solved_at, 3);
  EXPECT_TRUE(store.offer(AgentId{2}, rec(1, 4)));
  EXPECT_EQ(store.find(AgentId{1}, AgentId{2}), nullptr);
  EXPECT_THROW(store.offer(AgentId{1}, rec(1, 0)), StructuralError);
}

TEST(InfoStore, DelayedDelivery) {
  InfoStore<GridState> store;
  store.schedule(5, AgentId{2}, rec(1, 3));
  store.advance(4);
  EXPECT_EQ(store.find(AgentId{2}, AgentId{1}), nullptr);
  EXPECT_EQ(store.in_flight(), 1U);
  store.advance(5);
  ASSERT_NE(store.find(AgentId{2}, AgentId{1}), nullptr);
  EXPECT_EQ(store.find(AgentId{2}, AgentId{1})->solved_at, 3);
  // A late arrival never overwrites a newer record.
  store.offer(AgentId{2}, rec(1, 6));
  store.schedule(7, AgentId{2}, rec(1, 4));
  store.advance(7);
  EXPECT_EQ(store.find(AgentId{2}, AgentId{1})->solved_at, 6);
}

TEST(NetworkApply, IdealLossyDelayedAndCut) {
  std::vector<Message<GridState>> msgs{{AgentId{2}, AgentId{1}, rec(2, 0)}, {AgentId{1}, AgentId{2}, rec(1, 0)}};
  std::mt19937_64 rng(1);

  InfoStore<GridState> ideal;
  const auto d = network_apply(msgs, NetworkModel{}, 0, rng, ideal);
  ASSERT_EQ(d.size(), 2U);
  EXPECT_EQ(d[0].recipient, AgentId{1});  // sorted by recipient
  EXPECT_EQ(d[0].status, DeliveryStatus::delivered);
  EXPECT_NE(ideal.find(AgentId{1}, AgentId{2}), nullptr);

  NetworkModel delayed;
  delayed.delay = 1;
  InfoStore<GridState> late;
  for (const auto& x : network_apply(msgs, delayed, 0, rng, late)) EXPECT_EQ(x.status, DeliveryStatus::scheduled);
  EXPECT_EQ(late.find(AgentId{1}, AgentId{2}), nullptr);
  late.advance(1);
  ASSERT_NE(late.find(AgentId{1}, AgentId{2}), nullptr);
  EXPECT_EQ(late.find(AgentId{1}, AgentId{2})->solved_at, 0);

  NetworkModel lossy;
  lossy.loss = 1.0;
  InfoStore<GridState> stale;
  stale.offer(AgentId{1}, rec(2, -3));
  for (const auto& x : network_apply(msgs, lossy, 0, rng, stale)) EXPECT_EQ(x.status, DeliveryStatus::lost);
  EXPECT_EQ(stale.find(AgentId{1}, AgentId{2})->solved_at, -3);

  NetworkModel cut;
  cut.adjacency = [](Time, AgentId src, AgentId) { return src == AgentId{1}; };
  InfoStore<GridState> half;
  const auto c = network_apply(msgs, cut, 0, rng, half);
  EXPECT_EQ(c[0].status, DeliveryStatus::no_link);
  EXPECT_EQ(c[1].status, DeliveryStatus::delivered);
}

TEST(NetworkApply, PropertyLossRateAndSeedDeterminism) {
  NetworkModel net;
  net.loss = 0.3;
  std::vector<Message<GridState>> msgs;
  for (int q = 1; q <= 40; ++q)
    for (int r = 1; r <= 40; ++r)
      if (q != r) msgs.push_back({AgentId{q}, AgentId{r}, rec(q, 0)});
  std::mt19937_64 a(11), b(11);
  InfoStore<GridState> sa, sb;
  const auto da = network_apply(msgs, net, 0, a, sa);
  const auto db = network_apply(msgs, net, 0, b, sb);
  int lost = 0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    EXPECT_EQ(da[i].status, db[i].status);
    lost += da[i].status == DeliveryStatus::lost;
  }
  const double rate = static_cast<double>(lost) / static_cast<double>(da.size());
  EXPECT_NEAR(rate, 0.3, 0.05);
}

TEST(NetworkModel, Validation) {
  NetworkModel bad;
  bad.loss = 1.5;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  NetworkModel neg;
  neg.links[{AgentId{1}, AgentId{2}}] = {std::nullopt, -1};
  EXPECT_THROW(neg.validate(), std::invalid_argument);
}

TEST(RunClosedLoop, BridgeStageCosts) {
  const auto trace = run_bridge(6);
  ASSERT_EQ(trace.steps.size(), 8U);
  EXPECT_EQ(trace.stage_costs(AgentId{2}), ints({9, 9, 10, 9, 4, 1, 0, 0}));
  Rational total(0);
  for (const auto& c : trace.stage_costs(AgentId{2})) total += c;
  EXPECT_EQ(total, Rational(42));
  EXPECT_EQ(trace.final_states, (std::vector<GridState>{{-2, 0}, {2, 0}}));
}

TEST(RunClosedLoop, SingleAgent) {
  const auto sc = bridge::build_custom_scenario({{AgentId{1}, {-1, 0}, {2, 0}, 3}}, {});
  RunOptions opts;
  opts.steps = 3;
  const auto trace = run_closed_loop(sc, rules::lexicographic(), rules::drop_all(), opts);
  ASSERT_EQ(trace.steps.size(), 3U);
  for (const auto& s : trace.steps) {
    EXPECT_EQ(s.hierarchy_after.levels.size(), 1U);
    EXPECT_TRUE(s.agents[0].info.empty());
  }
  EXPECT_EQ(trace.final_states.front(), (GridState{2, 0}));
}

TEST(RunClosedLoop, LosingTheReverseEdgeLeavesAgentOneAlone) {
  RunOptions lossy;
  lossy.network.links[{AgentId{2}, AgentId{1}}] = {1.0, std::nullopt};
  const auto a = run_bridge(6);
  const auto b = run_bridge(6, lossy);
  for (std::size_t n = 0; n < a.steps.size(); ++n) {
    EXPECT_EQ(a.steps[n].agents[0].plan, b.steps[n].agents[0].plan);
    EXPECT_EQ(a.steps[n].agents[0].state, b.steps[n].agents[0].state);
  }
}

TEST(RunClosedLoop, DelayedRecordsKeepTheirSolveTime) {
  RunOptions opts;
  opts.network.delay = 2;
  opts.steps = 6;
  const auto sc = bridge::build_scenario("corridor_deadlock", {}, 4);
  const auto trace = run_closed_loop(sc, rules::lexicographic(), rules::never(), opts);
  // Final plans are resolved against plans published within the step, so
  // every record they used is fresh regardless of the network.
  for (const auto& s : trace.steps)
    for (const auto& a : s.agents)
      for (const auto& [q, r] : a.info.records) {
        EXPECT_EQ(r.solved_at, s.n);
        EXPECT_EQ(r.states.size(), static_cast<std::size_t>(r.horizon) + 1);
      }
}

TEST(RunClosedLoop, InitialSolveUsesStaleRecordAtOriginalIndex) {
  const auto sc = bridge::build_scenario("corridor_deadlock", {}, 3);
  CoveringScheduler<GridState, GridControl, Rational> s(sc, rules::lexicographic(), rules::never());
  Hierarchy h;
  h.levels = {{AgentId{1}}, {AgentId{2}}};
  s.reset(h, {{AgentId{1}, {}}, {AgentId{2}, {{AgentId{1}, 0}}}});
  InfoStore<GridState> store;
  // Agent 1's prediction from n = 1, used at n = 3: offset k reads index k + 2.
  const NeighborRecord<GridState> old{AgentId{1}, 1, 5, {{5, 0}, {4, 0}, {3, 0}, {2, 0}, {1, 0}, {0, 0}}};
  store.offer(AgentId{2}, old);
  const std::vector<GridState> states{{3, 0}, {-1, 0}};
  const auto out = s.step(3, states, store);
  ASSERT_EQ(out.initial_info[1].records.size(), 1U);
  EXPECT_EQ(out.initial_info[1].records.at(AgentId{1}), old);
  InfoSet<GridState> info(AgentId{2});
  info.insert(old);
  EXPECT_EQ(out.initial_plans[1], solve_ocp(sc.agents[1], GridState{-1, 0}, 3, info, sc.couplings));
  // The stale prediction puts agent 1 at (0,0) at time 6, so agent 2 cannot end there.
  EXPECT_NE(out.initial_plans[1].states[3], (GridState{0, 0}));
}

TEST(RunClosedLoop, Preconditions) {
  const auto sc = bridge::build_custom_scenario({{AgentId{1}, {0, 0}, {2, 0}, 2}, {AgentId{2}, {0, 0}, {-2, 0}, 2}}, {});
  EXPECT_THROW(run_closed_loop(sc, rules::lexicographic(), rules::drop_all(), RunOptions{}), InfeasibleInitialState);
  RunOptions none;
  none.steps = 0;
  EXPECT_THROW(run_bridge(4, none), std::invalid_argument);
}

TEST(RunClosedLoop, PropertyDeterministicTraces) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    RunOptions opts;
    opts.network.loss = 0.25;
    opts.network.delay = static_cast<int>(rng() % 3);
    opts.network.seed = rng();
    opts.steps = 10;
    const int horizon = 2 + trial % 4;
    auto seq = opts;
    seq.scheduler.parallel = false;
    const auto first = jsonl(run_bridge(horizon, opts, trial % 2 ? "corridor_deadlock" : "bridge_default"));
    EXPECT_EQ(first, jsonl(run_bridge(horizon, opts, trial % 2 ? "corridor_deadlock" : "bridge_default")));
    EXPECT_EQ(first, jsonl(run_bridge(horizon, seq, trial % 2 ? "corridor_deadlock" : "bridge_default")));
  }
}

TEST(RunTraceJson, RoundTrip) {
  auto trace = run_bridge(4, {}, "corridor_deadlock");
  trace.header = {{"note", "round trip"}};
  const auto text = jsonl(trace);
  std::istringstream in(text);
  const auto back = read_jsonl<GridState, GridControl, Rational>(in);
  EXPECT_EQ(jsonl(back), text);
  ASSERT_EQ(back.steps.size(), trace.steps.size());
  for (std::size_t n = 0; n < back.steps.size(); ++n)
    for (std::size_t a = 0; a < 2; ++a) {
      const auto& x = back.steps[n].agents[a];
      const auto& y = trace.steps[n].agents[a];
      EXPECT_EQ(x.plan, y.plan);
      EXPECT_EQ(x.info.records, y.info.records);
      EXPECT_EQ(x.memory, y.memory);
    }
}

TEST(RunTraceJson, StepKeyOrder) {
  const auto text = jsonl(run_bridge(4));
  std::istringstream in(text);
  std::string header, step;
  std::getline(in, header);
  std::getline(in, step);
  const auto j = nlohmann::ordered_json::parse(step);
  std::vector<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.push_back(k);
  const std::vector<std::string> expected{"n",      "states",          "controls",        "values", "stage_costs",
                                          "levels", "memory",          "demotions",       "hierarchy_before",
                                          "hierarchy_after", "plans", "info"};
  EXPECT_EQ(keys, expected);
  EXPECT_EQ(j["values"][1], (nlohmann::ordered_json{{"num", 37}, {"den", 1}}));
}

TEST(RunTraceJson, RejectsMalformedInput) {
  std::istringstream empty("");
  EXPECT_THROW((read_jsonl<GridState, GridControl, Rational>(empty)), TraceFormatError);
  std::istringstream headless("{\"n\":0}\n");
  EXPECT_THROW((read_jsonl<GridState, GridControl, Rational>(headless)), TraceFormatError);
  std::istringstream garbage("{\"header\":{\"scenario\":\"x\",\"agents\":[1],\"config\":{}}}\nnot json\n");
  EXPECT_THROW((read_jsonl<GridState, GridControl, Rational>(garbage)), TraceFormatError);
  std::istringstream short_line(
      "{\"header\":{\"scenario\":\"x\",\"agents\":[1,2],\"config\":{}}}\n{\"n\":0,\"states\":[[0,0]]}\n");
  EXPECT_THROW((read_jsonl<GridState, GridControl, Rational>(short_line)), TraceFormatError);
}
