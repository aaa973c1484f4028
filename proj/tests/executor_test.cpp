#include <gtest/gtest.h>

#include <sstream>

#include "deferred_stm/deferred_stm.hpp"

namespace ds = deferred_stm;
namespace wl = deferred_stm::workloads;

namespace {

ds::BlockOutput parallel(const std::vector<ds::TxnScript>& block, const ds::BaseState& state, unsigned workers,
                         std::uint32_t work_units = 0) {
  ds::ExecutorOptions options;
  options.workers = workers;
  options.interpreter.work_units = work_units;
  return ds::execute_block(block, state, options);
}

wl::WorkloadSpec spec_of(wl::Kind kind, std::uint64_t seed, wl::Mode mode = wl::Mode::Deferred) {
  wl::WorkloadSpec spec;
  spec.kind = kind;
  spec.mode = mode;
  spec.accounts = 200;
  spec.seed = seed;
  return spec;
}

std::string token_name(const ds::WriteValue& v) {
  std::string name(v.bytes.begin() + 14, v.bytes.end());
  return name.substr(0, name.find('\0'));
}

}  // namespace

TEST(Executor, EmptyBlock) {
  const auto out = parallel({}, ds::BaseState{}, 4);
  EXPECT_TRUE(out.outputs.empty());
  EXPECT_TRUE(out.committed_deferred.empty());
}

TEST(Executor, TransfersMatchOracle) {
  for (auto mode : {wl::Mode::Integer, wl::Mode::Deferred}) {
    auto spec = spec_of(wl::Kind::Transfer, 3, mode);
    const auto state = wl::seed_state(spec);
    const auto block = wl::generate(spec, 100);
    const auto out = parallel(block, state, 4);
    EXPECT_TRUE(out.same_results(ds::oracle::sequential_execute_block(block, state)));
  }
}

TEST(Executor, SponsoredSinglePayerBalance) {
  auto spec = spec_of(wl::Kind::Sponsored, 5);
  spec.payers = 1;
  const auto state = wl::seed_state(spec);
  const auto block = wl::generate(spec, 1000);
  const auto out = parallel(block, state, 8);
  const auto payer = std::get<std::uint64_t>(out.committed_deferred.at(wl::balance_id(0)));
  EXPECT_EQ(payer, ds::seeded_balance(spec.seed, 0) - 1000 * wl::fee::kSponsored);
  const auto supply = std::get<std::uint64_t>(out.committed_deferred.at(wl::supply_id()));
  EXPECT_EQ(supply, wl::kInitialSupply - 1000 * wl::fee::kSponsored);
  EXPECT_TRUE(out.same_results(ds::oracle::sequential_execute_block(block, state)));
}

TEST(Executor, NftNamesFollowSupply) {
  auto spec = spec_of(wl::Kind::NftMint, 7);
  const auto state = wl::seed_state(spec);
  const auto block = wl::generate(spec, 5);
  const auto out = parallel(block, state, 4);
  for (std::size_t i = 0; i < out.outputs.size(); ++i) {
    const auto& ws = out.outputs[i].write_set;
    auto it = std::find_if(ws.begin(), ws.end(), [](const auto& kv) { return kv.first.front() == wl::kObjectPrefix; });
    ASSERT_NE(it, ws.end());
    EXPECT_TRUE(it->second.materialized());
    EXPECT_EQ(token_name(it->second), "Tok #" + std::to_string(i + 1));
  }
}

TEST(Executor, NftLimitAborts) {
  auto spec = spec_of(wl::Kind::NftMint, 8);
  spec.limit = 10;
  const auto state = wl::seed_state(spec);
  const auto block = wl::generate(spec, 12);
  const auto out = parallel(block, state, 4);
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(out.outputs[i].status, i < 10 ? ds::TxnStatus::Success : ds::TxnStatus::Aborted) << i;
  }
  EXPECT_EQ(std::get<std::uint64_t>(out.committed_deferred.at(wl::shared_counter_id())), 10u);
}

TEST(Executor, EveryKindMatchesOracle) {
  for (auto kind : {wl::Kind::NoOp, wl::Kind::Sponsored, wl::Kind::Transfer, wl::Kind::NftMint, wl::Kind::History,
                    wl::Kind::Cnt, wl::Kind::Reveal}) {
    for (auto mode : {wl::Mode::Integer, wl::Mode::Deferred}) {
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto spec = spec_of(kind, seed, mode);
        spec.n = kind == wl::Kind::History ? 20 : 2;
        spec.limit = 40;
        const auto state = wl::seed_state(spec);
        const auto block = wl::generate(spec, 120);
        const auto expected = ds::oracle::sequential_execute_block(block, state);
        for (unsigned w : {1u, 3u, 8u}) {
          const auto out = parallel(block, state, w, 200);
          ASSERT_TRUE(out.same_results(expected))
              << wl::kind_name(kind) << ' ' << wl::mode_name(mode) << " seed " << seed << " workers " << w;
          EXPECT_LE(out.stats.max_commit_reexecutions_per_txn, 1u);
          EXPECT_EQ(out.stats.hook_traversals, 0u);
        }
        EXPECT_TRUE(ds::execute_sequential(block, state).same_results(expected));
      }
    }
  }
}

TEST(Executor, CounterUnderflowReexecutesAtMostOnce) {
  std::uint64_t total = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto spec = spec_of(wl::Kind::Cnt, seed);
    spec.n = 1;
    const auto state = wl::seed_state(spec);
    const auto block = wl::generate(spec, 200);
    const auto out = parallel(block, state, 8, 2000);
    ASSERT_TRUE(out.same_results(ds::oracle::sequential_execute_block(block, state))) << seed;
    EXPECT_LE(out.stats.max_commit_reexecutions_per_txn, 1u);
    EXPECT_EQ(out.stats.hook_traversals, 0u);
    total += out.stats.commit_reexecutions;
  }
  RecordProperty("commit_reexecutions", std::to_string(total));
}

TEST(Executor, SingleWorkerNeverMispredicts) {
  auto spec = spec_of(wl::Kind::Cnt, 4);
  spec.n = 1;
  const auto state = wl::seed_state(spec);
  const auto block = wl::generate(spec, 300);
  const auto out = parallel(block, state, 1);
  EXPECT_EQ(out.stats.commit_reexecutions, 0u);
  EXPECT_EQ(out.stats.aborts, 0u);
  EXPECT_TRUE(out.same_results(ds::oracle::sequential_execute_block(block, state)));
}

TEST(Executor, ResultsIndependentOfWorkers) {
  auto spec = spec_of(wl::Kind::Reveal, 9);
  const auto state = wl::seed_state(spec);
  const auto block = wl::generate(spec, 300);
  const auto one = parallel(block, state, 1);
  for (unsigned w : {2u, 4u, 8u}) {
    const auto out = parallel(block, state, w, 500);
    EXPECT_EQ(ds::hash_outputs(out.outputs), ds::hash_outputs(one.outputs)) << w;
    EXPECT_EQ(out.committed_deferred, one.committed_deferred);
  }
}

TEST(Executor, EventLogRecordsCommits) {
  auto spec = spec_of(wl::Kind::NoOp, 1);
  const auto state = wl::seed_state(spec);
  const auto block = wl::generate(spec, 10);
  std::ostringstream log;
  ds::EventLog events(log);
  ds::ExecutorOptions options;
  options.workers = 2;
  options.events = &events;
  ds::execute_block(block, state, options);
  std::istringstream in(log.str());
  std::string line;
  int commits = 0;
  while (std::getline(in, line)) {
    if (line.rfind("committed,", 0) == 0) ++commits;
  }
  EXPECT_EQ(commits, 10);
}

TEST(Executor, StateEvolvesAcrossBlocks) {
  auto spec = spec_of(wl::Kind::NftMint, 2);
  auto state = wl::seed_state(spec);
  for (std::uint64_t b = 0; b < 3; ++b) {
    const auto block = wl::generate(spec, 50, b);
    const auto out = parallel(block, state, 4);
    const auto expected = ds::oracle::sequential_execute_block(block, state);
    ASSERT_TRUE(out.same_results(expected)) << b;
    state = ds::apply_outputs(state, out.outputs);
  }
  EXPECT_EQ(state.get_deferred_base(wl::shared_counter_id()), 150u);
}

TEST(FoldDeltaSet, UsesExactBases) {
  const auto id = ds::DeferredId::pre_block(0);
  ds::CompressedDelta d = ds::identity_delta(id, ds::Bounds{0, 10});
  d.sum = 3;
  d.history.max_achieved = 3;
  ds::DeltaSet set{{id, d}, {ds::DeferredId{1, 0}, ds::DerivedSnapshot{id, 3, ds::FormatterSpec{"#", ""}}}};
  auto lookup = [](std::uint64_t v) {
    return [v](const ds::DeferredId&) { return std::optional<ds::CommittedBaseTable::Entry>({v, ds::Bounds{0, 10}}); };
  };
  const auto ok = ds::fold_delta_set(set, lookup(4));
  ASSERT_TRUE(ok.has_value());
  EXPECT_EQ(std::get<std::uint64_t>((*ok)[0].second), 7u);
  EXPECT_EQ(std::get<ds::Bytes>((*ok)[1].second), ds::to_bytes("#7"));
  EXPECT_FALSE(ds::fold_delta_set(set, lookup(8)).has_value());
}
