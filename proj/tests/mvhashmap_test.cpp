#include <gtest/gtest.h>

#include <map>
#include <thread>

#include "deferred_stm/deferred_stm.hpp"
#include "support.hpp"

namespace ds = deferred_stm;
namespace dt = deferred_stm::testing;

namespace {

ds::WriteValue val(std::uint64_t v) { return ds::WriteValue{ds::be64(v), {}}; }

ds::WriteSet writes(std::initializer_list<std::pair<std::uint64_t, std::uint64_t>> kv) {
  ds::WriteSet out;
  for (auto [k, v] : kv) out.emplace_back(ds::account_key(k), val(v));
  return out;
}

ds::CompressedDelta add(ds::DeferredId source, std::int64_t x, ds::Bounds bounds = {}) {
  ds::CompressedDelta d = ds::identity_delta(source, bounds);
  d.sum = x;
  d.history.max_achieved = std::max<std::int64_t>(x, 0);
  d.history.min_achieved = std::min<std::int64_t>(x, 0);
  return d;
}

std::uint64_t counter(const ds::DelayedReadResult& r) {
  return std::get<std::uint64_t>(std::get<ds::DeferredValue>(r));
}

}  // namespace

TEST(MVData, FirstWriteIsNewRewriteIsNot) {
  ds::MVData data(8);
  const auto k = ds::account_key(1);
  EXPECT_TRUE(data.data_write(k, 3, 0, val(1)));
  EXPECT_FALSE(data.data_write(k, 3, 2, val(2)));
}

TEST(MVData, NoWritersIsStorageMiss) {
  ds::MVData data(8);
  EXPECT_TRUE(std::holds_alternative<ds::StorageMiss>(data.data_read(ds::account_key(1), 5)));
}

TEST(MVData, ReadsHighestWriterBelowReader) {
  ds::MVData data(8);
  const auto k = ds::account_key(1);
  data.record_writes(2, 0, writes({{1, 20}}));
  data.record_writes(5, 1, writes({{1, 50}}));
  auto r = std::get<ds::DataValue>(data.data_read(k, 6));
  EXPECT_EQ(r.version, ds::Version::txn(5, 1));
  EXPECT_EQ(r.value->bytes, ds::be64(50));
  r = std::get<ds::DataValue>(data.data_read(k, 5));
  EXPECT_EQ(r.version, ds::Version::txn(2, 0));
  EXPECT_EQ(r.value->bytes, ds::be64(20));
  EXPECT_TRUE(std::holds_alternative<ds::StorageMiss>(data.data_read(k, 2)));
}

TEST(MVData, EstimateBlocksReaders) {
  ds::MVData data(8);
  data.record_writes(2, 0, writes({{1, 20}}));
  data.mark_estimates(2);
  data.mark_estimates(2);
  EXPECT_EQ(std::get<ds::Dependency>(data.data_read(ds::account_key(1), 4)).blocking, 2u);
  data.record_writes(2, 1, writes({{1, 21}}));
  EXPECT_EQ(std::get<ds::DataValue>(data.data_read(ds::account_key(1), 4)).version, ds::Version::txn(2, 1));
}

TEST(MVData, RecordWritesDropsStaleKeys) {
  ds::MVData data(8);
  EXPECT_TRUE(data.record_writes(1, 0, writes({{1, 1}, {2, 2}})));
  EXPECT_FALSE(data.record_writes(1, 1, writes({{1, 3}})));
  EXPECT_TRUE(std::holds_alternative<ds::StorageMiss>(data.data_read(ds::account_key(2), 4)));
  EXPECT_TRUE(data.record_writes(1, 2, writes({{1, 3}, {2, 4}})));
}

TEST(MVData, PredecessorQueryFuzz) {
  ds::SplitMix64 rng(9);
  for (int round = 0; round < 50; ++round) {
    const ds::TxnIndex n = 40;
    ds::MVData data(n);
    std::map<std::uint64_t, std::map<ds::TxnIndex, std::uint64_t>> model;
    for (int w = 0; w < 100; ++w) {
      const auto txn = static_cast<ds::TxnIndex>(rng.below(n));
      const std::uint64_t key = rng.below(5);
      const std::uint64_t v = rng.next();
      data.data_write(ds::account_key(key), txn, 0, val(v));
      model[key][txn] = v;
    }
    for (std::uint64_t key = 0; key < 5; ++key) {
      for (ds::TxnIndex reader = 0; reader <= n; ++reader) {
        const auto r = data.data_read(ds::account_key(key), reader);
        auto& m = model[key];
        auto it = m.lower_bound(reader);
        if (it == m.begin()) {
          EXPECT_TRUE(std::holds_alternative<ds::StorageMiss>(r));
        } else {
          --it;
          EXPECT_EQ(std::get<ds::DataValue>(r).value->bytes, ds::be64(it->second));
        }
      }
    }
  }
}

TEST(MVDelayedFields, DeltaChainTraversal) {
  ds::BaseState storage;
  const auto id0 = ds::DeferredId::pre_block(0);
  storage.put_deferred(id0, 5);
  ds::MVDelayedFields fields(storage, 8);
  fields.delayed_record(1, {{id0, add(id0, 20)}});
  fields.delayed_record(2, {{id0, add(id0, -10)}});
  fields.delayed_record(3, {{id0, add(id0, 5)}});
  EXPECT_EQ(counter(fields.delayed_read(id0, 4)), 20u);
}

TEST(MVDelayedFields, RedirectedTraversal) {
  ds::BaseState storage;
  const ds::DeferredId id1{2, 1};
  const ds::DeferredId id2{2, 0};
  ds::MVDelayedFields fields(storage, 8);
  fields.delayed_record(2, {{id2, ds::ValueDelta{20}}});
  fields.delayed_record(3, {{id2, add(id2, 5)}});
  fields.delayed_record(4, {{id1, add(id2, 5)}});
  EXPECT_EQ(counter(fields.delayed_read(id1, 5)), 30u);
  EXPECT_EQ(counter(fields.delayed_read(id2, 5)), 25u);
}

TEST(MVDelayedFields, NoEntriesUsesStorage) {
  ds::BaseState storage;
  const auto id = ds::DeferredId::pre_block(3);
  storage.put_deferred(id, 5);
  ds::MVDelayedFields fields(storage, 4);
  EXPECT_EQ(counter(fields.delayed_read(id, 2)), 5u);
  fields.delayed_record(2, {{id, add(id, 1)}});
  EXPECT_EQ(counter(fields.delayed_read(id, 2)), 5u);
  EXPECT_EQ(counter(fields.delayed_read(id, 3)), 6u);
}

TEST(MVDelayedFields, MissingObjectReportsCreator) {
  ds::BaseState storage;
  ds::MVDelayedFields fields(storage, 4);
  EXPECT_EQ(std::get<ds::NotFound>(fields.delayed_read(ds::DeferredId{1, 0}, 3)).creator, 1u);
}

TEST(MVDelayedFields, HistoryFailureIsSpeculative) {
  ds::BaseState storage;
  const auto id = ds::DeferredId::pre_block(0);
  storage.put_deferred(id, 5, ds::Bounds{0, 10});
  ds::MVDelayedFields fields(storage, 4);
  fields.delayed_record(1, {{id, add(id, 8, ds::Bounds{0, 10})}});
  EXPECT_TRUE(std::holds_alternative<ds::SpeculativeFailure>(fields.delayed_read(id, 2)));
}

TEST(MVDelayedFields, EstimatesAreLenientUntilDeltaChanges) {
  ds::BaseState storage;
  const auto id = ds::DeferredId::pre_block(0);
  storage.put_deferred(id, 5);
  ds::MVDelayedFields fields(storage, 4);
  fields.delayed_record(1, {{id, add(id, 3)}});
  fields.mark_estimates(1);
  fields.mark_estimates(1);
  EXPECT_FALSE(fields.strict_estimates(id));
  EXPECT_EQ(counter(fields.delayed_read(id, 2)), 8u);

  fields.delayed_record(1, {{id, add(id, 3)}});
  EXPECT_FALSE(fields.strict_estimates(id));

  fields.mark_estimates(1);
  fields.delayed_record(1, {{id, add(id, 4)}});
  EXPECT_TRUE(fields.strict_estimates(id));
  EXPECT_EQ(counter(fields.delayed_read(id, 2)), 9u);
  fields.mark_estimates(1);
  EXPECT_EQ(std::get<ds::Dependency>(fields.delayed_read(id, 2)).blocking, 1u);
}

TEST(MVDelayedFields, NewOrDroppedIdTurnsStrict) {
  ds::BaseState storage;
  const auto a = ds::DeferredId::pre_block(0);
  const auto b = ds::DeferredId::pre_block(1);
  storage.put_deferred(a, 0);
  storage.put_deferred(b, 0);
  ds::MVDelayedFields fields(storage, 4);
  fields.delayed_record(1, {{a, add(a, 1)}});
  EXPECT_FALSE(fields.strict_estimates(a));
  fields.delayed_record(1, {{b, add(b, 1)}});
  EXPECT_TRUE(fields.strict_estimates(a));
  EXPECT_TRUE(fields.strict_estimates(b));
}

TEST(MVDelayedFields, LenientNeverReturnsDependency) {
  ds::SplitMix64 rng(12);
  ds::BaseState storage;
  const auto id = ds::DeferredId::pre_block(0);
  storage.put_deferred(id, 1000);
  const ds::TxnIndex n = 30;
  ds::MVDelayedFields fields(storage, n);
  for (ds::TxnIndex i = 0; i < n; ++i) fields.delayed_record(i, {{id, add(id, static_cast<int>(rng.below(5)))}});
  for (int step = 0; step < 200; ++step) {
    fields.mark_estimates(static_cast<ds::TxnIndex>(rng.below(n)));
    const auto r = fields.delayed_read(id, static_cast<ds::TxnIndex>(rng.below(n + 1)));
    ASSERT_FALSE(std::holds_alternative<ds::Dependency>(r));
  }
}

TEST(MVDelayedFields, CommittedValueStopsTraversal) {
  ds::BaseState storage;
  const auto id = ds::DeferredId::pre_block(0);
  storage.put_deferred(id, 0);
  ds::MVDelayedFields fields(storage, 12);
  for (ds::TxnIndex i = 0; i < 10; ++i) fields.delayed_record(i, {{id, add(id, 1)}});
  fields.delayed_set_committed(id, 4, std::uint64_t{17});

  ds::TraversalStats stats;
  EXPECT_EQ(counter(fields.delayed_read(id, 5, &stats)), 17u);
  EXPECT_EQ(stats.deltas_applied, 0u);
  EXPECT_EQ(stats.entries_visited, 1u);

  stats = {};
  EXPECT_EQ(counter(fields.delayed_read(id, 10, &stats)), 22u);
  EXPECT_EQ(stats.entries_visited, 6u);
}

TEST(MVDelayedFields, CommitAllDropsUntouchedIds) {
  ds::BaseState storage;
  const auto a = ds::DeferredId::pre_block(0);
  const auto b = ds::DeferredId::pre_block(1);
  storage.put_deferred(a, 0);
  storage.put_deferred(b, 0);
  ds::MVDelayedFields fields(storage, 4);
  fields.delayed_record(1, {{a, add(a, 1)}, {b, add(b, 1)}});
  fields.commit_all(1, {{a, ds::DeferredValue{std::uint64_t{9}}}});
  EXPECT_EQ(counter(fields.delayed_read(a, 2)), 9u);
  EXPECT_EQ(counter(fields.delayed_read(b, 2)), 0u);
}

TEST(MVDelayedFields, SnapshotRendersSource) {
  ds::BaseState storage;
  const auto supply = ds::DeferredId::pre_block(0);
  storage.put_deferred(supply, 2023);
  ds::MVDelayedFields fields(storage, 4);
  const ds::DeferredId name{1, 0};
  fields.delayed_record(1, {{supply, add(supply, 1)},
                            {name, ds::DerivedSnapshot{supply, 1, ds::FormatterSpec{"arXiv #", ""}}}});
  const auto r = fields.delayed_read(name, 2);
  EXPECT_EQ(std::get<ds::Bytes>(std::get<ds::DeferredValue>(r)), ds::to_bytes("arXiv #2024"));
}

TEST(MVDelayedFields, SingleThreadFoldMatchesOracle) {
  ds::SplitMix64 rng(21);
  for (int round = 0; round < 100; ++round) {
    const ds::Bounds bounds{0, 500};
    const auto id = ds::DeferredId::pre_block(0);
    ds::BaseState storage;
    storage.put_deferred(id, 250, bounds);
    const ds::TxnIndex n = 20;
    ds::MVDelayedFields fields(storage, n);
    std::vector<std::optional<ds::CompressedDelta>> deltas(n);
    for (ds::TxnIndex i = 0; i < n; ++i) {
      if (rng.chance(1, 3)) continue;
      deltas[i] = dt::random_delta(rng, bounds, 8);
      deltas[i]->source = id;
      fields.delayed_record(i, {{id, *deltas[i]}});
    }
    for (ds::TxnIndex reader = 0; reader <= n; ++reader) {
      std::optional<ds::Wide> v = 250;
      for (ds::TxnIndex i = 0; i < reader && v; ++i) {
        if (deltas[i]) v = dt::apply_wide(*deltas[i], *v);
      }
      const auto r = fields.delayed_read(id, reader);
      if (v) {
        ASSERT_EQ(ds::Wide(counter(r)), *v);
      } else {
        ASSERT_TRUE(std::holds_alternative<ds::SpeculativeFailure>(r));
      }
    }
  }
}

TEST(MVDelayedFields, ConcurrentReadersAndWriters) {
  ds::BaseState storage;
  const auto id = ds::DeferredId::pre_block(0);
  storage.put_deferred(id, 0);
  const ds::TxnIndex n = 64;
  ds::MVDelayedFields fields(storage, n);
  std::vector<std::thread> threads;
  for (unsigned t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (ds::TxnIndex i = t; i < n; i += 4) fields.delayed_record(i, {{id, add(id, 1)}});
      for (ds::TxnIndex r = 0; r <= n; ++r) {
        const auto v = fields.delayed_read(id, r);
        ASSERT_LE(counter(v), r);
      }
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(counter(fields.delayed_read(id, n)), n);
}
