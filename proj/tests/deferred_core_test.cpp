#include <gtest/gtest.h>

#include "deferred_stm/deferred_stm.hpp"
#include "support.hpp"

namespace ds = deferred_stm;
namespace dt = deferred_stm::testing;

namespace {

const ds::Bounds kPercent{0, 100};

ds::DeferredLog percent_log() {
  return ds::DeferredLog{ds::DeferredId::pre_block(0),
                         kPercent,
                         {ds::InitNone{}, ds::Update{3, true}, ds::Update{5, true}, ds::Update{72, false},
                          ds::Update{90, false}, ds::Update{2, true}}};
}

ds::CompressedDelta delta(ds::Wide sum, ds::Wide max, ds::Wide min, ds::Bounds bounds = kPercent) {
  ds::CompressedDelta d;
  d.sum = sum;
  d.history.max_achieved = max;
  d.history.min_achieved = min;
  d.bounds = bounds;
  return d;
}

template <typename F>
ds::ErrorCode error_of(F&& f) {
  try {
    f();
  } catch (const ds::Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ds::ErrorCode::MalformedLog;
}

}  // namespace

TEST(CompressLog, PercentCounterExample) {
  const auto d = std::get<ds::CompressedDelta>(ds::compress_log(percent_log()));
  EXPECT_EQ(d.sum, 10);
  EXPECT_EQ(d.history.max_achieved, 10);
  EXPECT_EQ(d.history.min_achieved, 0);
  ASSERT_TRUE(d.history.min_overflow.has_value());
  EXPECT_EQ(*d.history.min_overflow, 80);
  EXPECT_FALSE(d.history.max_underflow.has_value());
  EXPECT_TRUE(d.history.well_formed());
}

TEST(CompressLog, PercentCounterChecksMatchReplay) {
  const auto log = percent_log();
  const auto d = std::get<ds::CompressedDelta>(ds::compress_log(log));
  for (ds::Wide b = -2; b <= 102; ++b) {
    const bool checks = b + 10 <= 100 && b + 80 > 100 && b >= 0;
    EXPECT_EQ(ds::history_holds(d, b), checks) << static_cast<long>(b);
    EXPECT_EQ(dt::apply_wide(d, b), dt::replay_counter_log(log, b)) << static_cast<long>(b);
  }
}

TEST(CompressLog, InitValueIsExact) {
  ds::DeferredLog log{ds::DeferredId::pre_block(0), {}, {ds::InitValue{7}}};
  EXPECT_EQ(std::get<ds::ValueDelta>(ds::compress_log(log)).value, 7u);
}

TEST(CompressLog, ZeroUpdate) {
  ds::DeferredLog log{ds::DeferredId::pre_block(0), {}, {ds::InitNone{}, ds::Update{0, true}}};
  const auto d = std::get<ds::CompressedDelta>(ds::compress_log(log));
  EXPECT_EQ(d.sum, 0);
  EXPECT_EQ(d.history, ds::HistoryConstraints{});
}

TEST(CompressLog, RevealedPinsValue) {
  ds::DeferredLog log{ds::DeferredId::pre_block(0),
                      kPercent,
                      {ds::InitNone{}, ds::Update{4, true}, ds::Revealed{30}, ds::Update{-5, true},
                       ds::Update{-50, false}}};
  EXPECT_EQ(std::get<ds::ValueDelta>(ds::compress_log(log)).value, 25u);
}

TEST(CompressLog, MalformedLogs) {
  ds::DeferredLog empty{ds::DeferredId::pre_block(0), {}, {}};
  EXPECT_EQ(error_of([&] { ds::compress_log(empty); }), ds::ErrorCode::MalformedLog);
  ds::DeferredLog no_init{ds::DeferredId::pre_block(0), {}, {ds::Update{1, true}}};
  EXPECT_EQ(error_of([&] { ds::compress_log(no_init); }), ds::ErrorCode::MalformedLog);
  ds::DeferredLog two_inits{ds::DeferredId::pre_block(0), {}, {ds::InitNone{}, ds::InitValue{1}}};
  EXPECT_EQ(error_of([&] { ds::compress_log(two_inits); }), ds::ErrorCode::MalformedLog);
}

TEST(ApplyDelta, PercentCounterBases) {
  const auto d = std::get<ds::CompressedDelta>(ds::compress_log(percent_log()));
  EXPECT_EQ(ds::apply_delta(d, 50), 60u);
  EXPECT_FALSE(ds::apply_delta(d, 5).has_value());
  EXPECT_FALSE(dt::replay_counter_log(percent_log(), 5).has_value());
}

TEST(ApplyDelta, Identity) {
  EXPECT_EQ(ds::apply_delta(ds::identity_delta(ds::DeferredId::pre_block(0)), 7), 7u);
}

TEST(ApplyDelta, UnderflowRecorded) {
  ds::DeferredLog log{ds::DeferredId::pre_block(0), ds::Bounds{0, 10}, {ds::InitNone{}, ds::Update{-7, false}}};
  const auto d = std::get<ds::CompressedDelta>(ds::compress_log(log));
  EXPECT_EQ(ds::apply_delta(d, 6), 6u);
  EXPECT_FALSE(ds::apply_delta(d, 7).has_value());
}

TEST(MergeDeltas, IdentityIsNeutral) {
  ds::SplitMix64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto d = dt::random_delta(rng, kPercent);
    auto merged = ds::merge_deltas(ds::identity_delta(d.source, d.bounds), d);
    EXPECT_EQ(merged, d);
  }
}

TEST(MergeDeltas, ExampleSums) {
  const auto merged = ds::merge_deltas(delta(20, 20, 0), delta(-10, 0, -10));
  EXPECT_EQ(merged.sum, 10);
  EXPECT_EQ(merged.history.max_achieved, 20);
  EXPECT_EQ(merged.history.min_achieved, 0);
  for (ds::Wide b = -5; b <= 105; ++b) {
    auto first = dt::apply_wide(delta(20, 20, 0), b);
    auto seq = first ? dt::apply_wide(delta(-10, 0, -10), *first) : std::nullopt;
    EXPECT_EQ(dt::apply_wide(merged, b), seq) << static_cast<long>(b);
  }
}

TEST(MergeDeltas, ViolationsSweep) {
  ds::SplitMix64 rng(2);
  const ds::Bounds bounds{0, 50};
  for (int t = 0; t < 500; ++t) {
    const auto a = dt::random_delta(rng, bounds);
    const auto b = dt::random_delta(rng, bounds);
    const auto merged = ds::merge_deltas(a, b);
    for (ds::Wide base = -2; base <= 52; ++base) {
      auto first = dt::apply_wide(a, base);
      auto seq = first ? dt::apply_wide(b, *first) : std::nullopt;
      ASSERT_EQ(dt::apply_wide(merged, base), seq);
    }
  }
}

TEST(MergeDeltas, Associative) {
  ds::SplitMix64 rng(3);
  for (int t = 0; t < 300; ++t) {
    const auto bounds = dt::random_bounds(rng, 60);
    const auto a = dt::random_delta(rng, bounds);
    const auto b = dt::random_delta(rng, bounds);
    const auto c = dt::random_delta(rng, bounds);
    const auto left = ds::merge_deltas(ds::merge_deltas(a, b), c);
    const auto right = ds::merge_deltas(a, ds::merge_deltas(b, c));
    for (ds::Wide base = ds::Wide(bounds.lower) - 2; base <= ds::Wide(bounds.upper) + 2; ++base) {
      ASSERT_EQ(dt::apply_wide(left, base), dt::apply_wide(right, base));
    }
  }
}

TEST(MergeDeltas, BoundsMismatch) {
  EXPECT_EQ(error_of([] { ds::merge_deltas(delta(1, 1, 0), delta(1, 1, 0, ds::Bounds{0, 5})); }),
            ds::ErrorCode::BoundsMismatch);
}

TEST(CompressLog, FuzzedSoundness) {
  ds::SplitMix64 rng(4);
  for (int t = 0; t < 500; ++t) {
    const auto bounds = dt::random_bounds(rng);
    const auto log = dt::random_counter_log(rng, bounds, dt::random_length(rng, 200));
    const auto d = std::get<ds::CompressedDelta>(ds::compress_log(log));
    for (ds::Wide b = ds::Wide(bounds.lower) - 2; b <= ds::Wide(bounds.upper) + 2; ++b) {
      ASSERT_EQ(dt::apply_wide(d, b), dt::replay_counter_log(log, b));
    }
  }
}

TEST(CompressLog, FuzzedKnownValues) {
  ds::SplitMix64 rng(5);
  for (int t = 0; t < 500; ++t) {
    const auto log = dt::random_known_log(rng, dt::random_bounds(rng), dt::random_length(rng, 200));
    EXPECT_EQ(ds::Wide(std::get<ds::ValueDelta>(ds::compress_log(log)).value), dt::replay_known_log(log));
  }
}

TEST(ResolveSnapshot, ArxivToken) {
  ds::DerivedSnapshot snap{ds::DeferredId::pre_block(0), 0, ds::FormatterSpec{"arXiv #", ""}};
  EXPECT_EQ(ds::resolve_snapshot(snap, 2024), ds::to_bytes("arXiv #2024"));
}

TEST(ResolveSnapshot, PrefixSumAdded) {
  ds::DerivedSnapshot snap{ds::DeferredId::pre_block(0), 1, ds::FormatterSpec{"", ""}};
  EXPECT_EQ(ds::resolve_snapshot(snap, 0), ds::to_bytes("1"));
}

TEST(ResolveSnapshot, LengthExceeded) {
  ds::DerivedSnapshot snap{ds::DeferredId::pre_block(0), 0, ds::FormatterSpec{std::string(250, 'x'), ""}};
  EXPECT_EQ(error_of([&] { ds::resolve_snapshot(snap, 1'234'567); }), ds::ErrorCode::LengthExceeded);
  EXPECT_EQ(ds::resolve_snapshot(snap, 123'456).size(), 256u);
}
