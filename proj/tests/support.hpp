#pragma once

// Test-only helpers: an entry-by-entry counter log replayer and random log
// generators.

#include <cstdint>
#include <optional>
#include <vector>

#include "deferred_stm/deferred_stm.hpp"

namespace deferred_stm::testing {

/// Entry-by-entry replay of an InitNone counter log from `base`. nullopt when
/// the base is outside the bounds or some entry's outcome differs from its
/// recorded flag.
inline std::optional<Wide> replay_counter_log(const DeferredLog& log, Wide base) {
  if (!log.bounds.contains(base)) return std::nullopt;
  Wide v = base;
  for (std::size_t i = 1; i < log.entries.size(); ++i) {
    const auto& u = std::get<Update>(log.entries[i]);
    const bool ok = log.bounds.contains(v + u.delta);
    if (ok != u.predicted) return std::nullopt;
    if (ok) v += u.delta;
  }
  return v;
}

/// Exact replay of a log whose value is known (InitValue or a Revealed entry).
inline Wide replay_known_log(const DeferredLog& log) {
  Wide v = 0;
  for (const auto& e : log.entries) {
    if (const auto* init = std::get_if<InitValue>(&e)) v = init->value;
    if (const auto* r = std::get_if<Revealed>(&e)) v = r->value;
    if (const auto* u = std::get_if<Update>(&e); u && u->predicted) v += u->delta;
  }
  return v;
}

/// apply_delta extended to bases outside the u64 domain.
inline std::optional<Wide> apply_wide(const CompressedDelta& d, Wide base) {
  if (!history_holds(d, base)) return std::nullopt;
  return base + d.sum;
}

inline Bounds random_bounds(SplitMix64& rng, std::uint64_t max_width = 200) {
  const std::uint64_t lower = rng.chance(1, 3) ? 0 : rng.below(50);
  return Bounds{lower, lower + rng.below(max_width + 1)};
}

inline std::size_t random_length(SplitMix64& rng, std::size_t max_len = 1000) {
  switch (rng.below(4)) {
    case 0:
      return rng.below(4);
    case 1:
      return rng.below(20);
    case 2:
      return rng.below(100);
    default:
      return rng.below(max_len + 1);
  }
}

/// Uninitialized counter log. Flags are the outcomes seen from a hidden base,
/// occasionally flipped so that some logs fit no base at all.
inline DeferredLog random_counter_log(SplitMix64& rng, const Bounds& bounds, std::size_t len,
                                      DeferredId id = DeferredId::pre_block(0)) {
  DeferredLog log{id, bounds, {InitNone{}}};
  const std::uint64_t width = bounds.upper - bounds.lower;
  Wide v = Wide(bounds.lower) + Wide(rng.below(width + 1));
  const std::int64_t span = static_cast<std::int64_t>(width / 3 + 3);
  const bool flips = rng.chance(1, 4);
  for (std::size_t i = 0; i < len; ++i) {
    std::int64_t x = static_cast<std::int64_t>(rng.below(2 * span + 1)) - span;
    if (rng.chance(1, 20)) x = 0;
    bool ok = bounds.contains(v + x);
    if (ok) v += x;
    if (flips && rng.chance(1, 50)) ok = !ok;
    log.entries.push_back(Update{x, ok});
  }
  return log;
}

/// Counter log whose value is known: starts from InitValue or carries a
/// Revealed entry somewhere.
inline DeferredLog random_known_log(SplitMix64& rng, const Bounds& bounds, std::size_t len) {
  DeferredLog log{DeferredId::pre_block(0), bounds, {}};
  const std::uint64_t width = bounds.upper - bounds.lower;
  Wide v = Wide(bounds.lower) + Wide(rng.below(width + 1));
  const bool from_value = rng.chance(1, 2);
  log.entries.push_back(from_value ? LogEntry{InitValue{static_cast<std::uint64_t>(v)}} : LogEntry{InitNone{}});
  const std::size_t reveal_at = from_value ? len + 1 : rng.below(len + 1);
  const std::int64_t span = static_cast<std::int64_t>(width / 3 + 3);
  for (std::size_t i = 0; i < len; ++i) {
    if (i == reveal_at) log.entries.push_back(Revealed{static_cast<std::uint64_t>(v)});
    std::int64_t x = static_cast<std::int64_t>(rng.below(2 * span + 1)) - span;
    const bool ok = bounds.contains(v + x);
    if (ok) v += x;
    log.entries.push_back(Update{x, ok});
  }
  if (!from_value && reveal_at == len) log.entries.push_back(Revealed{static_cast<std::uint64_t>(v)});
  return log;
}

inline CompressedDelta random_delta(SplitMix64& rng, const Bounds& bounds, std::size_t max_len = 60) {
  return std::get<CompressedDelta>(compress_log(random_counter_log(rng, bounds, random_length(rng, max_len))));
}

}  // namespace deferred_stm::testing
