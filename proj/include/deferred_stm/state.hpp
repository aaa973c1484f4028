#pragma once

// Pre-block base state and application of finalized write-sets.

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "deferred_stm/rng.hpp"
#include "deferred_stm/types.hpp"

namespace deferred_stm {

using StateKey = Bytes;

/// A value in a write-set. Placeholders are tracked by offset rather than by
/// scanning, since ordinary bytes may coincide with the placeholder tag.
struct WriteValue {
  Bytes bytes;
  std::vector<std::uint32_t> placeholders;

  bool materialized() const { return placeholders.empty(); }
  friend bool operator==(const WriteValue&, const WriteValue&) = default;
};

using WriteSet = std::vector<std::pair<StateKey, WriteValue>>;

/// Final value of a deferred object: a counter or a derived string.
using DeferredValue = std::variant<std::uint64_t, Bytes>;

struct DeferredBase {
  std::uint64_t value = 0;
  Bounds bounds;
  friend bool operator==(const DeferredBase&, const DeferredBase&) = default;
};

class BaseState {
 public:
  BaseState() = default;

  void put(StateKey key, Bytes value) { entries_[std::move(key)] = std::move(value); }
  void put_deferred(DeferredId id, std::uint64_t value, Bounds bounds = {}) {
    deferred_[id] = DeferredBase{value, bounds};
  }

  const Bytes* find(const StateKey& key) const {
    auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::optional<Bytes> get(const StateKey& key) const {
    if (const Bytes* v = find(key)) return *v;
    return std::nullopt;
  }

  std::optional<std::uint64_t> get_deferred_base(const DeferredId& id) const {
    auto it = deferred_.find(id);
    if (it == deferred_.end()) return std::nullopt;
    return it->second.value;
  }

  std::optional<Bounds> get_deferred_bounds(const DeferredId& id) const {
    auto it = deferred_.find(id);
    if (it == deferred_.end()) return std::nullopt;
    return it->second.bounds;
  }

  const std::map<StateKey, Bytes>& entries() const { return entries_; }
  const std::map<DeferredId, DeferredBase>& deferred() const { return deferred_; }

  std::uint64_t hash() const {
    Fnv1a h;
    h.update_u64(entries_.size());
    for (const auto& [k, v] : entries_) {
      h.update(k);
      h.update(v);
    }
    h.update_u64(deferred_.size());
    for (const auto& [id, base] : deferred_) {
      h.update_u64(id.creator);
      h.update_u64(id.local_seq);
      h.update_u64(base.value);
      h.update_u64(base.bounds.lower);
      h.update_u64(base.bounds.upper);
    }
    return h.digest();
  }

  friend bool operator==(const BaseState&, const BaseState&) = default;

 private:
  std::map<StateKey, Bytes> entries_;
  std::map<DeferredId, DeferredBase> deferred_;
};

/// Folds finalized outputs into a new state, left to right. Each output
/// exposes `write_set` and `deferred_writes` (pairs of id and final value).
/// Counter values update (or create) the deferred table; derived strings are
/// not part of the persistent state.
template <typename Outputs>
BaseState apply_outputs(const BaseState& state, const Outputs& outputs) {
  BaseState next = state;
  for (const auto& out : outputs) {
    for (const auto& [key, value] : out.write_set) {
      if (!value.materialized()) {
        throw Error(ErrorCode::PlaceholderInOutput, "write-set value still carries a placeholder");
      }
      next.put(key, value.bytes);
    }
    for (const auto& [id, value] : out.deferred_writes) {
      if (const auto* counter = std::get_if<std::uint64_t>(&value)) {
        Bounds bounds = next.get_deferred_bounds(id).value_or(Bounds{});
        next.put_deferred(id, *counter, bounds);
      }
    }
  }
  return next;
}

// Account seeding.
inline constexpr std::uint8_t kAccountBalancePrefix = 0x01;
inline constexpr std::uint64_t kSeedBalanceFloor = 1'000'000'000'000ULL;

inline StateKey account_key(std::uint64_t account) {
  StateKey key;
  key.reserve(9);
  key.push_back(kAccountBalancePrefix);
  put_be64(key, account);
  return key;
}

inline std::uint64_t seeded_balance(std::uint64_t seed, std::uint64_t account) {
  return kSeedBalanceFloor + mix_seed(seed, account) % 1'000'000ULL;
}

/// Deterministic accounts 0..num_accounts-1 with 8-byte big-endian balances.
inline BaseState seed_accounts(std::uint64_t seed, std::uint64_t num_accounts) {
  BaseState state;
  for (std::uint64_t a = 0; a < num_accounts; ++a) state.put(account_key(a), be64(seeded_balance(seed, a)));
  return state;
}

}  // namespace deferred_stm
