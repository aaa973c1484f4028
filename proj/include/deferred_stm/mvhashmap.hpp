#pragma once

// Multi-versioned memory: MVData for plain writes and MVDelayedFields for
// deferred-object deltas, with delta traversal and estimate handling.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <unordered_map>
#include <variant>
#include <vector>

#include "deferred_stm/deferred_core.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/types.hpp"

namespace deferred_stm {

/// Origin of a read: pre-block storage or a (transaction, incarnation) write.
struct Version {
  bool storage = true;
  TxnIndex index = 0;
  Incarnation incarnation = 0;

  static Version from_storage() { return {}; }
  static Version txn(TxnIndex i, Incarnation k) { return {false, i, k}; }
  friend bool operator==(const Version&, const Version&) = default;
};

struct Dependency {
  TxnIndex blocking = 0;
  friend bool operator==(const Dependency&, const Dependency&) = default;
};

namespace detail {

/// Concurrent map from K to heap-allocated cells. Cells are never removed
/// during a block, so a pointer returned once stays valid.
template <typename K, typename Cell, typename Hash>
class ShardedCells {
 public:
  Cell* find(const K& key) const {
    const Shard& s = shard(key);
    std::shared_lock lock(s.mutex);
    auto it = s.cells.find(key);
    return it == s.cells.end() ? nullptr : it->second.get();
  }

  Cell& get_or_create(const K& key) {
    Shard& s = shard(key);
    {
      std::shared_lock lock(s.mutex);
      auto it = s.cells.find(key);
      if (it != s.cells.end()) return *it->second;
    }
    std::unique_lock lock(s.mutex);
    auto& slot = s.cells[key];
    if (!slot) slot = std::make_unique<Cell>();
    return *slot;
  }

 private:
  static constexpr std::size_t kShards = 64;
  struct Shard {
    mutable std::shared_mutex mutex;
    std::unordered_map<K, std::unique_ptr<Cell>, Hash> cells;
  };

  Shard& shard(const K& key) { return shards_[Hash{}(key) % kShards]; }
  const Shard& shard(const K& key) const { return shards_[Hash{}(key) % kShards]; }

  std::array<Shard, kShards> shards_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// MVData
// ---------------------------------------------------------------------------

struct DataValue {
  std::shared_ptr<const WriteValue> value;
  Version version;
};

struct StorageMiss {
  friend bool operator==(const StorageMiss&, const StorageMiss&) = default;
};

using DataReadResult = std::variant<DataValue, StorageMiss, Dependency>;

class MVData {
 public:
  explicit MVData(std::size_t num_txns) : last_keys_(num_txns) {}

  /// Records one write. Returns true iff the key was not in the index's
  /// previous write-set.
  bool data_write(const StateKey& key, TxnIndex index, Incarnation incarnation, WriteValue value) {
    Cell& cell = cells_.get_or_create(key);
    std::lock_guard lock(cell.mutex);
    auto [it, inserted] = cell.entries.try_emplace(index);
    it->second = Entry{false, incarnation, std::make_shared<const WriteValue>(std::move(value))};
    return inserted;
  }

  /// Replaces the whole write-set of `index`. Keys of the previous write-set
  /// that are no longer written are removed. Returns whether a new key appeared.
  bool record_writes(TxnIndex index, Incarnation incarnation, const WriteSet& writes) {
    bool wrote_new = false;
    std::vector<StateKey> keys;
    keys.reserve(writes.size());
    for (const auto& [key, value] : writes) {
      wrote_new |= data_write(key, index, incarnation, value);
      keys.push_back(key);
    }
    std::sort(keys.begin(), keys.end());
    for (const auto& old : last_keys_[index]) {
      if (!std::binary_search(keys.begin(), keys.end(), old)) remove(old, index);
    }
    last_keys_[index] = std::move(keys);
    return wrote_new;
  }

  DataReadResult data_read(const StateKey& key, TxnIndex reader) const {
    const Cell* cell = cells_.find(key);
    if (cell == nullptr) return StorageMiss{};
    std::lock_guard lock(cell->mutex);
    auto it = cell->entries.lower_bound(reader);
    if (it == cell->entries.begin()) return StorageMiss{};
    --it;
    if (it->second.estimate) return Dependency{it->first};
    return DataValue{it->second.value, Version::txn(it->first, it->second.incarnation)};
  }

  void mark_estimates(TxnIndex index) {
    for (const auto& key : last_keys_[index]) {
      Cell* cell = cells_.find(key);
      if (cell == nullptr) continue;
      std::lock_guard lock(cell->mutex);
      auto it = cell->entries.find(index);
      if (it != cell->entries.end()) it->second.estimate = true;
    }
  }

  const std::vector<StateKey>& written_keys(TxnIndex index) const { return last_keys_[index]; }

 private:
  struct Entry {
    bool estimate = false;
    Incarnation incarnation = 0;
    std::shared_ptr<const WriteValue> value;
  };
  struct Cell {
    mutable std::mutex mutex;
    std::map<TxnIndex, Entry> entries;
  };

  void remove(const StateKey& key, TxnIndex index) {
    Cell* cell = cells_.find(key);
    if (cell == nullptr) return;
    std::lock_guard lock(cell->mutex);
    cell->entries.erase(index);
  }

  detail::ShardedCells<StateKey, Cell, BytesHash> cells_;
  // Slot i is touched only by the unique owner of transaction i's current
  // incarnation; the scheduler's status transitions order those owners.
  std::vector<std::vector<StateKey>> last_keys_;
};

// ---------------------------------------------------------------------------
// MVDelayedFields
// ---------------------------------------------------------------------------

struct SpeculativeFailure {
  friend bool operator==(const SpeculativeFailure&, const SpeculativeFailure&) = default;
};

/// The id has no entry below the reader and no storage base. The object is
/// created by `creator`, which has not (yet) recorded it.
struct NotFound {
  TxnIndex creator = 0;
  friend bool operator==(const NotFound&, const NotFound&) = default;
};

using DelayedReadResult = std::variant<DeferredValue, Dependency, SpeculativeFailure, NotFound>;

struct TraversalStats {
  std::uint64_t entries_visited = 0;
  std::uint64_t deltas_applied = 0;
};

/// Per-thread count of delayed_read calls, used to check that commit hooks
/// never traverse.
inline thread_local std::uint64_t tls_delayed_traversals = 0;

class MVDelayedFields {
 public:
  MVDelayedFields(const BaseState& storage, std::size_t num_txns)
      : storage_(storage), last_ids_(num_txns), recorded_(num_txns, 0) {}

  /// Replaces the delta-set of `index`. Switches affected ids to strict
  /// estimate handling when a re-execution changes, adds or drops an entry.
  void delayed_record(TxnIndex index, const std::vector<std::pair<DeferredId, DeltaOp>>& delta_set) {
    const bool reexecution = recorded_[index] != 0;
    std::vector<DeferredId> ids;
    ids.reserve(delta_set.size());
    for (const auto& [id, delta] : delta_set) {
      Cell& cell = cells_.get_or_create(id);
      std::lock_guard lock(cell.mutex);
      auto it = cell.entries.find(index);
      if (it == cell.entries.end()) {
        if (reexecution) cell.strict.store(true, std::memory_order_release);
        cell.entries.emplace(index, Entry{EntryKind::Delta, delta, {}});
      } else {
        if (it->second.kind == EntryKind::Committed || !(it->second.delta == delta)) {
          cell.strict.store(true, std::memory_order_release);
        }
        it->second = Entry{EntryKind::Delta, delta, {}};
      }
      ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& old : last_ids_[index]) {
      if (std::binary_search(ids.begin(), ids.end(), old)) continue;
      if (Cell* cell = cells_.find(old)) {
        std::lock_guard lock(cell->mutex);
        cell->entries.erase(index);
        cell->strict.store(true, std::memory_order_release);
      }
    }
    last_ids_[index] = std::move(ids);
    recorded_[index] = 1;
  }

  void mark_estimates(TxnIndex index) {
    for (const auto& id : last_ids_[index]) {
      Cell* cell = cells_.find(id);
      if (cell == nullptr) continue;
      std::lock_guard lock(cell->mutex);
      auto it = cell->entries.find(index);
      if (it != cell->entries.end() && it->second.kind == EntryKind::Delta) it->second.kind = EntryKind::Estimate;
    }
  }

  void delayed_set_committed(const DeferredId& id, TxnIndex index, DeferredValue value) {
    Cell& cell = cells_.get_or_create(id);
    std::lock_guard lock(cell.mutex);
    cell.entries[index] = Entry{EntryKind::Committed, {}, std::move(value)};
  }

  /// Commits the final values of `index`, dropping entries for ids that the
  /// committed output no longer touches.
  void commit_all(TxnIndex index, const std::vector<std::pair<DeferredId, DeferredValue>>& values) {
    std::vector<DeferredId> ids;
    ids.reserve(values.size());
    for (const auto& [id, value] : values) {
      delayed_set_committed(id, index, value);
      ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
    for (const auto& old : last_ids_[index]) {
      if (std::binary_search(ids.begin(), ids.end(), old)) continue;
      if (Cell* cell = cells_.find(old)) {
        std::lock_guard lock(cell->mutex);
        cell->entries.erase(index);
      }
    }
    last_ids_[index] = std::move(ids);
    recorded_[index] = 1;
  }

  bool strict_estimates(const DeferredId& id) const {
    const Cell* cell = cells_.find(id);
    return cell != nullptr && cell->strict.load(std::memory_order_acquire);
  }

  /// Value of `id` as seen by transaction `reader`: the fold of every delta
  /// recorded below the reader onto the nearest known value.
  DelayedReadResult delayed_read(const DeferredId& id, TxnIndex reader, TraversalStats* stats = nullptr) const {
    ++tls_delayed_traversals;
    TraversalStats local;
    TraversalStats& st = stats ? *stats : local;

    struct Stacked {
      DeferredId object;
      CompressedDelta delta;
    };
    std::vector<Stacked> stack;
    DeferredId current = id;
    TxnIndex bound = reader;
    DeferredValue base;

    for (;;) {
      std::optional<std::pair<TxnIndex, Entry>> found;
      bool strict = false;
      if (const Cell* cell = cells_.find(current)) {
        std::lock_guard lock(cell->mutex);
        auto it = cell->entries.lower_bound(bound);
        if (it != cell->entries.begin()) {
          --it;
          found.emplace(it->first, it->second);
        }
        strict = cell->strict.load(std::memory_order_acquire);
      }
      if (!found) {
        auto stored = storage_.get_deferred_base(current);
        if (!stored) return NotFound{current.creator};
        base = *stored;
        break;
      }
      ++st.entries_visited;
      const auto& [j, entry] = *found;
      if (entry.kind == EntryKind::Committed) {
        base = entry.committed;
        break;
      }
      if (entry.kind == EntryKind::Estimate && strict) return Dependency{j};

      if (const auto* v = std::get_if<ValueDelta>(&entry.delta)) {
        base = v->value;
        break;
      }
      if (const auto* c = std::get_if<CompressedDelta>(&entry.delta)) {
        stack.push_back({current, *c});
        current = c->source;
        bound = j;
        continue;
      }
      if (const auto* dv = std::get_if<DerivedValue>(&entry.delta)) {
        base = dv->bytes;
        break;
      }
      const auto& snap = std::get<DerivedSnapshot>(entry.delta);
      auto src = delayed_read(snap.source, j, &st);
      if (!std::holds_alternative<DeferredValue>(src)) return src;
      const auto* src_value = std::get_if<std::uint64_t>(&std::get<DeferredValue>(src));
      if (src_value == nullptr) return SpeculativeFailure{};
      Wide rendered_from = Wide(*src_value) + snap.prefix_sum;
      if (rendered_from < 0) return SpeculativeFailure{};
      base = render_formatter(snap.formatter, rendered_from);
      break;
    }

    if (stack.empty()) return base;
    const auto* counter = std::get_if<std::uint64_t>(&base);
    if (counter == nullptr) return SpeculativeFailure{};
    std::uint64_t value = *counter;

    // Deltas were collected top-down; apply bottom-up, merging runs that
    // belong to the same object.
    std::optional<CompressedDelta> acc;
    DeferredId acc_object;
    for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
      if (acc && it->object == acc_object && acc->bounds == it->delta.bounds) {
        acc = merge_deltas(*acc, it->delta);
        continue;
      }
      if (acc) {
        auto next = apply_delta(*acc, value);
        ++st.deltas_applied;
        if (!next) return SpeculativeFailure{};
        value = *next;
      }
      acc = it->delta;
      acc_object = it->object;
    }
    auto next = apply_delta(*acc, value);
    ++st.deltas_applied;
    if (!next) return SpeculativeFailure{};
    return DeferredValue{*next};
  }

  const std::vector<DeferredId>& recorded_ids(TxnIndex index) const { return last_ids_[index]; }

 private:
  enum class EntryKind : std::uint8_t { Delta, Estimate, Committed };
  struct Entry {
    EntryKind kind = EntryKind::Delta;
    DeltaOp delta;  // for Estimate: the previous delta
    DeferredValue committed;
  };
  struct Cell {
    mutable std::mutex mutex;
    std::map<TxnIndex, Entry> entries;
    std::atomic<bool> strict{false};
  };

  const BaseState& storage_;
  detail::ShardedCells<DeferredId, Cell, DeferredIdHash> cells_;
  std::vector<std::vector<DeferredId>> last_ids_;
  std::vector<std::uint8_t> recorded_;
};

}  // namespace deferred_stm
