#pragma once

// Parallel block executor: worker loop, commit hooks with deferred-object
// validation and re-execution, and post-commit materialization. Also a fast
// sequential executor used as the throughput baseline.

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "deferred_stm/block_output.hpp"
#include "deferred_stm/deferred_core.hpp"
#include "deferred_stm/mvhashmap.hpp"
#include "deferred_stm/scheduler.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/txn_model.hpp"
#include "deferred_stm/types.hpp"

namespace deferred_stm {

struct ExecutorOptions {
  unsigned workers = 1;
  InterpreterOptions interpreter;
  EventLog* events = nullptr;
};

/// Latest committed value and bounds of every counter, seeded from storage.
/// Written only by commit hooks, in commit order.
class CommittedBaseTable {
 public:
  struct Entry {
    std::uint64_t value = 0;
    Bounds bounds;
  };

  explicit CommittedBaseTable(const BaseState& state) {
    for (const auto& [id, base] : state.deferred()) shard(id).map.emplace(id, Entry{base.value, base.bounds});
  }

  std::optional<Entry> get(const DeferredId& id) const {
    const Shard& s = shard(id);
    std::shared_lock lock(s.mutex);
    auto it = s.map.find(id);
    if (it == s.map.end()) return std::nullopt;
    return it->second;
  }

  void set(const DeferredId& id, Entry entry) {
    Shard& s = shard(id);
    std::unique_lock lock(s.mutex);
    s.map[id] = entry;
  }

 private:
  static constexpr std::size_t kShards = 64;
  struct Shard {
    mutable std::shared_mutex mutex;
    std::unordered_map<DeferredId, Entry, DeferredIdHash> map;
  };
  Shard& shard(const DeferredId& id) { return shards_[DeferredIdHash{}(id) % kShards]; }
  const Shard& shard(const DeferredId& id) const { return shards_[DeferredIdHash{}(id) % kShards]; }

  std::array<Shard, kShards> shards_;
};

using FinalValues = std::vector<std::pair<DeferredId, DeferredValue>>;

/// Final values of every object in a delta-set, computed from the exact
/// values just before the transaction. nullopt when a history check fails or
/// a base is missing.
template <typename BaseLookup>
std::optional<FinalValues> fold_delta_set(const DeltaSet& delta_set, BaseLookup&& base) {
  FinalValues out;
  out.reserve(delta_set.size());
  for (const auto& [id, delta] : delta_set) {
    if (const auto* v = std::get_if<ValueDelta>(&delta)) {
      out.emplace_back(id, v->value);
    } else if (const auto* c = std::get_if<CompressedDelta>(&delta)) {
      auto entry = base(id);
      if (!entry || entry->bounds != c->bounds) return std::nullopt;
      auto next = apply_delta(*c, entry->value);
      if (!next) return std::nullopt;
      out.emplace_back(id, *next);
    } else if (const auto* snap = std::get_if<DerivedSnapshot>(&delta)) {
      auto entry = base(snap->source);
      if (!entry) return std::nullopt;
      const Wide v = Wide(entry->value) + snap->prefix_sum;
      if (v < 0) return std::nullopt;
      out.emplace_back(id, render_formatter(snap->formatter, v));
    } else {
      out.emplace_back(id, std::get<DerivedValue>(delta).bytes);
    }
  }
  return out;
}

/// Patches the write-set of a committed output with its final values.
inline FinalizedOutput finalize_output(const TxnOutput& output, const FinalValues& finals) {
  FinalizedOutput fin;
  fin.status = output.status;
  fin.abort_code = output.abort_code;
  fin.gas_used = output.gas_used;
  fin.deferred_writes = finals;
  std::sort(fin.deferred_writes.begin(), fin.deferred_writes.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  auto resolver = [&](const DeferredId& id) -> std::optional<DeferredValue> {
    for (const auto& [fid, v] : finals) {
      if (fid == id) return v;
    }
    return std::nullopt;
  };
  fin.write_set.reserve(output.write_set.size());
  for (const auto& [key, value] : output.write_set) {
    fin.write_set.emplace_back(key, value.materialized() ? value : patch_placeholders(value, resolver));
  }
  return fin;
}

namespace detail {

inline std::shared_ptr<const WriteValue> storage_value(const BaseState& state, const StateKey& key) {
  if (const Bytes* v = state.find(key)) return std::make_shared<const WriteValue>(WriteValue{*v, {}});
  return nullptr;
}

/// Concurrent registry of bounds of counters created inside the block.
class CreatedBounds {
 public:
  void set(const DeferredId& id, Bounds bounds) {
    std::unique_lock lock(mutex_);
    map_[id] = bounds;
  }
  std::optional<Bounds> get(const DeferredId& id) const {
    std::shared_lock lock(mutex_);
    auto it = map_.find(id);
    if (it == map_.end()) return std::nullopt;
    return it->second;
  }

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<DeferredId, Bounds, DeferredIdHash> map_;
};

struct Record {
  Incarnation incarnation = 0;
  TxnOutput output;
  CapturedReads reads;
};

struct StatCounters {
  std::atomic<std::uint64_t> executions{0};
  std::atomic<std::uint64_t> validations{0};
  std::atomic<std::uint64_t> aborts{0};
  std::atomic<std::uint64_t> speculative_failures{0};
  std::atomic<std::uint64_t> commit_reexecutions{0};
  std::atomic<std::uint64_t> dependencies{0};
  std::atomic<std::uint64_t> hook_traversals{0};
};

class BlockExecution {
 public:
  BlockExecution(const std::vector<TxnScript>& block, const BaseState& state, const ExecutorOptions& options)
      : block_(block),
        state_(state),
        options_(options),
        n_(static_cast<TxnIndex>(block.size())),
        data_(block.size()),
        delayed_(state, block.size()),
        scheduler_(n_, options.events),
        table_(state),
        records_(block.size()),
        record_mutexes_(std::make_unique<std::mutex[]>(block.size())),
        finals_(block.size()),
        commit_outputs_(block.size()),
        reexecutions_(block.size(), 0),
        outputs_(block.size()) {}

  BlockOutput run() {
    const unsigned workers = std::max(1u, options_.workers);
    if (n_ > 0) {
      std::vector<std::thread> pool;
      pool.reserve(workers - 1);
      for (unsigned w = 1; w < workers; ++w) pool.emplace_back([this, w] { worker_loop(w); });
      worker_loop(0);
      for (auto& t : pool) t.join();
      while (patch_one()) {
      }
    }

    BlockOutput result;
    result.outputs = std::move(outputs_);
    for (TxnIndex i = 0; i < n_; ++i) {
      for (const auto& [id, v] : finals_[i]) result.committed_deferred[id] = v;
    }
    result.stats.executions = stats_.executions.load();
    result.stats.validations = stats_.validations.load();
    result.stats.aborts = stats_.aborts.load();
    result.stats.speculative_failures = stats_.speculative_failures.load();
    result.stats.commit_reexecutions = stats_.commit_reexecutions.load();
    result.stats.dependencies = stats_.dependencies.load();
    result.stats.hook_traversals = stats_.hook_traversals.load();
    result.stats.max_commit_reexecutions_per_txn =
        reexecutions_.empty() ? 0 : *std::max_element(reexecutions_.begin(), reexecutions_.end());
    return result;
  }

 private:
  // Environment of a speculative execution.
  struct SpeculativeEnv {
    BlockExecution& ex;
    TxnIndex index;

    EnvDataRead data_read(const StateKey& key) {
      DataReadResult r = ex.data_.data_read(key, index);
      if (auto* v = std::get_if<DataValue>(&r)) return EnvRead{std::move(v->value), v->version};
      if (auto* dep = std::get_if<Dependency>(&r)) return *dep;
      return EnvRead{storage_value(ex.state_, key), Version::from_storage()};
    }

    DelayedReadResult delayed_read(const DeferredId& id) {
      DelayedReadResult r = ex.delayed_.delayed_read(id, index);
      if (const auto* nf = std::get_if<NotFound>(&r)) {
        // The creator may simply not have produced the object yet.
        if (nf->creator != kPreBlockCreator && nf->creator < index && !ex.scheduler_.is_executed(nf->creator)) {
          return Dependency{nf->creator};
        }
      }
      return r;
    }

    DelayedReadResult prediction_base(const DeferredId& id) {
      if (auto e = ex.table_.get(id)) return DeferredValue{e->value};
      return delayed_read(id);
    }

    std::optional<Bounds> bounds(const DeferredId& id) {
      if (auto e = ex.table_.get(id)) return e->bounds;
      return ex.created_.get(id);
    }

    bool keep_logs() const { return false; }
  };

  // Exact environment of a commit-time re-execution: every prior
  // transaction is committed.
  struct CommittedEnv {
    BlockExecution& ex;
    TxnIndex index;

    EnvDataRead data_read(const StateKey& key) {
      DataReadResult r = ex.data_.data_read(key, index);
      if (auto* v = std::get_if<DataValue>(&r)) return EnvRead{std::move(v->value), v->version};
      if (std::holds_alternative<Dependency>(r)) throw std::logic_error("estimate below the commit index");
      return EnvRead{storage_value(ex.state_, key), Version::from_storage()};
    }

    DelayedReadResult delayed_read(const DeferredId& id) {
      if (auto e = ex.table_.get(id)) return DeferredValue{e->value};
      return NotFound{id.creator};
    }

    DelayedReadResult prediction_base(const DeferredId& id) { return delayed_read(id); }

    std::optional<Bounds> bounds(const DeferredId& id) {
      if (auto e = ex.table_.get(id)) return e->bounds;
      return std::nullopt;
    }

    bool keep_logs() const { return false; }
  };

  void worker_loop(unsigned worker) {
    Task task = Task::idle();
    for (;;) {
      if (task.kind == Task::Kind::Idle) {
        task = scheduler_.next_task(worker);
        if (task.kind == Task::Kind::Idle) {
          if (!patch_one()) std::this_thread::yield();
          continue;
        }
      }
      switch (task.kind) {
        case Task::Kind::Execute: task = execute(task.index, task.incarnation, worker); break;
        case Task::Kind::Validate: task = validate(task, worker); break;
        case Task::Kind::CommitHook:
          commit(task.index, worker);
          scheduler_.finish_commit(task.index, worker);
          task = Task::idle();
          break;
        case Task::Kind::Done: return;
        case Task::Kind::Idle: break;
      }
    }
  }

  std::shared_ptr<const Record> record(TxnIndex i) {
    std::lock_guard lock(record_mutexes_[i]);
    return records_[i];
  }

  Task execute(TxnIndex i, Incarnation k, unsigned worker) {
    for (;;) {
      SpeculativeEnv env{*this, i};
      ExecOutcome outcome = execute_transaction(block_[i], i, env, options_.interpreter);
      stats_.executions.fetch_add(1, std::memory_order_relaxed);
      if (const auto* blocked = std::get_if<Blocked>(&outcome)) {
        stats_.dependencies.fetch_add(1, std::memory_order_relaxed);
        if (scheduler_.add_dependency(i, blocked->blocking, worker)) return Task::idle();
        continue;
      }
      auto& executed = std::get<Executed>(outcome);
      if (executed.output.status == TxnStatus::SpeculativeFailure) {
        stats_.speculative_failures.fetch_add(1, std::memory_order_relaxed);
        scheduler_.abort_execution(i, k, worker);
        return Task::idle();
      }
      for (const auto& [id, bounds] : executed.output.created) created_.set(id, bounds);
      const bool wrote_new = data_.record_writes(i, k, executed.output.write_set);
      delayed_.delayed_record(i, executed.output.delta_set);
      auto rec = std::make_shared<const Record>(Record{k, std::move(executed.output), std::move(executed.reads)});
      {
        std::lock_guard lock(record_mutexes_[i]);
        records_[i] = std::move(rec);
      }
      return scheduler_.finish_execution(i, k, wrote_new, worker);
    }
  }

  bool reads_valid(TxnIndex i, const CapturedReads& reads) const {
    for (const auto& [key, version] : reads.data_reads) {
      DataReadResult r = data_.data_read(key, i);
      if (const auto* v = std::get_if<DataValue>(&r)) {
        if (!(v->version == version)) return false;
      } else if (std::holds_alternative<StorageMiss>(r)) {
        if (!version.storage) return false;
      } else {
        return false;
      }
    }
    return true;
  }

  Task validate(const Task& task, unsigned worker) {
    stats_.validations.fetch_add(1, std::memory_order_relaxed);
    auto rec = record(task.index);
    const bool valid = rec && rec->incarnation == task.incarnation && reads_valid(task.index, rec->reads);
    return scheduler_.finish_validation(
        task.index, task.incarnation, task.wave, valid,
        [&] {
          stats_.aborts.fetch_add(1, std::memory_order_relaxed);
          data_.mark_estimates(task.index);
          delayed_.mark_estimates(task.index);
        },
        worker);
  }

  bool deferred_reads_hold(const Record& rec) const {
    for (const auto& [id, seen] : rec.reads.delayed_reveals) {
      auto e = table_.get(id);
      if (!seen) {
        if (e) return false;
        continue;
      }
      const auto* v = std::get_if<std::uint64_t>(&*seen);
      if (!e || v == nullptr || e->value != *v) return false;
    }
    for (const auto& [id, check] : rec.reads.discarded_checks) {
      auto e = table_.get(id);
      if (!e || e->bounds != check.bounds || !history_holds(check, e->value)) return false;
    }
    return true;
  }

  void commit(TxnIndex i, unsigned worker) {
    const std::uint64_t traversals_before = tls_delayed_traversals;
    auto lookup = [this](const DeferredId& id) { return table_.get(id); };

    std::shared_ptr<const Record> rec = record(i);
    std::optional<FinalValues> finals;
    if (deferred_reads_hold(*rec)) finals = fold_delta_set(rec->output.delta_set, lookup);

    TxnOutput output;
    if (finals) {
      output = rec->output;
    } else {
      // Deferred validation failed: re-execute once against the committed
      // state and commit the result directly.
      stats_.commit_reexecutions.fetch_add(1, std::memory_order_relaxed);
      ++reexecutions_[i];
      CommittedEnv env{*this, i};
      ExecOutcome outcome = execute_transaction(block_[i], i, env, options_.interpreter);
      stats_.executions.fetch_add(1, std::memory_order_relaxed);
      auto* executed = std::get_if<Executed>(&outcome);
      if (executed == nullptr || executed->output.status == TxnStatus::SpeculativeFailure) {
        throw std::logic_error("commit-time re-execution is not exact");
      }
      output = std::move(executed->output);
      finals = fold_delta_set(output.delta_set, lookup);
      if (!finals) throw std::logic_error("exact re-execution failed its own history checks");
      for (const auto& [id, bounds] : output.created) created_.set(id, bounds);
      if (!(output.write_set == rec->output.write_set)) {
        data_.record_writes(i, rec->incarnation + 1, output.write_set);
        scheduler_.schedule_suffix_validation(i + 1, worker);
      }
    }

    for (const auto& [id, value] : *finals) {
      if (const auto* counter = std::get_if<std::uint64_t>(&value)) {
        Bounds bounds;
        if (auto e = table_.get(id)) {
          bounds = e->bounds;
        } else if (auto b = created_bounds_of(output, id)) {
          bounds = *b;
        }
        table_.set(id, CommittedBaseTable::Entry{*counter, bounds});
      }
    }
    delayed_.commit_all(i, *finals);
    finals_[i] = std::move(*finals);
    commit_outputs_[i] = std::move(output);
    stats_.hook_traversals.fetch_add(tls_delayed_traversals - traversals_before, std::memory_order_relaxed);
    committed_.store(i + 1, std::memory_order_release);
  }

  static std::optional<Bounds> created_bounds_of(const TxnOutput& output, const DeferredId& id) {
    for (const auto& [cid, b] : output.created) {
      if (cid == id) return b;
    }
    return std::nullopt;
  }

  /// Materializes one committed output, if any is pending.
  bool patch_one() {
    std::uint64_t next = patch_cursor_.load(std::memory_order_acquire);
    for (;;) {
      if (next >= committed_.load(std::memory_order_acquire)) return false;
      if (patch_cursor_.compare_exchange_weak(next, next + 1, std::memory_order_acq_rel)) break;
    }
    const auto i = static_cast<TxnIndex>(next);
    outputs_[i] = finalize_output(commit_outputs_[i], finals_[i]);
    return true;
  }

  const std::vector<TxnScript>& block_;
  const BaseState& state_;
  const ExecutorOptions& options_;
  const TxnIndex n_;

  MVData data_;
  MVDelayedFields delayed_;
  Scheduler scheduler_;
  CommittedBaseTable table_;
  CreatedBounds created_;

  std::vector<std::shared_ptr<const Record>> records_;
  std::unique_ptr<std::mutex[]> record_mutexes_;

  // Written by the commit hook of i, read by whoever patches i.
  std::vector<FinalValues> finals_;
  std::vector<TxnOutput> commit_outputs_;
  std::vector<std::uint64_t> reexecutions_;
  std::atomic<std::uint64_t> committed_{0};
  std::atomic<std::uint64_t> patch_cursor_{0};
  std::vector<FinalizedOutput> outputs_;

  StatCounters stats_;
};

}  // namespace detail

/// Executes a block in parallel; the result equals sequential execution.
inline BlockOutput execute_block(const std::vector<TxnScript>& block, const BaseState& state,
                                 const ExecutorOptions& options = {}) {
  detail::BlockExecution execution(block, state, options);
  return execution.run();
}

namespace detail {

/// Exact environment over a single-threaded overlay of committed writes.
class SequentialOverlayEnv {
 public:
  explicit SequentialOverlayEnv(const BaseState& state) : state_(state), table_(state) {}

  EnvDataRead data_read(const StateKey& key) {
    if (auto it = writes_.find(key); it != writes_.end()) return EnvRead{it->second, Version::from_storage()};
    return EnvRead{storage_value(state_, key), Version::from_storage()};
  }
  DelayedReadResult delayed_read(const DeferredId& id) {
    if (auto e = table_.get(id)) return DeferredValue{e->value};
    return NotFound{id.creator};
  }
  DelayedReadResult prediction_base(const DeferredId& id) { return delayed_read(id); }
  std::optional<Bounds> bounds(const DeferredId& id) {
    if (auto e = table_.get(id)) return e->bounds;
    return std::nullopt;
  }
  bool keep_logs() const { return false; }

  CommittedBaseTable& table() { return table_; }
  void write(const StateKey& key, const WriteValue& value) {
    writes_[key] = std::make_shared<const WriteValue>(value);
  }

 private:
  const BaseState& state_;
  CommittedBaseTable table_;
  std::unordered_map<StateKey, std::shared_ptr<const WriteValue>, BytesHash> writes_;
};

}  // namespace detail

/// Sequential baseline: one transaction at a time, exact deferred
/// arithmetic, no multi-version bookkeeping.
inline BlockOutput execute_sequential(const std::vector<TxnScript>& block, const BaseState& state,
                                      const InterpreterOptions& options = {}) {
  detail::SequentialOverlayEnv env(state);
  auto lookup = [&](const DeferredId& id) { return env.table().get(id); };
  BlockOutput result;
  result.outputs.reserve(block.size());
  for (TxnIndex i = 0; i < block.size(); ++i) {
    ExecOutcome outcome = execute_transaction(block[i], i, env, options);
    ++result.stats.executions;
    auto& executed = std::get<Executed>(outcome);
    auto finals = fold_delta_set(executed.output.delta_set, lookup);
    if (!finals) throw std::logic_error("sequential execution failed its own history checks");
    for (const auto& [id, value] : *finals) {
      if (const auto* counter = std::get_if<std::uint64_t>(&value)) {
        Bounds bounds;
        if (auto e = env.table().get(id)) {
          bounds = e->bounds;
        } else {
          for (const auto& [cid, b] : executed.output.created) {
            if (cid == id) bounds = b;
          }
        }
        env.table().set(id, CommittedBaseTable::Entry{*counter, bounds});
      }
      result.committed_deferred[id] = value;
    }
    for (const auto& [key, value] : executed.output.write_set) env.write(key, value);
    result.outputs.push_back(finalize_output(executed.output, *finals));
  }
  return result;
}

}  // namespace deferred_stm
