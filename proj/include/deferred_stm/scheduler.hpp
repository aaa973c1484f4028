#pragma once

// Block-STM task scheduler with rolling commit.
//
// The validation index is packed with the validation wave: the high 32 bits
// hold the wave, the low 32 bits the index of the next transaction to
// validate. Per-transaction validated waves are packed with the incarnation
// they belong to, so stale validations of superseded incarnations never count.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <string_view>
#include <vector>

#include "deferred_stm/types.hpp"

namespace deferred_stm {

enum class StatusKind : std::uint8_t { ReadyToExecute, Executing, Suspended, Executed, Aborting, Committed };

struct TxnState {
  StatusKind kind = StatusKind::ReadyToExecute;
  Incarnation incarnation = 0;
  TxnIndex dependency = 0;  // Suspended only
};

struct Task {
  enum class Kind : std::uint8_t { Execute, Validate, CommitHook, Idle, Done };
  Kind kind = Kind::Idle;
  TxnIndex index = 0;
  Incarnation incarnation = 0;
  std::uint32_t wave = 0;

  static Task idle() { return {}; }
  static Task done() { return {Kind::Done, 0, 0, 0}; }
  static Task execute(TxnIndex i, Incarnation k) { return {Kind::Execute, i, k, 0}; }
  static Task validate(TxnIndex i, Incarnation k, std::uint32_t w) { return {Kind::Validate, i, k, w}; }
  static Task commit(TxnIndex i) { return {Kind::CommitHook, i, 0, 0}; }
  friend bool operator==(const Task&, const Task&) = default;
};

/// Newline-delimited `event,txn,incarnation,wave,worker` records.
class EventLog {
 public:
  explicit EventLog(std::ostream& out) : out_(out) {}

  void record(std::string_view event, TxnIndex txn, Incarnation incarnation, std::uint32_t wave, unsigned worker) {
    std::lock_guard lock(mutex_);
    out_ << event << ',' << txn << ',' << incarnation << ',' << wave << ',' << worker << '\n';
  }

 private:
  std::mutex mutex_;
  std::ostream& out_;
};

namespace detail {

inline std::uint64_t fetch_max(std::atomic<std::uint64_t>& a, std::uint64_t v) {
  std::uint64_t cur = a.load(std::memory_order_acquire);
  while (cur < v && !a.compare_exchange_weak(cur, v, std::memory_order_acq_rel)) {
  }
  return std::max(cur, v);
}

inline void fetch_min(std::atomic<std::uint64_t>& a, std::uint64_t v) {
  std::uint64_t cur = a.load(std::memory_order_acquire);
  while (cur > v && !a.compare_exchange_weak(cur, v, std::memory_order_acq_rel)) {
  }
}

}  // namespace detail

class Scheduler {
 public:
  explicit Scheduler(TxnIndex num_txns, EventLog* events = nullptr)
      : n_(num_txns), events_(events), txns_(std::make_unique<PerTxn[]>(num_txns)) {}

  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  TxnIndex size() const { return n_; }
  bool done() const { return commit_idx_.load(std::memory_order_acquire) >= n_; }

  /// Lowest-index available work. Idle means nothing is available right now.
  Task next_task(unsigned worker = 0) {
    if (done()) return Task::done();
    if (auto i = try_commit()) {
      log("commit_hook", *i, 0, 0, worker);
      return Task::commit(*i);
    }
    const std::uint64_t packed = validation_.load(std::memory_order_acquire);
    if (low(packed) < execution_idx_.load(std::memory_order_acquire)) {
      if (auto t = next_version_to_validate()) {
        log("validate", t->index, t->incarnation, t->wave, worker);
        return *t;
      }
    } else if (auto t = next_version_to_execute()) {
      log("execute", t->index, t->incarnation, 0, worker);
      return *t;
    }
    return Task::idle();
  }

  /// Publishes a finished execution. May return a validation task for i.
  Task finish_execution(TxnIndex i, Incarnation k, bool wrote_new, unsigned worker = 0) {
    schedule_validation(i);
    if (wrote_new) schedule_suffix_validation(i + 1, worker);

    std::vector<TxnIndex> dependents;
    {
      PerTxn& t = txns_[i];
      std::lock_guard lock(t.status_mutex);
      t.state = TxnState{StatusKind::Executed, k, 0};
    }
    {
      PerTxn& t = txns_[i];
      std::lock_guard lock(t.dependency_mutex);
      dependents.swap(t.dependents);
    }
    resume(dependents, worker);
    log("executed", i, k, 0, worker);

    const std::uint64_t packed = validation_.load(std::memory_order_acquire);
    if (low(packed) > i) {
      log("validate", i, k, high(packed), worker);
      return Task::validate(i, k, high(packed));
    }
    return Task::idle();
  }

  /// Suspends i on `blocking`. False when `blocking` already finished
  /// executing, in which case the caller retries its read.
  bool add_dependency(TxnIndex i, TxnIndex blocking, unsigned worker = 0) {
    PerTxn& b = txns_[blocking];
    std::lock_guard dep_lock(b.dependency_mutex);
    {
      std::lock_guard status_lock(b.status_mutex);
      if (b.state.kind == StatusKind::Executed || b.state.kind == StatusKind::Committed) return false;
    }
    Incarnation k;
    {
      PerTxn& t = txns_[i];
      std::lock_guard status_lock(t.status_mutex);
      k = t.state.incarnation;
      t.state = TxnState{StatusKind::Suspended, k, blocking};
    }
    b.dependents.push_back(i);
    log("suspend", i, k, 0, worker);
    return true;
  }

  /// Abandons an incarnation whose execution failed speculatively.
  void abort_execution(TxnIndex i, Incarnation k, unsigned worker = 0) {
    {
      PerTxn& t = txns_[i];
      std::lock_guard lock(t.status_mutex);
      if (t.state.kind != StatusKind::Executing || t.state.incarnation != k) return;
      t.state = TxnState{StatusKind::ReadyToExecute, k + 1, 0};
    }
    log("spec_failure", i, k, 0, worker);
    detail::fetch_min(execution_idx_, i);
  }

  /// required_wave[i] <- max(required_wave[i], validation_wave).
  void schedule_validation(TxnIndex i) {
    detail::fetch_max(txns_[i].required_wave, high(validation_.load(std::memory_order_acquire)));
  }

  /// Starts a new wave and rewinds validation to i. Returns the new wave.
  std::uint32_t schedule_suffix_validation(TxnIndex i, unsigned worker = 0) {
    if (i >= n_) return validation_wave();
    std::uint64_t cur = validation_.load(std::memory_order_acquire);
    std::uint64_t next;
    do {
      next = pack(high(cur) + 1, std::min<std::uint32_t>(low(cur), i));
    } while (!validation_.compare_exchange_weak(cur, next, std::memory_order_acq_rel));
    const std::uint32_t wave = high(next);
    detail::fetch_max(txns_[i].triggered_wave, wave);
    log("suffix", i, 0, wave, worker);
    return wave;
  }

  /// Claims the abort of incarnation k of i after a failed validation.
  bool try_validation_abort(TxnIndex i, Incarnation k) {
    PerTxn& t = txns_[i];
    std::lock_guard lock(t.status_mutex);
    if (t.state.kind != StatusKind::Executed || t.state.incarnation != k) return false;
    t.state.kind = StatusKind::Aborting;
    return true;
  }

  /// Records a validation result. On failure, `on_abort` runs after the abort
  /// is claimed and before i becomes ready again (it marks estimates). May
  /// return an execution task for i.
  template <typename OnAbort>
  Task finish_validation(TxnIndex i, Incarnation k, std::uint32_t wave, bool success, OnAbort&& on_abort,
                         unsigned worker = 0) {
    if (success) {
      record_validated(i, k, wave);
      log("validated", i, k, wave, worker);
      return Task::idle();
    }
    if (!try_validation_abort(i, k)) return Task::idle();
    on_abort();
    log("abort", i, k, wave, worker);
    schedule_suffix_validation(i + 1, worker);
    {
      PerTxn& t = txns_[i];
      std::lock_guard lock(t.status_mutex);
      t.state = TxnState{StatusKind::ReadyToExecute, k + 1, 0};
    }
    if (execution_idx_.load(std::memory_order_acquire) > i) {
      if (auto inc = try_incarnate(i)) {
        log("execute", i, *inc, 0, worker);
        return Task::execute(i, *inc);
      }
    } else {
      detail::fetch_min(execution_idx_, i);
    }
    return Task::idle();
  }

  Task finish_validation(TxnIndex i, Incarnation k, std::uint32_t wave, bool success, unsigned worker = 0) {
    return finish_validation(i, k, wave, success, [] {}, worker);
  }

  /// Emits the commit hook of commit_idx when the rolling-commit rule holds.
  /// Only one hook is outstanding at a time; its status is Committed from
  /// here on, so it can no longer be aborted.
  std::optional<TxnIndex> try_commit() {
    if (committing_.load(std::memory_order_relaxed) || committing_.exchange(true, std::memory_order_acquire)) {
      return std::nullopt;
    }
    const auto i = static_cast<TxnIndex>(commit_idx_.load(std::memory_order_acquire));
    if (i < n_) {
      PerTxn& t = txns_[i];
      std::lock_guard lock(t.status_mutex);
      if (t.state.kind == StatusKind::Executed) {
        const std::uint64_t commit_wave =
            detail::fetch_max(commit_wave_, t.triggered_wave.load(std::memory_order_acquire));
        const std::uint64_t validated = t.validated.load(std::memory_order_acquire);
        const std::uint64_t required = std::max(commit_wave, t.required_wave.load(std::memory_order_acquire));
        if (validated != 0 && high(validated) == t.state.incarnation + 1 && low(validated) >= required) {
          t.state.kind = StatusKind::Committed;
          return i;
        }
      }
    }
    committing_.store(false, std::memory_order_release);
    return std::nullopt;
  }

  /// Completes the commit hook of i.
  void finish_commit(TxnIndex i, unsigned worker = 0) {
    log("committed", i, txns_[i].state.incarnation, validated_wave(i), worker);
    commit_idx_.store(i + 1, std::memory_order_release);
    committing_.store(false, std::memory_order_release);
  }

  // Introspection.
  TxnState status(TxnIndex i) const {
    std::lock_guard lock(txns_[i].status_mutex);
    return txns_[i].state;
  }
  bool is_executed(TxnIndex i) const {
    const StatusKind k = status(i).kind;
    return k == StatusKind::Executed || k == StatusKind::Committed;
  }
  std::uint32_t validation_wave() const { return high(validation_.load(std::memory_order_acquire)); }
  std::uint32_t validation_idx() const { return low(validation_.load(std::memory_order_acquire)); }
  std::uint64_t execution_idx() const { return execution_idx_.load(std::memory_order_acquire); }
  std::uint64_t commit_idx() const { return commit_idx_.load(std::memory_order_acquire); }
  std::uint64_t commit_wave() const { return commit_wave_.load(std::memory_order_acquire); }
  std::uint64_t required_wave(TxnIndex i) const { return txns_[i].required_wave.load(std::memory_order_acquire); }
  std::uint64_t triggered_wave(TxnIndex i) const { return txns_[i].triggered_wave.load(std::memory_order_acquire); }
  std::uint32_t validated_wave(TxnIndex i) const { return low(txns_[i].validated.load(std::memory_order_acquire)); }
  /// Incarnation the validated wave belongs to; nullopt before any success.
  std::optional<Incarnation> validated_incarnation(TxnIndex i) const {
    const std::uint64_t v = txns_[i].validated.load(std::memory_order_acquire);
    if (v == 0) return std::nullopt;
    return high(v) - 1;
  }

 private:
  struct PerTxn {
    mutable std::mutex status_mutex;
    TxnState state;
    std::mutex dependency_mutex;
    std::vector<TxnIndex> dependents;
    std::atomic<std::uint64_t> required_wave{0};
    std::atomic<std::uint64_t> triggered_wave{0};
    /// (incarnation + 1) << 32 | wave; 0 before any successful validation.
    std::atomic<std::uint64_t> validated{0};
  };

  static std::uint64_t pack(std::uint32_t hi, std::uint32_t lo) { return (std::uint64_t{hi} << 32) | lo; }
  static std::uint32_t high(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }
  static std::uint32_t low(std::uint64_t v) { return static_cast<std::uint32_t>(v); }

  void record_validated(TxnIndex i, Incarnation k, std::uint32_t wave) {
    std::atomic<std::uint64_t>& slot = txns_[i].validated;
    const std::uint64_t mine = pack(k + 1, wave);
    std::uint64_t cur = slot.load(std::memory_order_acquire);
    for (;;) {
      if (cur != 0 && (high(cur) > k + 1 || (high(cur) == k + 1 && low(cur) >= wave))) return;
      if (slot.compare_exchange_weak(cur, mine, std::memory_order_acq_rel)) return;
    }
  }

  std::optional<Task> next_version_to_validate() {
    if (low(validation_.load(std::memory_order_acquire)) >= n_) return std::nullopt;
    const std::uint64_t packed = validation_.fetch_add(1, std::memory_order_acq_rel);
    const TxnIndex i = low(packed);
    if (i >= n_) return std::nullopt;
    PerTxn& t = txns_[i];
    std::lock_guard lock(t.status_mutex);
    if (t.state.kind != StatusKind::Executed) return std::nullopt;
    return Task::validate(i, t.state.incarnation, high(packed));
  }

  std::optional<Task> next_version_to_execute() {
    if (execution_idx_.load(std::memory_order_acquire) >= n_) return std::nullopt;
    const std::uint64_t i = execution_idx_.fetch_add(1, std::memory_order_acq_rel);
    if (i >= n_) return std::nullopt;
    if (auto k = try_incarnate(static_cast<TxnIndex>(i))) return Task::execute(static_cast<TxnIndex>(i), *k);
    return std::nullopt;
  }

  std::optional<Incarnation> try_incarnate(TxnIndex i) {
    PerTxn& t = txns_[i];
    std::lock_guard lock(t.status_mutex);
    if (t.state.kind != StatusKind::ReadyToExecute) return std::nullopt;
    t.state.kind = StatusKind::Executing;
    return t.state.incarnation;
  }

  void resume(const std::vector<TxnIndex>& dependents, unsigned worker) {
    if (dependents.empty()) return;
    TxnIndex lowest = n_;
    for (TxnIndex d : dependents) {
      PerTxn& t = txns_[d];
      std::lock_guard lock(t.status_mutex);
      if (t.state.kind != StatusKind::Suspended) continue;
      t.state = TxnState{StatusKind::ReadyToExecute, t.state.incarnation + 1, 0};
      lowest = std::min(lowest, d);
      log("resume", d, t.state.incarnation, 0, worker);
    }
    if (lowest < n_) detail::fetch_min(execution_idx_, lowest);
  }

  void log(std::string_view event, TxnIndex i, Incarnation k, std::uint32_t wave, unsigned worker) {
    if (events_ != nullptr) events_->record(event, i, k, wave, worker);
  }

  const TxnIndex n_;
  EventLog* events_;
  std::unique_ptr<PerTxn[]> txns_;
  std::atomic<std::uint64_t> execution_idx_{0};
  std::atomic<std::uint64_t> validation_{0};
  std::atomic<std::uint64_t> commit_wave_{0};
  std::atomic<std::uint64_t> commit_idx_{0};
  std::atomic<bool> committing_{false};
};

}  // namespace deferred_stm
