#pragma once

// Sequential reference executor and generic deferred-log replay.
//
// The oracle never compresses logs and never applies deltas: final values of
// deferred objects come from replaying per-transaction logs, including `map`
// prefixes and `combine` entries that the parallel engine does not support.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <variant>
#include <vector>

#include "deferred_stm/block_output.hpp"
#include "deferred_stm/deferred_core.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/txn_model.hpp"
#include "deferred_stm/types.hpp"

namespace deferred_stm::oracle {

// Closed library of deterministic functions usable in generic logs.
namespace fn {
struct Add {
  std::uint64_t k = 0;
};
struct Sub {
  std::uint64_t k = 0;
};
struct Clamp {
  std::uint64_t lo = 0;
  std::uint64_t hi = 0;
};
struct Format {
  FormatterSpec spec;
};
/// Binary: decimal or raw bytes of both operands, concatenated.
struct Concat {};
/// Binary: floor of the mean of two counters.
struct Avg2 {};
}  // namespace fn

using UnaryFn = std::variant<fn::Add, fn::Sub, fn::Clamp, fn::Format>;
using BinaryFn = std::variant<fn::Concat, fn::Avg2>;

struct GInitValue {
  DeferredValue value;
};
struct GInitPrefix {
  DeferredId source;
  std::uint64_t prefix_len = 0;
  UnaryFn function;
  bool predicted = true;
};
struct GInitNone {};
struct GInitCombine {
  DeferredId source_a;
  std::uint64_t prefix_a = 0;
  DeferredId source_b;
  std::uint64_t prefix_b = 0;
  BinaryFn function;
  bool predicted = true;
};
struct GUpdate {
  UnaryFn function;
  bool predicted = true;
};
struct GRevealed {
  DeferredValue value;
};

using GenericLogEntry = std::variant<GInitValue, GInitPrefix, GInitNone, GInitCombine, GUpdate, GRevealed>;

struct GenericLog {
  DeferredId id;
  std::vector<GenericLogEntry> entries;
};

inline std::uint64_t as_counter(const DeferredValue& v) {
  if (const auto* n = std::get_if<std::uint64_t>(&v)) return *n;
  throw Error(ErrorCode::MalformedLog, "counter function applied to a string");
}

inline Bytes as_text(const DeferredValue& v) {
  if (const auto* n = std::get_if<std::uint64_t>(&v)) return to_bytes(std::to_string(*n));
  return std::get<Bytes>(v);
}

inline DeferredValue apply_fn(const UnaryFn& f, const DeferredValue& v) {
  return std::visit(
      [&](const auto& g) -> DeferredValue {
        using G = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<G, fn::Add>) {
          const std::uint64_t x = as_counter(v);
          if (x > std::numeric_limits<std::uint64_t>::max() - g.k) {
            throw Error(ErrorCode::MalformedLog, "applied add leaves the u64 domain");
          }
          return x + g.k;
        } else if constexpr (std::is_same_v<G, fn::Sub>) {
          const std::uint64_t x = as_counter(v);
          if (x < g.k) throw Error(ErrorCode::MalformedLog, "applied sub leaves the u64 domain");
          return x - g.k;
        } else if constexpr (std::is_same_v<G, fn::Clamp>) {
          return std::min(std::max(as_counter(v), g.lo), g.hi);
        } else {
          return render_formatter(g.spec, Wide(as_counter(v)));
        }
      },
      f);
}

inline DeferredValue apply_fn(const BinaryFn& f, const DeferredValue& a, const DeferredValue& b) {
  if (std::holds_alternative<fn::Avg2>(f)) {
    return static_cast<std::uint64_t>((Wide(as_counter(a)) + Wide(as_counter(b))) / 2);
  }
  Bytes out = as_text(a);
  Bytes tail = as_text(b);
  out.insert(out.end(), tail.begin(), tail.end());
  return out;
}

/// Converts an engine log to the generic form.
inline GenericLog to_generic(const ObjectLog& object) {
  GenericLog out{object.log.id, {}};
  for (const auto& e : object.log.entries) {
    if (const auto* v = std::get_if<InitValue>(&e)) {
      out.entries.push_back(GInitValue{v->value});
    } else if (const auto* p = std::get_if<InitPrefix>(&e)) {
      if (!object.formatter) throw Error(ErrorCode::MalformedLog, "prefix entry without a mapping function");
      out.entries.push_back(GInitPrefix{p->source, p->prefix_len, fn::Format{*object.formatter}, p->predicted});
    } else if (std::holds_alternative<InitNone>(e)) {
      out.entries.push_back(GInitNone{});
    } else if (const auto* u = std::get_if<Update>(&e)) {
      UnaryFn f = u->delta >= 0 ? UnaryFn{fn::Add{static_cast<std::uint64_t>(u->delta)}}
                                : UnaryFn{fn::Sub{static_cast<std::uint64_t>(-Wide(u->delta))}};
      out.entries.push_back(GUpdate{f, u->predicted});
    } else {
      out.entries.push_back(GRevealed{std::get<Revealed>(e).value});
    }
  }
  return out;
}

/// Logs of an executed block prefix, one association per transaction.
class LogStore {
 public:
  void append(TxnIndex txn, GenericLog log) {
    if (txns_.size() <= txn) txns_.resize(txn + 1);
    auto& touched = by_object_[log.id];
    if (touched.empty() || touched.back() < txn) touched.push_back(txn);
    txns_[txn][log.id] = std::move(log);
  }

  const GenericLog* find(TxnIndex txn, const DeferredId& id) const {
    if (txn >= txns_.size()) return nullptr;
    auto it = txns_[txn].find(id);
    return it == txns_[txn].end() ? nullptr : &it->second;
  }

  /// Largest k <= bound holding a log for id.
  std::optional<TxnIndex> latest_at_or_below(const DeferredId& id, TxnIndex bound) const {
    auto it = by_object_.find(id);
    if (it == by_object_.end()) return std::nullopt;
    auto pos = std::upper_bound(it->second.begin(), it->second.end(), bound);
    if (pos == it->second.begin()) return std::nullopt;
    return *std::prev(pos);
  }

  std::size_t size() const { return txns_.size(); }

 private:
  std::vector<std::map<DeferredId, GenericLog>> txns_;
  std::map<DeferredId, std::vector<TxnIndex>> by_object_;
};

/// replay(a, i, j): the value of `a` in transaction i after its j-th logged
/// operation. nullopt is the empty result of a map/combine whose
/// precondition did not hold.
class Replayer {
 public:
  Replayer(const LogStore& store, const BaseState& state) : store_(store), state_(state) {}

  std::optional<DeferredValue> replay(const DeferredId& a, TxnIndex i, std::size_t j) {
    const auto key = std::make_tuple(a, i, j);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;

    const GenericLog* log = store_.find(i, a);
    if (log == nullptr) throw Error(ErrorCode::MissingLog, "txn " + std::to_string(i) + " has no log for " + to_string(a));
    if (log->entries.empty() || j >= log->entries.size()) {
      throw Error(ErrorCode::MalformedLog, "replay position out of range for " + to_string(a));
    }

    std::optional<DeferredValue> value;
    std::size_t start = 0;
    for (std::size_t p = j; p >= 1; --p) {
      if (const auto* r = std::get_if<GRevealed>(&log->entries[p])) {
        value = r->value;
        start = p;
        break;
      }
    }
    if (start == j && value) return memo(key, value);

    if (start == 0) value = initial(a, i, log->entries.front());
    if (!value) return memo(key, std::nullopt);

    for (std::size_t p = start + 1; p <= j; ++p) {
      if (const auto* u = std::get_if<GUpdate>(&log->entries[p]); u && u->predicted) {
        value = apply_fn(u->function, *value);
      }
    }
    return memo(key, value);
  }

  /// Value at the end of transaction i, or of the last transaction before it
  /// that touched the object; falls back to storage.
  std::optional<DeferredValue> value_before(const DeferredId& a, TxnIndex i) {
    if (i > 0) {
      if (auto k = store_.latest_at_or_below(a, i - 1)) {
        return replay(a, *k, store_.find(*k, a)->entries.size() - 1);
      }
    }
    if (auto base = state_.get_deferred_base(a)) return DeferredValue{*base};
    return std::nullopt;
  }

  std::optional<DeferredValue> replay_combine(const GInitCombine& entry, TxnIndex i) {
    auto lhs = resolve_prefix(entry.source_a, entry.prefix_a, i);
    auto rhs = resolve_prefix(entry.source_b, entry.prefix_b, i);
    if (!entry.predicted || !lhs || !rhs) return std::nullopt;
    return apply_fn(entry.function, *lhs, *rhs);
  }

 private:
  std::optional<DeferredValue> memo(const std::tuple<DeferredId, TxnIndex, std::size_t>& key,
                                    std::optional<DeferredValue> v) {
    memo_.emplace(key, v);
    return v;
  }

  // A prefix refers to the source's log in the latest transaction at or below
  // i (usually i itself, when the map happened in the same transaction),
  // whereas an uninitialized row looks strictly below i. The asymmetry is
  // intentional and kept as is.
  std::optional<DeferredValue> resolve_prefix(const DeferredId& source, std::uint64_t len, TxnIndex i) {
    auto k = store_.latest_at_or_below(source, i);
    if (!k) throw Error(ErrorCode::MissingLog, "no log for prefix source " + to_string(source));
    return replay(source, *k, len);
  }

  std::optional<DeferredValue> initial(const DeferredId& a, TxnIndex i, const GenericLogEntry& row0) {
    if (const auto* v = std::get_if<GInitValue>(&row0)) return v->value;
    if (const auto* p = std::get_if<GInitPrefix>(&row0)) {
      auto src = resolve_prefix(p->source, p->prefix_len, i);
      if (!p->predicted || !src) return std::nullopt;
      return apply_fn(p->function, *src);
    }
    if (const auto* c = std::get_if<GInitCombine>(&row0)) return replay_combine(*c, i);
    if (!std::holds_alternative<GInitNone>(row0)) throw Error(ErrorCode::MalformedLog, "row 0 is not an init entry");
    if (i > 0) {
      if (auto k = store_.latest_at_or_below(a, i - 1)) return replay(a, *k, store_.find(*k, a)->entries.size() - 1);
    }
    if (auto base = state_.get_deferred_base(a)) return DeferredValue{*base};
    throw Error(ErrorCode::MissingLog, "no ancestor log or storage base for " + to_string(a));
  }

  const LogStore& store_;
  const BaseState& state_;
  std::map<std::tuple<DeferredId, TxnIndex, std::size_t>, std::optional<DeferredValue>> memo_;
};

/// Free-function form of Replayer::replay.
inline std::optional<DeferredValue> replay_reveal(const DeferredId& a, TxnIndex i, std::size_t j, const LogStore& store,
                                                  const BaseState& state) {
  Replayer r(store, state);
  return r.replay(a, i, j);
}

namespace detail {

/// Exact environment over the evolving sequential state.
class SequentialEnv {
 public:
  SequentialEnv(const BaseState& state, Replayer& replayer) : state_(state), replayer_(replayer) {}

  void begin(TxnIndex index) { index_ = index; }

  EnvDataRead data_read(const StateKey& key) {
    if (auto it = written_.find(key); it != written_.end()) return EnvRead{it->second, Version::from_storage()};
    if (const Bytes* v = state_.find(key)) {
      return EnvRead{std::make_shared<const WriteValue>(WriteValue{*v, {}}), Version::from_storage()};
    }
    return EnvRead{nullptr, Version::from_storage()};
  }

  DelayedReadResult delayed_read(const DeferredId& id) {
    auto v = replayer_.value_before(id, index_);
    if (!v) return NotFound{id.creator};
    return *v;
  }

  DelayedReadResult prediction_base(const DeferredId& id) { return delayed_read(id); }

  std::optional<Bounds> bounds(const DeferredId& id) {
    if (auto b = state_.get_deferred_bounds(id)) return b;
    if (auto it = created_bounds_.find(id); it != created_bounds_.end()) return it->second;
    return std::nullopt;
  }

  bool keep_logs() const { return true; }

  void commit_write(const StateKey& key, const WriteValue& value) {
    written_[key] = std::make_shared<const WriteValue>(value);
  }
  void note_created(const DeferredId& id, Bounds bounds) { created_bounds_[id] = bounds; }

 private:
  const BaseState& state_;
  Replayer& replayer_;
  TxnIndex index_ = 0;
  std::map<StateKey, std::shared_ptr<const WriteValue>> written_;
  std::map<DeferredId, Bounds> created_bounds_;
};

}  // namespace detail

/// Executes the block one transaction at a time with exact deferred
/// semantics, resolving every deferred value by log replay.
inline BlockOutput sequential_execute_block(const std::vector<TxnScript>& block, const BaseState& state,
                                            const InterpreterOptions& options = {}) {
  LogStore store;
  Replayer replayer(store, state);
  detail::SequentialEnv env(state, replayer);
  BlockOutput result;
  result.outputs.reserve(block.size());

  for (TxnIndex i = 0; i < block.size(); ++i) {
    env.begin(i);
    ExecOutcome outcome = execute_transaction(block[i], i, env, options);
    if (!std::holds_alternative<Executed>(outcome)) {
      throw Error(ErrorCode::ScriptError, "sequential execution blocked on a dependency");
    }
    TxnOutput out = std::move(std::get<Executed>(outcome).output);
    if (out.status == TxnStatus::SpeculativeFailure) {
      throw Error(ErrorCode::ScriptError, "sequential execution produced a speculative failure");
    }
    ++result.stats.executions;

    for (const auto& object : out.logs) store.append(i, to_generic(object));
    for (const auto& [id, bounds] : out.created) env.note_created(id, bounds);

    FinalizedOutput fin;
    fin.status = out.status;
    fin.abort_code = out.abort_code;
    fin.gas_used = out.gas_used;
    std::map<DeferredId, DeferredValue> finals;
    for (const auto& object : out.logs) {
      auto v = replayer.replay(object.log.id, i, object.log.entries.size() - 1);
      if (!v) throw Error(ErrorCode::MalformedLog, "deferred object " + to_string(object.log.id) + " has no value");
      finals.emplace(object.log.id, *v);
    }
    for (const auto& [id, v] : finals) {
      fin.deferred_writes.emplace_back(id, v);
      result.committed_deferred[id] = v;
    }
    auto resolver = [&](const DeferredId& id) -> std::optional<DeferredValue> {
      auto it = finals.find(id);
      if (it == finals.end()) return std::nullopt;
      return it->second;
    };
    for (auto& [key, value] : out.write_set) {
      WriteValue patched = patch_placeholders(value, resolver);
      env.commit_write(key, patched);
      fin.write_set.emplace_back(key, std::move(patched));
    }
    result.outputs.push_back(std::move(fin));
  }
  return result;
}

}  // namespace deferred_stm::oracle
