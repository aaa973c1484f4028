#pragma once

// Deterministic transaction scripts, the interpreter that runs them against an
// execution environment, captured reads, and the placeholder encoding used for
// deferred values embedded in write-sets.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "deferred_stm/deferred_core.hpp"
#include "deferred_stm/mvhashmap.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/types.hpp"

namespace deferred_stm {

// ---------------------------------------------------------------------------
// Placeholder encoding
// ---------------------------------------------------------------------------

inline constexpr std::uint8_t kPlaceholderTag = 0xD7;
inline constexpr std::size_t kPlaceholderHeader = 14;  // tag + 12-byte id + width
inline constexpr std::size_t kCounterWidth = 8;
inline constexpr std::size_t kStringWidth = 256;

/// Width 256 does not fit the width byte and is stored as 0.
inline std::uint8_t encode_width(std::size_t width) { return static_cast<std::uint8_t>(width & 0xff); }
inline std::size_t decode_width(std::uint8_t w) { return w == 0 ? 256 : w; }

inline std::size_t placeholder_size(std::size_t width) { return kPlaceholderHeader + width; }

inline void append_placeholder(WriteValue& out, const DeferredId& id, std::size_t width) {
  out.placeholders.push_back(static_cast<std::uint32_t>(out.bytes.size()));
  out.bytes.push_back(kPlaceholderTag);
  put_be32(out.bytes, id.creator);
  put_be64(out.bytes, id.local_seq);
  out.bytes.push_back(encode_width(width));
  out.bytes.insert(out.bytes.end(), width, 0);
}

/// Materialized form of a counter in a region of `width` placeholder bytes:
/// the value is big-endian across the whole region.
inline void append_counter_region(Bytes& out, std::uint64_t value, std::size_t width = kCounterWidth) {
  out.insert(out.end(), placeholder_size(width) - 8, 0);
  put_be64(out, value);
}

/// Materialized form of a derived string: left-justified, zero-padded.
inline void append_string_region(Bytes& out, const Bytes& value, std::size_t width = kStringWidth) {
  const std::size_t region = placeholder_size(width);
  if (value.size() > region) throw Error(ErrorCode::LengthExceeded, "derived string does not fit its region");
  out.insert(out.end(), value.begin(), value.end());
  out.insert(out.end(), region - value.size(), 0);
}

inline DeferredId placeholder_id(const Bytes& bytes, std::size_t offset) {
  return DeferredId{get_be32(&bytes[offset + 1]), get_be64(&bytes[offset + 5])};
}

/// Replaces every placeholder in place. The resolver maps an id to its final
/// value or nullopt. Output length always equals input length.
template <typename Resolver>
WriteValue patch_placeholders(const WriteValue& value, Resolver&& resolver) {
  if (value.placeholders.empty()) return value;
  WriteValue out;
  out.bytes.reserve(value.bytes.size());
  std::size_t cursor = 0;
  for (std::uint32_t offset : value.placeholders) {
    if (offset < cursor || offset + kPlaceholderHeader > value.bytes.size() ||
        value.bytes[offset] != kPlaceholderTag) {
      throw Error(ErrorCode::WidthMismatch, "placeholder offset " + std::to_string(offset) + " is malformed");
    }
    const std::size_t width = decode_width(value.bytes[offset + 13]);
    if (offset + placeholder_size(width) > value.bytes.size()) {
      throw Error(ErrorCode::WidthMismatch, "placeholder overruns its value");
    }
    out.bytes.insert(out.bytes.end(), value.bytes.begin() + cursor, value.bytes.begin() + offset);
    const DeferredId id = placeholder_id(value.bytes, offset);
    std::optional<DeferredValue> resolved = resolver(id);
    if (!resolved) throw Error(ErrorCode::UnresolvedId, "no value for " + to_string(id));
    if (const auto* n = std::get_if<std::uint64_t>(&*resolved)) {
      if (width != kCounterWidth) throw Error(ErrorCode::WidthMismatch, "counter in a string placeholder");
      append_counter_region(out.bytes, *n, width);
    } else {
      if (width != kStringWidth) throw Error(ErrorCode::WidthMismatch, "string in a counter placeholder");
      append_string_region(out.bytes, std::get<Bytes>(*resolved), width);
    }
    cursor = offset + placeholder_size(width);
  }
  out.bytes.insert(out.bytes.end(), value.bytes.begin() + cursor, value.bytes.end());
  return out;
}

// ---------------------------------------------------------------------------
// Scripts
// ---------------------------------------------------------------------------

/// Object created earlier in the same transaction, by creation order.
struct LocalHandle {
  std::uint64_t seq = 0;
  friend bool operator==(const LocalHandle&, const LocalHandle&) = default;
};

/// Counter kept as an ordinary 8-byte big-endian state value.
struct PlainCounter {
  StateKey key;
  Bounds bounds;
  friend bool operator==(const PlainCounter&, const PlainCounter&) = default;
};

using CounterRef = std::variant<DeferredId, LocalHandle, PlainCounter>;

namespace seg {
struct Literal {
  Bytes bytes;
};
/// Counter value at the end of the transaction (deferred) or at the time of
/// the write (plain).
struct Counter {
  CounterRef target;
};
struct Snapshot {
  LocalHandle handle;
};
/// 8-byte big-endian value of the most recent reveal.
struct LastReveal {};
}  // namespace seg

using Segment = std::variant<seg::Literal, seg::Counter, seg::Snapshot, seg::LastReveal>;

enum class ConditionKind : std::uint8_t { LastUpdateFailed, LastUpdateSucceeded, LastReadBelow };

struct Condition {
  ConditionKind kind = ConditionKind::LastUpdateFailed;
  std::uint64_t operand = 0;
};

namespace ins {
struct ReadBalance {
  StateKey key;
};
struct Debit {
  StateKey key;
  std::uint64_t amount = 0;
};
struct Credit {
  StateKey key;
  std::uint64_t amount = 0;
};
struct WriteValue {
  StateKey key;
  std::vector<Segment> segments;
};
struct DeferredCreate {
  Bounds bounds;
  std::uint64_t init = 0;
};
struct DeferredUpdate {
  CounterRef target;
  std::int64_t amount = 0;
};
struct DeferredReveal {
  CounterRef target;
};
struct DeferredSnapshot {
  CounterRef target;
  FormatterSpec formatter;
};
struct RepeatUpdate {
  CounterRef target;
  std::int64_t amount = 0;
  std::uint32_t count = 0;
};
struct AbortIf {
  Condition condition;
};
struct ChargeFee {
  CounterRef payer;
  std::uint64_t amount = 0;
  CounterRef burn;
};
}  // namespace ins

using Instruction = std::variant<ins::ReadBalance, ins::Debit, ins::Credit, ins::WriteValue, ins::DeferredCreate,
                                 ins::DeferredUpdate, ins::DeferredReveal, ins::DeferredSnapshot, ins::RepeatUpdate,
                                 ins::AbortIf, ins::ChargeFee>;

struct TxnScript {
  std::vector<Instruction> program;
};

// ---------------------------------------------------------------------------
// Outputs
// ---------------------------------------------------------------------------

enum class TxnStatus : std::uint8_t { Success, Aborted, SpeculativeFailure };

namespace abort_code {
inline constexpr std::uint32_t kUser = 1;
inline constexpr std::uint32_t kInsufficientBalance = 2;
inline constexpr std::uint32_t kOverflow = 3;
inline constexpr std::uint32_t kMalformedValue = 4;
inline constexpr std::uint32_t kFeeFailure = 5;
inline constexpr std::uint32_t kScriptError = 6;
}  // namespace abort_code

using DeltaSet = std::vector<std::pair<DeferredId, DeltaOp>>;

/// Uncompressed log of one object touched by a transaction. Snapshot objects
/// carry the formatter of their InitPrefix row.
struct ObjectLog {
  DeferredLog log;
  std::optional<FormatterSpec> formatter;
};

struct TxnOutput {
  TxnStatus status = TxnStatus::Success;
  std::uint32_t abort_code = 0;
  WriteSet write_set;
  DeltaSet delta_set;
  std::uint64_t gas_used = 0;
  /// Counters created by this transaction, with their bounds.
  std::vector<std::pair<DeferredId, Bounds>> created;
  std::vector<ObjectLog> logs;  // only when the environment keeps logs
};

struct CapturedReads {
  std::vector<std::pair<StateKey, Version>> data_reads;
  /// Pre-transaction values observed by reveals and snapshot reads;
  /// nullopt records that the object did not exist.
  std::vector<std::pair<DeferredId, std::optional<DeferredValue>>> delayed_reveals;
  /// History checks of deferred updates whose effects an abort discarded.
  std::vector<std::pair<DeferredId, CompressedDelta>> discarded_checks;
};

struct Executed {
  TxnOutput output;
  CapturedReads reads;
};

struct Blocked {
  TxnIndex blocking = 0;
};

using ExecOutcome = std::variant<Executed, Blocked>;

// ---------------------------------------------------------------------------
// Execution environment
// ---------------------------------------------------------------------------

struct EnvRead {
  std::shared_ptr<const WriteValue> value;  // null: absent
  Version version;
};

using EnvDataRead = std::variant<EnvRead, Dependency>;

/// What the interpreter needs from its surroundings. Every method answers
/// for the state just before the running transaction.
template <typename E>
concept ExecutionEnv = requires(E env, const StateKey& key, const DeferredId& id) {
  { env.data_read(key) } -> std::same_as<EnvDataRead>;
  { env.delayed_read(id) } -> std::same_as<DelayedReadResult>;
  { env.prediction_base(id) } -> std::same_as<DelayedReadResult>;
  { env.bounds(id) } -> std::same_as<std::optional<Bounds>>;
  { env.keep_logs() } -> std::same_as<bool>;
};

/// Base value for the precondition estimate of an update.
inline bool predict_update(Wide base, Wide local_sum_so_far, std::int64_t x, const Bounds& bounds) {
  return bounds.contains(base + local_sum_so_far + x);
}

/// Deterministic CPU work standing in for VM execution cost.
inline std::uint64_t simulated_work(std::uint64_t seed, std::uint32_t units) {
  std::uint64_t x = seed | 1;
  for (std::uint32_t i = 0; i < units; ++i) {
    x ^= x << 13;
    x ^= x >> 7;
    x ^= x << 17;
  }
  return x;
}

namespace detail {

struct ScriptAbort {
  std::uint32_t code;
};
struct ScriptBlocked {
  TxnIndex blocking;
};
struct ScriptSpecFailure {};

struct LocalObject {
  enum class Kind : std::uint8_t { Counter, Snapshot };
  Kind kind = Kind::Counter;
  DeferredId id;
  Bounds bounds;
  std::vector<LogEntry> entries;           // kept only when the environment asks for logs
  std::size_t log_size = 0;
  CompressedDelta running;                 // counters without a known value
  std::optional<std::uint64_t> exact;      // created or revealed in this transaction
  std::optional<std::uint64_t> pred_base;  // pre-transaction estimate
  Wide local_sum = 0;                      // predicted-true updates since the start
  bool snapshotted = false;
  // Snapshot objects.
  std::optional<DeltaOp> snapshot;
  std::optional<FormatterSpec> formatter;
};

/// Values read during one execution; shared with the fee-only rerun of an
/// aborted transaction so both observe identical inputs.
struct ReadCache {
  std::map<StateKey, std::shared_ptr<const WriteValue>> data;
  std::map<DeferredId, DelayedReadResult> predictions;
  std::map<DeferredId, DelayedReadResult> reveals;
  std::map<DeferredId, std::optional<Bounds>> bounds;
};

template <ExecutionEnv Env>
class Interpreter {
 public:
  Interpreter(Env& env, TxnIndex index, ReadCache& cache, CapturedReads& reads)
      : env_(env), index_(index), cache_(cache), reads_(reads) {}

  /// Runs the program; with fee_only, only ChargeFee instructions.
  void run(const TxnScript& script, bool fee_only) {
    fee_phase_ = fee_only;
    for (const auto& instruction : script.program) {
      if (fee_only && !std::holds_alternative<ins::ChargeFee>(instruction)) continue;
      std::visit([this](const auto& i) { step(i); }, instruction);
    }
  }

  TxnOutput finish(TxnStatus status, std::uint32_t code) {
    TxnOutput out;
    out.status = status;
    out.abort_code = code;
    out.gas_used = gas_;
    for (auto& [key, value] : writes_) out.write_set.emplace_back(key, std::move(value));
    for (auto& [id, obj] : objects_) {
      if (obj.kind == LocalObject::Kind::Snapshot) {
        out.delta_set.emplace_back(id, *obj.snapshot);
      } else if (obj.exact) {
        out.delta_set.emplace_back(id, ValueDelta{*obj.exact});
      } else {
        out.delta_set.emplace_back(id, obj.running);
      }
      if (obj.kind == LocalObject::Kind::Counter && id.creator == index_) out.created.emplace_back(id, obj.bounds);
      if (env_.keep_logs()) {
        out.logs.push_back(ObjectLog{DeferredLog{id, obj.bounds, std::move(obj.entries)}, obj.formatter});
      }
    }
    return out;
  }

  /// History checks of every touched counter whose log was not exact.
  std::vector<std::pair<DeferredId, CompressedDelta>> checks() const {
    std::vector<std::pair<DeferredId, CompressedDelta>> out;
    for (const auto& [id, obj] : objects_) {
      if (obj.kind == LocalObject::Kind::Counter && !obj.exact) out.emplace_back(id, obj.running);
    }
    return out;
  }

 private:
  // --- plain state ---------------------------------------------------------

  std::shared_ptr<const WriteValue> read_key(const StateKey& key) {
    if (auto it = writes_.find(key); it != writes_.end()) {
      return std::make_shared<const WriteValue>(it->second);
    }
    if (auto it = cache_.data.find(key); it != cache_.data.end()) return it->second;
    EnvDataRead r = env_.data_read(key);
    if (auto* dep = std::get_if<Dependency>(&r)) throw ScriptBlocked{dep->blocking};
    auto& read = std::get<EnvRead>(r);
    reads_.data_reads.emplace_back(key, read.version);
    cache_.data.emplace(key, read.value);
    return read.value;
  }

  std::uint64_t read_u64(const StateKey& key) {
    auto v = read_key(key);
    if (!v) return 0;
    if (v->bytes.size() != 8 || !v->placeholders.empty()) throw ScriptAbort{abort_code::kMalformedValue};
    return get_be64(v->bytes.data());
  }

  void write_u64(const StateKey& key, std::uint64_t value) { writes_[key] = WriteValue{be64(value), {}}; }

  // --- deferred objects ------------------------------------------------------

  DeferredId resolve_id(const CounterRef& ref) const {
    if (const auto* id = std::get_if<DeferredId>(&ref)) return *id;
    return DeferredId{index_, std::get<LocalHandle>(ref).seq};
  }

  DelayedReadResult cached(std::map<DeferredId, DelayedReadResult>& table, const DeferredId& id, bool reveal) {
    if (auto it = table.find(id); it != table.end()) return it->second;
    DelayedReadResult r = reveal ? env_.delayed_read(id) : env_.prediction_base(id);
    table.emplace(id, r);
    return r;
  }

  /// Throws on Dependency / SpeculativeFailure; nullopt when the object is absent.
  std::optional<DeferredValue> expect_value(const DelayedReadResult& r) {
    if (const auto* dep = std::get_if<Dependency>(&r)) throw ScriptBlocked{dep->blocking};
    if (std::holds_alternative<SpeculativeFailure>(r)) throw ScriptSpecFailure{};
    if (std::holds_alternative<NotFound>(r)) return std::nullopt;
    return std::get<DeferredValue>(r);
  }

  void note_missing(const DeferredId& id) {
    reads_.delayed_reveals.emplace_back(id, std::nullopt);
    throw ScriptAbort{abort_code::kScriptError};
  }

  LocalObject& counter(const CounterRef& ref) {
    const DeferredId id = resolve_id(ref);
    auto it = objects_.find(id);
    if (it != objects_.end()) {
      if (it->second.kind != LocalObject::Kind::Counter) throw ScriptAbort{abort_code::kScriptError};
      return it->second;
    }
    if (id.creator == index_) throw ScriptAbort{abort_code::kScriptError};  // handle never created
    if (id.creator != kPreBlockCreator && id.creator > index_) throw ScriptAbort{abort_code::kScriptError};

    std::optional<Bounds> bounds;
    if (auto b = cache_.bounds.find(id); b != cache_.bounds.end()) {
      bounds = b->second;
    } else {
      bounds = env_.bounds(id);
      cache_.bounds.emplace(id, bounds);
    }
    if (!bounds) note_missing(id);

    LocalObject obj;
    obj.kind = LocalObject::Kind::Counter;
    obj.id = id;
    obj.bounds = *bounds;
    obj.running = CompressedDelta{0, {}, obj.bounds, id};
    append_log(obj, InitNone{});
    return objects_.emplace(id, std::move(obj)).first->second;
  }

  void append_log(LocalObject& obj, LogEntry entry) {
    ++obj.log_size;
    if (env_.keep_logs()) obj.entries.push_back(std::move(entry));
  }

  std::uint64_t prediction_base(LocalObject& obj) {
    if (!obj.pred_base) {
      auto v = expect_value(cached(cache_.predictions, obj.id, false));
      if (!v) note_missing(obj.id);
      const auto* n = std::get_if<std::uint64_t>(&*v);
      if (n == nullptr) throw ScriptAbort{abort_code::kScriptError};
      obj.pred_base = *n;
    }
    return *obj.pred_base;
  }

  bool update(const CounterRef& ref, std::int64_t amount) {
    if (const auto* plain = std::get_if<PlainCounter>(&ref)) {
      const Wide next = Wide(read_u64(plain->key)) + amount;
      if (!plain->bounds.contains(next)) return false;
      write_u64(plain->key, static_cast<std::uint64_t>(next));
      return true;
    }
    return update(counter(ref), amount);
  }

  bool update(LocalObject& obj, std::int64_t amount) {
    bool ok;
    if (obj.exact) {
      ok = obj.bounds.contains(Wide(*obj.exact) + amount);
      if (ok) *obj.exact = static_cast<std::uint64_t>(Wide(*obj.exact) + amount);
    } else {
      ok = predict_update(prediction_base(obj), obj.local_sum, amount, obj.bounds);
    }
    if (ok) obj.local_sum += amount;
    if (!obj.exact) append_update(obj.running, amount, ok);
    append_log(obj, Update{amount, ok});
    return ok;
  }

  std::uint64_t reveal(const CounterRef& ref) {
    if (const auto* plain = std::get_if<PlainCounter>(&ref)) return read_u64(plain->key);
    LocalObject& obj = counter(ref);
    if (!obj.exact) {
      auto v = expect_value(cached(cache_.reveals, obj.id, true));
      if (!v) note_missing(obj.id);
      const auto* base = std::get_if<std::uint64_t>(&*v);
      if (base == nullptr) throw ScriptAbort{abort_code::kScriptError};
      if (std::find_if(reads_.delayed_reveals.begin(), reads_.delayed_reveals.end(),
                       [&](const auto& r) { return r.first == obj.id; }) == reads_.delayed_reveals.end()) {
        reads_.delayed_reveals.emplace_back(obj.id, DeferredValue{*base});
      }
      // Outcomes predicted so far must be consistent with the revealed base.
      auto v2 = apply_delta(obj.running, *base);
      if (!v2) throw ScriptSpecFailure{};
      obj.exact = *v2;
    }
    append_log(obj, Revealed{*obj.exact});
    return *obj.exact;
  }

  // --- instructions ----------------------------------------------------------

  void step(const ins::ReadBalance& i) { last_read_ = read_u64(i.key); }

  void step(const ins::Debit& i) {
    const std::uint64_t balance = read_u64(i.key);
    if (balance < i.amount) throw ScriptAbort{abort_code::kInsufficientBalance};
    write_u64(i.key, balance - i.amount);
  }

  void step(const ins::Credit& i) {
    const std::uint64_t balance = read_u64(i.key);
    if (balance > std::numeric_limits<std::uint64_t>::max() - i.amount) throw ScriptAbort{abort_code::kOverflow};
    write_u64(i.key, balance + i.amount);
  }

  void step(const ins::WriteValue& i) {
    WriteValue out;
    for (const auto& s : i.segments) {
      if (const auto* lit = std::get_if<seg::Literal>(&s)) {
        out.bytes.insert(out.bytes.end(), lit->bytes.begin(), lit->bytes.end());
      } else if (const auto* c = std::get_if<seg::Counter>(&s)) {
        if (const auto* plain = std::get_if<PlainCounter>(&c->target)) {
          append_counter_region(out.bytes, read_u64(plain->key));
        } else {
          const LocalObject& obj = counter(c->target);
          append_placeholder(out, obj.id, kCounterWidth);
        }
      } else if (const auto* sn = std::get_if<seg::Snapshot>(&s)) {
        if (auto p = plain_snapshots_.find(sn->handle.seq); p != plain_snapshots_.end()) {
          append_string_region(out.bytes, p->second);
        } else {
          const DeferredId id{index_, sn->handle.seq};
          auto it = objects_.find(id);
          if (it == objects_.end() || it->second.kind != LocalObject::Kind::Snapshot) {
            throw ScriptAbort{abort_code::kScriptError};
          }
          append_placeholder(out, id, kStringWidth);
        }
      } else {
        put_be64(out.bytes, last_reveal_);
      }
    }
    writes_[i.key] = std::move(out);
  }

  void step(const ins::DeferredCreate& i) {
    if (i.bounds.lower > i.bounds.upper || !i.bounds.contains(i.init)) throw ScriptAbort{abort_code::kScriptError};
    const DeferredId id{index_, next_seq_++};
    LocalObject obj;
    obj.kind = LocalObject::Kind::Counter;
    obj.id = id;
    obj.bounds = i.bounds;
    append_log(obj, InitValue{i.init});
    obj.exact = i.init;
    objects_.emplace(id, std::move(obj));
  }

  void step(const ins::DeferredUpdate& i) { last_update_ok_ = update(i.target, i.amount); }

  void step(const ins::RepeatUpdate& i) {
    if (i.count == 0) return;
    if (std::holds_alternative<PlainCounter>(i.target)) {
      for (std::uint32_t k = 0; k < i.count; ++k) last_update_ok_ = update(i.target, i.amount);
      return;
    }
    LocalObject& obj = counter(i.target);
    if (env_.keep_logs()) obj.entries.reserve(obj.entries.size() + i.count);
    for (std::uint32_t k = 0; k < i.count; ++k) last_update_ok_ = update(obj, i.amount);
  }

  void step(const ins::DeferredReveal& i) { last_reveal_ = reveal(i.target); }

  void step(const ins::DeferredSnapshot& i) {
    if (i.formatter.prefix.size() + i.formatter.suffix.size() + kMaxU64Digits > kMaxDerivedBytes) {
      throw ScriptAbort{abort_code::kScriptError};
    }
    const std::uint64_t seq = next_seq_++;
    if (const auto* plain = std::get_if<PlainCounter>(&i.target)) {
      plain_snapshots_[seq] = render_formatter(i.formatter, Wide(read_u64(plain->key)));
      return;
    }
    LocalObject& source = counter(i.target);
    if (source.snapshotted) throw ScriptAbort{abort_code::kScriptError};  // mapped at most once
    source.snapshotted = true;

    LocalObject snap;
    snap.kind = LocalObject::Kind::Snapshot;
    snap.id = DeferredId{index_, seq};
    snap.entries.push_back(InitPrefix{source.id, source.log_size - 1, true});
    snap.formatter = i.formatter;
    if (source.exact) {
      snap.snapshot = DerivedValue{render_formatter(i.formatter, Wide(*source.exact))};
    } else {
      snap.snapshot = DerivedSnapshot{source.id, source.local_sum, i.formatter};
    }
    objects_.emplace(snap.id, std::move(snap));
  }

  void step(const ins::AbortIf& i) {
    bool fire = false;
    switch (i.condition.kind) {
      case ConditionKind::LastUpdateFailed: fire = !last_update_ok_; break;
      case ConditionKind::LastUpdateSucceeded: fire = last_update_ok_; break;
      case ConditionKind::LastReadBelow: fire = last_read_ < i.condition.operand; break;
    }
    if (fire) throw ScriptAbort{abort_code::kUser};
  }

  void step(const ins::ChargeFee& i) {
    gas_ += i.amount;
    if (!update(i.payer, -static_cast<std::int64_t>(i.amount))) throw ScriptAbort{abort_code::kFeeFailure};
    update(i.burn, -static_cast<std::int64_t>(i.amount));
  }

  Env& env_;
  TxnIndex index_;
  ReadCache& cache_;
  CapturedReads& reads_;
  bool fee_phase_ = false;

  std::map<StateKey, WriteValue> writes_;
  std::map<DeferredId, LocalObject> objects_;
  std::map<std::uint64_t, Bytes> plain_snapshots_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t gas_ = 0;
  bool last_update_ok_ = true;
  std::uint64_t last_read_ = 0;
  std::uint64_t last_reveal_ = 0;
};

}  // namespace detail

struct InterpreterOptions {
  /// Units of simulated VM work per transaction.
  std::uint32_t work_units = 0;
};

/// Executes one incarnation. A Dependency met on any read yields Blocked;
/// speculative inconsistencies yield an output with SpeculativeFailure status.
/// An aborted script keeps only the effects of its ChargeFee instructions.
template <ExecutionEnv Env>
ExecOutcome execute_transaction(const TxnScript& script, TxnIndex index, Env& env,
                                const InterpreterOptions& options = {}) {
  if (options.work_units > 0) {
    volatile std::uint64_t sink = simulated_work(index + 1, options.work_units);
    (void)sink;
  }
  detail::ReadCache cache;
  CapturedReads reads;
  try {
    detail::Interpreter<Env> full(env, index, cache, reads);
    try {
      full.run(script, false);
      return Executed{full.finish(TxnStatus::Success, 0), std::move(reads)};
    } catch (const detail::ScriptAbort& abort) {
      auto checks = full.checks();
      detail::Interpreter<Env> fees(env, index, cache, reads);
      try {
        fees.run(script, true);
      } catch (const detail::ScriptAbort&) {
        // The fee itself failed: nothing persists.
        detail::Interpreter<Env> none(env, index, cache, reads);
        reads.discarded_checks = std::move(checks);
        TxnOutput out = none.finish(TxnStatus::Aborted, abort.code);
        return Executed{std::move(out), std::move(reads)};
      }
      reads.discarded_checks = std::move(checks);
      return Executed{fees.finish(TxnStatus::Aborted, abort.code), std::move(reads)};
    }
  } catch (const detail::ScriptBlocked& blocked) {
    return Blocked{blocked.blocking};
  } catch (const detail::ScriptSpecFailure&) {
    TxnOutput out;
    out.status = TxnStatus::SpeculativeFailure;
    return Executed{std::move(out), std::move(reads)};
  }
}

}  // namespace deferred_stm
