#pragma once

// Value-level semantics of deferred counters: per-transaction logs, their
// compression into deltas, delta application with history validation, and
// delta merging.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "deferred_stm/types.hpp"

namespace deferred_stm {

inline constexpr std::size_t kMaxDerivedBytes = 256;

// Log entries. The Init* kinds appear only at position 0.
struct InitValue {
  std::uint64_t value = 0;
  friend bool operator==(const InitValue&, const InitValue&) = default;
};
struct InitPrefix {
  DeferredId source;
  std::uint64_t prefix_len = 0;
  bool predicted = true;
  friend bool operator==(const InitPrefix&, const InitPrefix&) = default;
};
struct InitNone {
  friend bool operator==(const InitNone&, const InitNone&) = default;
};
struct Update {
  std::int64_t delta = 0;
  bool predicted = true;
  friend bool operator==(const Update&, const Update&) = default;
};
struct Revealed {
  std::uint64_t value = 0;
  friend bool operator==(const Revealed&, const Revealed&) = default;
};

using LogEntry = std::variant<InitValue, InitPrefix, InitNone, Update, Revealed>;

inline bool is_init(const LogEntry& e) {
  return std::holds_alternative<InitValue>(e) || std::holds_alternative<InitPrefix>(e) ||
         std::holds_alternative<InitNone>(e);
}

struct DeferredLog {
  DeferredId id;
  Bounds bounds;
  std::vector<LogEntry> entries;
};

/// History of a compressed log, as signed offsets from the (unknown) base.
///
///   max_achieved   largest cumulative offset reached by a successful update (>= 0)
///   min_achieved   smallest cumulative offset reached by a successful update (<= 0)
///   min_overflow   smallest offset a failed increment would have produced
///   max_underflow  largest offset a failed decrement would have produced
///
/// A base b satisfies the history iff b+max_achieved <= U, b+min_achieved >= L,
/// b+min_overflow > U and b+max_underflow < L.
struct HistoryConstraints {
  Wide max_achieved = 0;
  Wide min_achieved = 0;
  std::optional<Wide> min_overflow;
  std::optional<Wide> max_underflow;

  friend bool operator==(const HistoryConstraints&, const HistoryConstraints&) = default;

  /// Structural invariants that hold for every log whose outcomes are
  /// achievable from at least one base.
  bool well_formed() const {
    if (min_achieved > 0 || max_achieved < 0) return false;
    if (min_overflow && *min_overflow <= max_achieved) return false;
    if (max_underflow && *max_underflow >= min_achieved) return false;
    return true;
  }
};

struct FormatterSpec {
  std::string prefix;
  std::string suffix;
  friend bool operator==(const FormatterSpec&, const FormatterSpec&) = default;
};

struct ValueDelta {
  std::uint64_t value = 0;
  friend bool operator==(const ValueDelta&, const ValueDelta&) = default;
};

struct CompressedDelta {
  Wide sum = 0;
  HistoryConstraints history;
  Bounds bounds;
  DeferredId source;
  friend bool operator==(const CompressedDelta&, const CompressedDelta&) = default;
};

/// String derived from a counter: prefix ++ decimal(source value + prefix_sum) ++ suffix,
/// where the source value is taken just before the creating transaction.
struct DerivedSnapshot {
  DeferredId source;
  Wide prefix_sum = 0;
  FormatterSpec formatter;
  friend bool operator==(const DerivedSnapshot&, const DerivedSnapshot&) = default;
};

struct DerivedValue {
  Bytes bytes;
  friend bool operator==(const DerivedValue&, const DerivedValue&) = default;
};

using DeltaOp = std::variant<ValueDelta, CompressedDelta, DerivedSnapshot, DerivedValue>;

inline CompressedDelta identity_delta(DeferredId source, Bounds bounds = {}) {
  return CompressedDelta{0, {}, bounds, source};
}

inline std::string wide_to_string(Wide v) {
  if (v == 0) return "0";
  bool neg = v < 0;
  unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
  std::string out;
  while (u > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
    u /= 10;
  }
  if (neg) out.push_back('-');
  std::reverse(out.begin(), out.end());
  return out;
}

/// Rendered length of a formatter is bounded by this many digits for any u64.
inline constexpr std::size_t kMaxU64Digits = 20;

inline Bytes render_formatter(const FormatterSpec& f, Wide value) {
  std::string s = f.prefix + wide_to_string(value) + f.suffix;
  if (s.size() > kMaxDerivedBytes) {
    throw Error(ErrorCode::LengthExceeded,
                "rendered string of " + std::to_string(s.size()) + " bytes exceeds " +
                    std::to_string(kMaxDerivedBytes));
  }
  return to_bytes(s);
}

/// Folds one update outcome into a compressed delta.
inline void append_update(CompressedDelta& d, std::int64_t delta, bool predicted) {
  HistoryConstraints& h = d.history;
  const Wide reached = d.sum + delta;
  if (predicted) {
    d.sum = reached;
    h.max_achieved = std::max(h.max_achieved, reached);
    h.min_achieved = std::min(h.min_achieved, reached);
  } else if (delta >= 0) {
    // A zero update never fails, so recording it as an overflow at offset
    // <= max_achieved makes the history unsatisfiable, as it should be.
    h.min_overflow = h.min_overflow ? std::min(*h.min_overflow, reached) : reached;
  } else {
    h.max_underflow = h.max_underflow ? std::max(*h.max_underflow, reached) : reached;
  }
}

/// Compresses a counter log.
///
/// Logs that start from a known value (InitValue, or containing a Revealed
/// entry) compress to the exact final value. Otherwise the successful updates
/// are summed and the outcomes of all updates are captured as history
/// constraints. A failed increment can only have violated the upper bound and
/// a failed decrement only the lower one, since every intermediate value is in
/// range.
inline DeltaOp compress_log(const DeferredLog& log) {
  if (log.entries.empty() || !is_init(log.entries.front())) {
    throw Error(ErrorCode::MalformedLog, "log for " + to_string(log.id) + " lacks an init entry");
  }
  for (std::size_t i = 1; i < log.entries.size(); ++i) {
    if (is_init(log.entries[i])) {
      throw Error(ErrorCode::MalformedLog, "log for " + to_string(log.id) + " has a second init entry");
    }
  }
  if (std::holds_alternative<InitPrefix>(log.entries.front())) {
    // Mapped objects are represented by DerivedSnapshot, never by counter logs.
    throw Error(ErrorCode::MalformedLog, "prefix-initialized log for " + to_string(log.id) + " is not a counter log");
  }

  std::size_t start = 0;
  std::optional<Wide> known;
  if (auto* init = std::get_if<InitValue>(&log.entries.front())) known = Wide(init->value);
  for (std::size_t i = log.entries.size(); i-- > 1;) {
    if (auto* r = std::get_if<Revealed>(&log.entries[i])) {
      known = Wide(r->value);
      start = i;
      break;
    }
  }

  if (known) {
    Wide v = *known;
    for (std::size_t i = start + 1; i < log.entries.size(); ++i) {
      if (auto* u = std::get_if<Update>(&log.entries[i]); u && u->predicted) v += u->delta;
    }
    if (v < 0 || v > Wide(std::numeric_limits<std::uint64_t>::max())) {
      throw Error(ErrorCode::MalformedLog, "replayed value of " + to_string(log.id) + " leaves the u64 domain");
    }
    return ValueDelta{static_cast<std::uint64_t>(v)};
  }

  CompressedDelta out{0, {}, log.bounds, log.id};
  for (std::size_t i = 1; i < log.entries.size(); ++i) {
    const auto& u = std::get<Update>(log.entries[i]);
    append_update(out, u.delta, u.predicted);
  }
  return out;
}

inline bool history_holds(const CompressedDelta& d, Wide base) {
  const Wide lo = d.bounds.lower;
  const Wide hi = d.bounds.upper;
  const HistoryConstraints& h = d.history;
  if (base + h.max_achieved > hi) return false;
  if (base + h.min_achieved < lo) return false;
  if (h.min_overflow && !(base + *h.min_overflow > hi)) return false;
  if (h.max_underflow && !(base + *h.max_underflow < lo)) return false;
  return true;
}

/// Applies a compressed delta to a base value. nullopt is a speculative
/// failure: the base contradicts the recorded outcomes.
inline std::optional<std::uint64_t> apply_delta(const CompressedDelta& d, std::uint64_t base) {
  if (!history_holds(d, Wide(base))) return std::nullopt;
  return static_cast<std::uint64_t>(Wide(base) + d.sum);
}

/// Merges two consecutive compressed deltas of the same object so that
/// applying the result equals applying `first` and then `second`.
inline CompressedDelta merge_deltas(const CompressedDelta& first, const CompressedDelta& second) {
  if (!(first.bounds == second.bounds)) {
    throw Error(ErrorCode::BoundsMismatch, "cannot merge deltas with different bounds");
  }
  CompressedDelta out;
  out.bounds = first.bounds;
  out.source = first.source;
  out.sum = first.sum + second.sum;
  const HistoryConstraints& a = first.history;
  const HistoryConstraints& b = second.history;
  HistoryConstraints& h = out.history;
  h.max_achieved = std::max(a.max_achieved, first.sum + b.max_achieved);
  h.min_achieved = std::min(a.min_achieved, first.sum + b.min_achieved);
  if (b.min_overflow) {
    Wide shifted = first.sum + *b.min_overflow;
    h.min_overflow = a.min_overflow ? std::min(*a.min_overflow, shifted) : shifted;
  } else {
    h.min_overflow = a.min_overflow;
  }
  if (b.max_underflow) {
    Wide shifted = first.sum + *b.max_underflow;
    h.max_underflow = a.max_underflow ? std::max(*a.max_underflow, shifted) : shifted;
  } else {
    h.max_underflow = a.max_underflow;
  }
  return out;
}

inline Bytes resolve_snapshot(const DerivedSnapshot& snap, std::uint64_t source_value) {
  return render_formatter(snap.formatter, Wide(source_value) + snap.prefix_sum);
}

}  // namespace deferred_stm
