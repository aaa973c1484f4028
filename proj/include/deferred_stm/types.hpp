#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace deferred_stm {

using Bytes = std::vector<std::uint8_t>;

/// 0-based position of a transaction inside a block.
using TxnIndex = std::uint32_t;
using Incarnation = std::uint32_t;

/// Signed intermediate precision for counter offsets. Counter values are
/// unsigned 64-bit, so every sum of at most 2^63 updates fits.
using Wide = __int128;

inline constexpr TxnIndex kPreBlockCreator = std::numeric_limits<TxnIndex>::max();

/// Identifier of a deferred object. Pre-block objects use kPreBlockCreator as
/// the creator; objects created inside a block are numbered by the creating
/// transaction, so every incarnation allocates the same ids.
struct DeferredId {
  TxnIndex creator = kPreBlockCreator;
  std::uint64_t local_seq = 0;

  static constexpr DeferredId pre_block(std::uint64_t seq) { return {kPreBlockCreator, seq}; }
  constexpr bool is_pre_block() const { return creator == kPreBlockCreator; }

  friend constexpr auto operator<=>(const DeferredId&, const DeferredId&) = default;
};

inline std::string to_string(const DeferredId& id) {
  if (id.is_pre_block()) return "pre:" + std::to_string(id.local_seq);
  return std::to_string(id.creator) + ":" + std::to_string(id.local_seq);
}

/// Inclusive value range of a bounded counter.
struct Bounds {
  std::uint64_t lower = 0;
  std::uint64_t upper = std::numeric_limits<std::uint64_t>::max();

  constexpr bool contains(Wide v) const { return v >= Wide(lower) && v <= Wide(upper); }
  friend constexpr bool operator==(const Bounds&, const Bounds&) = default;
};

enum class ErrorCode {
  MalformedLog,
  BoundsMismatch,
  LengthExceeded,
  UnresolvedId,
  WidthMismatch,
  MissingLog,
  PlaceholderInOutput,
  ScriptError,
  InvalidConfig,
};

inline std::string_view name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLog: return "MalformedLog";
    case ErrorCode::BoundsMismatch: return "BoundsMismatch";
    case ErrorCode::LengthExceeded: return "LengthExceeded";
    case ErrorCode::UnresolvedId: return "UnresolvedId";
    case ErrorCode::WidthMismatch: return "WidthMismatch";
    case ErrorCode::MissingLog: return "MissingLog";
    case ErrorCode::PlaceholderInOutput: return "PlaceholderInOutput";
    case ErrorCode::ScriptError: return "ScriptError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(name(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void put_be64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_be32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline std::uint64_t get_be64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | p[i];
  return v;
}

inline std::uint32_t get_be32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v = (v << 8) | p[i];
  return v;
}

inline Bytes be64(std::uint64_t v) {
  Bytes out;
  out.reserve(8);
  put_be64(out, v);
  return out;
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

/// FNV-1a, used for state and output fingerprints.
class Fnv1a {
 public:
  void update(const std::uint8_t* data, std::size_t len) {
    for (std::size_t i = 0; i < len; ++i) {
      hash_ ^= data[i];
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(const Bytes& b) {
    update_u64(b.size());
    update(b.data(), b.size());
  }
  void update_u64(std::uint64_t v) {
    std::uint8_t buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::uint8_t>(v >> (8 * i));
    update(buf, 8);
  }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

struct BytesHash {
  std::size_t operator()(const Bytes& b) const {
    Fnv1a h;
    h.update(b.data(), b.size());
    return static_cast<std::size_t>(h.digest());
  }
};

struct DeferredIdHash {
  std::size_t operator()(const DeferredId& id) const {
    std::uint64_t x = (std::uint64_t(id.creator) << 40) ^ id.local_seq;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdULL;
    x ^= x >> 33;
    return static_cast<std::size_t>(x);
  }
};

}  // namespace deferred_stm
