#pragma once

// Deterministic generators for the benchmark workloads.

#include <charconv>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "deferred_stm/rng.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/txn_model.hpp"
#include "deferred_stm/types.hpp"

namespace deferred_stm::workloads {

enum class Kind : std::uint8_t { NoOp, Sponsored, Transfer, NftMint, History, Cnt, Reveal };
enum class Mode : std::uint8_t { Integer, Deferred };
enum class Pattern : std::uint8_t { Random, SingleReceiver };

struct Fraction {
  std::uint64_t num = 0;
  std::uint64_t den = 1;
  friend bool operator==(const Fraction&, const Fraction&) = default;
};

struct WorkloadSpec {
  Kind kind = Kind::NoOp;
  Mode mode = Mode::Deferred;
  std::uint64_t payers = 1;
  Pattern pattern = Pattern::Random;
  std::optional<std::uint64_t> limit;
  std::uint64_t n = 1;
  Fraction reveal_fraction{1, 2};
  std::uint64_t accounts = 20'000;
  std::uint64_t seed = 0;

  friend bool operator==(const WorkloadSpec&, const WorkloadSpec&) = default;
};

inline constexpr std::uint64_t kInitialSupply = 1'000'000'000'000'000'000ULL;
inline constexpr std::uint64_t kSharedCounterSeq = std::uint64_t{1} << 62;
inline constexpr std::uint8_t kPlainCounterPrefix = 0x02;
inline constexpr std::uint8_t kObjectPrefix = 0x03;

namespace fee {
inline constexpr std::uint64_t kNoOp = 10;
inline constexpr std::uint64_t kSponsored = 10;
inline constexpr std::uint64_t kTransfer = 12;
inline constexpr std::uint64_t kNftMint = 20;
inline constexpr std::uint64_t kHistory = 10;
inline constexpr std::uint64_t kCnt = 10;
inline constexpr std::uint64_t kReveal = 10;
}  // namespace fee

inline DeferredId supply_id() { return DeferredId::pre_block(0); }
inline DeferredId balance_id(std::uint64_t account) { return DeferredId::pre_block(1 + account); }
inline DeferredId shared_counter_id() { return DeferredId::pre_block(kSharedCounterSeq); }

inline StateKey plain_counter_key(std::uint64_t slot) {
  StateKey key{kPlainCounterPrefix};
  put_be64(key, slot);
  return key;
}
inline StateKey supply_key() { return plain_counter_key(0); }
inline StateKey shared_counter_key() { return plain_counter_key(1); }

inline StateKey object_key(std::uint64_t block_number, std::uint32_t position) {
  StateKey key{kObjectPrefix};
  put_be64(key, block_number);
  put_be32(key, position);
  return key;
}

inline std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::NoOp: return "noop";
    case Kind::Sponsored: return "sponsored";
    case Kind::Transfer: return "transfer";
    case Kind::NftMint: return "nft-mint";
    case Kind::History: return "history";
    case Kind::Cnt: return "cnt";
    case Kind::Reveal: return "reveal";
  }
  return "?";
}

inline std::string_view mode_name(Mode m) { return m == Mode::Integer ? "integer" : "deferred"; }

inline Kind parse_kind(std::string_view s) {
  for (Kind k : {Kind::NoOp, Kind::Sponsored, Kind::Transfer, Kind::NftMint, Kind::History, Kind::Cnt, Kind::Reveal}) {
    if (kind_name(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidConfig, "unknown workload '" + std::string(s) + "'");
}

inline Mode parse_mode(std::string_view s) {
  if (s == "integer") return Mode::Integer;
  if (s == "deferred") return Mode::Deferred;
  throw Error(ErrorCode::InvalidConfig, "unknown mode '" + std::string(s) + "'");
}

inline std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::InvalidConfig, "not an unsigned integer: '" + std::string(s) + "'");
  }
  return v;
}

/// Accepts "a/b" or a decimal such as "0.25"; the value must lie in [0, 1].
inline Fraction parse_fraction(std::string_view s) {
  Fraction f;
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    f = {parse_u64(s.substr(0, slash)), parse_u64(s.substr(slash + 1))};
  } else if (auto dot = s.find('.'); dot != std::string_view::npos) {
    const std::string_view frac = s.substr(dot + 1);
    if (frac.size() > 18) throw Error(ErrorCode::InvalidConfig, "fraction has too many digits");
    std::uint64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    const std::uint64_t whole = dot == 0 ? 0 : parse_u64(s.substr(0, dot));
    f = {whole * den + (frac.empty() ? 0 : parse_u64(frac)), den};
  } else {
    f = {parse_u64(s), 1};
  }
  if (f.den == 0 || f.num > f.den) throw Error(ErrorCode::InvalidConfig, "fraction outside [0, 1]");
  return f;
}

inline void validate(const WorkloadSpec& spec) {
  if (spec.payers == 0) throw Error(ErrorCode::InvalidConfig, "payers must be at least 1");
  if (spec.n == 0) throw Error(ErrorCode::InvalidConfig, "n must be at least 1");
  if (spec.accounts < 2) throw Error(ErrorCode::InvalidConfig, "at least 2 accounts are required");
  if (spec.payers > spec.accounts) throw Error(ErrorCode::InvalidConfig, "more payers than accounts");
  if (spec.reveal_fraction.den == 0 || spec.reveal_fraction.num > spec.reveal_fraction.den) {
    throw Error(ErrorCode::InvalidConfig, "reveal fraction outside [0, 1]");
  }
  if (spec.n > std::numeric_limits<std::uint32_t>::max()) throw Error(ErrorCode::InvalidConfig, "n too large");
}

/// Flat key=value form, one pair per line.
inline std::string to_text(const WorkloadSpec& spec) {
  std::ostringstream out;
  out << "workload=" << kind_name(spec.kind) << '\n'
      << "mode=" << mode_name(spec.mode) << '\n'
      << "payers=" << spec.payers << '\n'
      << "pattern=" << (spec.pattern == Pattern::Random ? "random" : "single_receiver") << '\n'
      << "limit=" << (spec.limit ? std::to_string(*spec.limit) : std::string("none")) << '\n'
      << "n=" << spec.n << '\n'
      << "reveal_fraction=" << spec.reveal_fraction.num << '/' << spec.reveal_fraction.den << '\n'
      << "accounts=" << spec.accounts << '\n'
      << "seed=" << spec.seed << '\n';
  return out.str();
}

/// Parses whitespace-separated key=value pairs. Missing keys keep defaults.
inline WorkloadSpec from_text(std::string_view text) {
  WorkloadSpec spec;
  std::istringstream in{std::string(text)};
  std::string pair;
  while (in >> pair) {
    const auto eq = pair.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::InvalidConfig, "expected key=value, got '" + pair + "'");
    const std::string key = pair.substr(0, eq);
    const std::string value = pair.substr(eq + 1);
    if (key == "workload") {
      spec.kind = parse_kind(value);
    } else if (key == "mode") {
      spec.mode = parse_mode(value);
    } else if (key == "payers") {
      spec.payers = parse_u64(value);
    } else if (key == "pattern") {
      if (value == "random") {
        spec.pattern = Pattern::Random;
      } else if (value == "single_receiver") {
        spec.pattern = Pattern::SingleReceiver;
      } else {
        throw Error(ErrorCode::InvalidConfig, "unknown pattern '" + value + "'");
      }
    } else if (key == "limit") {
      spec.limit = value == "none" ? std::nullopt : std::optional<std::uint64_t>(parse_u64(value));
    } else if (key == "n") {
      spec.n = parse_u64(value);
    } else if (key == "reveal_fraction") {
      spec.reveal_fraction = parse_fraction(value);
    } else if (key == "accounts") {
      spec.accounts = parse_u64(value);
    } else if (key == "seed") {
      spec.seed = parse_u64(value);
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "'");
    }
  }
  validate(spec);
  return spec;
}

inline bool deferred_balances(const WorkloadSpec& spec) {
  return spec.mode == Mode::Deferred && (spec.kind == Kind::Sponsored || spec.kind == Kind::Transfer);
}

inline bool deferred_supply(const WorkloadSpec& spec) {
  return !(spec.kind == Kind::NoOp && spec.mode == Mode::Integer);
}

inline Bounds shared_counter_bounds(const WorkloadSpec& spec) {
  switch (spec.kind) {
    case Kind::NftMint: return Bounds{0, spec.limit.value_or(std::numeric_limits<std::uint64_t>::max())};
    case Kind::Cnt: return Bounds{0, spec.n};
    default: return Bounds{};
  }
}

/// Pre-block state: seeded account balances, the supply counter, the
/// workload's shared counter (initially 0) and, in deferred mode, deferred
/// balances mirroring the seeded ones.
inline BaseState seed_state(const WorkloadSpec& spec) {
  validate(spec);
  BaseState state = seed_accounts(spec.seed, spec.accounts);
  if (deferred_supply(spec)) {
    state.put_deferred(supply_id(), kInitialSupply);
  } else {
    state.put(supply_key(), be64(kInitialSupply));
  }
  if (deferred_balances(spec)) {
    const std::uint64_t count = spec.kind == Kind::Sponsored ? spec.payers : spec.accounts;
    for (std::uint64_t a = 0; a < count; ++a) state.put_deferred(balance_id(a), seeded_balance(spec.seed, a));
  }
  switch (spec.kind) {
    case Kind::NftMint:
    case Kind::History:
    case Kind::Cnt:
    case Kind::Reveal:
      if (spec.mode == Mode::Deferred) {
        state.put_deferred(shared_counter_id(), 0, shared_counter_bounds(spec));
      } else {
        state.put(shared_counter_key(), be64(0));
      }
      break;
    default: break;
  }
  return state;
}

namespace detail {

inline CounterRef balance_ref(const WorkloadSpec& spec, std::uint64_t account) {
  if (deferred_balances(spec)) return balance_id(account);
  return PlainCounter{account_key(account), Bounds{}};
}

inline CounterRef supply_ref(const WorkloadSpec& spec) {
  if (deferred_supply(spec)) return supply_id();
  return PlainCounter{supply_key(), Bounds{}};
}

inline CounterRef shared_ref(const WorkloadSpec& spec) {
  if (spec.mode == Mode::Deferred) return shared_counter_id();
  return PlainCounter{shared_counter_key(), shared_counter_bounds(spec)};
}

}  // namespace detail

/// One block of scripts. Pure in (spec, block_size, block_number).
inline std::vector<TxnScript> generate(const WorkloadSpec& spec, std::size_t block_size,
                                       std::uint64_t block_number = 0) {
  validate(spec);
  SplitMix64 rng(mix_seed(spec.seed, 0x9e3779b97f4a7c15ULL ^ block_number));
  std::vector<TxnScript> block;
  block.reserve(block_size);
  const CounterRef supply = detail::supply_ref(spec);

  for (std::size_t pos = 0; pos < block_size; ++pos) {
    TxnScript s;
    auto& p = s.program;
    const std::uint64_t sender = rng.below(spec.accounts);
    switch (spec.kind) {
      case Kind::NoOp:
        p.push_back(ins::ChargeFee{PlainCounter{account_key(sender), Bounds{}}, fee::kNoOp, supply});
        break;
      case Kind::Sponsored: {
        const std::uint64_t payer = rng.below(spec.payers);
        p.push_back(ins::ChargeFee{detail::balance_ref(spec, payer), fee::kSponsored, supply});
        break;
      }
      case Kind::Transfer: {
        std::uint64_t receiver = 0;
        if (spec.pattern == Pattern::Random) {
          receiver = rng.below(spec.accounts - 1);
          if (receiver >= sender) ++receiver;
        }
        const std::uint64_t amount = 1 + rng.below(1000);
        if (deferred_balances(spec)) {
          p.push_back(ins::DeferredUpdate{balance_id(sender), -static_cast<std::int64_t>(amount)});
          p.push_back(ins::AbortIf{Condition{ConditionKind::LastUpdateFailed, 0}});
          p.push_back(ins::DeferredUpdate{balance_id(receiver), static_cast<std::int64_t>(amount)});
        } else {
          p.push_back(ins::Debit{account_key(sender), amount});
          p.push_back(ins::Credit{account_key(receiver), amount});
        }
        p.push_back(ins::ChargeFee{detail::balance_ref(spec, sender), fee::kTransfer, supply});
        break;
      }
      case Kind::NftMint: {
        p.push_back(ins::DeferredUpdate{detail::shared_ref(spec), 1});
        p.push_back(ins::AbortIf{Condition{ConditionKind::LastUpdateFailed, 0}});
        p.push_back(ins::DeferredSnapshot{detail::shared_ref(spec), FormatterSpec{"Tok #", ""}});
        Bytes owner = to_bytes("owner:");
        put_be64(owner, sender);
        p.push_back(ins::WriteValue{object_key(block_number, static_cast<std::uint32_t>(pos)),
                                    {seg::Literal{owner}, seg::Snapshot{LocalHandle{0}}}});
        p.push_back(ins::ChargeFee{PlainCounter{account_key(sender), Bounds{}}, fee::kNftMint, supply});
        break;
      }
      case Kind::History:
        p.push_back(ins::RepeatUpdate{detail::shared_ref(spec), 1, static_cast<std::uint32_t>(spec.n)});
        p.push_back(ins::ChargeFee{PlainCounter{account_key(sender), Bounds{}}, fee::kHistory, supply});
        break;
      case Kind::Cnt:
        p.push_back(ins::DeferredUpdate{detail::shared_ref(spec), rng.chance(1, 2) ? 1 : -1});
        p.push_back(ins::ChargeFee{PlainCounter{account_key(sender), Bounds{}}, fee::kCnt, supply});
        break;
      case Kind::Reveal:
        p.push_back(ins::DeferredUpdate{detail::shared_ref(spec), 1});
        if (rng.chance(spec.reveal_fraction.num, spec.reveal_fraction.den)) {
          p.push_back(ins::DeferredReveal{detail::shared_ref(spec)});
          p.push_back(
              ins::WriteValue{object_key(block_number, static_cast<std::uint32_t>(pos)), {seg::LastReveal{}}});
        }
        p.push_back(ins::ChargeFee{PlainCounter{account_key(sender), Bounds{}}, fee::kReveal, supply});
        break;
    }
    block.push_back(std::move(s));
  }
  return block;
}

}  // namespace deferred_stm::workloads
