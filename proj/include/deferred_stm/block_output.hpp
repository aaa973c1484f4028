#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "deferred_stm/state.hpp"
#include "deferred_stm/txn_model.hpp"

namespace deferred_stm {

/// Output of one committed transaction with every deferred value inlined.
struct FinalizedOutput {
  TxnStatus status = TxnStatus::Success;
  std::uint32_t abort_code = 0;
  WriteSet write_set;
  /// Final value of every deferred object the transaction touched, by id.
  std::vector<std::pair<DeferredId, DeferredValue>> deferred_writes;
  std::uint64_t gas_used = 0;

  friend bool operator==(const FinalizedOutput&, const FinalizedOutput&) = default;
};

struct BlockStats {
  std::uint64_t executions = 0;
  std::uint64_t validations = 0;
  std::uint64_t aborts = 0;
  std::uint64_t speculative_failures = 0;
  std::uint64_t commit_reexecutions = 0;
  std::uint64_t dependencies = 0;
  /// Largest number of commit-time re-executions of a single transaction.
  std::uint64_t max_commit_reexecutions_per_txn = 0;
  /// Delta traversals performed inside commit hooks.
  std::uint64_t hook_traversals = 0;
};

struct BlockOutput {
  std::vector<FinalizedOutput> outputs;
  std::map<DeferredId, DeferredValue> committed_deferred;
  BlockStats stats;

  /// Equality of everything except the statistics.
  bool same_results(const BlockOutput& other) const {
    return outputs == other.outputs && committed_deferred == other.committed_deferred;
  }
};

inline std::uint64_t hash_outputs(const std::vector<FinalizedOutput>& outputs) {
  Fnv1a h;
  h.update_u64(outputs.size());
  for (const auto& o : outputs) {
    h.update_u64(static_cast<std::uint64_t>(o.status));
    h.update_u64(o.abort_code);
    h.update_u64(o.gas_used);
    h.update_u64(o.write_set.size());
    for (const auto& [k, v] : o.write_set) {
      h.update(k);
      h.update(v.bytes);
      h.update_u64(v.placeholders.size());
    }
    h.update_u64(o.deferred_writes.size());
    for (const auto& [id, v] : o.deferred_writes) {
      h.update_u64(id.creator);
      h.update_u64(id.local_seq);
      if (const auto* n = std::get_if<std::uint64_t>(&v)) {
        h.update_u64(0);
        h.update_u64(*n);
      } else {
        h.update_u64(1);
        h.update(std::get<Bytes>(v));
      }
    }
  }
  return h.digest();
}

}  // namespace deferred_stm
