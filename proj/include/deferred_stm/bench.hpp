#pragma once

// Benchmark runner: timed block execution per thread count, optional oracle
// verification, CSV output.

#include <chrono>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "deferred_stm/block_output.hpp"
#include "deferred_stm/executor.hpp"
#include "deferred_stm/oracle.hpp"
#include "deferred_stm/scheduler.hpp"
#include "deferred_stm/state.hpp"
#include "deferred_stm/workloads.hpp"

namespace deferred_stm::bench {

inline constexpr const char* kCsvHeader =
    "workload,mode,threads,block_size,blocks,seed,total_txns,elapsed_ms,tps,aborts,commit_reexecs,spec_failures";

/// Simulated VM cost per transaction used by the benchmarks.
inline constexpr std::uint32_t kDefaultWorkUnits = 4000;

struct BenchConfig {
  workloads::WorkloadSpec workload;
  std::uint64_t blocks = 3;
  std::uint64_t block_size = 1000;
  std::vector<unsigned> threads{1};
  bool verify = false;
  std::optional<std::string> csv_path;
  std::uint32_t work_units = kDefaultWorkUnits;
  /// Thread count 0 selects the sequential baseline executor.
  bool include_sequential = false;
};

struct BenchRow {
  std::string workload;
  std::string mode;
  unsigned threads = 0;  // 0: sequential baseline
  std::uint64_t block_size = 0;
  std::uint64_t blocks = 0;
  std::uint64_t seed = 0;
  std::uint64_t total_txns = 0;
  double elapsed_ms = 0;
  double tps = 0;
  std::uint64_t aborts = 0;
  std::uint64_t commit_reexecs = 0;
  std::uint64_t spec_failures = 0;
  std::uint64_t max_commit_reexecs_per_txn = 0;
  std::uint64_t hook_traversals = 0;
  bool verified = false;
};

inline void validate(const BenchConfig& config) {
  workloads::validate(config.workload);
  if (config.blocks < 1) throw Error(ErrorCode::InvalidConfig, "blocks must be at least 1");
  if (config.block_size < 1) throw Error(ErrorCode::InvalidConfig, "block size must be at least 1");
  if (config.threads.empty()) throw Error(ErrorCode::InvalidConfig, "no thread counts given");
  for (unsigned t : config.threads) {
    if (t < 1) throw Error(ErrorCode::InvalidConfig, "thread counts must be at least 1");
  }
}

inline void write_row(std::ostream& out, const BenchRow& r) {
  out << r.workload << ',' << r.mode << ',' << r.threads << ',' << r.block_size << ',' << r.blocks << ',' << r.seed
      << ',' << r.total_txns << ',' << r.elapsed_ms << ',' << r.tps << ',' << r.aborts << ',' << r.commit_reexecs
      << ',' << r.spec_failures << '\n';
}

class VerificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs one configuration for one thread count (0: sequential baseline).
/// Blocks execute one after another on the evolving state; the first block
/// is a warm-up and is not timed. Throws VerificationError on an oracle
/// mismatch when verification is on.
inline BenchRow run_one(const BenchConfig& config, unsigned threads, EventLog* events = nullptr) {
  const auto& spec = config.workload;
  BaseState state = workloads::seed_state(spec);
  std::vector<std::vector<TxnScript>> blocks;
  blocks.reserve(config.blocks + 1);
  for (std::uint64_t b = 0; b <= config.blocks; ++b) blocks.push_back(workloads::generate(spec, config.block_size, b));

  ExecutorOptions options;
  options.workers = threads;
  options.interpreter.work_units = config.work_units;
  options.events = events;

  BenchRow row;
  row.workload = std::string(workloads::kind_name(spec.kind));
  row.mode = std::string(workloads::mode_name(spec.mode));
  row.threads = threads;
  row.block_size = config.block_size;
  row.blocks = config.blocks;
  row.seed = spec.seed;
  row.verified = config.verify;

  std::chrono::nanoseconds elapsed{0};
  for (std::uint64_t b = 0; b < blocks.size(); ++b) {
    const auto start = std::chrono::steady_clock::now();
    BlockOutput out = threads == 0 ? execute_sequential(blocks[b], state, options.interpreter)
                                   : execute_block(blocks[b], state, options);
    const auto stop = std::chrono::steady_clock::now();
    if (config.verify) {
      BlockOutput expected = oracle::sequential_execute_block(blocks[b], state);
      if (!out.same_results(expected)) {
        throw VerificationError("block " + std::to_string(b) + " differs from the sequential oracle (" + row.workload +
                                ", " + std::to_string(threads) + " threads)");
      }
    }
    if (b > 0) {
      elapsed += stop - start;
      row.total_txns += blocks[b].size();
      row.aborts += out.stats.aborts;
      row.commit_reexecs += out.stats.commit_reexecutions;
      row.spec_failures += out.stats.speculative_failures;
      row.hook_traversals += out.stats.hook_traversals;
      row.max_commit_reexecs_per_txn =
          std::max(row.max_commit_reexecs_per_txn, out.stats.max_commit_reexecutions_per_txn);
    }
    state = apply_outputs(state, out.outputs);
  }
  row.elapsed_ms = std::chrono::duration<double, std::milli>(elapsed).count();
  row.tps = row.elapsed_ms > 0 ? static_cast<double>(row.total_txns) * 1000.0 / row.elapsed_ms : 0.0;
  return row;
}

inline std::vector<BenchRow> run(const BenchConfig& config, EventLog* events = nullptr) {
  validate(config);
  std::vector<BenchRow> rows;
  if (config.include_sequential) rows.push_back(run_one(config, 0, events));
  for (unsigned t : config.threads) rows.push_back(run_one(config, t, events));
  return rows;
}

}  // namespace deferred_stm::bench
