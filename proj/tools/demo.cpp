// Mints a few tokens from a limited collection in parallel and prints the
// materialized token names next to the sequential oracle's.

#include <iostream>
#include <string>

#include "deferred_stm/deferred_stm.hpp"

int main() {
  namespace ds = deferred_stm;
  ds::workloads::WorkloadSpec spec;
  spec.kind = ds::workloads::Kind::NftMint;
  spec.limit = 5;
  spec.accounts = 100;
  spec.seed = 7;

  const ds::BaseState state = ds::workloads::seed_state(spec);
  const auto block = ds::workloads::generate(spec, 8);

  ds::ExecutorOptions options;
  options.workers = 4;
  const ds::BlockOutput parallel = ds::execute_block(block, state, options);
  const ds::BlockOutput expected = ds::oracle::sequential_execute_block(block, state);

  for (std::size_t i = 0; i < parallel.outputs.size(); ++i) {
    const auto& out = parallel.outputs[i];
    std::cout << "txn " << i + 1 << ": ";
    if (out.status != ds::TxnStatus::Success) {
      std::cout << "aborted (code " << out.abort_code << ")\n";
      continue;
    }
    for (const auto& [key, value] : out.write_set) {
      if (key.front() != ds::workloads::kObjectPrefix) continue;
      // owner tag (6 + 8 bytes), then the zero-padded name region
      std::string name(value.bytes.begin() + 14, value.bytes.end());
      name.resize(name.find('\0') == std::string::npos ? name.size() : name.find('\0'));
      std::cout << name;
    }
    std::cout << '\n';
  }
  std::cout << "supply after block: "
            << std::get<std::uint64_t>(parallel.committed_deferred.at(ds::workloads::shared_counter_id())) << '\n';
  std::cout << "matches oracle: " << (parallel.same_results(expected) ? "yes" : "no") << '\n';
  return parallel.same_results(expected) ? 0 : 1;
}
