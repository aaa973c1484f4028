#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deferred_stm/bench.hpp"

namespace {

std::vector<unsigned> parse_threads(const std::string& text) {
  std::vector<unsigned> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(static_cast<unsigned>(deferred_stm::workloads::parse_u64(item)));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  namespace ds = deferred_stm;
  CLI::App app{"Block execution throughput benchmark"};

  std::string workload = "noop";
  std::string mode = "deferred";
  std::uint64_t payers = 1;
  std::uint64_t n = 1;
  std::string reveal_fraction = "1/2";
  std::optional<std::uint64_t> limit;
  std::uint64_t accounts = 20'000;
  std::uint64_t blocks = 3;
  std::uint64_t block_size = 1000;
  const char* env_threads = std::getenv("DEFERRED_STM_WORKERS");
  std::string threads = env_threads != nullptr ? env_threads : "1";
  std::uint64_t seed = 0;
  bool verify = false;
  bool sequential = false;
  bool single_receiver = false;
  std::uint32_t work_units = ds::bench::kDefaultWorkUnits;
  std::string csv_path;
  std::string event_log_path;

  app.add_option("--workload", workload, "Workload kind")
      ->check(CLI::IsMember({"noop", "sponsored", "transfer", "nft-mint", "history", "cnt", "reveal"}));
  app.add_option("--mode", mode, "Counter representation")->check(CLI::IsMember({"integer", "deferred"}));
  app.add_option("--payers", payers, "Number of fee payers (sponsored)");
  app.add_option("--n", n, "Loop count (history) or upper bound (cnt)");
  app.add_option("--reveal-fraction", reveal_fraction, "Fraction of revealing transactions, e.g. 0.5 or 1/2");
  app.add_option("--limit", limit, "Collection size limit (nft-mint)");
  app.add_option("--accounts", accounts, "Number of seeded accounts");
  app.add_option("--blocks", blocks, "Measured blocks (one extra warm-up block runs first)");
  app.add_option("--block-size", block_size, "Transactions per block");
  app.add_option("--threads", threads, "Comma-separated worker counts (default: $DEFERRED_STM_WORKERS or 1)");
  app.add_option("--seed", seed, "Workload seed");
  app.add_flag("--verify", verify, "Compare every block against the sequential oracle");
  app.add_flag("--sequential", sequential, "Also run the sequential baseline (threads=0 in the CSV)");
  app.add_flag("--single-receiver", single_receiver, "Transfer to a single receiver");
  app.add_option("--work-units", work_units, "Simulated execution cost per transaction");
  app.add_option("--csv", csv_path, "Write CSV rows to this file instead of stdout");
  app.add_option("--event-log", event_log_path, "Write scheduler events to this file");

  CLI11_PARSE(app, argc, argv);

  try {
    ds::bench::BenchConfig config;
    std::ostringstream spec_text;
    spec_text << "workload=" << workload << " mode=" << mode << " payers=" << payers << " n=" << n
              << " reveal_fraction=" << reveal_fraction << " accounts=" << accounts << " seed=" << seed
              << " pattern=" << (single_receiver ? "single_receiver" : "random");
    if (limit) spec_text << " limit=" << *limit;
    config.workload = ds::workloads::from_text(spec_text.str());
    config.blocks = blocks;
    config.block_size = block_size;
    config.threads = parse_threads(threads);
    config.verify = verify;
    config.include_sequential = sequential;
    config.work_units = work_units;
    if (!csv_path.empty()) config.csv_path = csv_path;

    std::ofstream event_file;
    std::unique_ptr<ds::EventLog> events;
    if (!event_log_path.empty()) {
      event_file.open(event_log_path);
      if (!event_file) throw ds::Error(ds::ErrorCode::InvalidConfig, "cannot open " + event_log_path);
      events = std::make_unique<ds::EventLog>(event_file);
    }

    std::ofstream csv_file;
    std::ostream* out = &std::cout;
    if (config.csv_path) {
      csv_file.open(*config.csv_path);
      if (!csv_file) throw ds::Error(ds::ErrorCode::InvalidConfig, "cannot open " + *config.csv_path);
      out = &csv_file;
    }
    ds::bench::validate(config);
    *out << ds::bench::kCsvHeader << '\n';
    if (config.include_sequential) ds::bench::write_row(*out, ds::bench::run_one(config, 0, events.get()));
    for (unsigned t : config.threads) ds::bench::write_row(*out, ds::bench::run_one(config, t, events.get()));
  } catch (const ds::bench::VerificationError& e) {
    std::cerr << "verification failed: " << e.what() << '\n';
    return 2;
  } catch (const ds::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
