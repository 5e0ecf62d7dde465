#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace tubempc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitSynthesis = 2;

/// Where commands write. `out` receives the report, `err` diagnostics.
struct Streams {
  std::ostream& out;
  std::ostream& err;
  bool quiet = false;
};

int cmd_synthesize(const std::filesystem::path& problem, const std::filesystem::path& out, Streams io);

/// Writes a long-format CSV: one line per (ε, method, direction).
int cmd_rpi_compare(const std::filesystem::path& problem, const std::vector<double>& eps,
                    const std::filesystem::path& out, Streams io);

/// Writes run_NNNN.csv per run and summary.json into `out_dir`. Runs are
/// spread over `workers` threads (0 picks the hardware concurrency).
int cmd_simulate(const std::filesystem::path& problem, const std::filesystem::path& artifact,
                 std::optional<int> runs, std::optional<std::uint64_t> seed, const std::filesystem::path& out_dir,
                 Streams io, unsigned workers = 0);

int cmd_feasible(const std::filesystem::path& artifact, const std::string& grid, const std::filesystem::path& out,
                 Streams io);

/// Parses "0.01,0.1,0.5".
std::vector<double> parse_eps_list(const std::string& text);

/// Full command-line entry point.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tubempc::cli
