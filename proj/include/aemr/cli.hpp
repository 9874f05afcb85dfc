#pragma once

// Command implementations behind the `aemr` tool. Each command throws
// aemr::Error for usage and validation problems (exit 2) and other
// exceptions for runtime failures (exit 1); run_cli does the mapping.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace aemr {

inline constexpr const char* kVersion = "0.1.0";

struct DataOptions {
  std::string input;
  std::string treatment;
  std::string outcome;
  std::vector<std::string> drop_cols;
  std::string id_col;
  bool missing = false;
};

struct MatchOptions {
  DataOptions data;
  std::string holdout;
  std::string weights;
  std::string out;
  std::string mode = "fixed";
  double tradeoff_c = 0.1;
  double stop_pe_frac = 0.05;
  double stop_bf_gap = 0.10;
  bool no_pe_stop = false;
  bool no_bf_stop = false;
  std::optional<std::size_t> max_iterations;
  std::optional<double> early_stop_weight;
  bool match_all_controls = false;
  std::uint64_t seed = 0;
  double ridge_lambda = 0.0;
  std::size_t importance_shuffles = 100;
  double importance_lambda = 1.0;
  unsigned threads = 1;
};

struct OracleCheckOptions {
  DataOptions data;
  std::string weights;
  std::string out;
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  std::size_t cap = 16;
  bool inject_fault = false;
  unsigned threads = 1;
};

struct SimulateOptions {
  std::string scenario = "irrelevant";
  std::optional<std::size_t> n_treated;
  std::optional<std::size_t> n_control;
  std::optional<std::size_t> holdout_treated;
  std::optional<std::size_t> holdout_control;
  std::optional<std::size_t> p_important;
  std::optional<std::size_t> p_irrelevant;
  std::optional<double> U;
  std::optional<double> tau;
  std::optional<double> noise_sd;
  std::optional<double> missing_rate;
  std::optional<double> block_rho;
  std::optional<std::size_t> block_size;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
};

struct ImportanceCliOptions {
  DataOptions data;  // data.input is the holdout CSV
  std::size_t shuffles = 100;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::string out;
  unsigned threads = 1;
};

struct BenchOptions {
  // "n:p" pairs.
  std::vector<std::string> grid{"2000:14", "20000:10"};
  std::size_t reps = 1;
  std::uint64_t seed = 0;
  std::size_t cap = 16;
  std::string out;
  unsigned threads = 1;
};

int cmd_match(const MatchOptions& o, std::ostream& out);
// 0 on full agreement, 1 when any disagreement was found.
int cmd_oracle_check(const OracleCheckOptions& o, std::ostream& out);
int cmd_simulate(const SimulateOptions& o, std::ostream& out);
int cmd_importance(const ImportanceCliOptions& o, std::ostream& out);
int cmd_bench(const BenchOptions& o, std::ostream& out);

// Parses argv (argv[0] is the program name) and dispatches.
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace aemr
