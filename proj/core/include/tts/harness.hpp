#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tts/backend.hpp"
#include "tts/core.hpp"
#include "tts/generator.hpp"
#include "tts/search.hpp"
#include "tts/verifier.hpp"

namespace tts {

enum class Method { kLTS, kHTS };

const char* to_string(Method method) noexcept;
/// Accepts "lts"/"hts" in any case. Throws ConfigError otherwise.
Method parse_method(std::string_view text);

/// Everything needed to reproduce one search run.
struct RunSpec {
    Method method = Method::kHTS;
    ScheduleConfig cfg;
    SimGenParams gen;
    SVFParams svf;
    int vocab_size = 1024;
    unsigned threads = 1;                  // pool-level parallelism inside the run
    std::optional<RemoteEndpoint> endpoint;  // run against a remote backend instead

    BranchKernel kernel() const { return BranchKernel{cfg.branch_remask_fraction}; }
};

/// Simulator prompt used for a run seeded with `root_seed`.
Prompt run_prompt(std::uint64_t root_seed, int length, int vocab_size);

/// Execute a single run (cfg.root_seed selects the prompt and the tree).
SearchResult run_search(const RunSpec& spec);

struct ReportRow {
    std::string method;
    int n = 0;
    int k = 0;
    double d = 0.0;
    int t = 0;
    int t_s = 0;
    int t_r = 0;
    std::uint64_t seed = 0;
    std::uint64_t gen_nfe = 0;
    std::uint64_t verify_nfe = 0;
    double best_score = 0.0;
    double wall_ms = 0.0;
    std::optional<std::string> error;  // set for cells whose configuration was rejected

    bool ok() const noexcept { return !error.has_value(); }
};

ReportRow make_row(const RunSpec& spec, const SearchResult& result, double wall_ms);

struct SweepSpec {
    std::vector<Method> methods{Method::kLTS, Method::kHTS};
    std::vector<int> n_values{8};
    std::vector<int> t_values{32};
    int keep_ratio = 4;  // K = max(1, N / keep_ratio)
    std::vector<std::uint64_t> seeds{0};
    RunSpec base;         // method, N, T, K and root_seed are overwritten per cell
    unsigned threads = 1;  // cells evaluated concurrently

    void validate() const;
};

/// One row per (method, N, T, seed), sorted by method, N, T, seed.
std::vector<ReportRow> run_sweep(const SweepSpec& spec);

struct MonteCarloSummary {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t samples = 0;
};

/// Mean and standard error of best_score over root seeds. Needs at least 2 seeds.
MonteCarloSummary monte_carlo(const RunSpec& spec, const std::vector<std::uint64_t>& seeds,
                              unsigned threads = 1);

/// Outcome of replaying an HTS run by exhaustive enumeration.
struct OracleResult {
    SearchResult hts;
    std::vector<TraceEntry> replay_trace;
    std::vector<Trajectory> final_set;
    TrajectoryId replay_winner = 0;
    bool trace_match = false;
    bool winner_match = false;
    bool state_match = false;
    std::string detail;

    bool passed() const noexcept { return trace_match && winner_match && state_match; }
};

/// Independent replay of the seeded HTS tree for tiny instances (N <= 4, T <= 4, M <= 8).
/// Throws ConfigError for larger instances or non-simulator specs.
OracleResult oracle_enumerate(const RunSpec& spec);

enum class ReportFormat { kCsv, kJsonl, kSvg };

ReportFormat parse_format(std::string_view text);

inline constexpr std::string_view kCsvHeader =
    "method,n,k,d,t,t_s,t_r,seed,gen_nfe,verify_nfe,best_score,wall_ms";

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format);
std::string render_csv_row(const ReportRow& row);

}  // namespace tts
