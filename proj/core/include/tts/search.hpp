#pragma once

#include <utility>
#include <vector>

#include "tts/core.hpp"
#include "tts/generator.hpp"
#include "tts/verifier.hpp"

namespace tts {

/// Smallest j >= 0 with N <= K * d^j, i.e. ceil(log_d(N / K)).
int thinning_rounds(int n, int k, double d);

struct TransitionSteps {
    int warmup;      // T_s
    int refinement;  // T_r

    bool operator==(const TransitionSteps&) const = default;
};

/// (T_s, T_r) with T_s = max(1, T/4) unless overridden and T_r = T_s + ceil(log_d(N/K)).
/// Throws ConfigError for invalid configurations (including T_r > T).
TransitionSteps transition_steps(const ScheduleConfig& cfg);

/// Active pool width: W_{T_s} = N, W_t = max(floor(N * d^-(t - T_s)), K) for T_s < t <= T_r.
int schedule_width(int t, const ScheduleConfig& cfg);

/// Per-survivor branching factor b_t = floor(W_{t+1} / K), for T_s <= t < T_r.
int branch_count(int t, const ScheduleConfig& cfg);

/// Number of children each ranked survivor receives so the children total W_{t+1} exactly.
/// The first (W_{t+1} mod K) survivors get one extra.
std::vector<int> children_per_survivor(int t, const ScheduleConfig& cfg);

/// Local continuation kernel: child 0 continues the parent, children k >= 1
/// re-mask the floor(rho * committed) lowest-confidence committed positions.
struct BranchKernel {
    double remask_fraction = 0.1;

    void validate() const;
    /// floor(rho * committed), guarded against representation error.
    int remask_count(int committed) const;
};

/// Spawn b children of `parent` at step t. Children keep step t; re-masked
/// children are below quota and must be repaired before advancing.
std::vector<Trajectory> branch(const Trajectory& parent, int b, const BranchKernel& kernel, int t,
                               IdAllocator& ids);

struct SearchOptions {
    /// Worker threads used for pool-wide generator and verifier calls. Results
    /// are bit-identical for any value.
    unsigned threads = 1;
};

/// Linear trajectory search: N independent full-depth trajectories, scored once.
SearchResult run_lts(const ScheduleConfig& cfg, const Prompt& prompt, const Generator& gen,
                     const Verifier& ver, const SearchOptions& options = {});

/// Hierarchical trajectory search: exploration to T_s, geometric thinning with
/// branching to T_r, then independent refinement of K survivors to T.
SearchResult run_hts(const ScheduleConfig& cfg, const Prompt& prompt, const Generator& gen,
                     const Verifier& ver, const BranchKernel& kernel,
                     const SearchOptions& options = {});

/// Exact NFE ledger run_hts will record for this configuration.
NFELedger predict_hts_cost(const ScheduleConfig& cfg, const BranchKernel& kernel);

/// Exact LTS ledger: N*T generator steps, N verifier calls.
NFELedger predict_lts_cost(const ScheduleConfig& cfg);

/// The asymptotic cost expression N*T_s + (N - dK)/(d - 1) + K*(T - T_r), for
/// comparison only; run_hts is charged by predict_hts_cost.
double approximate_hts_cost(const ScheduleConfig& cfg);

}  // namespace tts
