#include "tts/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "parallel.hpp"
#include "tts/rng.hpp"

namespace tts {

int thinning_rounds(int n, int k, double d) {
    if (n < 1 || k < 1 || k > n) throw ConfigError("thinning_rounds: need 1 <= K <= N");
    if (!(d > 1.0) || !std::isfinite(d)) throw ConfigError("thinning_rounds: need d > 1");
    int j = 0;
    long double bound = k;
    // Relative slack absorbs rounding in K * d^j for non-integer d.
    while (static_cast<long double>(n) > bound * (1.0L + 1e-12L)) {
        bound *= d;
        ++j;
    }
    return j;
}

TransitionSteps transition_steps(const ScheduleConfig& cfg) {
    cfg.validate();
    const int ts = cfg.effective_warmup();
    return {ts, ts + thinning_rounds(cfg.n_trajectories, cfg.keep, cfg.decay)};
}

namespace {

int width_unchecked(int t, int ts, const ScheduleConfig& cfg) {
    if (t == ts) return cfg.n_trajectories;
    const double raw = cfg.n_trajectories / std::pow(cfg.decay, t - ts);
    const auto floored = static_cast<int>(std::floor(raw + 1e-9));
    return std::max(floored, cfg.keep);
}

}  // namespace

int schedule_width(int t, const ScheduleConfig& cfg) {
    const auto [ts, tr] = transition_steps(cfg);
    if (t < ts || t > tr) {
        throw UsageError("schedule_width: t=" + std::to_string(t) + " outside [" +
                         std::to_string(ts) + ", " + std::to_string(tr) + "]");
    }
    return width_unchecked(t, ts, cfg);
}

int branch_count(int t, const ScheduleConfig& cfg) {
    const auto [ts, tr] = transition_steps(cfg);
    if (t < ts || t >= tr) {
        throw UsageError("branch_count: t=" + std::to_string(t) + " outside [" +
                         std::to_string(ts) + ", " + std::to_string(tr) + ")");
    }
    return width_unchecked(t + 1, ts, cfg) / cfg.keep;
}

std::vector<int> children_per_survivor(int t, const ScheduleConfig& cfg) {
    const int base = branch_count(t, cfg);
    const int next_width = schedule_width(t + 1, cfg);
    const int extra = next_width - base * cfg.keep;
    std::vector<int> counts(static_cast<std::size_t>(cfg.keep), base);
    for (int r = 0; r < extra; ++r) ++counts[static_cast<std::size_t>(r)];
    return counts;
}

void BranchKernel::validate() const {
    if (!(remask_fraction >= 0.0 && remask_fraction < 1.0)) {
        throw ConfigError("BranchKernel: remask fraction must lie in [0, 1)");
    }
}

int BranchKernel::remask_count(int committed) const {
    return static_cast<int>(std::floor(remask_fraction * committed + 1e-9));
}

std::vector<Trajectory> branch(const Trajectory& parent, int b, const BranchKernel& kernel, int t,
                               IdAllocator& ids) {
    if (b < 1) throw UsageError("branch: b must be >= 1");
    if (parent.step != t) throw UsageError("branch: parent is not at step " + std::to_string(t));
    kernel.validate();

    // Committed positions ordered by ascending confidence, then ascending index.
    std::vector<int> order;
    for (int i = 0; i < parent.state.size(); ++i) {
        if (!parent.state.is_masked(i)) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](int a, int c) {
        return parent.confidences[static_cast<std::size_t>(a)] <
               parent.confidences[static_cast<std::size_t>(c)];
    });
    const int remask = kernel.remask_count(static_cast<int>(order.size()));

    std::vector<Trajectory> children;
    children.reserve(static_cast<std::size_t>(b));
    for (int k = 0; k < b; ++k) {
        Trajectory child = parent;
        child.id = ids.next();
        child.seed = derive_seed(parent.seed, {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(k)});
        child.lineage.push_back(parent.id);
        child.last_score.reset();
        if (k >= 1) {
            for (int r = 0; r < remask; ++r) {
                const int pos = order[static_cast<std::size_t>(r)];
                child.state.set(pos, kMask);
                child.confidences[static_cast<std::size_t>(pos)] = 0.0;
            }
        }
        children.push_back(std::move(child));
    }
    return children;
}

namespace {

void check_generator(const ScheduleConfig& cfg, const Generator& gen) {
    if (gen.quota_schedule() != cfg.quota) {
        throw ConfigError("generator quota schedule differs from ScheduleConfig::quota");
    }
}

std::vector<Trajectory> init_pool(const ScheduleConfig& cfg, const Prompt& prompt,
                                  const Generator& gen, IdAllocator& ids) {
    std::vector<Trajectory> pool;
    pool.reserve(static_cast<std::size_t>(cfg.n_trajectories));
    for (int i = 0; i < cfg.n_trajectories; ++i) {
        pool.push_back(init_trajectory(gen, prompt, derive_seed(cfg.root_seed, {static_cast<std::uint64_t>(i)}),
                                       cfg, ids));
    }
    return pool;
}

// Advances every trajectory to `until`; returns the number of generator steps taken.
std::uint64_t advance_pool(std::vector<Trajectory>& pool, int until, const Prompt& prompt,
                           const Generator& gen, unsigned threads) {
    std::vector<std::uint64_t> taken(pool.size(), 0);
    detail::parallel_for(pool.size(), threads, [&](std::size_t i) {
        while (pool[i].step < until) {
            pool[i] = advance(gen, pool[i], prompt);
            ++taken[i];
        }
    });
    return std::accumulate(taken.begin(), taken.end(), std::uint64_t{0});
}

std::vector<double> score_pool(std::vector<Trajectory>& pool, const Prompt& prompt,
                               const Verifier& ver, unsigned threads) {
    std::vector<double> scores(pool.size(), 0.0);
    detail::parallel_for(pool.size(), threads, [&](std::size_t i) {
        scores[i] = ver.score(pool[i].state, prompt);
        pool[i].last_score = scores[i];
    });
    return scores;
}

std::vector<TrajectoryId> ids_of(const std::vector<Trajectory>& pool) {
    std::vector<TrajectoryId> ids;
    ids.reserve(pool.size());
    for (const auto& t : pool) ids.push_back(t.id);
    return ids;
}

SearchResult finish(std::vector<Trajectory>& pool, const ScheduleConfig& cfg, const Prompt& prompt,
                    const Verifier& ver, const SearchOptions& options, SearchResult result) {
    const auto scores = score_pool(pool, prompt, ver, options.threads);
    result.ledger.charge_verify(Stage::kFinalSelection, pool.size());
    const std::size_t winner = select_best(pool, scores);
    result.trace.push_back(TraceEntry{cfg.total_steps, static_cast<int>(pool.size()), ids_of(pool),
                                      scores, {pool[winner].id}});
    result.best = pool[winner];
    result.best_score = scores[winner];
    return result;
}

}  // namespace

SearchResult run_lts(const ScheduleConfig& cfg, const Prompt& prompt, const Generator& gen,
                     const Verifier& ver, const SearchOptions& options) {
    cfg.validate();
    check_generator(cfg, gen);
    IdAllocator ids;
    auto pool = init_pool(cfg, prompt, gen, ids);

    SearchResult result;
    result.ledger.charge_gen(Stage::kExploration,
                             advance_pool(pool, cfg.total_steps, prompt, gen, options.threads));
    return finish(pool, cfg, prompt, ver, options, std::move(result));
}

SearchResult run_hts(const ScheduleConfig& cfg, const Prompt& prompt, const Generator& gen,
                     const Verifier& ver, const BranchKernel& kernel, const SearchOptions& options) {
    const auto [ts, tr] = transition_steps(cfg);
    kernel.validate();
    check_generator(cfg, gen);
    IdAllocator ids;
    SearchResult result;

    // Stage 1: unscored exploration.
    auto pool = init_pool(cfg, prompt, gen, ids);
    result.ledger.charge_gen(Stage::kExploration, advance_pool(pool, ts, prompt, gen, options.threads));

    // Stage 2: score, keep K, branch to W_{t+1}, step every child.
    for (int t = ts; t < tr; ++t) {
        const auto scores = score_pool(pool, prompt, ver, options.threads);
        result.ledger.charge_verify(Stage::kThinning, pool.size());
        const auto survivors = select_topk(pool, scores, static_cast<std::size_t>(cfg.keep));

        TraceEntry entry{t, static_cast<int>(pool.size()), ids_of(pool), scores, {}};
        for (std::size_t s : survivors) entry.survivor_ids.push_back(pool[s].id);
        result.trace.push_back(std::move(entry));

        const auto counts = children_per_survivor(t, cfg);
        std::vector<Trajectory> children;
        for (std::size_t r = 0; r < survivors.size(); ++r) {
            auto spawned = branch(pool[survivors[r]], counts[r], kernel, t, ids);
            std::move(spawned.begin(), spawned.end(), std::back_inserter(children));
        }

        const int quota = commit_quota(t, cfg.total_steps, cfg.seq_len, cfg.quota);
        std::vector<std::uint64_t> repaired(children.size(), 0);
        detail::parallel_for(children.size(), options.threads, [&](std::size_t i) {
            if (children[i].state.committed_count() < quota) {
                children[i] = repair(gen, children[i], prompt);
                repaired[i] = 1;
            }
            children[i] = advance(gen, children[i], prompt);
        });
        result.ledger.charge_gen(Stage::kThinning,
                                 children.size() + std::accumulate(repaired.begin(), repaired.end(),
                                                                   std::uint64_t{0}));
        pool = std::move(children);
    }

    // Stage 3: independent refinement of the K survivors, then final selection.
    result.ledger.charge_gen(Stage::kRefinement,
                             advance_pool(pool, cfg.total_steps, prompt, gen, options.threads));
    return finish(pool, cfg, prompt, ver, options, std::move(result));
}

NFELedger predict_hts_cost(const ScheduleConfig& cfg, const BranchKernel& kernel) {
    const auto [ts, tr] = transition_steps(cfg);
    kernel.validate();
    NFELedger ledger;
    const auto n = static_cast<std::uint64_t>(cfg.n_trajectories);
    const auto k = static_cast<std::uint64_t>(cfg.keep);
    ledger.charge_gen(Stage::kExploration, n * static_cast<std::uint64_t>(ts));
    for (int t = ts; t < tr; ++t) {
        const auto width = static_cast<std::uint64_t>(width_unchecked(t, ts, cfg));
        const auto next = static_cast<std::uint64_t>(width_unchecked(t + 1, ts, cfg));
        ledger.charge_verify(Stage::kThinning, width);
        ledger.charge_gen(Stage::kThinning, next);
        const int committed = commit_quota(t, cfg.total_steps, cfg.seq_len, cfg.quota);
        if (kernel.remask_count(committed) > 0) ledger.charge_gen(Stage::kThinning, next - k);
    }
    ledger.charge_gen(Stage::kRefinement, k * static_cast<std::uint64_t>(cfg.total_steps - tr));
    ledger.charge_verify(Stage::kFinalSelection, k);
    return ledger;
}

NFELedger predict_lts_cost(const ScheduleConfig& cfg) {
    cfg.validate();
    NFELedger ledger;
    ledger.charge_gen(Stage::kExploration,
                      static_cast<std::uint64_t>(cfg.n_trajectories) *
                          static_cast<std::uint64_t>(cfg.total_steps));
    ledger.charge_verify(Stage::kFinalSelection, static_cast<std::uint64_t>(cfg.n_trajectories));
    return ledger;
}

double approximate_hts_cost(const ScheduleConfig& cfg) {
    const auto [ts, tr] = transition_steps(cfg);
    const double n = cfg.n_trajectories;
    const double k = cfg.keep;
    const double d = cfg.decay;
    return n * ts + (n - d * k) / (d - 1.0) + k * (cfg.total_steps - tr);
}

}  // namespace tts
