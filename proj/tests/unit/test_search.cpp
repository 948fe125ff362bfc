#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "tts/generator.hpp"
#include "tts/rng.hpp"
#include "tts/search.hpp"
#include "tts/verifier.hpp"

using namespace tts;

namespace {

ScheduleConfig make_cfg(int n, int k, double d, int t, std::optional<int> ts = std::nullopt, int m = 16,
                        double rho = 0.0, std::uint64_t seed = 1) {
    ScheduleConfig cfg;
    cfg.n_trajectories = n;
    cfg.keep = k;
    cfg.decay = d;
    cfg.total_steps = t;
    cfg.warmup = ts;
    cfg.seq_len = m;
    cfg.branch_remask_fraction = rho;
    cfg.root_seed = seed;
    return cfg;
}

struct Sim {
    explicit Sim(const ScheduleConfig& cfg, SimGenParams g = {}, SVFParams v = {0.02, 0.5, 0})
        : gen((g.quota = cfg.quota, g)), ver(v), prompt(make_sim_prompt("search", cfg.seq_len, 64)) {}
    SimGenerator gen;
    SimVerifier ver;
    Prompt prompt;
};

ScheduleConfig random_cfg(SplitMix64& rng) {
    for (;;) {
        ScheduleConfig cfg;
        cfg.n_trajectories = 1 + static_cast<int>(rng.uniform_below(24));
        cfg.keep = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(cfg.n_trajectories)));
        const double decays[] = {1.5, 2.0, 3.0, 1.25};
        cfg.decay = decays[rng.uniform_below(4)];
        cfg.total_steps = 2 + static_cast<int>(rng.uniform_below(20));
        if (rng.uniform_below(2)) cfg.warmup = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(cfg.total_steps - 1)));
        cfg.seq_len = 1 + static_cast<int>(rng.uniform_below(24));
        cfg.branch_remask_fraction = rng.uniform_below(3) == 0 ? 0.0 : 0.9 * rng.uniform01();
        cfg.quota = rng.uniform_below(2) ? QuotaSchedule::kLinear : QuotaSchedule::kCosine;
        cfg.root_seed = rng.next();
        try {
            cfg.validate();
            return cfg;
        } catch (const ConfigError&) {
        }
    }
}

}  // namespace

TEST_CASE("transition_steps") {
    CHECK(transition_steps(make_cfg(32, 8, 2, 32)) == TransitionSteps{8, 10});
    CHECK(transition_steps(make_cfg(16, 4, 2, 16)) == TransitionSteps{4, 6});
    const auto same = transition_steps(make_cfg(6, 6, 2, 12));
    CHECK(same.warmup == same.refinement);
    CHECK(transition_steps(make_cfg(5, 5, 2, 3)) == TransitionSteps{1, 1});
    CHECK_THROWS_AS(transition_steps(make_cfg(64, 1, 2, 8, 4)), ConfigError);

    // T_r is the first step at which the width reaches K.
    SplitMix64 rng(8);
    for (int i = 0; i < 300; ++i) {
        const auto cfg = random_cfg(rng);
        const auto [ts, tr] = transition_steps(cfg);
        CHECK(schedule_width(tr, cfg) == cfg.keep);
        if (tr > ts) CHECK(cfg.n_trajectories > cfg.keep * std::pow(cfg.decay, tr - ts - 1));
    }
}

TEST_CASE("schedule_width") {
    const auto a = make_cfg(32, 8, 2, 32, 8);
    CHECK(schedule_width(8, a) == 32);
    CHECK(schedule_width(9, a) == 16);
    CHECK(schedule_width(10, a) == 8);

    const auto b = make_cfg(16, 4, 2, 16, 4);
    CHECK(schedule_width(5, b) == 8);
    CHECK(schedule_width(6, b) == 4);

    const auto c = make_cfg(6, 6, 2, 16);
    CHECK(schedule_width(4, c) == 6);

    CHECK_THROWS_AS(schedule_width(7, a), UsageError);
    CHECK_THROWS_AS(schedule_width(11, a), UsageError);

    SplitMix64 rng(9);
    for (int i = 0; i < 300; ++i) {
        const auto cfg = random_cfg(rng);
        const auto [ts, tr] = transition_steps(cfg);
        for (int t = ts; t < tr; ++t) {
            CHECK(schedule_width(t + 1, cfg) <= schedule_width(t, cfg));
            CHECK(schedule_width(t + 1, cfg) >= cfg.keep);
        }
    }
}

TEST_CASE("branch_count") {
    const auto a = make_cfg(32, 8, 2, 32, 8);
    CHECK(branch_count(8, a) == 2);  // W_9 = 16
    CHECK(branch_count(9, a) == 1);  // W_10 = K: branching stops
    CHECK(branch_count(2, make_cfg(4, 1, 2, 8, 2)) == 2);
    CHECK_THROWS_AS(branch_count(10, a), UsageError);
    CHECK_THROWS_AS(branch_count(7, a), UsageError);

    // Non-divisible widths: W = 5 over K = 4 survivors.
    const auto odd = make_cfg(10, 4, 2, 16, 4);
    CHECK(schedule_width(5, odd) == 5);
    CHECK(children_per_survivor(4, odd) == std::vector<int>{2, 1, 1, 1});
}

TEST_CASE("branch") {
    const Prompt prompt = make_sim_prompt("branch", 16, 64);
    auto cfg = make_cfg(1, 1, 2, 8, 1, 16);
    IdAllocator ids;
    Trajectory parent = init_trajectory(prompt, 77, cfg, ids);
    const SimGenParams noisy{0.5, 0.9, 0.3};
    for (int i = 0; i < 6; ++i) parent = denoise_step(parent, prompt, noisy);
    const int committed = parent.state.committed_count();
    REQUIRE(committed == commit_quota(6, 8, 16));

    SUBCASE("b = 1 is a plain continuation") {
        const auto kids = branch(parent, 1, BranchKernel{0.5}, 6, ids);
        REQUIRE(kids.size() == 1);
        CHECK(kids[0].state == parent.state);
        CHECK(kids[0].id != parent.id);
        CHECK(kids[0].parent_id() == parent.id);
        CHECK(kids[0].seed == derive_seed(parent.seed, {6, 0}));
        CHECK(kids[0].step == 6);
    }
    SUBCASE("re-masks the lowest-confidence committed positions") {
        const auto kids = branch(parent, 3, BranchKernel{0.25}, 6, ids);
        REQUIRE(kids.size() == 3);
        const int expected = static_cast<int>(std::floor(0.25 * committed));
        std::vector<std::pair<double, int>> order;
        for (int i = 0; i < 16; ++i) {
            if (!parent.state.is_masked(i)) order.emplace_back(parent.confidences[static_cast<std::size_t>(i)], i);
        }
        std::sort(order.begin(), order.end());
        for (int k = 1; k < 3; ++k) {
            CHECK(kids[k].state.committed_count() == committed - expected);
            CHECK(kids[k].seed == derive_seed(parent.seed, {6, static_cast<std::uint64_t>(k)}));
            for (int r = 0; r < expected; ++r) CHECK(kids[k].state.is_masked(order[static_cast<std::size_t>(r)].second));
        }
        CHECK(kids[0].state == parent.state);
        CHECK(kids[1].id < kids[2].id);
    }
    SUBCASE("8 committed with rho = 0.25 re-masks exactly 2") {
        Trajectory eight = parent;
        int have = eight.state.committed_count();
        for (int i = 0; i < 16 && have > 8; ++i) {
            if (!eight.state.is_masked(i)) {
                eight.state.set(i, kMask);
                --have;
            }
        }
        for (int i = 0; i < 16 && have < 8; ++i) {
            if (eight.state.is_masked(i)) {
                eight.state.set(i, prompt.target[i]);
                ++have;
            }
        }
        const auto kids = branch(eight, 2, BranchKernel{0.25}, 6, ids);
        CHECK(kids[1].state.committed_count() == 6);
    }
    SUBCASE("rho = 0 gives state-identical children") {
        const auto kids = branch(parent, 4, BranchKernel{0.0}, 6, ids);
        std::set<std::uint64_t> seeds;
        for (const auto& k : kids) {
            CHECK(k.state == parent.state);
            seeds.insert(k.seed);
        }
        CHECK(seeds.size() == 4);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(branch(parent, 0, BranchKernel{0.1}, 6, ids), UsageError);
        CHECK_THROWS_AS(branch(parent, 2, BranchKernel{0.1}, 5, ids), UsageError);
        CHECK_THROWS_AS(branch(parent, 2, BranchKernel{1.0}, 6, ids), ConfigError);
    }
}

TEST_CASE("run_lts") {
    SUBCASE("ledger is N*T and N") {
        const auto cfg = make_cfg(16, 4, 2, 16);
        Sim sim(cfg);
        const auto r = run_lts(cfg, sim.prompt, sim.gen, sim.ver);
        CHECK(r.ledger.gen_steps() == 256);
        CHECK(r.ledger.verifier_calls() == 16);
        CHECK(r.best.step == 16);
        CHECK(r.best.state.masked_count() == 0);
    }
    SUBCASE("N = 1") {
        const auto cfg = make_cfg(1, 1, 2, 8);
        Sim sim(cfg);
        const auto r = run_lts(cfg, sim.prompt, sim.gen, sim.ver);
        CHECK(r.ledger.gen_steps() == 8);
        CHECK(r.ledger.verifier_calls() == 1);
        CHECK(r.best.id == 0);
    }
    SUBCASE("tiny instance matches a brute-force replay") {
        for (std::uint64_t seed = 0; seed < 30; ++seed) {
            const auto cfg = make_cfg(2, 1, 2, 2, 1, 8, 0.0, seed);
            Sim sim(cfg, SimGenParams{0.3, 0.6, 0.2}, SVFParams{0.0, 0.5, 0});
            const auto r = run_lts(cfg, sim.prompt, sim.gen, sim.ver);

            std::vector<Trajectory> finals;
            IdAllocator ids;
            for (std::uint64_t i = 0; i < 2; ++i) {
                Trajectory x = init_trajectory(sim.prompt, derive_seed(seed, {i}), cfg, ids);
                x = denoise_step(denoise_step(x, sim.prompt, sim.gen.params()), sim.prompt, sim.gen.params());
                finals.push_back(x);
            }
            auto correct = [&](const Trajectory& x) {
                int c = 0;
                for (int i = 0; i < 8; ++i) c += x.state[i] == sim.prompt.target[i];
                return c;
            };
            const std::size_t expect = correct(finals[1]) > correct(finals[0]) ? 1 : 0;
            CHECK(r.best.id == finals[expect].id);
            CHECK(r.best.state == finals[expect].state);
        }
    }
}

TEST_CASE("run_hts worked ledgers") {
    SUBCASE("N=4, K=1, d=2, T=8, T_s=2") {
        const auto cfg = make_cfg(4, 1, 2, 8, 2, 16, 0.0);
        Sim sim(cfg);
        const auto r = run_hts(cfg, sim.prompt, sim.gen, sim.ver, BranchKernel{0.0});
        CHECK(r.ledger.gen_steps() == 15);
        CHECK(r.ledger.verifier_calls() == 7);
        CHECK(r.ledger.gen(Stage::kExploration) == 8);
        CHECK(r.ledger.gen(Stage::kThinning) == 3);
        CHECK(r.ledger.gen(Stage::kRefinement) == 4);
        CHECK(r.ledger.verify(Stage::kThinning) == 6);
        CHECK(r.ledger.verify(Stage::kFinalSelection) == 1);
        CHECK(r.trace.size() == 3);
        CHECK(r.trace[0].active_width == 4);
        CHECK(r.trace[1].active_width == 2);
    }
    SUBCASE("N=32, K=8, d=2, T=32, T_s=8") {
        const auto cfg = make_cfg(32, 8, 2, 32, 8, 16, 0.0);
        Sim sim(cfg);
        const auto r = run_hts(cfg, sim.prompt, sim.gen, sim.ver, BranchKernel{0.0});
        CHECK(r.ledger.gen_steps() == 456);
        CHECK(r.ledger.verifier_calls() == 56);
        CHECK(r.best.step == 32);
        CHECK(r.best.state.masked_count() == 0);
    }
    SUBCASE("N=16, K=4, d=2, T=16: the loop scores pools of 16, 8 and the final 4") {
        const auto cfg = make_cfg(16, 4, 2, 16, std::nullopt, 16, 0.0);
        Sim sim(cfg);
        const auto r = run_hts(cfg, sim.prompt, sim.gen, sim.ver, BranchKernel{0.0});
        CHECK(r.ledger.gen_steps() == 116);
        CHECK(r.ledger.verifier_calls() == 28);
    }
}

TEST_CASE("predict_hts_cost") {
    const auto big = predict_hts_cost(make_cfg(32, 8, 2, 32, 8), BranchKernel{0.0});
    CHECK(big.gen_steps() == 456);
    CHECK(big.verifier_calls() == 56);

    const auto flat = predict_hts_cost(make_cfg(6, 6, 2, 12), BranchKernel{0.0});
    CHECK(flat.gen_steps() == 72);
    CHECK(flat.verifier_calls() == 6);

    const auto mid = predict_hts_cost(make_cfg(16, 4, 2, 16), BranchKernel{0.0});
    CHECK(mid.gen_steps() == 116);
    CHECK(mid.verifier_calls() == 28);

    // Repairs: at t=8 with the linear schedule 16 of 64 tokens are committed,
    // floor(0.25 * 16) = 4 > 0, so every non-elite child pays one repair step.
    auto repaired = make_cfg(32, 8, 2, 32, 8, 64, 0.25);
    repaired.quota = QuotaSchedule::kLinear;
    CHECK(predict_hts_cost(repaired, BranchKernel{0.25}).gen_steps() == 456 + (16 - 8) + (8 - 8));

    CHECK_THROWS_AS(predict_hts_cost(make_cfg(64, 1, 2, 8, 4), BranchKernel{0.0}), ConfigError);
    CHECK(approximate_hts_cost(make_cfg(32, 8, 2, 32, 8)) == doctest::Approx(256 + 16 + 176));
}

TEST_CASE("HTS properties over random configurations") {
    SplitMix64 rng(31337);
    for (int trial = 0; trial < 150; ++trial) {
        const auto cfg = random_cfg(rng);
        Sim sim(cfg, SimGenParams{0.4, 0.9, 0.3}, SVFParams{0.05, 0.5, 1});
        const BranchKernel kernel{cfg.branch_remask_fraction};
        CAPTURE(cfg.n_trajectories);
        CAPTURE(cfg.keep);
        CAPTURE(cfg.decay);
        CAPTURE(cfg.total_steps);
        CAPTURE(cfg.seq_len);

        const auto hts = run_hts(cfg, sim.prompt, sim.gen, sim.ver, kernel);
        CHECK(hts.ledger == predict_hts_cost(cfg, kernel));
        CHECK(hts.best.step == cfg.total_steps);
        CHECK(hts.best.state.masked_count() == 0);

        const auto lts = run_lts(cfg, sim.prompt, sim.gen, sim.ver);
        CHECK(lts.ledger == predict_lts_cost(cfg));
        if (kernel.remask_fraction == 0.0) CHECK(hts.ledger.gen_steps() <= lts.ledger.gen_steps());

        // Survivor containment: the winner descends from a survivor of every round.
        const auto [ts, tr] = transition_steps(cfg);
        CHECK(hts.trace.size() == static_cast<std::size_t>(tr - ts + 1));
        for (int round = 0; round < tr - ts; ++round) {
            const auto& survivors = hts.trace[static_cast<std::size_t>(round)].survivor_ids;
            const bool contained = std::any_of(hts.best.lineage.begin(), hts.best.lineage.end(), [&](TrajectoryId id) {
                return std::find(survivors.begin(), survivors.end(), id) != survivors.end();
            });
            CHECK(contained);
        }

        // Trajectory ids are unique within the run.
        std::set<TrajectoryId> seen;
        std::size_t listed = 0;
        for (const auto& e : hts.trace) {
            for (auto id : e.scored_ids) {
                seen.insert(id);
                ++listed;
            }
        }
        CHECK(seen.size() == listed);

        if (trial % 5 == 0) {
            const auto threaded = run_hts(cfg, sim.prompt, sim.gen, sim.ver, kernel, SearchOptions{4});
            CHECK(threaded == hts);
        }
    }
}

TEST_CASE("N == K reduces HTS to LTS") {
    SplitMix64 rng(4);
    for (int trial = 0; trial < 40; ++trial) {
        auto cfg = random_cfg(rng);
        cfg.keep = cfg.n_trajectories;
        Sim sim(cfg, SimGenParams{0.4, 0.9, 0.3}, SVFParams{0.05, 0.5, 1});
        const auto hts = run_hts(cfg, sim.prompt, sim.gen, sim.ver, BranchKernel{cfg.branch_remask_fraction});
        const auto lts = run_lts(cfg, sim.prompt, sim.gen, sim.ver);
        CHECK(hts.best.id == lts.best.id);
        CHECK(hts.best.state == lts.best.state);
        CHECK(hts.best_score == lts.best_score);
        CHECK(hts.ledger.gen_steps() == lts.ledger.gen_steps());
        CHECK(hts.ledger.verifier_calls() == lts.ledger.verifier_calls());
    }
}

TEST_CASE("search rejects a generator whose quota schedule differs from the config") {
    auto cfg = make_cfg(4, 2, 2, 8);
    cfg.quota = QuotaSchedule::kLinear;
    const SimGenerator cosine;
    const SimVerifier ver;
    const Prompt prompt = make_sim_prompt("q", 16, 64);
    CHECK_THROWS_AS(run_lts(cfg, prompt, cosine, ver), ConfigError);
}
