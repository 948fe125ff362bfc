#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "tts/harness.hpp"

using namespace tts;

namespace {

RunSpec tiny_spec(std::uint64_t seed) {
    RunSpec spec;
    spec.cfg.n_trajectories = 4;
    spec.cfg.keep = 1;
    spec.cfg.decay = 2;
    spec.cfg.total_steps = 4;
    spec.cfg.warmup = 1;
    spec.cfg.seq_len = 4;
    spec.cfg.branch_remask_fraction = 0.0;
    spec.cfg.root_seed = seed;
    spec.gen = SimGenParams{0.4, 0.8, 0.3};
    spec.svf = SVFParams{0.05, 0.5, 7};
    spec.vocab_size = 16;
    return spec;
}

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
    std::vector<std::uint64_t> seeds(n);
    std::iota(seeds.begin(), seeds.end(), 0);
    return seeds;
}

}  // namespace

TEST_CASE("parse_method and parse_format") {
    CHECK(parse_method("lts") == Method::kLTS);
    CHECK(parse_method("HTS") == Method::kHTS);
    CHECK_THROWS_AS(parse_method("beam"), ConfigError);
    CHECK(parse_format("csv") == ReportFormat::kCsv);
    CHECK(parse_format("jsonl") == ReportFormat::kJsonl);
    CHECK(parse_format("svg") == ReportFormat::kSvg);
    CHECK_THROWS_AS(parse_format("xml"), ConfigError);
}

TEST_CASE("run_sweep") {
    SUBCASE("a single LTS cell") {
        SweepSpec sweep;
        sweep.methods = {Method::kLTS};
        sweep.n_values = {1};
        sweep.t_values = {8};
        sweep.base.cfg.seq_len = 16;
        const auto rows = run_sweep(sweep);
        REQUIRE(rows.size() == 1);
        CHECK(rows[0].gen_nfe == 8);
        CHECK(rows[0].verify_nfe == 1);
        CHECK(rows[0].ok());
    }
    SUBCASE("grid size, ordering and determinism") {
        SweepSpec sweep;
        sweep.n_values = {4, 8};
        sweep.t_values = {8, 16, 32};
        sweep.seeds = {3, 1};
        sweep.base.cfg.seq_len = 16;
        sweep.base.cfg.quota = QuotaSchedule::kLinear;
        const auto rows = run_sweep(sweep);
        CHECK(rows.size() == 2 * 2 * 3 * 2);
        CHECK(std::is_sorted(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
            return std::tie(a.method, a.n, a.t, a.seed) < std::tie(b.method, b.n, b.t, b.seed);
        }));

        sweep.threads = 4;
        const auto again = run_sweep(sweep);
        REQUIRE(again.size() == rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            CHECK(again[i].best_score == rows[i].best_score);
            CHECK(again[i].gen_nfe == rows[i].gen_nfe);
        }
    }
    SUBCASE("12 rows from 2 methods x 3 N x 2 T") {
        SweepSpec sweep;
        sweep.n_values = {4, 8, 16};
        sweep.t_values = {8, 16};
        sweep.base.cfg.seq_len = 8;
        CHECK(run_sweep(sweep).size() == 12);
    }
    SUBCASE("rejected cells become failed rows") {
        SweepSpec sweep;
        sweep.methods = {Method::kHTS};
        sweep.n_values = {64};
        sweep.t_values = {4, 32};
        sweep.keep_ratio = 64;
        sweep.base.cfg.seq_len = 8;
        sweep.base.cfg.warmup = 3;  // T_r = 3 + 6 > 4
        const auto rows = run_sweep(sweep);
        REQUIRE(rows.size() == 2);
        CHECK_FALSE(rows[0].ok());
        CHECK(rows[1].ok());
        const std::string csv = render_report(rows, ReportFormat::kCsv);
        CHECK(csv.find("HTS,64,1,2,4,,,0,,,,\n") != std::string::npos);
    }
    SUBCASE("HTS rows report the predicted ledger") {
        SweepSpec sweep;
        sweep.methods = {Method::kHTS};
        sweep.n_values = {32};
        sweep.t_values = {32};
        sweep.base.cfg.seq_len = 16;
        sweep.base.cfg.branch_remask_fraction = 0.0;
        const auto rows = run_sweep(sweep);
        CHECK(rows[0].gen_nfe == 456);
        CHECK(rows[0].verify_nfe == 56);
        CHECK(rows[0].t_s == 8);
        CHECK(rows[0].t_r == 10);
    }
}

TEST_CASE("monte_carlo") {
    RunSpec spec;
    spec.method = Method::kLTS;
    spec.cfg.n_trajectories = 2;
    spec.cfg.keep = 1;
    spec.cfg.total_steps = 8;
    spec.cfg.seq_len = 16;
    spec.svf = SVFParams{0.0, 0.5, 0};

    SUBCASE("perfect model") {
        spec.gen = SimGenParams{1.0, 1.0, 0.0};
        const auto s = monte_carlo(spec, seed_range(20));
        CHECK(s.mean == 1.0);
        CHECK(s.stderr_ == 0.0);
        CHECK(s.samples == 20);
    }
    SUBCASE("hopeless model") {
        spec.gen = SimGenParams{0.0, 0.0, 0.0};
        const auto s = monte_carlo(spec, seed_range(20));
        CHECK(s.mean == 0.0);
        CHECK(s.stderr_ == 0.0);
    }
    SUBCASE("needs two seeds") {
        CHECK_THROWS_AS(monte_carlo(spec, {1}), UsageError);
    }
    SUBCASE("more trajectories help") {
        spec.gen = SimGenParams{0.7, 0.7, 0.0};
        spec.svf = SVFParams{0.05, 0.5, 0};
        spec.cfg.n_trajectories = 1;
        const auto one = monte_carlo(spec, seed_range(1000), 2);
        spec.cfg.n_trajectories = 8;
        spec.cfg.keep = 2;
        const auto eight = monte_carlo(spec, seed_range(1000), 2);
        CHECK(eight.mean > one.mean + 2.0 * std::hypot(one.stderr_, eight.stderr_));
    }
}

TEST_CASE("oracle_enumerate") {
    SUBCASE("tiny instances replay exactly") {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto r = oracle_enumerate(tiny_spec(seed));
            CAPTURE(r.detail);
            CHECK(r.passed());
            CHECK(r.final_set.size() == 1);
        }
    }
    SUBCASE("N=2, K=1, T=2, M=2") {
        RunSpec spec = tiny_spec(5);
        spec.cfg.n_trajectories = 2;
        spec.cfg.total_steps = 2;
        spec.cfg.seq_len = 2;
        const auto r = oracle_enumerate(spec);
        CHECK(r.passed());
        CHECK(r.replay_trace.size() == 2);
        CHECK(r.replay_trace[0].active_width == 2);
    }
    SUBCASE("with re-masking: rho = 0.5 on 2 committed re-masks 1") {
        RunSpec spec = tiny_spec(11);
        spec.cfg.n_trajectories = 4;
        spec.cfg.keep = 2;
        spec.cfg.warmup = 2;
        spec.cfg.quota = QuotaSchedule::kLinear;
        spec.cfg.branch_remask_fraction = 0.5;
        CHECK(BranchKernel{0.5}.remask_count(2) == 1);
        for (std::uint64_t seed = 0; seed < 8; ++seed) {
            spec.cfg.root_seed = seed;
            const auto r = oracle_enumerate(spec);
            CAPTURE(r.detail);
            CHECK(r.passed());
        }
    }
    SUBCASE("out of bounds") {
        RunSpec spec = tiny_spec(0);
        spec.cfg.n_trajectories = 5;
        CHECK_THROWS_AS(oracle_enumerate(spec), ConfigError);
        spec = tiny_spec(0);
        spec.cfg.seq_len = 9;
        CHECK_THROWS_AS(oracle_enumerate(spec), ConfigError);
    }
}

TEST_CASE("render_report") {
    SweepSpec sweep;
    sweep.n_values = {4, 8};
    sweep.t_values = {8};
    sweep.seeds = {0, 1};
    sweep.base.cfg.seq_len = 8;
    const auto rows = run_sweep(sweep);

    SUBCASE("csv") {
        const std::string csv = render_report(rows, ReportFormat::kCsv);
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        CHECK(line == kCsvHeader);
        int count = 0;
        while (std::getline(in, line)) {
            ++count;
            CHECK(std::count(line.begin(), line.end(), ',') == 11);
        }
        CHECK(count == 8);
        // Scores round-trip exactly.
        CHECK(render_csv_row(rows[0]).find(std::to_string(rows[0].gen_nfe)) != std::string::npos);
    }
    SUBCASE("jsonl") {
        const std::string text = render_report(rows, ReportFormat::kJsonl);
        std::istringstream in(text);
        std::string line;
        std::size_t i = 0;
        while (std::getline(in, line)) {
            const auto j = nlohmann::json::parse(line);
            CHECK(j.at("method") == rows[i].method);
            CHECK(j.at("gen_nfe") == rows[i].gen_nfe);
            CHECK(j.at("best_score").get<double>() == rows[i].best_score);
            ++i;
        }
        CHECK(i == rows.size());
    }
    SUBCASE("svg") {
        const std::string svg = render_report(rows, ReportFormat::kSvg);
        CHECK(svg.rfind("<svg", 0) == 0);
        std::size_t polylines = 0;
        for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) {
            ++polylines;
        }
        CHECK(polylines == 2);
        CHECK(svg.find("generator NFE") != std::string::npos);
        CHECK_THROWS_AS(render_report({}, ReportFormat::kSvg), UsageError);
    }
}
