#include "tts/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "parallel.hpp"
#include "tts/rng.hpp"

namespace tts {

const char* to_string(Method method) noexcept { return method == Method::kLTS ? "LTS" : "HTS"; }

Method parse_method(std::string_view text) {
    std::string lower(text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "lts") return Method::kLTS;
    if (lower == "hts") return Method::kHTS;
    throw ConfigError("unknown method '" + std::string(text) + "' (expected lts or hts)");
}

Prompt run_prompt(std::uint64_t root_seed, int length, int vocab_size) {
    return make_sim_prompt("sim-" + std::to_string(root_seed), length, vocab_size);
}

SearchResult run_search(const RunSpec& spec) {
    spec.cfg.validate();
    const Prompt prompt = run_prompt(spec.cfg.root_seed, spec.cfg.seq_len, spec.vocab_size);
    const SearchOptions options{spec.threads};

    auto dispatch = [&](const Generator& gen, const Verifier& ver) {
        if (spec.method == Method::kLTS) return run_lts(spec.cfg, prompt, gen, ver, options);
        return run_hts(spec.cfg, prompt, gen, ver, spec.kernel(), options);
    };
    if (spec.endpoint) {
        return dispatch(RemoteGenerator(*spec.endpoint, spec.cfg.quota), RemoteVerifier(*spec.endpoint));
    }
    SimGenParams gen_params = spec.gen;
    gen_params.quota = spec.cfg.quota;
    return dispatch(SimGenerator(gen_params), SimVerifier(spec.svf));
}

ReportRow make_row(const RunSpec& spec, const SearchResult& result, double wall_ms) {
    const auto steps = transition_steps(spec.cfg);
    ReportRow row;
    row.method = to_string(spec.method);
    row.n = spec.cfg.n_trajectories;
    row.k = spec.cfg.keep;
    row.d = spec.cfg.decay;
    row.t = spec.cfg.total_steps;
    row.t_s = steps.warmup;
    row.t_r = steps.refinement;
    row.seed = spec.cfg.root_seed;
    row.gen_nfe = result.ledger.gen_steps();
    row.verify_nfe = result.ledger.verifier_calls();
    row.best_score = result.best_score;
    row.wall_ms = wall_ms;
    return row;
}

void SweepSpec::validate() const {
    if (methods.empty() || n_values.empty() || t_values.empty() || seeds.empty()) {
        throw ConfigError("SweepSpec: methods, N values, T values and seeds must be non-empty");
    }
    if (keep_ratio < 1) throw ConfigError("SweepSpec: keep ratio must be >= 1");
}

std::vector<ReportRow> run_sweep(const SweepSpec& spec) {
    spec.validate();
    std::vector<RunSpec> cells;
    for (Method m : spec.methods) {
        for (int n : spec.n_values) {
            for (int t : spec.t_values) {
                for (std::uint64_t seed : spec.seeds) {
                    RunSpec cell = spec.base;
                    cell.method = m;
                    cell.cfg.n_trajectories = n;
                    cell.cfg.keep = std::max(1, n / spec.keep_ratio);
                    cell.cfg.total_steps = t;
                    cell.cfg.root_seed = seed;
                    cells.push_back(std::move(cell));
                }
            }
        }
    }

    std::vector<ReportRow> rows(cells.size());
    detail::parallel_for(cells.size(), spec.threads, [&](std::size_t i) {
        const RunSpec& cell = cells[i];
        const auto start = std::chrono::steady_clock::now();
        try {
            const SearchResult result = run_search(cell);
            const std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - start;
            rows[i] = make_row(cell, result, wall.count());
        } catch (const ConfigError& e) {
            ReportRow& row = rows[i];
            row.method = to_string(cell.method);
            row.n = cell.cfg.n_trajectories;
            row.k = cell.cfg.keep;
            row.d = cell.cfg.decay;
            row.t = cell.cfg.total_steps;
            row.seed = cell.cfg.root_seed;
            row.error = e.what();
        }
    });

    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.method, a.n, a.t, a.seed) < std::tie(b.method, b.n, b.t, b.seed);
    });
    return rows;
}

MonteCarloSummary monte_carlo(const RunSpec& spec, const std::vector<std::uint64_t>& seeds,
                              unsigned threads) {
    if (seeds.size() < 2) throw UsageError("monte_carlo: need at least 2 seeds");
    std::vector<double> scores(seeds.size());
    detail::parallel_for(seeds.size(), threads, [&](std::size_t i) {
        RunSpec run = spec;
        run.cfg.root_seed = seeds[i];
        scores[i] = run_search(run).best_score;
    });
    const double n = static_cast<double>(scores.size());
    const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
    double ss = 0.0;
    for (double s : scores) ss += (s - mean) * (s - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    return {mean, sd / std::sqrt(n), scores.size()};
}

// ---------------------------------------------------------------------------
// Exhaustive replay oracle. Deliberately shares nothing with run_hts beyond the
// simulator primitives (denoise_step, repair, svf_score, derive_seed).

namespace {

struct Ranked {
    double score;
    TrajectoryId id;
    std::size_t index;
};

std::vector<Ranked> rank_all(const std::vector<Trajectory>& pool, const std::vector<double>& scores) {
    std::vector<Ranked> ranked;
    for (std::size_t i = 0; i < pool.size(); ++i) ranked.push_back({scores[i], pool[i].id, i});
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        return a.score > b.score || (a.score == b.score && a.id < b.id);
    });
    return ranked;
}

}  // namespace

OracleResult oracle_enumerate(const RunSpec& spec) {
    const ScheduleConfig& cfg = spec.cfg;
    if (spec.endpoint) throw ConfigError("oracle_enumerate: simulator runs only");
    if (cfg.n_trajectories > 4 || cfg.total_steps > 4 || cfg.seq_len > 8) {
        throw ConfigError("oracle_enumerate: instance beyond bounds (N <= 4, T <= 4, M <= 8)");
    }
    cfg.validate();

    OracleResult out;
    RunSpec hts_spec = spec;
    hts_spec.method = Method::kHTS;
    out.hts = run_search(hts_spec);

    const int n = cfg.n_trajectories;
    const int k = cfg.keep;
    const int big_t = cfg.total_steps;
    const int ts = cfg.warmup.value_or(std::max(1, big_t / 4));
    int tr = ts;
    while (n > k * std::pow(cfg.decay, tr - ts) * (1.0 + 1e-12)) ++tr;
    auto width = [&](int t) {
        if (t == ts) return n;
        return std::max(static_cast<int>(std::floor(n / std::pow(cfg.decay, t - ts) + 1e-9)), k);
    };

    SimGenParams gen_params = spec.gen;
    gen_params.quota = cfg.quota;
    const SimGenerator gen(gen_params);
    const SVFParams& svf = spec.svf;
    const Prompt prompt = run_prompt(cfg.root_seed, cfg.seq_len, spec.vocab_size);

    TrajectoryId next_id = 0;
    std::vector<Trajectory> pool;
    for (int i = 0; i < n; ++i) {
        Trajectory x;
        x.id = next_id++;
        x.state = TokenSeq::masked(cfg.seq_len, spec.vocab_size);
        x.total_steps = big_t;
        x.confidences.assign(static_cast<std::size_t>(cfg.seq_len), 0.0);
        x.seed = derive_seed(cfg.root_seed, {static_cast<std::uint64_t>(i)});
        for (int s = 0; s < ts; ++s) x = advance(gen, x, prompt);
        pool.push_back(std::move(x));
    }

    for (int t = ts; t < tr; ++t) {
        std::vector<double> scores;
        for (const auto& x : pool) scores.push_back(svf_score(x, prompt, svf));
        const auto ranked = rank_all(pool, scores);

        TraceEntry entry{t, static_cast<int>(pool.size()), {}, scores, {}};
        for (const auto& x : pool) entry.scored_ids.push_back(x.id);
        for (int r = 0; r < k; ++r) entry.survivor_ids.push_back(ranked[static_cast<std::size_t>(r)].id);
        out.replay_trace.push_back(std::move(entry));

        const int next_width = width(t + 1);
        std::vector<Trajectory> children;
        for (int r = 0; r < k; ++r) {
            const Trajectory& parent = pool[ranked[static_cast<std::size_t>(r)].index];
            const int count = next_width / k + (r < next_width % k ? 1 : 0);

            std::vector<std::pair<double, int>> committed;
            for (int i = 0; i < cfg.seq_len; ++i) {
                if (!parent.state.is_masked(i)) {
                    committed.emplace_back(parent.confidences[static_cast<std::size_t>(i)], i);
                }
            }
            std::sort(committed.begin(), committed.end());
            const auto remask = static_cast<std::size_t>(
                std::floor(cfg.branch_remask_fraction * static_cast<double>(committed.size()) + 1e-9));

            for (int c = 0; c < count; ++c) {
                Trajectory child = parent;
                child.id = next_id++;
                child.seed = derive_seed(parent.seed,
                                         {static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(c)});
                child.lineage.push_back(parent.id);
                child.last_score.reset();
                if (c > 0 && remask > 0) {
                    for (std::size_t j = 0; j < remask; ++j) {
                        child.state.set(committed[j].second, kMask);
                        child.confidences[static_cast<std::size_t>(committed[j].second)] = 0.0;
                    }
                    child = repair(gen, child, prompt);
                }
                children.push_back(advance(gen, child, prompt));
            }
        }
        pool = std::move(children);
    }

    for (auto& x : pool) {
        while (x.step < big_t) x = advance(gen, x, prompt);
    }
    std::vector<double> final_scores;
    for (const auto& x : pool) final_scores.push_back(svf_score(x, prompt, svf));
    const auto ranked = rank_all(pool, final_scores);
    TraceEntry last{big_t, static_cast<int>(pool.size()), {}, final_scores, {ranked.front().id}};
    for (const auto& x : pool) last.scored_ids.push_back(x.id);
    out.replay_trace.push_back(std::move(last));
    out.replay_winner = ranked.front().id;
    out.final_set = pool;

    out.trace_match = out.replay_trace == out.hts.trace;
    out.winner_match = out.replay_winner == out.hts.best.id &&
                       final_scores[ranked.front().index] == out.hts.best_score;
    out.state_match = pool[ranked.front().index].state == out.hts.best.state;

    std::ostringstream detail;
    detail << "rounds=" << (tr - ts) << " final_pool=" << pool.size() << " winner=" << out.replay_winner
           << " hts_winner=" << out.hts.best.id << " trace=" << (out.trace_match ? "match" : "MISMATCH")
           << " state=" << (out.state_match ? "match" : "MISMATCH");
    out.detail = detail.str();
    return out;
}

// ---------------------------------------------------------------------------
// Reports

ReportFormat parse_format(std::string_view text) {
    if (text == "csv") return ReportFormat::kCsv;
    if (text == "jsonl") return ReportFormat::kJsonl;
    if (text == "svg") return ReportFormat::kSvg;
    throw ConfigError("unknown report format '" + std::string(text) + "' (expected csv, jsonl or svg)");
}

namespace {

std::string fmt_double(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string render_svg(const std::vector<ReportRow>& rows) {
    // method -> gen_nfe -> (sum, count)
    std::map<std::string, std::map<std::uint64_t, std::pair<double, int>>> curves;
    for (const auto& r : rows) {
        if (!r.ok()) continue;
        auto& cell = curves[r.method][r.gen_nfe];
        cell.first += r.best_score;
        ++cell.second;
    }
    if (curves.empty()) throw UsageError("render_report: svg needs at least one successful row");

    double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
    for (const auto& [method, points] : curves) {
        for (const auto& [nfe, acc] : points) {
            const double x = static_cast<double>(nfe);
            const double y = acc.first / acc.second;
            x_min = std::min(x_min, x);
            x_max = std::max(x_max, x);
            y_min = std::min(y_min, y);
            y_max = std::max(y_max, y);
        }
    }
    if (x_max == x_min) x_max = x_min + 1.0;
    if (y_max == y_min) y_max = y_min + 1e-3;

    constexpr double width = 640, height = 420, left = 70, right = 20, top = 30, bottom = 60;
    auto px = [&](double x) { return left + (x - x_min) / (x_max - x_min) * (width - left - right); };
    auto py = [&](double y) { return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom); };
    const char* palette[] = {"#c0392b", "#2b6cc0", "#27ae60", "#8e44ad"};

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" viewBox=\"0 0 " << width << ' ' << height << "\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
        << height - bottom << "\" stroke=\"black\"/>\n";
    svg << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
        << "\" stroke=\"black\"/>\n";
    svg << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 15
        << "\" text-anchor=\"middle\" font-size=\"14\">generator NFE</text>\n";
    svg << "<text x=\"18\" y=\"" << (top + height - bottom) / 2 << "\" text-anchor=\"middle\" font-size=\"14\" "
        << "transform=\"rotate(-90 18 " << (top + height - bottom) / 2 << ")\">mean best score</text>\n";
    for (double v : {x_min, x_max}) {
        svg << "<text x=\"" << px(v) << "\" y=\"" << height - bottom + 18
            << "\" text-anchor=\"middle\" font-size=\"11\">" << fmt_double("%.0f", v) << "</text>\n";
    }
    for (double v : {y_min, y_max}) {
        svg << "<text x=\"" << left - 6 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
            << fmt_double("%.3f", v) << "</text>\n";
    }

    std::size_t series = 0;
    for (const auto& [method, points] : curves) {
        const char* color = palette[series % 4];
        svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
        bool first = true;
        for (const auto& [nfe, acc] : points) {
            if (!first) svg << ' ';
            first = false;
            svg << fmt_double("%.2f", px(static_cast<double>(nfe))) << ','
                << fmt_double("%.2f", py(acc.first / acc.second));
        }
        svg << "\"/>\n";
        svg << "<text x=\"" << width - right - 60 << "\" y=\"" << top + 16 * static_cast<double>(series)
            << "\" fill=\"" << color << "\" font-size=\"12\">" << xml_escape(method) << "</text>\n";
        ++series;
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace

std::string render_csv_row(const ReportRow& r) {
    std::ostringstream os;
    os << r.method << ',' << r.n << ',' << r.k << ',' << fmt_double("%g", r.d) << ',' << r.t << ',';
    if (r.ok()) {
        os << r.t_s << ',' << r.t_r << ',' << r.seed << ',' << r.gen_nfe << ',' << r.verify_nfe << ','
           << fmt_double("%.17g", r.best_score) << ',' << fmt_double("%.3f", r.wall_ms);
    } else {
        os << ",," << r.seed << ",,,,";
    }
    return os.str();
}

std::string render_report(const std::vector<ReportRow>& rows, ReportFormat format) {
    std::string out;
    switch (format) {
        case ReportFormat::kCsv:
            out.append(kCsvHeader).append("\n");
            for (const auto& r : rows) out.append(render_csv_row(r)).append("\n");
            return out;
        case ReportFormat::kJsonl:
            for (const auto& r : rows) {
                nlohmann::json j = {{"method", r.method}, {"n", r.n}, {"k", r.k}, {"d", r.d},
                                    {"t", r.t},           {"seed", r.seed}};
                if (r.ok()) {
                    j["t_s"] = r.t_s;
                    j["t_r"] = r.t_r;
                    j["gen_nfe"] = r.gen_nfe;
                    j["verify_nfe"] = r.verify_nfe;
                    j["best_score"] = r.best_score;
                    j["wall_ms"] = r.wall_ms;
                } else {
                    j["error"] = *r.error;
                }
                out.append(j.dump()).append("\n");
            }
            return out;
        case ReportFormat::kSvg:
            return render_svg(rows);
    }
    throw ConfigError("render_report: unknown format");
}

}  // namespace tts
