#include "cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tts/backend.hpp"
#include "tts/harness.hpp"
#include "tts/search.hpp"

namespace tts::cli {
namespace {

using json = nlohmann::json;

// Merged view of the JSON config file and the command-line flags.
struct Settings {
    std::string method = "hts";
    int n = 32;
    int k = 0;  // 0: N / 4
    double d = 2.0;
    int t = 32;
    int ts = 0;  // 0: max(1, T / 4)
    int m = 64;
    double rho = 0.1;
    std::uint64_t seed = 0;
    std::string quota = "cosine";
    double sigma_v = 0.03;
    double sigma_c = 0.0;
    double masked_prior = 0.5;
    double p_correct_start = 0.6;
    double p_correct_end = 0.9;
    int vocab = 1024;
    unsigned threads = 1;
    std::string endpoint;
    int timeout_ms = 10000;
    std::string out;
    std::string format = "csv";

    // sweep
    std::string methods = "lts,hts";
    std::vector<int> n_values{1, 2, 4, 8, 16, 32};
    std::vector<int> t_values{32};
    std::vector<std::uint64_t> seeds;
    int num_seeds = 8;
    int keep_ratio = 4;

    // serve-mock
    std::string host = "127.0.0.1";
    int port = 8080;
};

// Binds flags and JSON keys (comma-separated aliases) to one Settings field; flags win.
class Binder {
public:
    template <class T>
    void bind(CLI::App& app, const std::string& flag, const std::string& key, T& target,
              const std::string& help) {
        auto storage = std::make_shared<T>(target);
        CLI::Option* opt = app.add_option(flag, *storage, help);
        if constexpr (std::is_same_v<T, std::vector<int>> || std::is_same_v<T, std::vector<std::uint64_t>>) {
            opt->delimiter(',');
        }
        entries_.push_back({CLI::detail::split(key, ','), [&target](const json& j) { target = j.get<T>(); },
                            [opt, storage, &target] {
                                if (opt->count() > 0) target = *storage;
                            }});
    }

    void apply_json(const json& config) const {
        if (!config.is_object()) throw ConfigError("config file must hold a JSON object");
        for (const auto& [key, value] : config.items()) {
            auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
                return std::find(e.keys.begin(), e.keys.end(), key) != e.keys.end();
            });
            if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
            try {
                it->from_json(value);
            } catch (const json::exception& e) {
                throw ConfigError("config key '" + key + "': " + e.what());
            }
        }
    }

    void apply_flags() const {
        for (const auto& e : entries_) e.from_flag();
    }

private:
    struct Entry {
        std::vector<std::string> keys;
        std::function<void(const json&)> from_json;
        std::function<void()> from_flag;
    };
    std::vector<Entry> entries_;
};

void bind_schedule(CLI::App& app, Binder& b, Settings& s) {
    b.bind(app, "--method", "method", s.method, "lts or hts");
    b.bind(app, "--n,--n-trajectories", "n,n_trajectories", s.n, "trajectories N");
    b.bind(app, "--k,--keep", "k,keep", s.k, "survivors K (default N/4)");
    b.bind(app, "--d,--decay", "d,decay", s.d, "width decay d > 1");
    b.bind(app, "--t,--total-steps", "t,total_steps", s.t, "denoising steps T");
    b.bind(app, "--ts,--warmup", "ts,warmup", s.ts, "warm-up steps T_s (default max(1, T/4))");
    b.bind(app, "--m,--seq-len", "m,seq_len", s.m, "sequence length M");
    b.bind(app, "--rho,--branch-remask-fraction", "rho,branch_remask_fraction", s.rho, "branch re-mask fraction in [0, 1)");
    b.bind(app, "--seed,--root-seed", "seed,root_seed", s.seed, "root seed (TTS_SEED overrides)");
    b.bind(app, "--quota", "quota", s.quota, "commit schedule: cosine or linear");
    b.bind(app, "--threads", "threads", s.threads, "worker threads");
}

void bind_sim(CLI::App& app, Binder& b, Settings& s) {
    b.bind(app, "--sigma-v", "sigma_v", s.sigma_v, "verifier score noise");
    b.bind(app, "--sigma-c", "sigma_c", s.sigma_c, "generator confidence noise");
    b.bind(app, "--masked-prior", "masked_prior", s.masked_prior, "verifier credit per masked position");
    b.bind(app, "--p-correct-start", "p_correct_start", s.p_correct_start, "P(correct) at t=0");
    b.bind(app, "--p-correct-end", "p_correct_end", s.p_correct_end, "P(correct) at t=T");
    b.bind(app, "--vocab", "vocab", s.vocab, "vocabulary size");
}

void bind_output(CLI::App& app, Binder& b, Settings& s) {
    b.bind(app, "--out", "out", s.out, "output file (default stdout)");
    b.bind(app, "--format", "format", s.format, "csv, jsonl or svg");
}

void bind_remote(CLI::App& app, Binder& b, Settings& s) {
    b.bind(app, "--endpoint", "endpoint", s.endpoint, "remote backend base URL");
    b.bind(app, "--timeout-ms", "timeout_ms", s.timeout_ms, "remote request timeout");
}

QuotaSchedule parse_quota(const std::string& q) {
    if (q == "cosine") return QuotaSchedule::kCosine;
    if (q == "linear") return QuotaSchedule::kLinear;
    throw ConfigError("unknown quota schedule '" + q + "' (expected cosine or linear)");
}

RunSpec to_run_spec(const Settings& s) {
    RunSpec spec;
    spec.method = parse_method(s.method);
    spec.cfg.n_trajectories = s.n;
    spec.cfg.keep = s.k > 0 ? s.k : std::max(1, s.n / 4);
    spec.cfg.decay = s.d;
    spec.cfg.total_steps = s.t;
    if (s.ts > 0) spec.cfg.warmup = s.ts;
    spec.cfg.seq_len = s.m;
    spec.cfg.branch_remask_fraction = s.rho;
    spec.cfg.root_seed = s.seed;
    spec.cfg.quota = parse_quota(s.quota);
    spec.gen.p_correct_start = s.p_correct_start;
    spec.gen.p_correct_end = s.p_correct_end;
    spec.gen.confidence_noise = s.sigma_c;
    spec.gen.quota = spec.cfg.quota;
    spec.gen.validate();
    spec.svf.score_noise = s.sigma_v;
    spec.svf.masked_prior = s.masked_prior;
    spec.svf.validate();
    spec.vocab_size = s.vocab;
    spec.threads = std::max(1u, s.threads);
    if (!s.endpoint.empty()) {
        spec.endpoint = RemoteEndpoint{s.endpoint, s.timeout_ms, std::nullopt};
        if (const char* token = std::getenv("TTS_AUTH_TOKEN")) spec.endpoint->auth_token = token;
    }
    spec.cfg.validate();
    return spec;
}

void emit(const Settings& s, const std::string& text, std::ostream& out) {
    if (s.out.empty()) {
        out << text;
        return;
    }
    std::ofstream file(s.out, std::ios::binary);
    if (!file) throw Error("cannot open output file '" + s.out + "'");
    file << text;
}

int cmd_run(const Settings& s, std::ostream& out, std::ostream& err) {
    const RunSpec spec = to_run_spec(s);
    const auto start = std::chrono::steady_clock::now();
    const SearchResult result = run_search(spec);
    const std::chrono::duration<double, std::milli> wall = std::chrono::steady_clock::now() - start;
    const ReportRow row = make_row(spec, result, wall.count());

    const ReportFormat format = parse_format(s.format);
    if (format == ReportFormat::kSvg) throw ConfigError("run: svg output needs a sweep");
    std::string text = format == ReportFormat::kCsv ? render_csv_row(row) + "\n"
                                                    : render_report({row}, ReportFormat::kJsonl);
    emit(s, text, out);
    err << to_string(spec.method) << " N=" << row.n << " K=" << row.k << " T=" << row.t
        << " T_s=" << row.t_s << " T_r=" << row.t_r << ": winner id " << result.best.id << ", score "
        << result.best_score << ", gen NFE " << row.gen_nfe << ", verify NFE " << row.verify_nfe << "\n";
    return kExitOk;
}

int cmd_sweep(const Settings& s, std::ostream& out, std::ostream& err) {
    SweepSpec sweep;
    sweep.base = to_run_spec(s);
    sweep.methods.clear();
    std::stringstream list(s.methods);
    for (std::string item; std::getline(list, item, ',');) {
        if (!item.empty()) sweep.methods.push_back(parse_method(item));
    }
    sweep.n_values = s.n_values;
    sweep.t_values = s.t_values;
    sweep.keep_ratio = s.keep_ratio;
    if (!s.seeds.empty()) {
        sweep.seeds = s.seeds;
    } else {
        if (s.num_seeds < 1) throw ConfigError("--num-seeds must be positive");
        sweep.seeds.resize(static_cast<std::size_t>(s.num_seeds));
        std::iota(sweep.seeds.begin(), sweep.seeds.end(), s.seed);
    }
    sweep.threads = std::max(1u, s.threads);
    sweep.base.threads = 1;

    const ReportFormat format = parse_format(s.format);
    const auto rows = run_sweep(sweep);
    emit(s, render_report(rows, format), out);
    const auto failed = std::count_if(rows.begin(), rows.end(), [](const ReportRow& r) { return !r.ok(); });
    err << rows.size() << " rows (" << failed << " rejected configurations)\n";
    return kExitOk;
}

int cmd_predict(const Settings& s, std::ostream& out) {
    const RunSpec spec = to_run_spec(s);
    const auto steps = transition_steps(spec.cfg);
    const NFELedger ledger = spec.method == Method::kLTS ? predict_lts_cost(spec.cfg)
                                                         : predict_hts_cost(spec.cfg, spec.kernel());
    out << "gen " << ledger.gen_steps() << " verify " << ledger.verifier_calls() << " total "
        << ledger.total() << "\n";
    out << "t_s " << steps.warmup << " t_r " << steps.refinement << "\n";
    for (Stage stage : {Stage::kExploration, Stage::kThinning, Stage::kRefinement, Stage::kFinalSelection}) {
        out << to_string(stage) << " gen " << ledger.gen(stage) << " verify " << ledger.verify(stage) << "\n";
    }
    return kExitOk;
}

int cmd_oracle(const Settings& s, std::ostream& out) {
    const OracleResult r = oracle_enumerate(to_run_spec(s));
    out << (r.passed() ? "PASS " : "FAIL ") << r.detail << "\n";
    return r.passed() ? kExitOk : kExitRuntime;
}

int cmd_serve(const Settings& s, std::ostream& err) {
    MockServerConfig config;
    config.gen.p_correct_start = s.p_correct_start;
    config.gen.p_correct_end = s.p_correct_end;
    config.gen.confidence_noise = s.sigma_c;
    config.gen.quota = parse_quota(s.quota);
    config.svf.score_noise = s.sigma_v;
    config.svf.masked_prior = s.masked_prior;
    config.vocab_size = s.vocab;
    if (const char* token = std::getenv("TTS_AUTH_TOKEN")) config.auth_token = token;
    MockServer server(config);
    err << "serving mock backend on http://" << s.host << ":" << s.port << "\n" << std::flush;
    server.serve(s.host, s.port);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Test-time trajectory search over masked-token generators", "tts"};
    app.require_subcommand(1, 1);

    Settings s;
    Binder binder;
    std::string config_path;

    auto* run_cmd = app.add_subcommand("run", "Execute one LTS or HTS search and print a report row");
    auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of searches and render a report");
    auto* predict_cmd = app.add_subcommand("predict", "Print the exact NFE ledger of a configuration");
    auto* oracle_cmd = app.add_subcommand("oracle", "Check HTS against exhaustive replay (tiny instances)");
    auto* serve_cmd = app.add_subcommand("serve-mock", "Serve the simulator over the /v1 protocol");

    for (CLI::App* sub : {run_cmd, sweep_cmd, predict_cmd, oracle_cmd}) {
        sub->add_option("--config", config_path, "JSON config file; flags override its keys");
        bind_schedule(*sub, binder, s);
        bind_sim(*sub, binder, s);
    }
    for (CLI::App* sub : {run_cmd, sweep_cmd}) bind_output(*sub, binder, s);
    bind_remote(*run_cmd, binder, s);
    bind_remote(*sweep_cmd, binder, s);
    binder.bind(*sweep_cmd, "--methods", "methods", s.methods, "comma-separated methods");
    binder.bind(*sweep_cmd, "--n-values", "n_values", s.n_values, "comma-separated N values");
    binder.bind(*sweep_cmd, "--t-values", "t_values", s.t_values, "comma-separated T values");
    binder.bind(*sweep_cmd, "--seeds", "seeds", s.seeds, "comma-separated root seeds");
    binder.bind(*sweep_cmd, "--num-seeds", "num_seeds", s.num_seeds, "seeds --seed, --seed+1, ...");
    binder.bind(*sweep_cmd, "--keep-ratio", "keep_ratio", s.keep_ratio, "K = N / ratio");
    binder.bind(*serve_cmd, "--host", "host", s.host, "bind address");
    binder.bind(*serve_cmd, "--port", "port", s.port, "bind port");
    binder.bind(*serve_cmd, "--quota", "quota", s.quota, "commit schedule: cosine or linear");
    bind_sim(*serve_cmd, binder, s);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        CLI::App* failing = &app;
        for (CLI::App* sub : app.get_subcommands()) failing = sub;
        err << "error: " << e.what() << "\n\n" << failing->help();
        return kExitConfig;
    }

    try {
        if (!config_path.empty()) {
            std::ifstream file(config_path);
            if (!file) throw ConfigError("cannot read config file '" + config_path + "'");
            json config;
            try {
                config = json::parse(file);
            } catch (const json::parse_error& e) {
                throw ConfigError("config file '" + config_path + "': " + e.what());
            }
            binder.apply_json(config);
        }
        binder.apply_flags();
        if (const char* env_seed = std::getenv("TTS_SEED"); env_seed && *env_seed) {
            try {
                std::size_t used = 0;
                s.seed = std::stoull(env_seed, &used);
                if (used != std::string(env_seed).size()) throw std::invalid_argument("trailing characters");
            } catch (const std::exception&) {
                throw ConfigError(std::string("TTS_SEED is not an unsigned integer: ") + env_seed);
            }
        }

        if (run_cmd->parsed()) return cmd_run(s, out, err);
        if (sweep_cmd->parsed()) return cmd_sweep(s, out, err);
        if (predict_cmd->parsed()) return cmd_predict(s, out);
        if (oracle_cmd->parsed()) return cmd_oracle(s, out);
        return cmd_serve(s, err);
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace tts::cli
