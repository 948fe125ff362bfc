#include "tts/generator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "tts/rng.hpp"

namespace tts {

int commit_quota(int t, int total_steps, int length, QuotaSchedule schedule) {
    if (total_steps < 1) throw UsageError("commit_quota: T must be positive");
    if (t < 0 || t > total_steps) {
        throw UsageError("commit_quota: t=" + std::to_string(t) + " outside [0, " +
                         std::to_string(total_steps) + "]");
    }
    if (length < 0) throw UsageError("commit_quota: negative length");
    if (t == 0) return 0;
    if (t == total_steps) return length;

    if (schedule == QuotaSchedule::kLinear) {
        return static_cast<int>(static_cast<long long>(length) * t / total_steps);
    }
    double remaining = length * std::cos(std::numbers::pi * t / (2.0 * total_steps));
    // cos() lands a few ulps off exact values such as cos(pi/3); snap before ceil.
    const double nearest = std::round(remaining);
    if (std::abs(remaining - nearest) < 1e-9 * std::max(1, length)) remaining = nearest;
    return length - static_cast<int>(std::ceil(remaining));
}

void SimGenParams::validate() const {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(p_correct_start) || !in_unit(p_correct_end)) {
        throw ConfigError("SimGenParams: p_correct must lie in [0, 1]");
    }
    if (p_correct_end < p_correct_start) {
        throw ConfigError("SimGenParams: p_correct_end must be >= p_correct_start");
    }
    if (!(confidence_noise >= 0.0)) throw ConfigError("SimGenParams: confidence noise must be >= 0");
}

SimGenerator::SimGenerator(SimGenParams params) : params_(params) { params_.validate(); }

TokenSeq SimGenerator::init_state(const Prompt& prompt, std::uint64_t /*seed*/, int length) const {
    if (length < 1) throw ConfigError("init_state: length must be positive");
    if (length != prompt.target.size()) {
        throw ConfigError("init_state: length " + std::to_string(length) +
                          " does not match prompt target length " +
                          std::to_string(prompt.target.size()));
    }
    return TokenSeq::masked(length, prompt.target.vocab_size());
}

namespace {

struct Candidate {
    int position;
    Token token;
    double confidence;
};

}  // namespace

StepOutput SimGenerator::step(const StepRequest& req) const {
    const TokenSeq& state = req.state;
    const TokenSeq& target = req.prompt.target;
    const int m = state.size();
    if (m != target.size()) throw ConfigError("step: state length does not match prompt target");
    if (req.t < 0 || req.t >= req.total_steps) {
        throw UsageError("step: t=" + std::to_string(req.t) + " outside [0, T) with T=" +
                         std::to_string(req.total_steps));
    }

    const int committed = state.committed_count();
    const int quota_now = commit_quota(req.t, req.total_steps, m, params_.quota);
    int goal = quota_now;
    if (req.mode == StepMode::kAdvance) {
        if (committed != quota_now) {
            throw UsageError("step: " + std::to_string(committed) + " committed positions, quota is " +
                             std::to_string(quota_now));
        }
        goal = commit_quota(req.t + 1, req.total_steps, m, params_.quota);
    } else if (committed > quota_now) {
        throw UsageError("repair: state is already above quota");
    }

    const std::uint64_t tag =
        req.mode == StepMode::kAdvance ? kAdvanceStreamTag : kRepairStreamTag;
    SplitMix64 rng(derive_seed(req.seed, {tag, static_cast<std::uint64_t>(req.t)}));

    const double frac = static_cast<double>(req.t) / req.total_steps;
    const double p_correct =
        params_.p_correct_start + (params_.p_correct_end - params_.p_correct_start) * frac;
    const int vocab = target.vocab_size();

    std::vector<Candidate> candidates;
    candidates.reserve(static_cast<std::size_t>(m - committed));
    for (int i = 0; i < m; ++i) {
        if (!state.is_masked(i)) continue;
        const Token truth = target[i];
        bool correct = rng.uniform01() < p_correct || vocab == 1;
        Token token = truth;
        if (!correct) {
            const auto r = static_cast<Token>(rng.uniform_below(static_cast<std::uint64_t>(vocab - 1)));
            token = r >= truth ? r + 1 : r;
        }
        double conf = (correct ? 0.9 : 0.4) + params_.confidence_noise * rng.gaussian();
        candidates.push_back({i, token, std::clamp(conf, 0.0, 1.0)});
    }

    const auto need = static_cast<std::size_t>(goal - committed);
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(need),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                          if (a.confidence != b.confidence) return a.confidence > b.confidence;
                          return a.position < b.position;
                      });

    StepOutput out{state, std::vector<double>(static_cast<std::size_t>(m), 0.0)};
    for (std::size_t c = 0; c < need; ++c) {
        out.state.set(candidates[c].position, candidates[c].token);
        out.confidences[static_cast<std::size_t>(candidates[c].position)] = candidates[c].confidence;
    }
    return out;
}

Trajectory init_trajectory(const Generator& gen, const Prompt& prompt, std::uint64_t seed,
                           const ScheduleConfig& cfg, IdAllocator& ids) {
    if (cfg.seq_len != prompt.target.size()) {
        throw ConfigError("init_trajectory: seq_len " + std::to_string(cfg.seq_len) +
                          " does not match prompt target length " +
                          std::to_string(prompt.target.size()));
    }
    TokenSeq state = gen.init_state(prompt, seed, cfg.seq_len);
    if (state.size() != cfg.seq_len || state.committed_count() != 0) {
        throw ConfigError("init_trajectory: generator did not return a fully masked state");
    }
    Trajectory traj;
    traj.id = ids.next();
    traj.state = std::move(state);
    traj.step = 0;
    traj.total_steps = cfg.total_steps;
    traj.confidences.assign(static_cast<std::size_t>(cfg.seq_len), 0.0);
    traj.seed = seed;
    return traj;
}

Trajectory init_trajectory(const Prompt& prompt, std::uint64_t seed, const ScheduleConfig& cfg,
                           IdAllocator& ids) {
    return init_trajectory(SimGenerator{}, prompt, seed, cfg, ids);
}

namespace {

Trajectory apply_step(const Generator& gen, const Trajectory& traj, const Prompt& prompt,
                      StepMode mode) {
    if (traj.step >= traj.total_steps) {
        throw UsageError("trajectory " + std::to_string(traj.id) + " is already finished");
    }
    StepOutput out =
        gen.step(StepRequest{traj.state, prompt, traj.step, traj.total_steps, traj.seed, mode});
    Trajectory next = traj;
    for (int i = 0; i < traj.state.size(); ++i) {
        auto& conf = next.confidences[static_cast<std::size_t>(i)];
        if (out.state.is_masked(i)) {
            conf = 0.0;
        } else if (traj.state.is_masked(i)) {
            conf = out.confidences[static_cast<std::size_t>(i)];
        }
    }
    next.state = std::move(out.state);
    if (mode == StepMode::kAdvance) ++next.step;
    next.last_score.reset();
    return next;
}

}  // namespace

Trajectory advance(const Generator& gen, const Trajectory& traj, const Prompt& prompt) {
    return apply_step(gen, traj, prompt, StepMode::kAdvance);
}

Trajectory repair(const Generator& gen, const Trajectory& traj, const Prompt& prompt) {
    return apply_step(gen, traj, prompt, StepMode::kRepair);
}

Trajectory denoise_step(const Trajectory& traj, const Prompt& prompt, const SimGenParams& params) {
    return advance(SimGenerator{params}, traj, prompt);
}

Prompt make_sim_prompt(const std::string& name, int length, int vocab_size) {
    if (length < 1) throw ConfigError("make_sim_prompt: length must be positive");
    if (vocab_size < 1) throw ConfigError("make_sim_prompt: vocab_size must be positive");
    SplitMix64 rng(derive_seed(fnv1a64(name), {0x746172676574ULL}));  // "target"
    std::vector<Token> tokens(static_cast<std::size_t>(length));
    for (auto& t : tokens) t = static_cast<Token>(rng.uniform_below(static_cast<std::uint64_t>(vocab_size)));
    return Prompt{name, TokenSeq(std::move(tokens), vocab_size), name};
}

}  // namespace tts
