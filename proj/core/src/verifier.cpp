#include "tts/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tts/rng.hpp"

namespace tts {

std::string render_instruction(std::string_view prompt_text) {
    constexpr std::string_view placeholder = "{text prompt}";
    std::string out(kInstructionTemplate);
    const auto pos = out.find(placeholder);
    out.replace(pos, placeholder.size(), prompt_text);
    return out;
}

void SVFParams::validate() const {
    if (!(score_noise >= 0.0)) throw ConfigError("SVFParams: score noise must be >= 0");
    if (!(masked_prior >= 0.0 && masked_prior <= 1.0)) {
        throw ConfigError("SVFParams: masked_prior must lie in [0, 1]");
    }
}

SimVerifier::SimVerifier(SVFParams params) : params_(params) { params_.validate(); }

double SimVerifier::score(const TokenSeq& state, const Prompt& prompt) const {
    const int m = state.size();
    if (m != prompt.target.size()) throw ConfigError("svf_score: state length does not match prompt");
    if (m == 0) throw ConfigError("svf_score: empty state");

    int correct = 0;
    int masked = 0;
    std::vector<std::uint64_t> key;
    key.reserve(static_cast<std::size_t>(m) + 1);
    key.push_back(fnv1a64(prompt.id));
    for (int i = 0; i < m; ++i) {
        const Token t = state[i];
        if (t == kMask) {
            ++masked;
        } else if (t == prompt.target[i]) {
            ++correct;
        }
        key.push_back(static_cast<std::uint64_t>(static_cast<std::int64_t>(t)));
    }

    double s = (correct + params_.masked_prior * masked) / m;
    if (params_.score_noise > 0.0) {
        SplitMix64 rng(derive_seed(params_.noise_seed, key));
        s += params_.score_noise * rng.gaussian();
    }
    return std::clamp(s, 0.0, 1.0);
}

double svf_score(const Trajectory& traj, const Prompt& prompt, const SVFParams& params) {
    return SimVerifier{params}.score(traj.state, prompt);
}

namespace {

void check_inputs(std::span<const Trajectory> candidates, std::span<const double> scores) {
    if (candidates.empty()) throw UsageError("selection over an empty candidate list");
    if (candidates.size() != scores.size()) {
        throw UsageError("selection: candidates and scores differ in length");
    }
}

// Strict weak order: higher score first, then lower id.
bool ranks_before(std::span<const Trajectory> c, std::span<const double> s, std::size_t a,
                  std::size_t b) {
    if (s[a] != s[b]) return s[a] > s[b];
    return c[a].id < c[b].id;
}

}  // namespace

std::size_t select_best(std::span<const Trajectory> candidates, std::span<const double> scores) {
    check_inputs(candidates, scores);
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (ranks_before(candidates, scores, i, best)) best = i;
    }
    return best;
}

std::vector<std::size_t> select_topk(std::span<const Trajectory> candidates,
                                     std::span<const double> scores, std::size_t k) {
    check_inputs(candidates, scores);
    if (k > candidates.size()) {
        throw UsageError("select_topk: K=" + std::to_string(k) + " exceeds pool of " +
                         std::to_string(candidates.size()));
    }
    std::vector<std::size_t> idx(candidates.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                      [&](std::size_t a, std::size_t b) { return ranks_before(candidates, scores, a, b); });
    idx.resize(k);
    return idx;
}

}  // namespace tts
