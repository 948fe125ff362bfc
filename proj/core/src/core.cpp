#include "tts/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tts/search.hpp"

namespace tts {

TokenSeq TokenSeq::masked(int length, int vocab_size) {
    if (length < 0) throw ConfigError("TokenSeq: negative length");
    if (vocab_size < 1) throw ConfigError("TokenSeq: vocab_size must be positive");
    TokenSeq seq;
    seq.tokens_.assign(static_cast<std::size_t>(length), kMask);
    seq.vocab_size_ = vocab_size;
    return seq;
}

TokenSeq::TokenSeq(std::vector<Token> tokens, int vocab_size)
    : tokens_(std::move(tokens)), vocab_size_(vocab_size) {
    if (vocab_size < 1) throw ConfigError("TokenSeq: vocab_size must be positive");
    for (Token t : tokens_) {
        if (t != kMask && (t < 0 || t >= vocab_size)) {
            throw ConfigError("TokenSeq: token " + std::to_string(t) + " outside vocabulary of size " +
                              std::to_string(vocab_size));
        }
    }
}

int TokenSeq::committed_count() const noexcept {
    return static_cast<int>(std::count_if(tokens_.begin(), tokens_.end(),
                                          [](Token t) { return t != kMask; }));
}

void TokenSeq::set(int i, Token token) {
    if (token != kMask && (token < 0 || token >= vocab_size_)) {
        throw UsageError("TokenSeq::set: token outside vocabulary");
    }
    tokens_.at(static_cast<std::size_t>(i)) = token;
}

int ScheduleConfig::effective_warmup() const {
    if (warmup) return *warmup;
    return std::max(1, total_steps / 4);
}

void ScheduleConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("ScheduleConfig: " + what); };
    if (n_trajectories < 1) fail("N must be positive");
    if (keep < 1) fail("K must be positive");
    if (keep > n_trajectories) fail("K must not exceed N");
    if (!(decay > 1.0) || !std::isfinite(decay)) fail("d must be a finite real > 1");
    if (total_steps < 1) fail("T must be positive");
    if (seq_len < 1) fail("M must be positive");
    if (!(branch_remask_fraction >= 0.0 && branch_remask_fraction < 1.0)) fail("rho must lie in [0, 1)");
    const int ts = effective_warmup();
    if (ts < 1 || ts >= total_steps) {
        fail("T_s must satisfy 1 <= T_s < T (T_s=" + std::to_string(ts) +
             ", T=" + std::to_string(total_steps) + ")");
    }
    const int tr = ts + thinning_rounds(n_trajectories, keep, decay);
    if (tr > total_steps) {
        fail("T_r=" + std::to_string(tr) + " exceeds T=" + std::to_string(total_steps));
    }
}

const char* to_string(Stage stage) noexcept {
    switch (stage) {
        case Stage::kExploration: return "exploration";
        case Stage::kThinning: return "thinning";
        case Stage::kRefinement: return "refinement";
        case Stage::kFinalSelection: return "final_selection";
    }
    return "unknown";
}

std::uint64_t NFELedger::gen_steps() const noexcept {
    return std::accumulate(gen_.begin(), gen_.end(), std::uint64_t{0});
}

std::uint64_t NFELedger::verifier_calls() const noexcept {
    return std::accumulate(verify_.begin(), verify_.end(), std::uint64_t{0});
}

NFELedger& NFELedger::operator+=(const NFELedger& other) noexcept {
    for (std::size_t i = 0; i < kStageCount; ++i) {
        gen_[i] += other.gen_[i];
        verify_[i] += other.verify_[i];
    }
    return *this;
}

}  // namespace tts
