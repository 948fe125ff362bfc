#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tts/core.hpp"

namespace tts {

/// Yes/No alignment question sent with every remote score request.
/// `{text prompt}` is replaced by the prompt text.
inline constexpr std::string_view kInstructionTemplate =
    "<Generated Image> Is this image shows {text prompt}? "
    "Please answer ``Yes'' or ``No'' directly without explanation.";

std::string render_instruction(std::string_view prompt_text);

/// Alignment scorer. One call is one verifier NFE.
class Verifier {
public:
    virtual ~Verifier() = default;
    virtual double score(const TokenSeq& state, const Prompt& prompt) const = 0;
};

struct SVFParams {
    double score_noise = 0.0;    // sigma_v
    double masked_prior = 0.5;   // credit for a still-masked position
    std::uint64_t noise_seed = 0;

    void validate() const;
};

/// Simulated self-verification:
///   clamp((correct_committed + masked_prior * masked) / M + sigma_v * g, 0, 1)
/// where g ~ N(0,1) is drawn from a stream keyed on (noise_seed, prompt id, state),
/// so identical inputs always score identically.
class SimVerifier final : public Verifier {
public:
    explicit SimVerifier(SVFParams params = {});
    double score(const TokenSeq& state, const Prompt& prompt) const override;
    const SVFParams& params() const noexcept { return params_; }

private:
    SVFParams params_;
};

double svf_score(const Trajectory& traj, const Prompt& prompt, const SVFParams& params);

/// Index of the highest score; ties go to the lowest trajectory id.
std::size_t select_best(std::span<const Trajectory> candidates, std::span<const double> scores);

/// Indices of the K highest scores ordered by descending score, then ascending id.
std::vector<std::size_t> select_topk(std::span<const Trajectory> candidates,
                                     std::span<const double> scores, std::size_t k);

}  // namespace tts
