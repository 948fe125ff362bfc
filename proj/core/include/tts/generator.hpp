#pragma once

#include <cstdint>
#include <vector>

#include "tts/core.hpp"

namespace tts {

/// Number of positions that must be committed after step t of T.
///   cosine: M - ceil(M * cos(pi * t / (2T)))
///   linear: floor(M * t / T)
/// Throws UsageError unless 0 <= t <= T.
int commit_quota(int t, int total_steps, int length, QuotaSchedule schedule = QuotaSchedule::kCosine);

enum class StepMode {
    kAdvance,  // predict masked positions, commit up to quota(t + 1), step becomes t + 1
    kRepair,   // predict masked positions, commit back up to quota(t), step stays t
};

/// Stateless single-step request; the RNG stream is a function of (seed, t, mode).
struct StepRequest {
    const TokenSeq& state;
    const Prompt& prompt;
    int t = 0;
    int total_steps = 0;
    std::uint64_t seed = 0;
    StepMode mode = StepMode::kAdvance;
};

/// Next state plus confidences for the positions committed by this call
/// (0 for positions that stay masked or were committed before the call).
struct StepOutput {
    TokenSeq state;
    std::vector<double> confidences;

    bool operator==(const StepOutput&) const = default;
};

/// Denoising generator contract.
class Generator {
public:
    virtual ~Generator() = default;

    virtual TokenSeq init_state(const Prompt& prompt, std::uint64_t seed, int length) const = 0;
    virtual StepOutput step(const StepRequest& request) const = 0;
    virtual QuotaSchedule quota_schedule() const = 0;
};

/// Simulator knobs. Correct-token probability ramps linearly from start to end over t/T.
struct SimGenParams {
    double p_correct_start = 0.6;
    double p_correct_end = 0.9;
    double confidence_noise = 0.0;  // sigma_c
    QuotaSchedule quota = QuotaSchedule::kCosine;

    void validate() const;
};

/// Seed-stream domain tags: step t of a trajectory draws from
/// derive_seed(seed, {tag, t}).
inline constexpr std::uint64_t kAdvanceStreamTag = 0x61647661;  // "adva"
inline constexpr std::uint64_t kRepairStreamTag = 0x72657061;   // "repa"

/// Synthetic masked-token generator with a known ground truth (the prompt target).
class SimGenerator final : public Generator {
public:
    explicit SimGenerator(SimGenParams params = {});

    TokenSeq init_state(const Prompt& prompt, std::uint64_t seed, int length) const override;
    StepOutput step(const StepRequest& request) const override;
    QuotaSchedule quota_schedule() const override { return params_.quota; }

    const SimGenParams& params() const noexcept { return params_; }

private:
    SimGenParams params_;
};

/// Fresh all-mask trajectory at step 0. Throws ConfigError if the generator's
/// state length differs from cfg.seq_len or the prompt target length.
Trajectory init_trajectory(const Generator& gen, const Prompt& prompt, std::uint64_t seed,
                           const ScheduleConfig& cfg, IdAllocator& ids);

/// Simulator convenience form of init_trajectory.
Trajectory init_trajectory(const Prompt& prompt, std::uint64_t seed, const ScheduleConfig& cfg,
                           IdAllocator& ids);

/// One generator step (step -> step + 1). Committed positions are frozen.
Trajectory advance(const Generator& gen, const Trajectory& traj, const Prompt& prompt);

/// Recommit a re-masked trajectory back to commit_quota(step) without advancing.
Trajectory repair(const Generator& gen, const Trajectory& traj, const Prompt& prompt);

/// Simulator convenience form of advance.
Trajectory denoise_step(const Trajectory& traj, const Prompt& prompt, const SimGenParams& params);

/// Deterministic simulator prompt: target tokens are derived from `name`.
Prompt make_sim_prompt(const std::string& name, int length, int vocab_size);

}  // namespace tts
