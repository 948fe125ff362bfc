#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tts {

using Token = std::int32_t;
using TrajectoryId = std::uint64_t;

/// Reserved mask sentinel; never a member of the vocabulary.
inline constexpr Token kMask = -1;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad knobs, inconsistent lengths).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// An operation was called outside its contract.
class UsageError : public Error {
public:
    using Error::Error;
};

/// Fixed-length token sequence over [0, vocab_size) plus kMask.
class TokenSeq {
public:
    TokenSeq() = default;

    /// All-mask sequence of `length` positions.
    static TokenSeq masked(int length, int vocab_size);

    /// Throws ConfigError if any entry is neither kMask nor in [0, vocab_size).
    TokenSeq(std::vector<Token> tokens, int vocab_size);

    int size() const noexcept { return static_cast<int>(tokens_.size()); }
    int vocab_size() const noexcept { return vocab_size_; }
    const std::vector<Token>& tokens() const noexcept { return tokens_; }
    Token operator[](int i) const { return tokens_.at(static_cast<std::size_t>(i)); }

    bool is_masked(int i) const { return (*this)[i] == kMask; }
    int committed_count() const noexcept;
    int masked_count() const noexcept { return size() - committed_count(); }

    /// Commit or re-mask one position; the length never changes.
    void set(int i, Token token);

    bool operator==(const TokenSeq&) const = default;

private:
    std::vector<Token> tokens_;
    int vocab_size_ = 1;
};

/// Conditioning input. Simulator prompts carry a fully committed target.
struct Prompt {
    std::string id;
    TokenSeq target;
    std::optional<std::string> text;

    /// Text sent to remote backends; falls back to the id.
    const std::string& wire_text() const { return text ? *text : id; }

    bool operator==(const Prompt&) const = default;
};

/// One sampling path.
struct Trajectory {
    TrajectoryId id = 0;
    TokenSeq state;
    int step = 0;
    int total_steps = 0;
    std::vector<double> confidences;   // meaningful only at committed positions
    std::uint64_t seed = 0;
    std::vector<TrajectoryId> lineage;  // ancestor ids, root first
    std::optional<double> last_score;

    std::optional<TrajectoryId> parent_id() const {
        if (lineage.empty()) return std::nullopt;
        return lineage.back();
    }

    bool finished() const noexcept { return step == total_steps; }

    bool operator==(const Trajectory&) const = default;
};

/// Per-run trajectory id source. Ids are strictly increasing in creation order.
class IdAllocator {
public:
    TrajectoryId next() noexcept { return next_++; }
    TrajectoryId peek() const noexcept { return next_; }

private:
    TrajectoryId next_ = 0;
};

enum class QuotaSchedule { kCosine, kLinear };

/// Search knobs.
struct ScheduleConfig {
    int n_trajectories = 32;          // N
    int keep = 8;                     // K
    double decay = 2.0;               // d
    int total_steps = 32;             // T
    std::optional<int> warmup;        // T_s; defaults to max(1, T/4)
    int seq_len = 64;                 // M
    double branch_remask_fraction = 0.1;  // rho
    std::uint64_t root_seed = 0;
    QuotaSchedule quota = QuotaSchedule::kCosine;

    /// T_s after applying the default rule.
    int effective_warmup() const;

    /// Throws ConfigError when any invariant fails, including T_r > T.
    void validate() const;
};

enum class Stage : std::size_t { kExploration = 0, kThinning, kRefinement, kFinalSelection };
inline constexpr std::size_t kStageCount = 4;

const char* to_string(Stage stage) noexcept;

/// Exact generator-step and verifier-call counts, split by stage.
class NFELedger {
public:
    void charge_gen(Stage stage, std::uint64_t n = 1) noexcept {
        gen_[static_cast<std::size_t>(stage)] += n;
    }
    void charge_verify(Stage stage, std::uint64_t n = 1) noexcept {
        verify_[static_cast<std::size_t>(stage)] += n;
    }

    std::uint64_t gen(Stage stage) const noexcept { return gen_[static_cast<std::size_t>(stage)]; }
    std::uint64_t verify(Stage stage) const noexcept {
        return verify_[static_cast<std::size_t>(stage)];
    }

    std::uint64_t gen_steps() const noexcept;
    std::uint64_t verifier_calls() const noexcept;
    std::uint64_t total() const noexcept { return gen_steps() + verifier_calls(); }

    NFELedger& operator+=(const NFELedger& other) noexcept;
    bool operator==(const NFELedger&) const = default;

private:
    std::array<std::uint64_t, kStageCount> gen_{};
    std::array<std::uint64_t, kStageCount> verify_{};
};

/// One scoring/selection event.
struct TraceEntry {
    int step = 0;
    int active_width = 0;
    std::vector<TrajectoryId> scored_ids;
    std::vector<double> scores;
    std::vector<TrajectoryId> survivor_ids;

    bool operator==(const TraceEntry&) const = default;
};

struct SearchResult {
    Trajectory best;
    double best_score = 0.0;
    NFELedger ledger;
    std::vector<TraceEntry> trace;

    bool operator==(const SearchResult&) const = default;
};

}  // namespace tts
