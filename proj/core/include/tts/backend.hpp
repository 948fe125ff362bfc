#pragma once

// Client and mock server for the stateless /v1 generator/verifier protocol.
// The wire format is documented in docs/protocol.md.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "tts/core.hpp"
#include "tts/generator.hpp"
#include "tts/verifier.hpp"

namespace tts {

struct RemoteEndpoint {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    int timeout_ms = 10000;
    std::optional<std::string> auth_token;

    void validate() const;
};

/// The request never produced a response (connect/read/write failure, timeout).
class TransportError : public Error {
public:
    using Error::Error;
};

/// The response was not a well-formed protocol message.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// The server answered with an error envelope {code, message}.
class ServerError : public Error {
public:
    ServerError(int status, std::string code, const std::string& message);
    int status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

/// A step response committed the wrong number of positions or altered frozen ones.
class QuotaViolationError : public Error {
public:
    using Error::Error;
};

/// A well-formed response carried an out-of-range value.
class ValidationError : public Error {
public:
    using Error::Error;
};

TokenSeq remote_init(const RemoteEndpoint& ep, const std::string& prompt_text, std::uint64_t seed,
                     int length);

/// Validates the reply against `schedule`: the committed count must equal
/// commit_quota(t + 1) (or commit_quota(t) for repair) and committed inputs must be unchanged.
StepOutput remote_step(const RemoteEndpoint& ep, const TokenSeq& state, const std::string& prompt_text,
                       int t, int total_steps, std::uint64_t seed,
                       StepMode mode = StepMode::kAdvance,
                       QuotaSchedule schedule = QuotaSchedule::kCosine);

double remote_score(const RemoteEndpoint& ep, const TokenSeq& state, const std::string& prompt_text);

class RemoteGenerator final : public Generator {
public:
    explicit RemoteGenerator(RemoteEndpoint ep, QuotaSchedule schedule = QuotaSchedule::kCosine);

    TokenSeq init_state(const Prompt& prompt, std::uint64_t seed, int length) const override;
    StepOutput step(const StepRequest& request) const override;
    QuotaSchedule quota_schedule() const override { return schedule_; }

private:
    RemoteEndpoint ep_;
    QuotaSchedule schedule_;
};

/// Also the adapter point for external scorers that speak /v1/score.
class RemoteVerifier final : public Verifier {
public:
    explicit RemoteVerifier(RemoteEndpoint ep);
    double score(const TokenSeq& state, const Prompt& prompt) const override;

private:
    RemoteEndpoint ep_;
};

struct MockServerConfig {
    SimGenParams gen;
    SVFParams svf;
    int vocab_size = 1024;
    std::optional<std::string> auth_token;
};

/// Serves the simulator over /v1. Prompt targets are make_sim_prompt(prompt_text, M, vocab_size).
class MockServer {
public:
    explicit MockServer(MockServerConfig config);
    ~MockServer();
    MockServer(const MockServer&) = delete;
    MockServer& operator=(const MockServer&) = delete;

    /// Bind and serve on a background thread. port == 0 picks a free port.
    /// Returns the bound port.
    int start(const std::string& host = "127.0.0.1", int port = 0);

    /// Bind and serve on the calling thread until stop() is called.
    void serve(const std::string& host, int port);

    void stop();

    std::string base_url() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace tts
