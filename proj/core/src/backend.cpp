#include "tts/backend.hpp"

#include <chrono>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace tts {

using json = nlohmann::json;

void RemoteEndpoint::validate() const {
    if (base_url.empty()) throw ConfigError("RemoteEndpoint: base_url is empty");
    if (timeout_ms <= 0) throw ConfigError("RemoteEndpoint: timeout_ms must be positive");
}

ServerError::ServerError(int status, std::string code, const std::string& message)
    : Error("server error " + std::to_string(status) + " [" + code + "]: " + message),
      status_(status),
      code_(std::move(code)) {}

namespace {

const char* mode_name(StepMode mode) { return mode == StepMode::kRepair ? "repair" : "advance"; }

json encode_state(const TokenSeq& state) { return json(state.tokens()); }

TokenSeq decode_state(const json& j, int vocab_size) {
    if (!j.is_array()) throw ProtocolError("state must be an array of integers");
    std::vector<Token> tokens;
    tokens.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number_integer()) throw ProtocolError("state entries must be integers");
        const auto x = v.get<std::int64_t>();
        if (x != kMask && (x < 0 || x >= vocab_size)) {
            throw ValidationError("state entry " + std::to_string(x) + " outside vocabulary");
        }
        tokens.push_back(static_cast<Token>(x));
    }
    return TokenSeq(std::move(tokens), vocab_size);
}

json post(const RemoteEndpoint& ep, const std::string& path, const json& body) {
    ep.validate();
    httplib::Client client(ep.base_url);
    const auto timeout = std::chrono::milliseconds(ep.timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    if (ep.auth_token) client.set_bearer_token_auth(*ep.auth_token);

    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
        throw TransportError("POST " + ep.base_url + path + ": " + httplib::to_string(res.error()));
    }
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        if (res->status != 200) throw ServerError(res->status, "unknown", res->body);
        throw ProtocolError("POST " + path + ": response is not JSON: " + e.what());
    }
    if (res->status != 200) {
        if (!reply.is_object() || !reply.contains("code") || !reply["code"].is_string()) {
            throw ServerError(res->status, "unknown", res->body);
        }
        throw ServerError(res->status, reply["code"].get<std::string>(),
                          reply.value("message", std::string{}));
    }
    if (!reply.is_object()) throw ProtocolError("POST " + path + ": response is not an object");
    return reply;
}

const json& field(const json& obj, const char* name) {
    auto it = obj.find(name);
    if (it == obj.end()) throw ProtocolError(std::string("response is missing field '") + name + "'");
    return *it;
}

}  // namespace

TokenSeq remote_init(const RemoteEndpoint& ep, const std::string& prompt_text, std::uint64_t seed,
                     int length) {
    const json reply = post(ep, "/v1/init", {{"prompt", prompt_text}, {"seed", seed}, {"length", length}});
    const json& vocab = field(reply, "vocab_size");
    if (!vocab.is_number_integer() || vocab.get<std::int64_t>() < 1) {
        throw ProtocolError("vocab_size must be a positive integer");
    }
    TokenSeq state = decode_state(field(reply, "state"), vocab.get<int>());
    if (state.size() != length) throw ValidationError("init: server returned wrong length");
    if (state.committed_count() != 0) throw ValidationError("init: server returned committed positions");
    return state;
}

StepOutput remote_step(const RemoteEndpoint& ep, const TokenSeq& state, const std::string& prompt_text,
                       int t, int total_steps, std::uint64_t seed, StepMode mode,
                       QuotaSchedule schedule) {
    if (t < 0 || t >= total_steps) throw UsageError("remote_step: t outside [0, T)");
    const json request = {{"state", encode_state(state)}, {"prompt", prompt_text},
                          {"t", t},                       {"total_steps", total_steps},
                          {"seed", seed},                 {"mode", mode_name(mode)}};
    const json reply = post(ep, "/v1/step", request);

    StepOutput out{decode_state(field(reply, "state"), state.vocab_size()), {}};
    const json& conf = field(reply, "confidences");
    if (!conf.is_array()) throw ProtocolError("confidences must be an array");
    for (const auto& c : conf) {
        if (!c.is_number()) throw ProtocolError("confidences must be numbers");
        const double v = c.get<double>();
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("confidence outside [0, 1]");
        out.confidences.push_back(v);
    }
    if (out.state.size() != state.size() || out.confidences.size() != out.state.tokens().size()) {
        throw ValidationError("step: response length does not match request");
    }
    for (int i = 0; i < state.size(); ++i) {
        if (!state.is_masked(i) && out.state[i] != state[i]) {
            throw QuotaViolationError("step: committed position " + std::to_string(i) + " was altered");
        }
    }
    const int expected =
        commit_quota(mode == StepMode::kAdvance ? t + 1 : t, total_steps, state.size(), schedule);
    if (out.state.committed_count() != expected) {
        throw QuotaViolationError("step: response commits " + std::to_string(out.state.committed_count()) +
                                  " positions, quota is " + std::to_string(expected));
    }
    return out;
}

double remote_score(const RemoteEndpoint& ep, const TokenSeq& state, const std::string& prompt_text) {
    const json reply = post(ep, "/v1/score",
                            {{"state", encode_state(state)},
                             {"prompt", prompt_text},
                             {"instruction", render_instruction(prompt_text)}});
    const json& s = field(reply, "score");
    if (!s.is_number()) throw ProtocolError("score must be a number");
    const double score = s.get<double>();
    if (!(score >= 0.0 && score <= 1.0)) {
        throw ValidationError("score " + std::to_string(score) + " outside [0, 1]");
    }
    return score;
}

RemoteGenerator::RemoteGenerator(RemoteEndpoint ep, QuotaSchedule schedule)
    : ep_(std::move(ep)), schedule_(schedule) {
    ep_.validate();
}

TokenSeq RemoteGenerator::init_state(const Prompt& prompt, std::uint64_t seed, int length) const {
    return remote_init(ep_, prompt.wire_text(), seed, length);
}

StepOutput RemoteGenerator::step(const StepRequest& r) const {
    return remote_step(ep_, r.state, r.prompt.wire_text(), r.t, r.total_steps, r.seed, r.mode, schedule_);
}

RemoteVerifier::RemoteVerifier(RemoteEndpoint ep) : ep_(std::move(ep)) { ep_.validate(); }

double RemoteVerifier::score(const TokenSeq& state, const Prompt& prompt) const {
    return remote_score(ep_, state, prompt.wire_text());
}

// ---------------------------------------------------------------------------
// Mock server

namespace {

struct RequestError {
    int status;
    std::string code;
    std::string message;
};

void reply_error(httplib::Response& res, const RequestError& e) {
    res.status = e.status;
    res.set_content(json{{"code", e.code}, {"message", e.message}}.dump(), "application/json");
}

const json& require(const json& body, const char* name) {
    auto it = body.find(name);
    if (it == body.end()) {
        throw RequestError{400, "invalid_request", std::string("missing field '") + name + "'"};
    }
    return *it;
}

std::int64_t require_int(const json& body, const char* name) {
    const json& v = require(body, name);
    if (!v.is_number_integer()) {
        throw RequestError{400, "invalid_request", std::string("field '") + name + "' must be an integer"};
    }
    return v.get<std::int64_t>();
}

std::uint64_t require_seed(const json& body) {
    const json& v = require(body, "seed");
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw RequestError{400, "invalid_request", "field 'seed' must be a non-negative integer"};
    }
    return v.get<std::uint64_t>();
}

std::string require_string(const json& body, const char* name) {
    const json& v = require(body, name);
    if (!v.is_string()) {
        throw RequestError{400, "invalid_request", std::string("field '") + name + "' must be a string"};
    }
    return v.get<std::string>();
}

TokenSeq require_state(const json& body, int vocab_size) {
    try {
        TokenSeq state = decode_state(require(body, "state"), vocab_size);
        if (state.size() < 1) throw RequestError{400, "invalid_request", "state must be non-empty"};
        return state;
    } catch (const Error& e) {
        throw RequestError{400, "invalid_request", e.what()};
    }
}

}  // namespace

struct MockServer::Impl {
    explicit Impl(MockServerConfig c) : config(std::move(c)), gen(config.gen), ver(config.svf) {
        if (config.vocab_size < 1) throw ConfigError("MockServer: vocab_size must be positive");
        route("/v1/init", [this](const json& body) { return handle_init(body); });
        route("/v1/step", [this](const json& body) { return handle_step(body); });
        route("/v1/score", [this](const json& body) { return handle_score(body); });
    }

    template <class Handler>
    void route(const std::string& path, Handler handler) {
        server.Post(path, [this, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                if (config.auth_token &&
                    req.get_header_value("Authorization") != "Bearer " + *config.auth_token) {
                    throw RequestError{401, "unauthorized", "missing or wrong bearer token"};
                }
                json body;
                try {
                    body = json::parse(req.body);
                } catch (const json::parse_error& e) {
                    throw RequestError{400, "invalid_request", std::string("body is not JSON: ") + e.what()};
                }
                if (!body.is_object()) throw RequestError{400, "invalid_request", "body must be an object"};
                res.set_content(handler(body).dump(), "application/json");
            } catch (const RequestError& e) {
                reply_error(res, e);
            } catch (const UsageError& e) {
                reply_error(res, {400, "precondition_failed", e.what()});
            } catch (const ConfigError& e) {
                reply_error(res, {400, "invalid_request", e.what()});
            } catch (const std::exception& e) {
                reply_error(res, {500, "internal", e.what()});
            }
        });
    }

    json handle_init(const json& body) {
        const std::string text = require_string(body, "prompt");
        const std::uint64_t seed = require_seed(body);
        const std::int64_t length = require_int(body, "length");
        if (length < 1 || length > (1 << 20)) {
            throw RequestError{400, "invalid_request", "length must lie in [1, 2^20]"};
        }
        const Prompt prompt = make_sim_prompt(text, static_cast<int>(length), config.vocab_size);
        const TokenSeq state = gen.init_state(prompt, seed, static_cast<int>(length));
        return {{"state", encode_state(state)}, {"vocab_size", config.vocab_size}};
    }

    json handle_step(const json& body) {
        const TokenSeq state = require_state(body, config.vocab_size);
        const std::string text = require_string(body, "prompt");
        const std::int64_t t = require_int(body, "t");
        const std::int64_t total = require_int(body, "total_steps");
        const std::uint64_t seed = require_seed(body);
        StepMode mode = StepMode::kAdvance;
        if (body.contains("mode")) {
            const std::string m = require_string(body, "mode");
            if (m == "repair") {
                mode = StepMode::kRepair;
            } else if (m != "advance") {
                throw RequestError{400, "invalid_request", "mode must be 'advance' or 'repair'"};
            }
        }
        if (total < 1 || total > (1 << 20)) throw RequestError{400, "invalid_request", "total_steps out of range"};
        if (t < 0 || t >= total) throw RequestError{400, "invalid_request", "t must satisfy 0 <= t < total_steps"};
        const Prompt prompt = make_sim_prompt(text, state.size(), config.vocab_size);
        const StepOutput out = gen.step(
            StepRequest{state, prompt, static_cast<int>(t), static_cast<int>(total), seed, mode});
        return {{"state", encode_state(out.state)}, {"confidences", out.confidences}};
    }

    json handle_score(const json& body) {
        const TokenSeq state = require_state(body, config.vocab_size);
        const std::string text = require_string(body, "prompt");
        const Prompt prompt = make_sim_prompt(text, state.size(), config.vocab_size);
        return {{"score", ver.score(state, prompt)}};
    }

    MockServerConfig config;
    SimGenerator gen;
    SimVerifier ver;
    httplib::Server server;
    std::thread worker;
    std::string host = "127.0.0.1";
    int port = 0;
};

MockServer::MockServer(MockServerConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
    if (impl_->worker.joinable()) throw UsageError("MockServer already running");
    impl_->host = host;
    if (port == 0) {
        impl_->port = impl_->server.bind_to_any_port(host);
    } else {
        impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
    }
    if (impl_->port < 0) throw TransportError("MockServer: cannot bind " + host + ":" + std::to_string(port));
    impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->port;
}

void MockServer::serve(const std::string& host, int port) {
    impl_->host = host;
    impl_->port = port;
    if (!impl_->server.listen(host, port)) {
        throw TransportError("MockServer: cannot listen on " + host + ":" + std::to_string(port));
    }
}

void MockServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

std::string MockServer::base_url() const {
    return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

}  // namespace tts
