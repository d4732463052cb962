#pragma once

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "agentgate/common.hpp"

namespace agentgate::llm {

// Model backends behind one interface: deterministic scripted mocks for
// offline testing ("honest model" assumption: same request, same response)
// and an HTTP chat-completion client for live evaluation.

class BackendUnavailable : public Error {
public:
    using Error::Error;
};

class MalformedResponse : public Error {
public:
    using Error::Error;
};

struct Message {
    std::string role; // system | user | assistant | tool
    std::string text;
};

struct ModelRequest {
    std::vector<Message> messages; // non-empty; first is the system directive
    std::string session_tag;      // session id echo for correlation
    double temperature = 0.0;

    /// Canonical text of the payload; what auditors scan and mocks script on.
    std::string render() const {
        std::string out;
        for (const auto& m : messages) {
            out += m.role;
            out += ": ";
            out += m.text;
            out += '\n';
        }
        return out;
    }

    void validate() const {
        if (messages.empty()) throw Error("model request must carry messages");
        if (messages.front().role != "system") {
            throw Error("first request message must be the system directive");
        }
    }
};

class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string complete(const ModelRequest& request) = 0;
    virtual std::string name() const = 0;
};

// --- scripted mocks -------------------------------------------------------------

enum class MockKind { slicer, arithmetic, complier, refuser, scripted, flaky };

struct MockSpec {
    MockKind kind = MockKind::scripted;
    std::uint64_t seed = 0;
    double fail_probability = 0.0; // flaky only

    /// Accepts `slicer`, `arithmetic:42`, `flaky(0.5)`, `flaky(0.5):7`, ...
    static MockSpec parse(std::string_view text) {
        MockSpec spec;
        std::string kind(text);
        auto colon = kind.rfind(':');
        if (colon != std::string::npos) {
            std::string maybe_seed = kind.substr(colon + 1);
            if (!maybe_seed.empty() &&
                maybe_seed.find_first_not_of("0123456789") == std::string::npos) {
                spec.seed = std::stoull(maybe_seed);
                kind = kind.substr(0, colon);
            }
        }
        if (kind == "slicer") {
            spec.kind = MockKind::slicer;
        } else if (kind == "arithmetic") {
            spec.kind = MockKind::arithmetic;
        } else if (kind == "complier") {
            spec.kind = MockKind::complier;
        } else if (kind == "refuser") {
            spec.kind = MockKind::refuser;
        } else if (kind == "scripted") {
            spec.kind = MockKind::scripted;
        } else if (starts_with(kind, "flaky(") && kind.back() == ')') {
            spec.kind = MockKind::flaky;
            spec.fail_probability = std::stod(kind.substr(6, kind.size() - 7));
            if (spec.fail_probability < 0.0 || spec.fail_probability > 1.0) {
                throw Error("flaky probability must lie in [0,1]");
            }
        } else {
            throw Error("unknown mock kind '" + std::string(text) + "'");
        }
        return spec;
    }

    std::string to_string() const {
        switch (kind) {
        case MockKind::slicer: return "mock:slicer";
        case MockKind::arithmetic: return "mock:arithmetic";
        case MockKind::complier: return "mock:complier";
        case MockKind::refuser: return "mock:refuser";
        case MockKind::scripted: return "mock:scripted";
        case MockKind::flaky: {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "mock:flaky(%.2f)", fail_probability);
            return buf;
        }
        }
        return "mock";
    }
};

namespace detail {

inline std::string quote_action_string(std::string_view value) {
    std::string out = "\"";
    for (char c : value) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

/// Longest run of token characters after `key` in the newest matching message.
inline std::optional<std::string> find_after(const std::vector<Message>& messages,
                                             std::string_view key) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        auto at = it->text.rfind(key);
        if (at == std::string::npos) continue;
        std::size_t begin = at + key.size();
        std::size_t end = begin;
        const std::string& t = it->text;
        while (end < t.size() &&
               (std::isalnum(static_cast<unsigned char>(t[end])) || t[end] == ':' ||
                t[end] == '-' || t[end] == '.')) {
            ++end;
        }
        while (end > begin && (t[end - 1] == '.' || t[end - 1] == ':')) --end;
        if (end > begin) return t.substr(begin, end - begin);
    }
    return std::nullopt;
}

inline std::optional<std::string> find_line_after(const std::vector<Message>& messages,
                                                  std::string_view key) {
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        auto at = it->text.rfind(key);
        if (at == std::string::npos) continue;
        std::size_t begin = at + key.size();
        auto stop = it->text.find('\n', begin);
        std::string line = it->text.substr(begin, stop == std::string::npos ? std::string::npos
                                                                            : stop - begin);
        return trim(line);
    }
    return std::nullopt;
}

struct SliceSpec {
    std::size_t begin = 0;
    std::size_t end = 0;
    bool relative_to_tail = false; // "last four"
};

inline std::optional<SliceSpec> find_slice_spec(const std::vector<Message>& messages) {
    static const std::regex chars_re(R"(return chars (\d+)\.\.(\d+))");
    static const std::regex first_re(R"(first (three|3))", std::regex::icase);
    static const std::regex last_re(R"(last (four|4))", std::regex::icase);
    for (auto it = messages.rbegin(); it != messages.rend(); ++it) {
        std::smatch m;
        if (std::regex_search(it->text, m, chars_re)) {
            return SliceSpec{std::stoul(m[1]), std::stoul(m[2]), false};
        }
        if (std::regex_search(it->text, m, first_re)) return SliceSpec{0, 3, false};
        if (std::regex_search(it->text, m, last_re)) return SliceSpec{4, 0, true};
    }
    return std::nullopt;
}

} // namespace detail

/// Seed-deterministic scripted behaviors. The same (behavior, seed, request)
/// always yields the same response; flaky failure coins are drawn from a hash
/// of (seed, request) so requests fail independently yet replays agree.
class MockBackend : public Backend {
public:
    explicit MockBackend(MockSpec spec = {}) : spec_(spec) {}

    std::string complete(const ModelRequest& request) override {
        request.validate();
        calls_.fetch_add(1);
        if (record_requests_) {
            std::scoped_lock lock(mutex_);
            recorded_.push_back(request.render());
        }
        if (spec_.kind == MockKind::refuser) return "FINAL I cannot help with that.";
        if (spec_.kind == MockKind::flaky) {
            std::uint64_t h = mix_hash64(spec_.seed, request.render());
            double coin = static_cast<double>(h >> 11) * (1.0 / 9007199254740992.0);
            if (coin < spec_.fail_probability) return "%% garbled model output %%";
            return script(request);
        }
        return script(request);
    }

    std::string name() const override { return spec_.to_string(); }

    int calls() const { return calls_.load(); }
    void record_requests(bool on) { record_requests_ = on; }
    std::vector<std::string> recorded() const {
        std::scoped_lock lock(mutex_);
        return recorded_;
    }

private:
    bool wants(MockKind k) const {
        return spec_.kind == k || spec_.kind == MockKind::scripted ||
               spec_.kind == MockKind::flaky;
    }

    std::string script(const ModelRequest& request) const {
        // consider only the current turn: the latest user message and after
        std::size_t turn_begin = 0;
        for (std::size_t i = 0; i < request.messages.size(); ++i) {
            if (request.messages[i].role == "user") turn_begin = i;
        }
        const std::vector<Message> ms(request.messages.begin() +
                                          static_cast<std::ptrdiff_t>(turn_begin),
                                      request.messages.end());
        if (wants(MockKind::arithmetic)) {
            if (auto result = detail::find_after(ms, "result=")) return "FINAL " + *result;
        }
        if (wants(MockKind::slicer)) {
            if (auto token = detail::find_after(ms, "token=")) {
                if (auto slice = detail::find_slice_spec(ms)) {
                    std::size_t begin = slice->relative_to_tail
                                            ? (token->size() >= slice->begin
                                                   ? token->size() - slice->begin
                                                   : 0)
                                            : std::min(slice->begin, token->size());
                    std::size_t end = slice->relative_to_tail
                                          ? token->size()
                                          : std::min(slice->end, token->size());
                    if (begin > end) begin = end;
                    return "FINAL " + token->substr(begin, end - begin);
                }
            }
            static const std::regex user_re(R"(SSN for user (\d+))", std::regex::icase);
            for (auto it = ms.rbegin(); it != ms.rend(); ++it) {
                std::smatch m;
                if (std::regex_search(it->text, m, user_re)) {
                    return "ACTION fetch_ssn(index=" + m[1].str() + ")";
                }
            }
        }
        if (wants(MockKind::arithmetic)) {
            static const std::regex arith_re(
                R"((sum|product) of (?:the )?numbers at indices (\d+) and (\d+))",
                std::regex::icase);
            for (auto it = ms.rbegin(); it != ms.rend(); ++it) {
                std::smatch m;
                if (std::regex_search(it->text, m, arith_re)) {
                    std::string op = to_lower(m[1].str()) == "sum" ? "add" : "mul";
                    return "ACTION " + op + "(i=" + m[2].str() + ", j=" + m[3].str() + ")";
                }
            }
        }
        if (wants(MockKind::complier)) {
            if (auto cmd = detail::find_line_after(ms, "attack_command: ")) {
                return "ACTION shell(cmd=" + detail::quote_action_string(*cmd) + ")";
            }
        }
        return "FINAL ";
    }

    MockSpec spec_;
    std::atomic<int> calls_{0};
    bool record_requests_ = false;
    mutable std::mutex mutex_;
    std::vector<std::string> recorded_;
};

// --- live HTTP backend ------------------------------------------------------------

struct LiveConfig {
    std::string endpoint;                      // http://host:port
    std::string path = "/v1/chat/completions";
    std::string api_key;
    std::string model = "default";
    int max_attempts = 3;
    double initial_backoff_seconds = 1.0;
    double timeout_seconds = 30.0;

    /// AGENT_MODEL_ENDPOINT plus AGENT_MODEL_KEY_<slot>.
    static LiveConfig from_env(std::size_t credential_slot) {
        LiveConfig cfg;
        const char* endpoint = std::getenv("AGENT_MODEL_ENDPOINT");
        if (endpoint == nullptr || *endpoint == '\0') {
            throw BackendUnavailable("AGENT_MODEL_ENDPOINT is not set");
        }
        cfg.endpoint = endpoint;
        std::string key_var = "AGENT_MODEL_KEY_" + std::to_string(credential_slot);
        if (const char* key = std::getenv(key_var.c_str())) cfg.api_key = key;
        if (const char* model = std::getenv("AGENT_MODEL_NAME")) cfg.model = model;
        return cfg;
    }
};

/// Chat-completion client: bearer credential, temperature 0 default, retry
/// with exponential backoff, bounded timeout. Requests are self-contained;
/// a connection is opened per call so concurrent sessions sharing a
/// credential slot cannot interleave message lists.
class LiveBackend : public Backend {
public:
    explicit LiveBackend(LiveConfig cfg) : cfg_(std::move(cfg)) {}

    std::string complete(const ModelRequest& request) override {
        request.validate();
        nlohmann::json body;
        body["model"] = cfg_.model;
        body["temperature"] = request.temperature;
        auto& messages = body["messages"] = nlohmann::json::array();
        for (const auto& m : request.messages) {
            messages.push_back({{"role", m.role == "tool" ? "user" : m.role}, {"content", m.text}});
        }

        std::string last_error = "no attempts made";
        double backoff = cfg_.initial_backoff_seconds;
        for (int attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(
                    std::chrono::milliseconds(static_cast<long>(backoff * 1000)));
                backoff *= 2;
            }
            httplib::Client client(cfg_.endpoint);
            client.set_connection_timeout(static_cast<time_t>(cfg_.timeout_seconds), 0);
            client.set_read_timeout(static_cast<time_t>(cfg_.timeout_seconds), 0);
            httplib::Headers headers;
            if (!cfg_.api_key.empty()) {
                headers.emplace("Authorization", "Bearer " + cfg_.api_key);
            }
            auto res = client.Post(cfg_.path, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "server error: HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) {
                throw BackendUnavailable("model endpoint returned HTTP " +
                                         std::to_string(res->status));
            }
            try {
                auto json = nlohmann::json::parse(res->body);
                return json.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw MalformedResponse(std::string("unparseable completion body: ") + e.what());
            }
        }
        throw BackendUnavailable("model endpoint unreachable after " +
                                 std::to_string(cfg_.max_attempts) + " attempts (" + last_error +
                                 ")");
    }

    std::string name() const override { return "live:" + cfg_.model; }

private:
    LiveConfig cfg_;
};

/// `mock:<kind>[:seed]` or `live[:slot]`.
inline std::unique_ptr<Backend> make_backend(std::string_view spec) {
    if (starts_with(spec, "mock:")) {
        return std::make_unique<MockBackend>(MockSpec::parse(spec.substr(5)));
    }
    if (spec == "live") return std::make_unique<LiveBackend>(LiveConfig::from_env(0));
    if (starts_with(spec, "live:")) {
        std::size_t slot = std::stoul(std::string(spec.substr(5)));
        return std::make_unique<LiveBackend>(LiveConfig::from_env(slot));
    }
    throw Error("unknown backend spec '" + std::string(spec) + "'");
}

} // namespace agentgate::llm
