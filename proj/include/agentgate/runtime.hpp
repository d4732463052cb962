#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "agentgate/llm.hpp"
#include "agentgate/session.hpp"
#include "agentgate/shield.hpp"
#include "agentgate/state.hpp"

namespace agentgate::runtime {

// The agent loop: assemble the prompt from session state and tool docs, call
// the model, parse its action, route tool calls through the shield and
// sandbox, feed results back, and restore plaintext only in the final answer.
// Model responses use a strict single-line grammar so a malformed response is
// a countable round-trip failure rather than a judgment call.

class MalformedAction : public Error {
public:
    explicit MalformedAction(std::string offending_line)
        : Error("malformed action line: " + offending_line), line(std::move(offending_line)) {}

    std::string line;
};

class StepBudgetExhausted : public Error {
public:
    using Error::Error;
};

/// Outbound model payload still contained shielded plaintext; the turn is
/// aborted before anything reaches the backend.
class LeakDetected : public Error {
public:
    using Error::Error;
};

// --- action grammar -------------------------------------------------------------
//
//   ACTION <tool>(<arg>=<value>, ...)
//   FINAL <text>
//
// Values are bare runs of [A-Za-z0-9_.:/-] or double-quoted strings with
// backslash escapes. Anything else on the first non-blank line is malformed.

struct ActionRequest {
    std::string tool;
    std::vector<std::pair<std::string, std::string>> arguments;
    std::string raw;

    std::optional<std::string> arg(std::string_view key) const {
        for (const auto& [k, v] : arguments) {
            if (k == key) return v;
        }
        return std::nullopt;
    }

    friend bool operator==(const ActionRequest& a, const ActionRequest& b) {
        return a.tool == b.tool && a.arguments == b.arguments;
    }
};

struct FinalAnswer {
    std::string text;
};

using ParsedAction = std::variant<ActionRequest, FinalAnswer>;

namespace detail {

inline bool bare_value_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == ':' ||
           c == '/' || c == '-';
}

inline bool identifier_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

inline void skip_spaces(std::string_view s, std::size_t& i) {
    while (i < s.size() && s[i] == ' ') ++i;
}

} // namespace detail

inline ParsedAction parse_action(std::string_view raw) {
    // first non-blank line is the action
    std::string_view line = raw;
    std::size_t begin = 0;
    while (begin < raw.size()) {
        auto eol = raw.find('\n', begin);
        std::string_view candidate =
            raw.substr(begin, eol == std::string_view::npos ? std::string_view::npos : eol - begin);
        if (!trim(candidate).empty()) {
            line = candidate;
            break;
        }
        if (eol == std::string_view::npos) break;
        begin = eol + 1;
    }
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);

    if (line == "FINAL") return FinalAnswer{""};
    if (starts_with(line, "FINAL ")) return FinalAnswer{std::string(line.substr(6))};
    if (!starts_with(line, "ACTION ")) throw MalformedAction(std::string(line));

    std::size_t i = 7;
    detail::skip_spaces(line, i);
    std::size_t name_begin = i;
    while (i < line.size() && detail::identifier_char(line[i])) ++i;
    if (i == name_begin) throw MalformedAction(std::string(line));
    ActionRequest action;
    action.raw = std::string(line);
    action.tool = std::string(line.substr(name_begin, i - name_begin));
    detail::skip_spaces(line, i);
    if (i >= line.size() || line[i] != '(') throw MalformedAction(std::string(line));
    ++i;
    detail::skip_spaces(line, i);
    if (i < line.size() && line[i] == ')') {
        ++i;
    } else {
        while (true) {
            std::size_t key_begin = i;
            while (i < line.size() && detail::identifier_char(line[i])) ++i;
            if (i == key_begin) throw MalformedAction(std::string(line));
            std::string key(line.substr(key_begin, i - key_begin));
            detail::skip_spaces(line, i);
            if (i >= line.size() || line[i] != '=') throw MalformedAction(std::string(line));
            ++i;
            detail::skip_spaces(line, i);
            std::string value;
            if (i < line.size() && line[i] == '"') {
                ++i;
                bool closed = false;
                while (i < line.size()) {
                    if (line[i] == '\\' && i + 1 < line.size()) {
                        value.push_back(line[i + 1]);
                        i += 2;
                    } else if (line[i] == '"') {
                        closed = true;
                        ++i;
                        break;
                    } else {
                        value.push_back(line[i]);
                        ++i;
                    }
                }
                if (!closed) throw MalformedAction(std::string(line));
            } else {
                std::size_t value_begin = i;
                while (i < line.size() && detail::bare_value_char(line[i])) ++i;
                if (i == value_begin) throw MalformedAction(std::string(line));
                value = std::string(line.substr(value_begin, i - value_begin));
            }
            action.arguments.emplace_back(std::move(key), std::move(value));
            detail::skip_spaces(line, i);
            if (i < line.size() && line[i] == ',') {
                ++i;
                detail::skip_spaces(line, i);
                continue;
            }
            if (i < line.size() && line[i] == ')') {
                ++i;
                break;
            }
            throw MalformedAction(std::string(line));
        }
    }
    detail::skip_spaces(line, i);
    if (i != line.size()) throw MalformedAction(std::string(line));
    return action;
}

inline std::string unparse(const ActionRequest& action) {
    std::string out = "ACTION " + action.tool + "(";
    bool first = true;
    for (const auto& [key, value] : action.arguments) {
        if (!first) out += ", ";
        first = false;
        out += key;
        out += '=';
        bool bare = !value.empty();
        for (char c : value) bare = bare && detail::bare_value_char(c);
        out += bare ? value : llm::detail::quote_action_string(value);
    }
    out += ")";
    return out;
}

// --- tools ----------------------------------------------------------------------

using ToolArgs = std::map<std::string, std::string>;
using ToolHandler = std::function<std::string(const ToolArgs&)>;

struct ToolSpec {
    std::string name;
    std::string description; // shown to the model; an injection surface
    std::vector<std::string> parameters;
    ToolHandler handler;
};

class ToolRegistry {
public:
    /// Descriptions are scrubbed on the way in; tool docs reach every prompt.
    void add(ToolSpec spec, const shield::ShieldPolicy& policy, shield::ShieldLedger& ledger) {
        spec.description = shield::scrub(policy, ledger, spec.description);
        add_unshielded(std::move(spec));
    }

    void add_unshielded(ToolSpec spec) {
        if (index_.count(spec.name) > 0) throw Error("duplicate tool '" + spec.name + "'");
        index_[spec.name] = tools_.size();
        tools_.push_back(std::move(spec));
    }

    const ToolSpec* find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        return it == index_.end() ? nullptr : &tools_[it->second];
    }

    const std::vector<ToolSpec>& tools() const { return tools_; }

    /// Deterministic given registration order.
    std::string render_docs() const {
        std::string out;
        for (const auto& t : tools_) {
            out += "- " + t.name + "(";
            for (std::size_t i = 0; i < t.parameters.size(); ++i) {
                if (i) out += ", ";
                out += t.parameters[i];
            }
            out += "): " + t.description + "\n";
        }
        return out;
    }

private:
    std::vector<ToolSpec> tools_;
    std::map<std::string, std::size_t> index_;
};

// --- the turn loop ---------------------------------------------------------------

struct AgentAnswer {
    std::string text;
    std::size_t steps_used = 0; // model calls made this turn
    std::vector<std::string> tools_invoked;
};

struct TurnConfig {
    std::size_t max_steps = 8;  // tool invocations per turn
    bool shield_enabled = true; // plaintext baseline runs bypass scrub/restore
    double temperature = 0.0;
    /// Called with every model-bound payload and its audit findings.
    std::function<void(const std::string&, const std::vector<shield::LeakFinding>&)>
        payload_observer;
};

inline std::string system_directive(const ToolRegistry& registry, const SessionId& session) {
    std::string out = "You are a careful assistant that completes tasks with tools. "
                      "[session:" +
                      session.value + "]\n";
    if (!registry.tools().empty()) {
        out += "Tools:\n" + registry.render_docs();
    }
    out += "Reply with exactly one line: `ACTION <tool>(<arg>=<value>, ...)` to use a tool, "
           "or `FINAL <answer>` when done.";
    return out;
}

namespace detail {

struct TurnTrace {
    std::size_t model_calls = 0;
    std::size_t actions = 0;
    std::vector<std::string> tools;
    std::optional<std::string> final_text;
    std::optional<std::string> malformed_line;
    bool budget_exhausted = false;
};

} // namespace detail

/// One agent turn against an open session. The whole turn runs as a single
/// effectful step so the session state updates atomically; the transcript
/// keeps the shielded view, and only the returned answer is restored.
/// Tool and policy errors are recorded in the transcript (the model may
/// retry within budget); malformed responses and an exhausted step budget
/// surface as exceptions after the transcript persists.
inline AgentAnswer run_turn(SessionManager& sessions, const SessionId& session,
                            const shield::ShieldPolicy& policy, shield::ShieldLedger& ledger,
                            llm::Backend& backend, const ToolRegistry& registry,
                            std::string_view user_prompt, const TurnConfig& cfg = {}) {
    const bool shielded = cfg.shield_enabled;
    std::string prompt =
        shielded ? shield::scrub(policy, ledger, user_prompt) : std::string(user_prompt);
    std::string directive = system_directive(registry, session);

    detail::TurnTrace trace;
    StateStep turn = StateStep::make("agent_turn", true, [&](const AgentState& input) {
        AgentState st = input;
        st.transcript.push_back({Role::user, prompt});
        while (true) {
            if (trace.actions >= cfg.max_steps) {
                trace.budget_exhausted = true;
                break;
            }
            llm::ModelRequest request;
            request.session_tag = session.value;
            request.temperature = cfg.temperature;
            request.messages.push_back({"system", directive});
            for (const auto& entry : st.transcript) {
                request.messages.push_back({std::string(role_name(entry.role)), entry.text});
            }
            std::string payload = request.render();
            if (shielded) {
                auto findings = shield::audit_leak(ledger, payload);
                if (cfg.payload_observer) cfg.payload_observer(payload, findings);
                if (!findings.empty()) {
                    throw LeakDetected("shielded plaintext found in model-bound payload (" +
                                       findings[0].detector + ")");
                }
            } else if (cfg.payload_observer) {
                cfg.payload_observer(payload, {});
            }

            std::string response = backend.complete(request);
            trace.model_calls += 1;
            st.transcript.push_back({Role::assistant, response});

            ParsedAction parsed;
            try {
                parsed = parse_action(response);
            } catch (const MalformedAction& e) {
                trace.malformed_line = e.line;
                break;
            }
            if (std::holds_alternative<FinalAnswer>(parsed)) {
                trace.final_text = std::get<FinalAnswer>(parsed).text;
                break;
            }

            const auto& action = std::get<ActionRequest>(parsed);
            trace.actions += 1;
            trace.tools.push_back(action.tool);
            std::string feedback;
            if (const ToolSpec* tool = registry.find(action.tool)) {
                try {
                    ToolArgs args(action.arguments.begin(), action.arguments.end());
                    feedback = tool->handler(args);
                } catch (const Error& e) {
                    feedback = std::string("error: ") + e.what();
                }
            } else {
                feedback = "error: unknown tool '" + action.tool + "'";
            }
            // tool outputs are untrusted input; shield them again
            if (shielded) feedback = shield::scrub(policy, ledger, feedback);
            st.transcript.push_back({Role::tool, feedback});
        }
        return StepResult::success(Output{OutputKind::answer, trace.final_text.value_or("")},
                                   std::move(st));
    });

    sessions.with_session(session, turn);

    if (trace.malformed_line) throw MalformedAction(*trace.malformed_line);
    if (trace.budget_exhausted) {
        throw StepBudgetExhausted("turn exceeded " + std::to_string(cfg.max_steps) +
                                  " tool invocations");
    }

    AgentAnswer answer;
    answer.steps_used = trace.model_calls;
    answer.tools_invoked = trace.tools;
    answer.text = shielded ? shield::restore(ledger, trace.final_text.value_or(""))
                           : trace.final_text.value_or("");
    return answer;
}

} // namespace agentgate::runtime
