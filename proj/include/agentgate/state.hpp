#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "agentgate/common.hpp"

namespace agentgate {

// Agent state and its transformers. A step maps a state to an output plus a
// next state; composition of steps expresses reasoning chains (pure steps),
// tool-using plans (effectful steps), and learning (memory writes) in one
// shape. Observational equality of states is transcript + memory_refs +
// step_count. step_count counts top-level run() applications: composing steps
// with bind yields one step, and running it advances the count by one.

enum class Role { user, assistant, tool };

inline std::string_view role_name(Role r) {
    switch (r) {
    case Role::user: return "user";
    case Role::assistant: return "assistant";
    case Role::tool: return "tool";
    }
    return "user";
}

struct TranscriptEntry {
    Role role = Role::user;
    std::string text;

    friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

struct AgentState {
    std::vector<TranscriptEntry> transcript;
    std::vector<std::string> memory_refs;
    std::uint64_t step_count = 0;

    friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// True when `next` extends `prev`'s transcript (append-only check).
inline bool transcript_extends(const AgentState& next, const AgentState& prev) {
    if (next.transcript.size() < prev.transcript.size()) return false;
    for (std::size_t i = 0; i < prev.transcript.size(); ++i) {
        if (!(next.transcript[i] == prev.transcript[i])) return false;
    }
    return true;
}

enum class OutputKind { answer, action, memory_write };

struct Output {
    OutputKind kind = OutputKind::answer;
    std::string payload;

    friend bool operator==(const Output&, const Output&) = default;
};

struct StepError {
    std::string step_name;
    std::string cause;

    friend bool operator==(const StepError&, const StepError&) = default;
};

/// Step failure surfaced as an exception at module boundaries (session,
/// runtime); inside compositions failure stays a value and short-circuits.
class StepFailed : public Error {
public:
    StepFailed(std::string step_name, std::string cause)
        : Error("step '" + step_name + "' failed: " + cause),
          step(std::move(step_name)),
          cause(std::move(cause)) {}

    std::string step;
    std::string cause;
};

struct StepResult {
    Output output;
    AgentState state;
    std::optional<StepError> error;

    bool ok() const { return !error.has_value(); }

    static StepResult success(Output out, AgentState next) {
        return StepResult{std::move(out), std::move(next), std::nullopt};
    }

    /// Failed results carry the untouched input state (whole-step rollback).
    static StepResult failure(StepError err, AgentState input) {
        return StepResult{Output{}, std::move(input), std::move(err)};
    }
};

class StateStep {
public:
    using ApplyFn = std::function<StepResult(const AgentState&)>;

    StateStep() = default;

    static StateStep make(std::string name, bool effectful, ApplyFn fn) {
        auto impl = std::make_shared<Impl>();
        impl->name = std::move(name);
        impl->effectful = effectful;
        impl->fn = std::move(fn);
        return StateStep(std::move(impl));
    }

    bool valid() const { return impl_ != nullptr; }
    const std::string& name() const { return impl_->name; }
    bool effectful() const { return impl_->effectful; }

    /// Applies the raw transformer. Enforces transcript append-only and
    /// leaves step_count untouched; failures come back with the input state.
    StepResult apply(const AgentState& s) const {
        if (!impl_) return StepResult::failure({"<empty>", "step not initialized"}, s);
        StepResult r = impl_->fn(s);
        if (!r.ok()) {
            r.state = s;
            return r;
        }
        if (!transcript_extends(r.state, s)) {
            return StepResult::failure({impl_->name, "transcript is append-only"}, s);
        }
        r.state.step_count = s.step_count;
        return r;
    }

private:
    struct Impl {
        std::string name;
        bool effectful = false;
        ApplyFn fn;
    };

    explicit StateStep(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

    std::shared_ptr<const Impl> impl_;
};

/// Emits `value` as an answer and changes nothing but the step count.
inline StateStep pure(std::string value) {
    return StateStep::make("pure", false, [value = std::move(value)](const AgentState& s) {
        return StepResult::success(Output{OutputKind::answer, value}, s);
    });
}

using Continuation = std::function<StateStep(const Output&)>;

/// Sequences `step` into the step produced by `continuation` from its output.
/// The continuation's image is not statically known, so callers declare
/// whether it can produce effectful steps; the composite's flag is the OR.
inline StateStep bind(StateStep step, Continuation continuation,
                      bool continuation_effectful = false) {
    bool effectful = step.effectful() || continuation_effectful;
    std::string name = step.name() + ">>=";
    return StateStep::make(
        std::move(name), effectful,
        [step = std::move(step), continuation = std::move(continuation)](const AgentState& s) {
            StepResult first = step.apply(s);
            if (!first.ok()) return StepResult::failure(*first.error, s);
            StateStep next = continuation(first.output);
            StepResult second = next.apply(first.state);
            if (!second.ok()) return StepResult::failure(*second.error, s);
            return second;
        });
}

/// Sequencing that ignores the first output; both flags are known statically.
inline StateStep bind(StateStep step, StateStep next) {
    bool effectful = next.effectful();
    return bind(std::move(step), [next = std::move(next)](const Output&) { return next; },
                effectful);
}

/// Runs one step: output plus next state, with step_count advanced by one.
inline StepResult run(const StateStep& step, const AgentState& initial) {
    StepResult r = step.apply(initial);
    if (r.ok()) r.state.step_count = initial.step_count + 1;
    return r;
}

} // namespace agentgate
