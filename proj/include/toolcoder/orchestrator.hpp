#pragma once

// Tool-augmented decoding. The generator's text stream is watched for the
// open marker; once the query and arrow have been produced, decoding is
// suspended, the search tool is called, and "answer</API>" is appended to
// the context before decoding resumes.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "grammar.hpp"
#include "search_tools.hpp"

namespace toolcoder {

inline std::vector<std::string> default_stop_sequences() {
    // blank line followed by a top-level statement
    return {"\n\ndef ", "\n\nclass ", "\n\nif __name__", "\n\nprint(", "\n\n#", "\n\n\n"};
}

struct SamplingParams {
    double temperature = 0.8;
    std::uint64_t seed = 0;
    std::size_t max_len = 512;  // generated characters, injected text included
    std::vector<std::string> stop_sequences = default_stop_sequences();

    void validate() const {
        if (!(temperature >= 0.0)) throw std::invalid_argument("sampling: temperature must be >= 0");
        if (max_len == 0) throw std::invalid_argument("sampling: max_len must be positive");
        for (const auto& s : stop_sequences)
            if (s.empty()) throw std::invalid_argument("sampling: empty stop sequence");
    }
};

struct StepResult {
    std::string text;
    bool done = false;
};

class GeneratorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// One decoding session. step() receives the full context (prompt plus
/// everything kept so far, injections included) and returns the increment.
class GenerationSession {
  public:
    virtual ~GenerationSession() = default;
    virtual StepResult step(std::string_view context) = 0;
};

/// Deterministic given (context, params, seed). Sessions from one generator
/// may run concurrently.
class TokenGenerator {
  public:
    virtual ~TokenGenerator() = default;
    virtual std::unique_ptr<GenerationSession> start(const SamplingParams& params) const = 0;
};

// ---------------------------------------------------------------------------
// Trace

struct TextEmitted {
    std::string chunk;
    friend bool operator==(const TextEmitted&, const TextEmitted&) = default;
};

struct ToolInvoked {
    std::string query;
    std::string answer;
    double latency_ms = 0.0;
    std::string error;  // non-empty when the empty-answer fallback was used

    // latency is measured, so it is not part of equality
    friend bool operator==(const ToolInvoked& a, const ToolInvoked& b) {
        return a.query == b.query && a.answer == b.answer && a.error == b.error;
    }
};

enum class StopReason { EndOfGeneration, MaxLength, StopSequence, ToolFailure, GeneratorError };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::EndOfGeneration: return "end_of_generation";
        case StopReason::MaxLength: return "max_length";
        case StopReason::StopSequence: return "stop_sequence";
        case StopReason::ToolFailure: return "tool_failure";
        case StopReason::GeneratorError: return "generator_error";
    }
    return "unknown";
}

struct Stopped {
    StopReason reason;
    std::string detail;
    friend bool operator==(const Stopped&, const Stopped&) = default;
};

using TraceEvent = std::variant<TextEmitted, ToolInvoked, Stopped>;

struct GenerationTrace {
    std::vector<TraceEvent> events;

    std::size_t tool_invocations() const {
        return static_cast<std::size_t>(std::count_if(events.begin(), events.end(), [](const TraceEvent& e) {
            return std::holds_alternative<ToolInvoked>(e);
        }));
    }
    const Stopped* stopped() const {
        for (const auto& e : events)
            if (const auto* s = std::get_if<Stopped>(&e)) return s;
        return nullptr;
    }
};

struct DecodeOutcome {
    std::string raw_text;    // generated text with markup, prompt excluded
    std::string clean_code;  // strip_tool_calls(raw_text)
    GenerationTrace trace;
    bool failed = false;
    std::string error;
};

enum class ToolFailurePolicy { InjectEmpty, Abort };

struct OrchestratorOptions {
    ToolFailurePolicy on_tool_failure = ToolFailurePolicy::InjectEmpty;
    std::chrono::milliseconds tool_timeout{600};
};

namespace detail {

class Decoder {
  public:
    Decoder(ApiSearchTool* tool, const SamplingParams& params, const ToolCallMarkers& markers, const OrchestratorOptions& opts)
        : tool_(tool), params_(params), m_(markers), opts_(opts) {}

    std::string& output() { return output_; }
    GenerationTrace& trace() { return trace_; }
    bool halted() const { return halted_; }
    bool failed() const { return failed_; }
    const std::string& error() const { return error_; }

    void append(std::string_view chunk) {
        trace_.events.push_back(TextEmitted{std::string(chunk)});
        output_ += chunk;
        process();
    }

    /// Resolves a capture left open when the stream ends, then records the stop.
    void finish(StopReason reason, std::string detail = {}) {
        while (capturing_ && !halted_) {
            abort_capture();
            process();
        }
        if (!halted_) stop(reason, std::move(detail));
    }

  private:
    void stop(StopReason reason, std::string detail) {
        trace_.events.push_back(Stopped{reason, std::move(detail)});
        halted_ = true;
    }

    /// Capture failed: the open marker is dropped and the remainder is ordinary text.
    void abort_capture() {
        output_.erase(capture_at_, m_.open_marker.size());
        cursor_ = capture_at_;
        capturing_ = false;
    }

    void process() {
        while (!halted_) {
            if (!capturing_) {
                if (!scan_normal()) return;
            } else if (!scan_capture()) {
                return;
            }
        }
    }

    /// Returns false when more text is needed.
    bool scan_normal() {
        const std::size_t open = output_.find(m_.open_marker, cursor_);
        const std::size_t close = output_.find(m_.close_marker, cursor_);
        std::size_t stop_at = std::string::npos;
        for (const auto& s : params_.stop_sequences) stop_at = std::min(stop_at, output_.find(s, cursor_));

        const std::size_t first = std::min({open, close, stop_at});
        if (first == std::string::npos) return false;
        if (first == open) {
            capturing_ = true;
            capture_at_ = open;
        } else if (first == close) {
            output_.erase(close, m_.close_marker.size());  // stray close marker
            cursor_ = close;
        } else {
            output_.resize(stop_at);
            stop(StopReason::StopSequence, {});
        }
        return true;
    }

    bool scan_capture() {
        const std::size_t after_open = capture_at_ + m_.open_marker.size();
        std::string_view avail = std::string_view(output_).substr(after_open);
        const std::string_view prefix = m_.call_prefix;
        if (avail.size() < prefix.size()) {
            if (!prefix.starts_with(avail)) {
                abort_capture();
                return true;
            }
            return false;
        }
        if (!avail.starts_with(prefix)) {
            abort_capture();
            return true;
        }
        std::string_view body = avail.substr(prefix.size());
        bool partial = false;
        const auto match = find_query_end(body, m_, &partial);
        if (match.paren == std::string_view::npos) {
            const bool hopeless = body.find('\n') != std::string_view::npos || contains_marker(body, m_) ||
                                  (body.size() > kMaxQueryBytes && !partial);
            if (hopeless) {
                abort_capture();
                return true;
            }
            return false;
        }
        const std::string query(body.substr(0, match.paren));
        if (query.empty() || query.size() > kMaxQueryBytes || query.find('\n') != std::string::npos ||
            contains_marker(query, m_)) {
            abort_capture();
            return true;
        }
        // Anything generated past the arrow is discarded: decoding is suspended there.
        output_.resize(after_open + prefix.size() + match.after_arrow);
        capturing_ = false;
        return invoke(query);
    }

    bool invoke(const std::string& query) {
        std::string answer;
        std::string failure;
        double latency_ms = 0.0;
        if (tool_) {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                answer = tool_->lookup(query).answer;
            } catch (const std::exception& e) {
                failure = e.what();
            }
            latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            if (failure.empty() && latency_ms > static_cast<double>(opts_.tool_timeout.count()))
                failure = "tool exceeded " + std::to_string(opts_.tool_timeout.count()) + " ms";
            if (failure.empty() && !is_valid_answer(answer, m_)) failure = "tool returned an unusable answer";
            if (!failure.empty()) {
                if (opts_.on_tool_failure == ToolFailurePolicy::Abort) {
                    abort_capture();
                    failed_ = true;
                    error_ = failure;
                    stop(StopReason::ToolFailure, failure);
                    return true;
                }
                answer.clear();
            }
        }
        output_ += answer;
        output_ += m_.close_marker;
        cursor_ = output_.size();
        if (tool_) trace_.events.push_back(ToolInvoked{query, answer, latency_ms, failure});
        return true;
    }

    ApiSearchTool* tool_;
    const SamplingParams& params_;
    const ToolCallMarkers& m_;
    const OrchestratorOptions& opts_;

    std::string output_;
    GenerationTrace trace_;
    std::size_t cursor_ = 0;
    std::size_t capture_at_ = 0;
    bool capturing_ = false;
    bool halted_ = false;
    bool failed_ = false;
    std::string error_;
};

}  // namespace detail

/// Runs one tool-augmented generation. A null `tool` disables the tool: calls
/// still close with an empty answer but no invocation is recorded.
inline DecodeOutcome infer_with_tool(const TokenGenerator& generator, ApiSearchTool* tool, std::string_view input_nl,
                                     const SamplingParams& params, const ToolCallMarkers& markers = {},
                                     const OrchestratorOptions& options = {}) {
    if (input_nl.empty()) throw std::invalid_argument("infer_with_tool: empty input");
    params.validate();
    markers.validate();

    detail::Decoder decoder(tool, params, markers, options);
    DecodeOutcome outcome;
    try {
        auto session = generator.start(params);
        std::string context;
        while (!decoder.halted()) {
            if (decoder.output().size() >= params.max_len) {
                decoder.finish(StopReason::MaxLength);
                break;
            }
            context.assign(input_nl);
            context += decoder.output();
            StepResult step = session->step(context);
            if (step.text.empty() && !step.done) throw GeneratorError("generator returned an empty increment");
            if (!step.text.empty()) decoder.append(step.text);
            if (step.done) decoder.finish(StopReason::EndOfGeneration);
        }
    } catch (const std::exception& e) {
        outcome.failed = true;
        outcome.error = e.what();
        decoder.finish(StopReason::GeneratorError, e.what());
    }
    if (decoder.failed()) {
        outcome.failed = true;
        outcome.error = decoder.error();
    }
    outcome.raw_text = std::move(decoder.output());
    outcome.clean_code = strip_tool_calls(outcome.raw_text, markers);
    outcome.trace = std::move(decoder.trace());
    return outcome;
}

/// n samples with seeds seed, seed+1, ..., seed+n-1. Failed samples stay in the list.
inline std::vector<DecodeOutcome> generate_candidates(const TokenGenerator& generator, ApiSearchTool* tool,
                                                      std::string_view problem_prompt, std::size_t n,
                                                      const SamplingParams& params, const ToolCallMarkers& markers = {},
                                                      const OrchestratorOptions& options = {}) {
    if (n == 0) throw std::invalid_argument("generate_candidates: n must be >= 1");
    std::vector<DecodeOutcome> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        SamplingParams p = params;
        p.seed = params.seed + i;
        out.push_back(infer_with_tool(generator, tool, problem_prompt, p, markers, options));
    }
    return out;
}

}  // namespace toolcoder
