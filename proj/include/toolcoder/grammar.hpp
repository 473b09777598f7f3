#pragma once

// Inline tool-call markup: <API>APISearch(query)->answer</API>

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toolcoder {

inline constexpr std::size_t kMaxQueryBytes = 256;

struct ToolCallMarkers {
    std::string open_marker = "<API>";
    std::string close_marker = "</API>";
    std::string call_prefix = "APISearch(";
    std::vector<std::string> arrows = {"->", "\xE2\x86\x92"};  // "->" and U+2192
    std::string emit_arrow = "->";

    /// Throws std::invalid_argument when the marker set is ambiguous.
    void validate() const {
        if (open_marker.empty() || close_marker.empty() || call_prefix.empty())
            throw std::invalid_argument("markers: open, close and call prefix must be non-empty");
        if (open_marker.find(close_marker) != std::string::npos ||
            close_marker.find(open_marker) != std::string::npos)
            throw std::invalid_argument("markers: open and close markers overlap");
        if (arrows.empty())
            throw std::invalid_argument("markers: at least one arrow is required");
        for (const auto& a : arrows) {
            if (a.empty())
                throw std::invalid_argument("markers: empty arrow");
            if (a.find(open_marker) != std::string::npos || a.find(close_marker) != std::string::npos)
                throw std::invalid_argument("markers: arrow contains a marker");
        }
        if (std::find(arrows.begin(), arrows.end(), emit_arrow) == arrows.end())
            throw std::invalid_argument("markers: emit_arrow must be one of the accepted arrows");
    }
};

/// Half-open byte range [begin, end) into the host text.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const { return end - begin; }
    friend bool operator==(const Span&, const Span&) = default;
};

struct ToolCall {
    std::string query;
    std::string answer;
    Span span;

    friend bool operator==(const ToolCall&, const ToolCall&) = default;
};

enum class DiagnosticKind {
    Unclosed,
    Nested,
    MissingPrefix,
    MissingArrow,
    EmptyQuery,
    QueryNewline,
    QueryTooLong,
};

inline const char* to_string(DiagnosticKind kind) {
    switch (kind) {
        case DiagnosticKind::Unclosed: return "unclosed";
        case DiagnosticKind::Nested: return "nested";
        case DiagnosticKind::MissingPrefix: return "missing_prefix";
        case DiagnosticKind::MissingArrow: return "missing_arrow";
        case DiagnosticKind::EmptyQuery: return "empty_query";
        case DiagnosticKind::QueryNewline: return "query_newline";
        case DiagnosticKind::QueryTooLong: return "query_too_long";
    }
    return "unknown";
}

struct Diagnostic {
    DiagnosticKind kind;
    Span span;  // the malformed region (end = text size when unclosed)
};

struct ParseResult {
    std::vector<ToolCall> calls;
    std::vector<Diagnostic> diagnostics;

    bool has(DiagnosticKind kind) const {
        return std::any_of(diagnostics.begin(), diagnostics.end(),
                           [kind](const Diagnostic& d) { return d.kind == kind; });
    }
};

namespace detail {

inline bool is_inline_space(char c) { return c == ' ' || c == '\t'; }

/// Position of the ")" that ends the query, and the offset just past the arrow.
struct ArrowMatch {
    std::size_t paren = std::string_view::npos;
    std::size_t after_arrow = std::string_view::npos;
};

/// Finds the first ")" followed by optional inline spaces and an accepted arrow.
/// `partial` is set when the text ends while a match is still possible.
inline ArrowMatch find_query_end(std::string_view body, const ToolCallMarkers& m, bool* partial = nullptr) {
    if (partial) *partial = false;
    for (std::size_t i = body.find(')'); i != std::string_view::npos; i = body.find(')', i + 1)) {
        std::size_t j = i + 1;
        while (j < body.size() && is_inline_space(body[j])) ++j;
        if (j == body.size()) {
            if (partial) *partial = true;
            continue;
        }
        std::string_view rest = body.substr(j);
        std::size_t best = 0;
        for (const auto& a : m.arrows) {
            if (rest.starts_with(a)) best = std::max(best, a.size());
            else if (partial && a.starts_with(rest)) *partial = true;
        }
        if (best > 0) return {i, j + best};
    }
    return {};
}

}  // namespace detail

/// Parses every well-formed call. Malformed regions become diagnostics.
inline ParseResult parse_tool_calls(std::string_view text, const ToolCallMarkers& m = {}) {
    ParseResult out;
    const auto& open = m.open_marker;
    const auto& close = m.close_marker;
    std::size_t pos = 0;
    while (true) {
        const std::size_t start = text.find(open, pos);
        if (start == std::string_view::npos) break;

        // Match the close marker with depth counting so a nested region is
        // reported once and its inner call is not returned.
        std::size_t scan = start + open.size();
        int depth = 1;
        bool nested = false;
        std::size_t close_at = std::string_view::npos;
        while (true) {
            const std::size_t o = text.find(open, scan);
            const std::size_t c = text.find(close, scan);
            if (c == std::string_view::npos) break;
            if (o != std::string_view::npos && o < c) {
                nested = true;
                ++depth;
                scan = o + open.size();
                continue;
            }
            if (--depth == 0) {
                close_at = c;
                break;
            }
            scan = c + close.size();
        }
        if (close_at == std::string_view::npos) {
            out.diagnostics.push_back({nested ? DiagnosticKind::Nested : DiagnosticKind::Unclosed,
                                       {start, text.size()}});
            break;
        }
        const Span span{start, close_at + close.size()};
        pos = span.end;
        if (nested) {
            out.diagnostics.push_back({DiagnosticKind::Nested, span});
            continue;
        }

        std::string_view inner = text.substr(start + open.size(), close_at - start - open.size());
        if (!inner.starts_with(m.call_prefix)) {
            out.diagnostics.push_back({DiagnosticKind::MissingPrefix, span});
            continue;
        }
        std::string_view body = inner.substr(m.call_prefix.size());
        const auto match = detail::find_query_end(body, m);
        if (match.paren == std::string_view::npos) {
            out.diagnostics.push_back({DiagnosticKind::MissingArrow, span});
            continue;
        }
        std::string_view query = body.substr(0, match.paren);
        if (query.empty()) {
            out.diagnostics.push_back({DiagnosticKind::EmptyQuery, span});
            continue;
        }
        if (query.find('\n') != std::string_view::npos) {
            out.diagnostics.push_back({DiagnosticKind::QueryNewline, span});
            continue;
        }
        if (query.size() > kMaxQueryBytes) {
            out.diagnostics.push_back({DiagnosticKind::QueryTooLong, span});
            continue;
        }
        out.calls.push_back({std::string(query), std::string(body.substr(match.after_arrow)), span});
    }
    return out;
}

/// Removes every well-formed call region; all other bytes are kept in order.
/// Repeats until no call remains, so the result is a fixed point.
inline std::string strip_tool_calls(std::string_view text, const ToolCallMarkers& m = {}) {
    std::string current(text);
    while (true) {
        const auto parsed = parse_tool_calls(current, m);
        if (parsed.calls.empty()) return current;
        std::string next;
        next.reserve(current.size());
        std::size_t pos = 0;
        for (const auto& call : parsed.calls) {
            next.append(current, pos, call.span.begin - pos);
            pos = call.span.end;
        }
        next.append(current, pos, std::string::npos);
        current = std::move(next);
    }
}

/// Throws std::invalid_argument for a call that could not be parsed back.
inline std::string serialize_tool_call(const ToolCall& call, const ToolCallMarkers& m = {}) {
    if (call.query.empty())
        throw std::invalid_argument("serialize_tool_call: empty query");
    if (call.query.size() > kMaxQueryBytes)
        throw std::invalid_argument("serialize_tool_call: query exceeds 256 bytes");
    if (call.query.find('\n') != std::string::npos)
        throw std::invalid_argument("serialize_tool_call: query contains a newline");
    for (const std::string* field : {&call.query, &call.answer}) {
        if (field->find(m.open_marker) != std::string::npos || field->find(m.close_marker) != std::string::npos)
            throw std::invalid_argument("serialize_tool_call: field contains a marker");
    }
    // A query holding ")->" would end early on re-parse.
    if (detail::find_query_end(call.query, m).paren != std::string_view::npos)
        throw std::invalid_argument("serialize_tool_call: query contains a closing arrow");
    std::string out;
    out.reserve(m.open_marker.size() + m.call_prefix.size() + call.query.size() + 1 + m.emit_arrow.size() +
                call.answer.size() + m.close_marker.size());
    out += m.open_marker;
    out += m.call_prefix;
    out += call.query;
    out += ')';
    out += m.emit_arrow;
    out += call.answer;
    out += m.close_marker;
    return out;
}

inline bool contains_marker(std::string_view text, const ToolCallMarkers& m = {}) {
    return text.find(m.open_marker) != std::string_view::npos || text.find(m.close_marker) != std::string_view::npos;
}

}  // namespace toolcoder
