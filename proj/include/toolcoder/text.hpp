#pragma once

#include <cctype>
#include <cstddef>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace toolcoder {

namespace detail {
inline bool is_ascii_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
inline bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
inline char lower(char c) { return is_upper(c) ? static_cast<char>(c - 'A' + 'a') : c; }
}  // namespace detail

/// Retrieval tokenizer: split on non-alphanumerics, then split camelCase humps,
/// then lowercase. "np.squeeze" -> {np, squeeze}; "readCSVFile" -> {read, csv, file}.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!detail::is_ascii_alnum(text[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && detail::is_ascii_alnum(text[j])) ++j;
        std::string_view word = text.substr(i, j - i);
        std::size_t piece = 0;
        for (std::size_t k = 1; k < word.size(); ++k) {
            const char prev = word[k - 1];
            const char cur = word[k];
            const bool lower_to_upper = !detail::is_upper(prev) && detail::is_upper(cur) && !std::isdigit(static_cast<unsigned char>(prev));
            const bool acronym_end = detail::is_upper(prev) && detail::is_upper(cur) && k + 1 < word.size() &&
                                     detail::is_lower(word[k + 1]);
            if (lower_to_upper || acronym_end) {
                std::string token;
                for (char c : word.substr(piece, k - piece)) token += detail::lower(c);
                out.push_back(std::move(token));
                piece = k;
            }
        }
        std::string token;
        for (char c : word.substr(piece)) token += detail::lower(c);
        out.push_back(std::move(token));
        i = j;
    }
    return out;
}

/// Cache key form: lowercase, inner whitespace collapsed, punctuation and space trimmed at both ends.
inline std::string normalize_query(std::string_view query) {
    auto trim_char = [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return std::isspace(u) || std::ispunct(u);
    };
    std::size_t b = 0;
    std::size_t e = query.size();
    while (b < e && trim_char(query[b])) ++b;
    while (e > b && trim_char(query[e - 1])) --e;
    std::string out;
    bool pending_space = false;
    for (char c : query.substr(b, e - b)) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out += ' ';
        pending_space = false;
        out += detail::lower(c);
    }
    return out;
}

/// Whitespace-delimited word count.
inline std::size_t word_count(std::string_view text) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : text) {
        const bool space = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!space && !in_word) ++n;
        in_word = !space;
    }
    return n;
}

inline bool has_whitespace(std::string_view text) {
    for (char c : text)
        if (std::isspace(static_cast<unsigned char>(c))) return true;
    return false;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Calls `fn(line, line_number)` for every non-blank line (1-based numbering).
inline void for_each_line(const std::string& path, const std::function<void(const std::string&, std::size_t)>& fn) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        bool blank = true;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c))) blank = false;
        if (!blank) fn(line, number);
    }
}

}  // namespace toolcoder
