#pragma once

// Transport seam for every outbound HTTP request (search engine, page fetches,
// remote generator, annotator service). The httplib-backed implementation is
// in net.hpp; tests substitute scripted transports.

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>

namespace toolcoder {

struct HttpResponse {
    int status = 0;  // 0 when the request never completed
    std::string body;
    std::string error;

    bool ok() const { return status >= 200 && status < 300; }
};

class HttpTransport {
  public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse get(const std::string& url, std::chrono::milliseconds timeout) = 0;
    virtual HttpResponse post(const std::string& url, const std::string& body, const std::string& content_type,
                              std::chrono::milliseconds timeout) = 0;
};

inline std::string url_encode(std::string_view s) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
            c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xF];
        }
    }
    return out;
}

inline std::string url_decode(std::string_view s) {
    auto val = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size() && val(s[i + 1]) >= 0 && val(s[i + 2]) >= 0) {
            out += static_cast<char>(val(s[i + 1]) * 16 + val(s[i + 2]));
            i += 2;
        } else if (s[i] == '+') {
            out += ' ';
        } else {
            out += s[i];
        }
    }
    return out;
}

/// Host part of an absolute or scheme-relative URL, lowercased, without port.
inline std::string url_host(std::string_view url) {
    std::size_t start = url.find("//");
    start = start == std::string_view::npos ? 0 : start + 2;
    std::size_t end = url.find_first_of("/:?#", start);
    std::string host(url.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    for (auto& c : host)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return host;
}

}  // namespace toolcoder
