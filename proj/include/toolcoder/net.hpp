#pragma once

// cpp-httplib implementation of HttpTransport. Define
// CPPHTTPLIB_OPENSSL_SUPPORT (and link OpenSSL) for https URLs.
// Include after lora.hpp/Eigen: <resolv.h> defines a _res macro that breaks Eigen.

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>

#include "http.hpp"

namespace toolcoder {

class HttplibTransport final : public HttpTransport {
  public:
    explicit HttplibTransport(std::string user_agent = "toolcoder/1.0") : user_agent_(std::move(user_agent)) {}

    HttpResponse get(const std::string& url, std::chrono::milliseconds timeout) override {
        auto target = split(url);
        auto client = make_client(target.origin, timeout);
        if (!client) return {0, {}, "unsupported url: " + url};
        return convert(client->Get(target.path, headers()));
    }

    HttpResponse post(const std::string& url, const std::string& body, const std::string& content_type,
                      std::chrono::milliseconds timeout) override {
        auto target = split(url);
        auto client = make_client(target.origin, timeout);
        if (!client) return {0, {}, "unsupported url: " + url};
        return convert(client->Post(target.path, headers(), body, content_type));
    }

  private:
    struct Target {
        std::string origin;  // scheme://host[:port]
        std::string path;    // /path?query
    };

    static Target split(const std::string& url) {
        const auto scheme_end = url.find("://");
        const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
        if (path_start == std::string::npos) return {url, "/"};
        return {url.substr(0, path_start), url.substr(path_start)};
    }

    static std::unique_ptr<httplib::Client> make_client(const std::string& origin, std::chrono::milliseconds timeout) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (origin.rfind("https://", 0) == 0) return nullptr;
#endif
        auto client = std::make_unique<httplib::Client>(origin);
        if (!client->is_valid()) return nullptr;
        const auto sec = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout - sec);
        client->set_connection_timeout(sec.count(), usec.count());
        client->set_read_timeout(sec.count(), usec.count());
        client->set_write_timeout(sec.count(), usec.count());
        client->set_follow_location(true);
        return client;
    }

    httplib::Headers headers() const { return {{"User-Agent", user_agent_}}; }

    static HttpResponse convert(const httplib::Result& res) {
        if (!res) return {0, {}, httplib::to_string(res.error())};
        return {res->status, res->body, {}};
    }

    std::string user_agent_;
};

}  // namespace toolcoder
