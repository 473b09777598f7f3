#pragma once

// TokenGenerator implementations: a scripted mock and a client for the remote
// step protocol (POST /v1/step {context, temperature, seed, max_new} -> {text, done}).

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "http.hpp"
#include "orchestrator.hpp"
#include "text.hpp"

namespace toolcoder {

/// Replays fixed emission chunks. Script JSON forms:
///   ["chunk", ...]                                  same chunks for every session
///   {"by_seed": {"0": [...], ...}, "default": [...],
///    "sessions": [{"match": "<prompt substring>", "seed": 3, "chunks": [...]}]}
/// Lookup order: first matching "sessions" entry (match and/or seed must both
/// hold when given), then "by_seed", then "default". Unmatched sessions end
/// immediately with no text. The last chunk carries the end flag.
class ScriptedGenerator final : public TokenGenerator {
  public:
    struct Entry {
        std::optional<std::string> match;
        std::optional<std::uint64_t> seed;
        std::vector<std::string> chunks;
    };

    ScriptedGenerator() = default;
    explicit ScriptedGenerator(std::vector<std::string> chunks) : default_(std::move(chunks)) {}

    static ScriptedGenerator from_json(const nlohmann::json& j) {
        ScriptedGenerator g;
        if (j.is_array()) {
            g.default_ = j.get<std::vector<std::string>>();
            return g;
        }
        if (!j.is_object()) throw std::invalid_argument("generator script: expected array or object");
        if (j.contains("default")) g.default_ = j["default"].get<std::vector<std::string>>();
        if (j.contains("by_seed"))
            for (const auto& [seed, chunks] : j["by_seed"].items())
                g.by_seed_[std::stoull(seed)] = chunks.get<std::vector<std::string>>();
        if (j.contains("sessions")) {
            for (const auto& s : j["sessions"]) {
                Entry e;
                if (s.contains("match")) e.match = s["match"].get<std::string>();
                if (s.contains("seed")) e.seed = s["seed"].get<std::uint64_t>();
                e.chunks = s.at("chunks").get<std::vector<std::string>>();
                g.sessions_.push_back(std::move(e));
            }
        }
        return g;
    }

    static ScriptedGenerator load(const std::string& path) { return from_json(nlohmann::json::parse(read_file(path))); }

    void add_session(Entry e) { sessions_.push_back(std::move(e)); }

    std::unique_ptr<GenerationSession> start(const SamplingParams& params) const override {
        return std::make_unique<Session>(this, params.seed);
    }

  private:
    class Session final : public GenerationSession {
      public:
        Session(const ScriptedGenerator* owner, std::uint64_t seed) : owner_(owner), seed_(seed) {}

        StepResult step(std::string_view context) override {
            if (!chunks_) chunks_ = &owner_->select(context, seed_);
            if (next_ >= chunks_->size()) return {"", true};
            const std::size_t i = next_++;
            return {(*chunks_)[i], next_ == chunks_->size()};
        }

      private:
        const ScriptedGenerator* owner_;
        std::uint64_t seed_;
        const std::vector<std::string>* chunks_ = nullptr;
        std::size_t next_ = 0;
    };

    const std::vector<std::string>& select(std::string_view prompt, std::uint64_t seed) const {
        for (const auto& e : sessions_) {
            if (e.match && prompt.find(*e.match) == std::string_view::npos) continue;
            if (e.seed && *e.seed != seed) continue;
            return e.chunks;
        }
        if (auto it = by_seed_.find(seed); it != by_seed_.end()) return it->second;
        return default_;
    }

    std::vector<Entry> sessions_;
    std::map<std::uint64_t, std::vector<std::string>> by_seed_;
    std::vector<std::string> default_;
};

/// Client for a model served behind POST <base_url>/v1/step.
class HttpGenerator final : public TokenGenerator {
  public:
    HttpGenerator(std::shared_ptr<HttpTransport> transport, std::string base_url, std::size_t max_new = 16,
                  std::chrono::milliseconds timeout = std::chrono::milliseconds(30000))
        : transport_(std::move(transport)), base_url_(std::move(base_url)), max_new_(max_new), timeout_(timeout) {
        if (!transport_) throw std::invalid_argument("HttpGenerator: null transport");
        while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
    }

    std::unique_ptr<GenerationSession> start(const SamplingParams& params) const override {
        return std::make_unique<Session>(this, params);
    }

  private:
    class Session final : public GenerationSession {
      public:
        Session(const HttpGenerator* owner, SamplingParams params) : owner_(owner), params_(std::move(params)) {}

        StepResult step(std::string_view context) override {
            const nlohmann::json body = {{"context", std::string(context)},
                                         {"temperature", params_.temperature},
                                         {"seed", params_.seed},
                                         {"max_new", owner_->max_new_}};
            const auto res = owner_->transport_->post(owner_->base_url_ + "/v1/step", body.dump(), "application/json",
                                                      owner_->timeout_);
            if (!res.ok())
                throw GeneratorError("step request failed: " +
                                     (res.status == 0 ? res.error : "HTTP " + std::to_string(res.status) + " " + res.body));
            try {
                const auto j = nlohmann::json::parse(res.body);
                return {j.at("text").get<std::string>(), j.at("done").get<bool>()};
            } catch (const nlohmann::json::exception& e) {
                throw GeneratorError(std::string("malformed step response: ") + e.what());
            }
        }

      private:
        const HttpGenerator* owner_;
        SamplingParams params_;
    };

    std::shared_ptr<HttpTransport> transport_;
    std::string base_url_;
    std::size_t max_new_;
    std::chrono::milliseconds timeout_;
};

}  // namespace toolcoder
