#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "meval/judge.hpp"
#include "meval/temporal.hpp"

namespace meval {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::istringstream ss(s);
    std::string part;
    while (std::getline(ss, part, sep)) out.push_back(part);
    return out;
}

ScoreDistribution two_token_distribution(double score) {
    score = std::clamp(score, 1.0, 5.0);
    ScoreDistribution d;
    const int base = std::min(4, static_cast<int>(std::floor(score)));
    const double frac = score - base;
    d.p[base - 1] = 1.0 - frac;
    if (frac > 0.0) d.p[base] = frac;
    return d;
}

json rounds_json(const std::set<int>& labels) {
    json r3 = json::array();
    for (int l : labels) r3.push_back(l);
    return json{{"round1", r3}, {"round2", r3}, {"round3", r3}};
}

// ---------------------------------------------------------------------------
// Mock backend: deterministic given (request key, seed).

class MockBackend : public JudgeBackend {
public:
    MockBackend(const MockConfig& config, const Dataset& dataset)
        : config_(config) {
        for (const Meeting& m : dataset.meetings) {
            PerMeeting pm;
            pm.n_utterances = m.transcript.size();
            if (m.gt_segmentation) {
                pm.gt_seg = *m.gt_segmentation;
                if (m.annotations) {
                    pm.gt = ScoredSegmentation{
                        *m.gt_segmentation,
                        mean_annotation_scores(*m.annotations)};
                }
            }
            if (m.objective_gt) pm.objective_gt = *m.objective_gt;
            meetings_[m.transcript.meeting_id] = std::move(pm);
        }
    }

    bool supports_score_distribution() const override { return true; }
    bool supports_sampling() const override { return true; }

    std::string identity() const override {
        switch (config_.mode) {
            case MockConfig::Mode::echo_gt: return "mock:echo-gt";
            case MockConfig::Mode::constant:
                return "mock:constant=" + std::to_string(config_.constant);
            case MockConfig::Mode::seeded_noise:
                return "mock:noise=" + std::to_string(config_.sigma);
        }
        return "mock";
    }

    JudgeReply complete(const JudgeRequest& req) override {
        switch (req.kind) {
            case RequestKind::score: return score_reply(req);
            case RequestKind::objectives: return objectives_reply(req);
            case RequestKind::segmentation: return segmentation_reply(req);
        }
        throw BackendError("mock: unknown request kind");
    }

private:
    struct PerMeeting {
        std::optional<ScoredSegmentation> gt;  // requires annotations
        std::optional<Segmentation> gt_seg;
        ObjectiveGroundTruth objective_gt;
        int n_utterances = 0;
    };

    const PerMeeting& meeting(const std::string& id) const {
        auto it = meetings_.find(id);
        if (it == meetings_.end()) {
            throw BackendError("mock: unknown meeting '" + id + "'");
        }
        return it->second;
    }

    // Duration-weighted GT score over [a,b]; exact when the interval lies in
    // a single GT segment.
    double gt_interval_score(const PerMeeting& pm, double a, double b) const {
        if (!pm.gt) throw BackendError("mock: echo mode requires ground truth");
        double weighted = 0.0, total = 0.0;
        int hits = 0, last = -1;
        const auto& segs = pm.gt->segmentation.segments;
        for (size_t i = 0; i < segs.size(); ++i) {
            const double d = std::min(b, segs[i].end_time) -
                             std::max(a, segs[i].start_time);
            if (d > kOverlapEpsilon) {
                weighted += pm.gt->scores[i] * d;
                total += d;
                ++hits;
                last = static_cast<int>(i);
            }
        }
        if (hits == 0) throw BackendError("mock: interval outside meeting span");
        if (hits == 1) return pm.gt->scores[last];
        return weighted / total;
    }

    double target_score(const JudgeRequest& req) const {
        const auto parts = split(req.key, '|');
        if (parts.size() != 5 || parts[0] != "score") {
            throw BackendError("mock: malformed score key '" + req.key + "'");
        }
        const PerMeeting& pm = meeting(parts[1]);
        if (config_.mode == MockConfig::Mode::constant) return config_.constant;
        const double a = std::stoll(parts[3]) / 1e6;
        const double b = std::stoll(parts[4]) / 1e6;
        double v = gt_interval_score(pm, a, b);
        if (config_.mode == MockConfig::Mode::seeded_noise && config_.sigma > 0.0) {
            std::mt19937_64 rng(fnv1a(req.key, config_.seed ^ req.seed));
            std::normal_distribution<double> noise(0.0, config_.sigma);
            v = std::clamp(v + noise(rng), 1.0, 5.0);
        }
        return v;
    }

    JudgeReply score_reply(const JudgeRequest& req) const {
        const double v = target_score(req);
        JudgeReply reply;
        reply.text = "{\"score\": " + std::to_string(std::llround(v)) + "}";
        if (req.want_distribution) {
            if (config_.discrete) {
                ScoreDistribution d;
                d.p[std::clamp<long>(std::lround(v), 1, 5) - 1] = 1.0;
                reply.distribution = d;
            } else {
                reply.distribution = two_token_distribution(v);
            }
        }
        return reply;
    }

    JudgeReply objectives_reply(const JudgeRequest& req) const {
        const auto parts = split(req.key, '|');
        if (parts.size() < 2) {
            throw BackendError("mock: malformed objectives key '" + req.key + "'");
        }
        const PerMeeting& pm = meeting(parts[1]);
        std::set<int> labels;
        if (config_.mode == MockConfig::Mode::constant) {
            labels = {1};
        } else if (!pm.objective_gt.empty()) {
            for (const ObjectiveSlot& slot : pm.objective_gt) {
                if (labels.size() >= 3) break;
                labels.insert(*slot.allowed_labels.begin());
            }
        } else {
            labels = {1};
        }
        if (config_.mode == MockConfig::Mode::seeded_noise && config_.sigma > 0.0) {
            std::mt19937_64 rng(fnv1a(req.key, config_.seed ^ req.seed));
            labels.clear();
            std::uniform_int_distribution<int> count(1, 3), label(1, 19);
            const int target = count(rng);
            while (static_cast<int>(labels.size()) < target) {
                labels.insert(label(rng));
            }
        }
        return {rounds_json(labels).dump(), std::nullopt};
    }

    JudgeReply segmentation_reply(const JudgeRequest& req) const {
        const auto parts = split(req.key, '|');
        if (parts.size() < 2) {
            throw BackendError("mock: malformed segmentation key '" + req.key + "'");
        }
        const PerMeeting& pm = meeting(parts[1]);
        std::vector<std::pair<int, int>> spans;
        if (config_.mode == MockConfig::Mode::constant || !pm.gt_seg) {
            spans = {{0, pm.n_utterances - 1}};
        } else {
            std::vector<int> gaps = pm.gt_seg->boundary_gaps();
            if (config_.mode == MockConfig::Mode::seeded_noise &&
                config_.sigma > 0.0) {
                std::mt19937_64 rng(fnv1a(req.key, config_.seed ^ req.seed));
                std::uniform_real_distribution<double> u(0.0, 1.0);
                std::set<int> perturbed;
                for (int g : gaps) {
                    const double r = u(rng);
                    if (r < 0.15) continue;  // dropped boundary
                    if (r < 0.30) {
                        const int shift = 1 + static_cast<int>(u(rng) * 2.0);
                        g = std::clamp(g + (u(rng) < 0.5 ? -shift : shift), 0,
                                       pm.n_utterances - 2);
                    }
                    perturbed.insert(g);
                }
                gaps.assign(perturbed.begin(), perturbed.end());
            }
            int start = 0;
            for (int g : gaps) {
                spans.emplace_back(start, g);
                start = g + 1;
            }
            spans.emplace_back(start, pm.n_utterances - 1);
        }
        json arr = json::array();
        for (size_t i = 0; i < spans.size(); ++i) {
            arr.push_back({{"start_id", spans[i].first},
                           {"end_id", spans[i].second},
                           {"topic", "segment " + std::to_string(i)},
                           {"description", ""}});
        }
        return {arr.dump(), std::nullopt};
    }

    MockConfig config_;
    std::map<std::string, PerMeeting> meetings_;
};

// ---------------------------------------------------------------------------
// Scripted backend: canned responses keyed by request key (with an optional
// "#<sample_index>" suffix for sampling fixtures).

class ScriptedBackend : public JudgeBackend {
public:
    explicit ScriptedBackend(json fixtures) : fixtures_(std::move(fixtures)) {}

    bool supports_score_distribution() const override { return true; }
    bool supports_sampling() const override { return true; }
    std::string identity() const override { return "scripted"; }

    JudgeReply complete(const JudgeRequest& req) override {
        const std::string sampled = req.key + "#" + std::to_string(req.sample_index);
        const json* entry = nullptr;
        if (fixtures_.contains(sampled)) {
            entry = &fixtures_[sampled];
        } else if (fixtures_.contains(req.key)) {
            entry = &fixtures_[req.key];
        } else {
            throw BackendError("scripted: no fixture for key '" + req.key + "'");
        }
        JudgeReply reply;
        if (entry->is_string()) {
            reply.text = entry->get<std::string>();
        } else {
            reply.text = entry->value("text", "");
            if (entry->contains("distribution")) {
                ScoreDistribution d;
                for (const auto& [tok, mass] : (*entry)["distribution"].items()) {
                    const int s = std::stoi(tok);
                    if (s < 1 || s > 5) {
                        throw BackendError("scripted: distribution token '" + tok +
                                           "' outside 1..5");
                    }
                    d.p[s - 1] = mass.get<double>();
                }
                reply.distribution = d;
            }
        }
        return reply;
    }

private:
    json fixtures_;
};

// ---------------------------------------------------------------------------
// Remote backend: chat-completion style HTTP JSON with optional per-token
// alternatives at the score position.

class RemoteBackend : public JudgeBackend {
public:
    explicit RemoteBackend(const RemoteConfig& config) : config_(config) {
        const auto pos = config.endpoint.find('/', config.endpoint.find("://") + 3);
        if (config.endpoint.find("://") == std::string::npos) {
            throw Error("remote backend endpoint must include a scheme");
        }
        base_ = pos == std::string::npos ? config.endpoint
                                         : config.endpoint.substr(0, pos);
        path_ = pos == std::string::npos ? "/" : config.endpoint.substr(pos);
        const char* token = std::getenv(config.token_env.c_str());
        if (token) token_ = token;
    }

    bool supports_score_distribution() const override { return true; }
    bool supports_sampling() const override { return true; }

    std::string identity() const override {
        return "remote:" + (config_.model.empty() ? base_ : config_.model);
    }

    JudgeReply complete(const JudgeRequest& req) override {
        json body;
        if (!config_.model.empty()) body["model"] = config_.model;
        body["messages"] = json::array();
        for (const ChatMessage& m : req.messages) {
            body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        }
        for (const auto& [k, v] : config_.decoding.items()) body[k] = v;
        for (const auto& [k, v] : req.decoding.items()) body[k] = v;
        if (req.want_distribution) {
            body["logprobs"] = true;
            body["top_logprobs"] = 20;
        }

        httplib::Client client(base_);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        auto res = client.Post(path_, headers, body.dump(), "application/json");
        if (!res) {
            throw BackendError("remote: transport failure contacting " + base_);
        }
        if (res->status != 200) {
            throw BackendError("remote: HTTP " + std::to_string(res->status) +
                               ": " + res->body);
        }
        json j;
        try {
            j = json::parse(res->body);
        } catch (const json::exception& e) {
            throw BackendError(std::string("remote: malformed response JSON: ") +
                               e.what());
        }
        JudgeReply reply;
        try {
            reply.text = j.at("choices").at(0).at("message").at("content")
                             .get<std::string>();
        } catch (const json::exception&) {
            throw BackendError("remote: response missing choices[0].message.content");
        }
        if (req.want_distribution) {
            reply.distribution = extract_distribution(j);
        }
        return reply;
    }

private:
    static std::string trimmed(std::string s) {
        const auto is_space = [](unsigned char c) { return std::isspace(c); };
        while (!s.empty() && is_space(s.front())) s.erase(s.begin());
        while (!s.empty() && is_space(s.back())) s.pop_back();
        return s;
    }

    static bool is_score_token(const std::string& tok, int& score) {
        const std::string t = trimmed(tok);
        if (t.size() == 1 && t[0] >= '1' && t[0] <= '5') {
            score = t[0] - '0';
            return true;
        }
        return false;
    }

    // Mass over tokens "1".."5" at the first score position in the output.
    static ScoreDistribution extract_distribution(const json& j) {
        const json* content = nullptr;
        try {
            content = &j.at("choices").at(0).at("logprobs").at("content");
        } catch (const json::exception&) {
            throw BackendError("remote: response carries no per-token alternatives");
        }
        for (const json& tok : *content) {
            int score = 0;
            if (!is_score_token(tok.value("token", ""), score)) continue;
            ScoreDistribution d;
            bool any = false;
            if (tok.contains("top_logprobs")) {
                for (const json& alt : tok["top_logprobs"]) {
                    int s = 0;
                    if (is_score_token(alt.value("token", ""), s)) {
                        d.p[s - 1] += std::exp(alt.at("logprob").get<double>());
                        any = true;
                    }
                }
            }
            if (!any) {
                d.p[score - 1] = 1.0;
            }
            return d;
        }
        throw BackendError("remote: no score token found at any output position");
    }

    RemoteConfig config_;
    std::string base_;
    std::string path_;
    std::string token_;
};

}  // namespace

std::shared_ptr<JudgeBackend> make_mock_backend(const MockConfig& config,
                                                const Dataset& dataset) {
    return std::make_shared<MockBackend>(config, dataset);
}

std::shared_ptr<JudgeBackend> make_scripted_backend(const json& fixtures,
                                                    bool /*distributions*/) {
    return std::make_shared<ScriptedBackend>(fixtures);
}

std::shared_ptr<JudgeBackend> load_scripted_backend(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open fixture file: " + path);
    json j;
    in >> j;
    return std::make_shared<ScriptedBackend>(std::move(j));
}

std::shared_ptr<JudgeBackend> make_remote_backend(const RemoteConfig& config) {
    return std::make_shared<RemoteBackend>(config);
}

}  // namespace meval
