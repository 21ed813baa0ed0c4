#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meval/corpus.hpp"

namespace meval {

// ---------------------------------------------------------------------------
// Backend contract

struct ChatMessage {
    std::string role;  // "system" | "user"
    std::string content;
};

// Probability mass over the discrete scores 1..5.
struct ScoreDistribution {
    std::array<double, 5> p{};  // p[s-1] is the mass of score s

    // Renormalizes over the five score tokens; throws BackendError when the
    // total mass is ~0.
    void renormalize();
    double weighted_score() const;  // sum of s * p(s)
    double variance() const;
};

enum class RequestKind { score, objectives, segmentation };

struct JudgeRequest {
    RequestKind kind = RequestKind::score;
    std::string key;  // stable identity: deterministic backends key off this
    std::vector<ChatMessage> messages;
    bool want_distribution = false;
    int sample_index = 0;
    std::uint64_t seed = 0;
    nlohmann::json decoding;  // opaque decoding parameters, recorded in metadata
};

struct JudgeReply {
    std::string text;
    std::optional<ScoreDistribution> distribution;
};

class JudgeBackend {
public:
    virtual ~JudgeBackend() = default;
    virtual bool supports_score_distribution() const = 0;
    virtual bool supports_sampling() const = 0;
    virtual std::string identity() const = 0;
    virtual JudgeReply complete(const JudgeRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Prompt assembly

// Objectives slot of the effectiveness rubric: taxonomy labels, meeting-
// specific objective names, or the explicit no-objectives variant.
struct ObjectivesSpec {
    enum class Kind { none, taxonomy, names };
    Kind kind = Kind::none;
    ObjectiveSet set;                // when kind == taxonomy
    std::vector<std::string> names;  // when kind == names

    static ObjectivesSpec no_objectives() { return {}; }
    static ObjectivesSpec from_taxonomy(ObjectiveSet s);
    static ObjectivesSpec from_names(std::vector<std::string> n);
    std::string render() const;
};

struct PromptBundle {
    std::string instruction;
    std::string rendered_window;  // target segment plus w context segments each side
    std::string rubric;
    std::string objectives_text;
    std::string schema_note;

    std::string meeting_id;
    int target_index = -1;
    double target_start = 0.0;
    double target_end = 0.0;

    std::string key() const;
    std::vector<ChatMessage> messages() const;
};

// The 19-label meeting-objective taxonomy; index i holds label i+1.
const std::array<std::string, 19>& objective_taxonomy();

PromptBundle build_effectiveness_prompt(const Transcript& transcript,
                                        const Segmentation& seg,
                                        int target_index, int window,
                                        const ObjectivesSpec& objectives);

// ---------------------------------------------------------------------------
// Score extraction

struct SamplingPolicy {
    enum class Mode { distribution_weighted, sample_mean };
    Mode mode = Mode::distribution_weighted;
    int sample_count = 5;
    std::uint64_t seed = 0;
};

struct ScoreResult {
    double score = 0.0;  // in [1,5]
    std::optional<ScoreDistribution> distribution;
    std::vector<double> samples;
    double distribution_variance = 0.0;
    bool low_variance = false;  // point-mass (or near) distribution
};

ScoreResult score_segment(JudgeBackend& backend, const PromptBundle& prompt,
                          const SamplingPolicy& policy);

// Parses an integer effectiveness score (1..5) from a judge reply; throws
// ParseError with the raw text attached.
int parse_score_text(const std::string& text);

// ---------------------------------------------------------------------------
// Objective classification (three-round structured prompting)

struct ObjectiveClassification {
    ObjectiveSet objectives;
    nlohmann::json rounds;  // round traces retained for audit
    std::string raw_response;
};

ObjectiveClassification classify_objectives(JudgeBackend& backend,
                                            const Transcript& transcript,
                                            int cap = 3);

// ---------------------------------------------------------------------------
// Topic segmentation with deterministic repair

struct RepairAction {
    enum class Kind { coverage_start, gap, overlap, drop, tail };
    Kind kind;
    int segment_index;  // index in the (sorted) raw response
    std::string detail;
};

struct SegmentationResult {
    Segmentation segmentation;  // satisfies all invariants
    std::vector<RepairAction> repairs;
};

SegmentationResult generate_segmentation(JudgeBackend& backend,
                                         const Transcript& transcript);

// Validates and repairs a raw judge segmentation (already parsed to segments).
// Repair is total for id-valid responses: gap -> extend previous segment,
// overlap -> truncate later start, short tail -> extend final segment.
SegmentationResult repair_segmentation(std::vector<Segment> raw,
                                       const Transcript& transcript);

// ---------------------------------------------------------------------------
// Backends

struct MockConfig {
    enum class Mode { echo_gt, constant, seeded_noise };
    Mode mode = Mode::echo_gt;
    double constant = 3.0;
    double sigma = 0.0;      // seeded_noise perturbation scale
    std::uint64_t seed = 0;
    bool discrete = false;   // point-mass on round(gt) instead of two-token
};

// Deterministic mock judge. echo_gt and seeded_noise read ground truth per
// meeting (GT segmentation + mean annotation scores + objective slots).
std::shared_ptr<JudgeBackend> make_mock_backend(const MockConfig& config,
                                                const Dataset& dataset);

// Fixture-driven backend: JSON object mapping request keys to canned
// responses, for offline parser/repair tests.
std::shared_ptr<JudgeBackend> make_scripted_backend(const nlohmann::json& fixtures,
                                                    bool distributions = false);
std::shared_ptr<JudgeBackend> load_scripted_backend(const std::string& path);

struct RemoteConfig {
    std::string endpoint;          // e.g. http://host:port/v1/chat/completions
    std::string model;
    std::string token_env = "MEVAL_API_TOKEN";  // auth token read from env only
    int timeout_seconds = 120;
    nlohmann::json decoding;  // passed through opaquely
};

std::shared_ptr<JudgeBackend> make_remote_backend(const RemoteConfig& config);

}  // namespace meval
