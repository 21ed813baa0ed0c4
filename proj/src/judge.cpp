#include "meval/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace meval {

using nlohmann::json;

// ---------------------------------------------------------------------------
// ScoreDistribution

void ScoreDistribution::renormalize() {
    double total = 0.0;
    for (double v : p) {
        if (v < 0.0) throw BackendError("score distribution has negative mass");
        total += v;
    }
    if (total <= 1e-12) {
        throw BackendError("score distribution has no mass on tokens 1..5");
    }
    for (double& v : p) v /= total;
}

double ScoreDistribution::weighted_score() const {
    // Two adjacent tokens reduce algebraically to base + upper mass, which
    // keeps the mock's continuous round trip exact.
    int support = 0, lo = -1, hi = -1;
    for (int s = 0; s < 5; ++s) {
        if (p[s] > 0.0) {
            ++support;
            if (lo < 0) lo = s;
            hi = s;
        }
    }
    if (support == 1) return lo + 1.0;
    if (support == 2 && hi == lo + 1) return (lo + 1.0) + p[hi];
    double sum = 0.0;
    for (int s = 0; s < 5; ++s) sum += (s + 1.0) * p[s];
    return sum;
}

double ScoreDistribution::variance() const {
    double mean = 0.0;
    for (int s = 0; s < 5; ++s) mean += (s + 1.0) * p[s];
    double var = 0.0;
    for (int s = 0; s < 5; ++s) {
        var += p[s] * ((s + 1.0) - mean) * ((s + 1.0) - mean);
    }
    return var;
}

// ---------------------------------------------------------------------------
// Taxonomy and prompt text

const std::array<std::string, 19>& objective_taxonomy() {
    static const std::array<std::string, 19> labels = {
        "Exchange/share opinions or views on a topic or issue",
        "Make a decision",
        "Give or receive orders",
        "Find a solution to a problem that has arisen",
        "Generate ideas on products, projects or initiatives",
        "Generate buy-in or consensus on an idea",
        "Resolve conflicts and disagreements within a group",
        "Build trust and relationships with one or more individuals",
        "Maintain relationships with one or more other people and stay in touch",
        "Negotiate or bargain on a deal or contract",
        "Routine exchange of information",
        "Non-routine exchange of information",
        "Communicate positive or negative feelings or emotions on a topic or issue",
        "Show personal concern about or interest in a particular issue or situation",
        "Assert and/or reinforce your authority, status, position to your team or others",
        "Give or receive feedback",
        "Assemble a team and/or motivate teamwork on a project",
        "Clarify a concept, issue or idea",
        "Exchange confidential, private or sensitive information",
    };
    return labels;
}

ObjectivesSpec ObjectivesSpec::from_taxonomy(ObjectiveSet s) {
    s.validate();
    ObjectivesSpec spec;
    spec.kind = Kind::taxonomy;
    spec.set = std::move(s);
    return spec;
}

ObjectivesSpec ObjectivesSpec::from_names(std::vector<std::string> n) {
    ObjectivesSpec spec;
    spec.kind = Kind::names;
    spec.names = std::move(n);
    return spec;
}

std::string ObjectivesSpec::render() const {
    switch (kind) {
        case Kind::none:
            return "not provided (no objectives provided for this evaluation)";
        case Kind::taxonomy: {
            std::ostringstream ss;
            bool first = true;
            for (int label : set.labels) {
                if (!first) ss << "; ";
                ss << label << ". " << objective_taxonomy()[label - 1];
                first = false;
            }
            return ss.str();
        }
        case Kind::names: {
            std::ostringstream ss;
            for (size_t i = 0; i < names.size(); ++i) {
                if (i) ss << "; ";
                ss << names[i];
            }
            return ss.str();
        }
    }
    return {};
}

namespace {

const char* kRubricTemplate =
    "Effectiveness (1-5): the effectiveness of the meeting segmentation in "
    "terms of how effectively it contributed to the overall meeting objectives "
    "while efficiently utilizing time.\n"
    "Formally, Effectiveness = (Objective Achievement)/(Time Cost)\n"
    "The overall meeting objectives are {{OVERALL_MEETING_OBJECTIVES}}\n"
    "\n"
    "Score 1: Ineffective Segment\n"
    "- Segment had little or no relevance to the meeting objectives\n"
    "- Time was poorly utilized with excessive tangents, repetition, or "
    "discussions that could have been handled elsewhere\n"
    "- Participants gained very little value relative to the time invested\n"
    "\n"
    "Score 2: Marginally Effective Segment\n"
    "- Segment had some connection to the meeting objectives but with limited "
    "concrete progress\n"
    "- Time usage showed clear inefficiencies (unfocused discussion, unclear "
    "direction, excessive details)\n"
    "- Value delivered was noticeably low compared to time spent\n"
    "\n"
    "Score 3: Moderately Effective Segment\n"
    "- Segment had a clear connection to the meeting objectives with some "
    "measurable progress\n"
    "- Time was reasonably managed with typical pacing and standard level of "
    "focus\n"
    "- The value gained appropriately matched the time invested\n"
    "\n"
    "Score 4: Highly Effective Segment\n"
    "- Segment made significant progress toward the meeting objectives with "
    "clear outcomes\n"
    "- Time was well utilized with focused discussion and few unnecessary "
    "diversions\n"
    "- The segment delivered good value relative to the time invested\n"
    "\n"
    "Score 5: Exceptionally Effective Segment\n"
    "- Segment was critical to achieving the meeting objectives with decisive "
    "progress\n"
    "- Time usage was highly efficient, with calibrated discussion depth and "
    "focus\n"
    "- The segment delivered outstanding value for the time invested\n";

std::string render_utterance(const Utterance& u) {
    char times[64];
    std::snprintf(times, sizeof(times), "(%.2fs - %.2fs)", u.start_time,
                  u.end_time);
    std::ostringstream ss;
    ss << "[" << u.id << "] " << times << " " << u.speaker << ": " << u.text;
    return ss.str();
}

std::string render_transcript(const Transcript& t) {
    std::ostringstream ss;
    for (const Utterance& u : t.utterances) ss << render_utterance(u) << "\n";
    return ss.str();
}

std::string replace_all(std::string text, const std::string& from,
                        const std::string& to) {
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

}  // namespace

std::string PromptBundle::key() const {
    std::ostringstream ss;
    ss << "score|" << meeting_id << "|" << target_index << "|"
       << std::llround(target_start * 1e6) << "|"
       << std::llround(target_end * 1e6);
    return ss.str();
}

std::vector<ChatMessage> PromptBundle::messages() const {
    std::ostringstream user;
    user << rubric << "\n" << rendered_window << "\n" << schema_note;
    return {{"system", instruction}, {"user", user.str()}};
}

PromptBundle build_effectiveness_prompt(const Transcript& transcript,
                                        const Segmentation& seg,
                                        int target_index, int window,
                                        const ObjectivesSpec& objectives) {
    if (target_index < 0 || target_index >= seg.size()) {
        throw Error("build_effectiveness_prompt: invalid target index");
    }
    if (window < 0) throw Error("build_effectiveness_prompt: negative window");

    PromptBundle b;
    b.meeting_id = transcript.meeting_id;
    b.target_index = target_index;
    b.target_start = seg.segments[target_index].start_time;
    b.target_end = seg.segments[target_index].end_time;
    b.objectives_text = objectives.render();
    b.rubric = replace_all(kRubricTemplate, "{{OVERALL_MEETING_OBJECTIVES}}",
                           b.objectives_text);
    b.instruction =
        "You will be given one topical segment of a meeting transcript, with "
        "surrounding context segments where available. Each utterance is shown "
        "with its id, start/end timestamps in seconds, and speaker. Evaluate "
        "the effectiveness of the TARGET segment according to the rubric.";
    b.schema_note = "Respond with a JSON object: {\"score\": <integer 1-5>}";

    const int first = std::max(0, target_index - window);
    const int last = std::min(seg.size() - 1, target_index + window);
    std::ostringstream ss;
    for (int i = first; i <= last; ++i) {
        const Segment& s = seg.segments[i];
        ss << "=== " << (i == target_index ? "TARGET SEGMENT" : "CONTEXT SEGMENT")
           << " " << i;
        if (!s.topic.empty()) ss << " | " << s.topic;
        ss << " ===\n";
        for (int u = s.start_id; u <= s.end_id; ++u) {
            ss << render_utterance(transcript.utterances[u]) << "\n";
        }
    }
    b.rendered_window = ss.str();
    return b;
}

// ---------------------------------------------------------------------------
// Score extraction

namespace {

// Up to 2 retries with the identical request, then a hard error carrying the
// raw text of the last attempt.
template <typename Parse>
auto complete_with_retries(JudgeBackend& backend, const JudgeRequest& request,
                           Parse parse) {
    std::string last_error;
    for (int attempt = 0; attempt < 3; ++attempt) {
        JudgeReply reply = backend.complete(request);
        try {
            return parse(reply);
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw ParseError(last_error);
}

}  // namespace

int parse_score_text(const std::string& text) {
    // Structured form first.
    try {
        json j = json::parse(text);
        if (j.is_object() && j.contains("score") &&
            j["score"].is_number_integer()) {
            int v = j["score"].get<int>();
            if (v >= 1 && v <= 5) return v;
        }
    } catch (const json::exception&) {
        // fall through to the textual scan
    }
    // "Score: N" or a bare digit.
    std::string lower = text;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    size_t pos = lower.find("score");
    size_t start = pos == std::string::npos ? 0 : pos;
    for (size_t i = start; i < text.size(); ++i) {
        if (text[i] >= '1' && text[i] <= '5') {
            const bool prev_digit = i > 0 && std::isdigit(static_cast<unsigned char>(text[i - 1]));
            const bool next_digit = i + 1 < text.size() &&
                                    std::isdigit(static_cast<unsigned char>(text[i + 1]));
            if (!prev_digit && !next_digit) return text[i] - '0';
        }
    }
    throw ParseError("unparseable score response: " + text);
}

ScoreResult score_segment(JudgeBackend& backend, const PromptBundle& prompt,
                          const SamplingPolicy& policy) {
    ScoreResult result;
    if (policy.mode == SamplingPolicy::Mode::distribution_weighted) {
        if (!backend.supports_score_distribution()) {
            throw BackendError("backend '" + backend.identity() +
                               "' does not support score distributions");
        }
        JudgeRequest req;
        req.kind = RequestKind::score;
        req.key = prompt.key();
        req.messages = prompt.messages();
        req.want_distribution = true;
        req.seed = policy.seed;
        JudgeReply reply = backend.complete(req);
        if (!reply.distribution) {
            throw BackendError("backend '" + backend.identity() +
                               "' reported distribution support but returned none");
        }
        ScoreDistribution dist = *reply.distribution;
        dist.renormalize();
        result.score = dist.weighted_score();
        result.distribution_variance = dist.variance();
        result.low_variance = result.distribution_variance < 1e-9;
        result.distribution = dist;
    } else {
        if (!backend.supports_sampling()) {
            throw BackendError("backend '" + backend.identity() +
                               "' does not support sampling");
        }
        if (policy.sample_count < 1) {
            throw Error("sample_mean requires sample_count >= 1");
        }
        double sum = 0.0;
        for (int i = 0; i < policy.sample_count; ++i) {
            JudgeRequest req;
            req.kind = RequestKind::score;
            req.key = prompt.key();
            req.messages = prompt.messages();
            req.sample_index = i;
            req.seed = policy.seed;
            const int v = complete_with_retries(
                backend, req,
                [](const JudgeReply& r) { return parse_score_text(r.text); });
            result.samples.push_back(v);
            sum += v;
        }
        result.score = sum / policy.sample_count;
    }
    return result;
}

// ---------------------------------------------------------------------------
// Objective classification

namespace {

std::string three_round_instruction(int cap) {
    std::ostringstream ss;
    ss << "You will classify the objectives of a meeting against a fixed "
          "taxonomy of 19 objectives:\n";
    const auto& tax = objective_taxonomy();
    for (size_t i = 0; i < tax.size(); ++i) {
        ss << (i + 1) << ". " << tax[i] << "\n";
    }
    ss << "\nThree-Round Selection Process:\n"
       << "Round 1 - Identify potentially relevant objectives with their "
          "original ID numbers (1-19)\n"
       << "Round 2 - Detailed Analysis: Examine evidence for each candidate "
          "objective, eliminate those with minimal support.\n"
       << "Round 3 - Final Selection: From remaining objectives, select up to "
       << cap << " PRIMARY objectives with strongest evidence.\n"
       << "\nRespond with a JSON object: {\"round1\": [ids], \"round2\": "
          "[ids], \"round3\": [ids]}";
    return ss.str();
}

}  // namespace

ObjectiveClassification classify_objectives(JudgeBackend& backend,
                                            const Transcript& transcript,
                                            int cap) {
    if (cap < 1) throw Error("classify_objectives: cap must be >= 1");
    JudgeRequest req;
    req.kind = RequestKind::objectives;
    req.key = "objectives|" + transcript.meeting_id + "|cap=" + std::to_string(cap);
    req.messages = {{"system", three_round_instruction(cap)},
                    {"user", "Meeting transcripts:\n" + render_transcript(transcript)}};

    return complete_with_retries(backend, req, [&](const JudgeReply& reply) {
        json j;
        try {
            j = json::parse(reply.text);
        } catch (const json::exception&) {
            throw ParseError("unparseable objective classification response: " +
                             reply.text);
        }
        if (!j.is_object() || !j.contains("round3") || !j["round3"].is_array()) {
            throw ParseError("objective classification response missing final "
                             "round: " + reply.text);
        }
        ObjectiveClassification out;
        out.raw_response = reply.text;
        out.rounds = j;
        out.objectives.cap = cap;
        for (const json& v : j["round3"]) {
            if (!v.is_number_integer()) {
                throw ParseError("non-integer objective label in response: " +
                                 reply.text);
            }
            const int label = v.get<int>();
            if (label < 1 || label > 19) {
                throw ParseError("objective label " + std::to_string(label) +
                                 " outside taxonomy {1..19}; raw response: " +
                                 reply.text);
            }
            out.objectives.labels.insert(label);
        }
        if (static_cast<int>(out.objectives.labels.size()) > cap) {
            throw ParseError("final selection has " +
                             std::to_string(out.objectives.labels.size()) +
                             " labels, cap is " + std::to_string(cap) +
                             "; raw response: " + reply.text);
        }
        return out;
    });
}

// ---------------------------------------------------------------------------
// Topic segmentation

namespace {

const char* kSegmentationInstruction =
    "Please perform **fine-grained topic segmentation** on the meeting "
    "transcript.\n"
    "\n"
    "Instructions:\n"
    "1. Divide the transcript into distinct segments based on topic changes. "
    "Ensure each segment represents a coherent topic discussion with clear "
    "boundaries for optimal topic segmentation.\n"
    "2. Make the segmentation as fine-grained as possible, identifying even "
    "subtle topic shifts, while maintaining topic coherence within each "
    "segment.\n"
    "3. For each segment, provide:\n"
    "    - `start_id`: The ID of the first utterance of the segment.\n"
    "    - `end_id`: The ID of the last utterance of the segment.\n"
    "    - `topic`: A concise phrase describing the main topic.\n"
    "    - `description`: A one-sentence summary of the segment content.\n"
    "4. Critical Check for Completeness and Continuity:\n"
    "    - **No Gaps**: The `start_id` ID of any segment (except the first) "
    "must immediately follow the `end_id` ID of the preceding segment. For "
    "example, if segment N ends at ID 15, segment N+1 must start at ID 16.\n"
    "    - **Full Coverage**: All utterances from the first utterance ID "
    "provided in the transcript to the very last utterance ID MUST be "
    "included in a segment.\n"
    "    - **Final Utterance**: The `end_id` ID of the very last segment "
    "**must** be the ID of the last utterance in the entire `Meeting "
    "transcripts`. The last utterance ID in the provided transcript is "
    "`{{LAST_UTTERANCE_ID_PLACEHOLDER}}`.\n"
    "\n"
    "Format your response as a structured JSON array of objects with keys "
    "start_id, end_id, topic, description. Ensure the JSON is valid.";

std::vector<Segment> parse_segments_response(const std::string& text, int n) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception&) {
        throw ParseError("unparseable segmentation response: " + text);
    }
    if (j.is_object() && j.contains("segments")) j = j["segments"];
    if (!j.is_array() || j.empty()) {
        throw ParseError("segmentation response has no segments: " + text);
    }
    std::vector<Segment> raw;
    for (const json& js : j) {
        if (!js.is_object() || !js.contains("start_id") || !js.contains("end_id")) {
            throw ParseError("malformed segment entry in response: " + text);
        }
        Segment s;
        s.start_id = js["start_id"].get<int>();
        s.end_id = js["end_id"].get<int>();
        s.topic = js.value("topic", "");
        s.description = js.value("description", "");
        if (s.start_id < 0 || s.end_id >= n || s.start_id > s.end_id) {
            throw ParseError("segment references nonexistent utterance ids [" +
                             std::to_string(s.start_id) + "," +
                             std::to_string(s.end_id) + "] in: " + text);
        }
        raw.push_back(std::move(s));
    }
    return raw;
}

}  // namespace

SegmentationResult repair_segmentation(std::vector<Segment> raw,
                                       const Transcript& transcript) {
    if (raw.empty()) throw ParseError("empty segment list");
    const int n = transcript.size();
    std::stable_sort(raw.begin(), raw.end(),
                     [](const Segment& a, const Segment& b) {
                         return a.start_id < b.start_id;
                     });
    SegmentationResult result;
    std::vector<Segment> fixed;
    if (raw.front().start_id != 0) {
        result.repairs.push_back({RepairAction::Kind::coverage_start, 0,
                                  "first segment started at " +
                                      std::to_string(raw.front().start_id) +
                                      "; extended to utterance 0"});
        raw.front().start_id = 0;
    }
    for (size_t i = 0; i < raw.size(); ++i) {
        Segment s = raw[i];
        if (!fixed.empty()) {
            const int expected = fixed.back().end_id + 1;
            if (s.start_id > expected) {
                result.repairs.push_back(
                    {RepairAction::Kind::gap, static_cast<int>(i),
                     "gap before segment " + std::to_string(i) +
                         "; extended previous segment to end at " +
                         std::to_string(s.start_id - 1)});
                fixed.back().end_id = s.start_id - 1;
            } else if (s.start_id < expected) {
                if (s.end_id < expected) {
                    result.repairs.push_back(
                        {RepairAction::Kind::drop, static_cast<int>(i),
                         "segment " + std::to_string(i) +
                             " fully covered by previous segments; dropped"});
                    continue;
                }
                result.repairs.push_back(
                    {RepairAction::Kind::overlap, static_cast<int>(i),
                     "overlap at segment " + std::to_string(i) +
                         "; start truncated to " + std::to_string(expected)});
                s.start_id = expected;
            }
        }
        fixed.push_back(s);
    }
    if (fixed.back().end_id < n - 1) {
        result.repairs.push_back(
            {RepairAction::Kind::tail, static_cast<int>(fixed.size()) - 1,
             "final segment ended at " + std::to_string(fixed.back().end_id) +
                 "; extended to the last utterance " + std::to_string(n - 1)});
        fixed.back().end_id = n - 1;
    }
    result.segmentation.segments = std::move(fixed);
    result.segmentation.source = SegSource::predicted;
    result.segmentation.derive_times(transcript);
    result.segmentation.validate(transcript);
    return result;
}

SegmentationResult generate_segmentation(JudgeBackend& backend,
                                         const Transcript& transcript) {
    if (transcript.utterances.empty()) {
        throw Error("generate_segmentation: empty transcript");
    }
    const int n = transcript.size();
    JudgeRequest req;
    req.kind = RequestKind::segmentation;
    req.key = "segment|" + transcript.meeting_id;
    req.messages = {
        {"system", replace_all(kSegmentationInstruction,
                               "{{LAST_UTTERANCE_ID_PLACEHOLDER}}",
                               std::to_string(n - 1))},
        {"user", "Meeting transcripts:\n" + render_transcript(transcript)}};
    std::vector<Segment> raw = complete_with_retries(
        backend, req, [&](const JudgeReply& reply) {
            return parse_segments_response(reply.text, n);
        });
    return repair_segmentation(std::move(raw), transcript);
}

}  // namespace meval
