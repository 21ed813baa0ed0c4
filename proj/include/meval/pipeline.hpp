#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "meval/corpus.hpp"
#include "meval/judge.hpp"
#include "meval/metrics.hpp"
#include "meval/temporal.hpp"

namespace meval {

struct RunConfig {
    enum class Mode { gt_inputs, pred_segmentation, external_transcripts };
    enum class ObjectivesCondition { gt, predicted, none };
    enum class Pooling { global, per_meeting_mean };

    Mode mode = Mode::gt_inputs;
    ObjectivesCondition objectives = ObjectivesCondition::gt;
    int window = 1;
    SamplingPolicy policy;
    Pooling pooling = Pooling::global;
    std::uint64_t seed = 0;
    int max_inflight = 1;
    std::string out_dir;  // empty disables persistence

    nlohmann::json to_json() const;
    // Stable hash of the score-affecting configuration; keys persisted records.
    std::string config_hash() const;
};

struct SegmentRow {
    std::string meeting_id;
    int index = 0;  // GT segment index (predicted index in external mode)
    double start_s = 0.0;
    double end_s = 0.0;
    double duration_s = 0.0;
    std::optional<double> gt_mean;
    std::optional<double> aligned_pred;
    std::optional<double> raw_pred;
};

struct MeetingEval {
    std::string meeting_id;
    std::string meeting_class;
    std::optional<double> pk_value;
    std::optional<double> wd_value;
    std::optional<CorrValue> ub_spearman;
    std::optional<CorrValue> ub_kendall;
    std::vector<double> ub_round_trip;  // round-trip scores, one per GT segment
    std::optional<MatchResult> objective_match;
    int repair_count = 0;
};

struct MetaEvalReport {
    std::optional<CorrValue> spearman_corr;
    std::optional<CorrValue> kendall_corr;
    std::optional<CorrValue> ub_spearman;
    std::optional<CorrValue> ub_kendall;
    std::optional<double> pk_mean;
    std::optional<double> wd_mean;
    std::optional<ObjectiveMetrics> objectives;
    std::vector<SegmentRow> rows;
    std::vector<MeetingEval> meetings;
    nlohmann::json metadata;  // config, backend identity, variance summary

    nlohmann::json to_json() const;
    std::string segments_csv() const;
};

// Runs one evaluation regime end to end. Scores are persisted incrementally
// to <out_dir>/records.jsonl and reused on re-runs with the same config hash.
MetaEvalReport run_evaluation(const Dataset& dataset, const RunConfig& config,
                              JudgeBackend& backend);

// Identical computation restricted to meetings with the given class tag.
MetaEvalReport subset_report(const Dataset& dataset, const RunConfig& config,
                             JudgeBackend& backend,
                             const std::string& meeting_class);

struct ConsistencyReport {
    CorrelationMatrix matrix;           // pairwise over per-segment scores
    std::vector<CorrValue> human_corr;  // each run vs human means
};

ConsistencyReport consistency_report(const std::vector<MetaEvalReport>& runs,
                                     CorrKind kind = CorrKind::spearman);

// Writes report.json and segments.csv; returns the report.json path.
std::string write_report(const MetaEvalReport& report, const std::string& out_dir);

}  // namespace meval
