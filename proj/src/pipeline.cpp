#include "meval/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace meval {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

const char* mode_name(RunConfig::Mode m) {
    switch (m) {
        case RunConfig::Mode::gt_inputs: return "gt_inputs";
        case RunConfig::Mode::pred_segmentation: return "pred_segmentation";
        case RunConfig::Mode::external_transcripts: return "external_transcripts";
    }
    return "?";
}

const char* objectives_name(RunConfig::ObjectivesCondition c) {
    switch (c) {
        case RunConfig::ObjectivesCondition::gt: return "gt";
        case RunConfig::ObjectivesCondition::predicted: return "predicted";
        case RunConfig::ObjectivesCondition::none: return "none";
    }
    return "?";
}

json corr_json(const std::optional<CorrValue>& c) {
    if (!c) return nullptr;
    return json{{"value", c->value}, {"degenerate", c->degenerate}};
}

// Append-only score store keyed by (meeting_id, segment span, config hash).
class ResultStore {
public:
    ResultStore(const std::string& out_dir, const std::string& config_hash)
        : config_hash_(config_hash) {
        if (out_dir.empty()) return;
        fs::create_directories(out_dir);
        path_ = (fs::path(out_dir) / "records.jsonl").string();
        std::ifstream in(path_);
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("key")) continue;
            records_[j["key"].get<std::string>()] = j;
        }
    }

    std::string make_key(const std::string& meeting_id, double start_s,
                         double end_s) const {
        std::ostringstream ss;
        ss << meeting_id << "|" << std::llround(start_s * 1e6) << "|"
           << std::llround(end_s * 1e6) << "|" << config_hash_;
        return ss.str();
    }

    std::optional<json> lookup(const std::string& key) const {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = records_.find(key);
        if (it == records_.end()) return std::nullopt;
        return it->second;
    }

    void append(const std::string& key, json record) {
        record["key"] = key;
        std::lock_guard<std::mutex> lock(mutex_);
        records_[key] = record;
        if (!path_.empty()) {
            std::ofstream out(path_, std::ios::app);
            out << record.dump() << "\n";
        }
    }

private:
    std::string config_hash_;
    std::string path_;
    mutable std::mutex mutex_;
    std::map<std::string, json> records_;
};

struct ScoredSegmentInfo {
    double score = 0.0;
    double variance = 0.0;
    bool low_variance = false;
};

// Scores every segment of `seg`, reusing persisted records; concurrent up to
// max_inflight, results keyed by segment index.
std::vector<ScoredSegmentInfo> score_all(
    const Transcript& transcript, const Segmentation& seg,
    const ObjectivesSpec& objectives, const RunConfig& config,
    JudgeBackend& backend, ResultStore& store) {
    const int n = seg.size();
    std::vector<ScoredSegmentInfo> out(n);
    std::vector<int> pending;
    for (int i = 0; i < n; ++i) {
        const std::string key = store.make_key(
            transcript.meeting_id, seg.segments[i].start_time,
            seg.segments[i].end_time);
        if (auto rec = store.lookup(key)) {
            out[i].score = (*rec)["score"].get<double>();
            out[i].variance = rec->value("variance", 0.0);
            out[i].low_variance = rec->value("low_variance", false);
        } else {
            pending.push_back(i);
        }
    }

    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const size_t slot = next.fetch_add(1);
            if (slot >= pending.size()) return;
            {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (failure) return;
            }
            const int i = pending[slot];
            try {
                PromptBundle prompt = build_effectiveness_prompt(
                    transcript, seg, i, config.window, objectives);
                ScoreResult r = score_segment(backend, prompt, config.policy);
                out[i] = {r.score, r.distribution_variance, r.low_variance};
                const std::string key = store.make_key(
                    transcript.meeting_id, seg.segments[i].start_time,
                    seg.segments[i].end_time);
                store.append(key, json{{"meeting_id", transcript.meeting_id},
                                       {"index", i},
                                       {"score", r.score},
                                       {"variance", r.distribution_variance},
                                       {"low_variance", r.low_variance}});
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    const int threads = std::max(1, std::min<int>(config.max_inflight,
                                                  static_cast<int>(pending.size())));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

CorrValue pooled_or_mean_corr(
    RunConfig::Pooling pooling, CorrKind kind,
    const std::vector<double>& pooled_x, const std::vector<double>& pooled_y,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& per_meeting) {
    if (pooling == RunConfig::Pooling::global) {
        return correlation(kind, pooled_x, pooled_y);
    }
    double sum = 0.0;
    int count = 0;
    bool all_degenerate = true;
    for (const auto& [x, y] : per_meeting) {
        if (x.size() < 2) continue;
        const CorrValue c = correlation(kind, x, y);
        sum += c.value;
        ++count;
        if (!c.degenerate) all_degenerate = false;
    }
    if (count == 0) return {0.0, true};
    return {sum / count, all_degenerate};
}

}  // namespace

json RunConfig::to_json() const {
    json j;
    j["mode"] = mode_name(mode);
    j["objectives_condition"] = objectives_name(objectives);
    j["window"] = window;
    j["scoring"] = policy.mode == SamplingPolicy::Mode::distribution_weighted
                       ? "dist"
                       : "samples";
    j["samples"] = policy.sample_count;
    j["pooling"] = pooling == Pooling::global ? "global" : "per_meeting_mean";
    j["seed"] = seed;
    j["max_inflight"] = max_inflight;
    return j;
}

std::string RunConfig::config_hash() const {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, fnv1a(to_json().dump()));
    return buf;
}

MetaEvalReport run_evaluation(const Dataset& dataset, const RunConfig& config,
                              JudgeBackend& backend) {
    if (dataset.meetings.empty()) throw Error("run_evaluation: empty dataset");
    ResultStore store(config.out_dir, config.config_hash());

    MetaEvalReport report;
    std::vector<double> pooled_gt, pooled_pred, pooled_ub;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> per_meeting;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> per_meeting_ub;
    std::vector<MatchResult> matches;
    double variance_sum = 0.0;
    int variance_count = 0;
    int total_repairs = 0;

    const bool correlating = config.mode != RunConfig::Mode::external_transcripts;

    for (const Meeting& m : dataset.meetings) {
        const Transcript& t = m.transcript;
        const bool has_gt = m.gt_segmentation.has_value() && m.annotations.has_value();
        if (correlating && !has_gt) {
            throw ValidationError("meeting " + t.meeting_id + ": mode " +
                                  mode_name(config.mode) +
                                  " requires segments and annotations");
        }

        MeetingEval me;
        me.meeting_id = t.meeting_id;
        me.meeting_class = m.meeting_class;

        ObjectivesSpec objectives;
        switch (config.objectives) {
            case RunConfig::ObjectivesCondition::gt: {
                if (m.objective_gt) {
                    std::vector<std::string> names;
                    for (const ObjectiveSlot& s : *m.objective_gt) {
                        names.push_back(s.name);
                    }
                    objectives = ObjectivesSpec::from_names(std::move(names));
                } else if (!correlating) {
                    objectives = ObjectivesSpec::no_objectives();
                } else {
                    throw ValidationError("meeting " + t.meeting_id +
                                          ": objectives_condition=gt requires "
                                          "objective_gt");
                }
                break;
            }
            case RunConfig::ObjectivesCondition::predicted: {
                ObjectiveClassification cls = classify_objectives(backend, t);
                objectives = ObjectivesSpec::from_taxonomy(cls.objectives);
                if (m.objective_gt) {
                    me.objective_match =
                        match_objectives(cls.objectives, *m.objective_gt);
                    matches.push_back(*me.objective_match);
                }
                break;
            }
            case RunConfig::ObjectivesCondition::none:
                objectives = ObjectivesSpec::no_objectives();
                break;
        }

        Segmentation scoring_seg;
        if (config.mode == RunConfig::Mode::gt_inputs) {
            scoring_seg = *m.gt_segmentation;
        } else {
            SegmentationResult gen = generate_segmentation(backend, t);
            scoring_seg = gen.segmentation;
            me.repair_count = static_cast<int>(gen.repairs.size());
            total_repairs += me.repair_count;
        }

        const auto scored =
            score_all(t, scoring_seg, objectives, config, backend, store);
        std::vector<double> raw_scores;
        for (const auto& s : scored) {
            raw_scores.push_back(s.score);
            variance_sum += s.variance;
            ++variance_count;
        }

        std::vector<double> gt_means;
        if (has_gt) gt_means = mean_annotation_scores(*m.annotations);

        std::vector<double> meeting_gt, meeting_pred;
        if (config.mode == RunConfig::Mode::gt_inputs) {
            for (int i = 0; i < scoring_seg.size(); ++i) {
                SegmentRow row;
                row.meeting_id = t.meeting_id;
                row.index = i;
                row.start_s = scoring_seg.segments[i].start_time;
                row.end_s = scoring_seg.segments[i].end_time;
                row.duration_s = scoring_seg.segments[i].duration();
                row.gt_mean = gt_means[i];
                row.aligned_pred = raw_scores[i];
                row.raw_pred = raw_scores[i];
                report.rows.push_back(row);
                meeting_gt.push_back(gt_means[i]);
                meeting_pred.push_back(raw_scores[i]);
            }
        } else if (has_gt) {
            const Segmentation& gt_seg = *m.gt_segmentation;
            AlignedScores aligned =
                align(gt_seg, ScoredSegmentation{scoring_seg, raw_scores});
            for (int i = 0; i < gt_seg.size(); ++i) {
                SegmentRow row;
                row.meeting_id = t.meeting_id;
                row.index = i;
                row.start_s = gt_seg.segments[i].start_time;
                row.end_s = gt_seg.segments[i].end_time;
                row.duration_s = gt_seg.segments[i].duration();
                row.gt_mean = gt_means[i];
                row.aligned_pred = aligned.values[i];
                report.rows.push_back(row);
                meeting_gt.push_back(gt_means[i]);
                meeting_pred.push_back(aligned.values[i]);
            }
            me.pk_value = pk(gt_seg, scoring_seg, t.size());
            me.wd_value = window_diff(gt_seg, scoring_seg, t.size());
            const ScoredSegmentation gt_scored{gt_seg, gt_means};
            UpperBound ub_s = upper_bound(gt_scored, scoring_seg, CorrKind::spearman);
            UpperBound ub_k = upper_bound(gt_scored, scoring_seg, CorrKind::kendall);
            me.ub_spearman = ub_s.corr;
            me.ub_kendall = ub_k.corr;
            me.ub_round_trip = ub_s.round_trip_scores;
            for (double v : me.ub_round_trip) pooled_ub.push_back(v);
            per_meeting_ub.emplace_back(gt_means, me.ub_round_trip);
        } else {
            for (int i = 0; i < scoring_seg.size(); ++i) {
                SegmentRow row;
                row.meeting_id = t.meeting_id;
                row.index = i;
                row.start_s = scoring_seg.segments[i].start_time;
                row.end_s = scoring_seg.segments[i].end_time;
                row.duration_s = scoring_seg.segments[i].duration();
                row.raw_pred = raw_scores[i];
                report.rows.push_back(row);
            }
        }

        if (!meeting_gt.empty()) {
            for (size_t i = 0; i < meeting_gt.size(); ++i) {
                pooled_gt.push_back(meeting_gt[i]);
                pooled_pred.push_back(meeting_pred[i]);
            }
            per_meeting.emplace_back(std::move(meeting_gt), std::move(meeting_pred));
        }
        report.meetings.push_back(std::move(me));
    }

    if (!pooled_gt.empty()) {
        report.spearman_corr = pooled_or_mean_corr(
            config.pooling, CorrKind::spearman, pooled_gt, pooled_pred, per_meeting);
        report.kendall_corr = pooled_or_mean_corr(
            config.pooling, CorrKind::kendall, pooled_gt, pooled_pred, per_meeting);
    }
    if (!pooled_ub.empty()) {
        report.ub_spearman = pooled_or_mean_corr(
            config.pooling, CorrKind::spearman, pooled_gt, pooled_ub, per_meeting_ub);
        report.ub_kendall = pooled_or_mean_corr(
            config.pooling, CorrKind::kendall, pooled_gt, pooled_ub, per_meeting_ub);
    }
    {
        double pk_sum = 0.0, wd_sum = 0.0;
        int n = 0;
        for (const MeetingEval& me : report.meetings) {
            if (me.pk_value) {
                pk_sum += *me.pk_value;
                wd_sum += *me.wd_value;
                ++n;
            }
        }
        if (n > 0) {
            report.pk_mean = pk_sum / n;
            report.wd_mean = wd_sum / n;
        }
    }
    if (!matches.empty()) report.objectives = objective_metrics(matches);

    report.metadata = json{
        {"config", config.to_json()},
        {"config_hash", config.config_hash()},
        {"backend", backend.identity()},
        {"meetings", report.meetings.size()},
        {"segments", report.rows.size()},
        {"repair_count", total_repairs},
        {"mean_distribution_variance",
         variance_count > 0 ? variance_sum / variance_count : 0.0},
    };
    return report;
}

MetaEvalReport subset_report(const Dataset& dataset, const RunConfig& config,
                             JudgeBackend& backend,
                             const std::string& meeting_class) {
    Dataset subset;
    for (const Meeting& m : dataset.meetings) {
        if (m.meeting_class == meeting_class) subset.meetings.push_back(m);
    }
    if (subset.meetings.empty()) {
        throw Error("subset_report: no meetings with class '" + meeting_class + "'");
    }
    return run_evaluation(subset, config, backend);
}

ConsistencyReport consistency_report(const std::vector<MetaEvalReport>& runs,
                                     CorrKind kind) {
    if (runs.empty()) throw Error("consistency_report: no runs");
    auto keys_of = [](const MetaEvalReport& r) {
        std::vector<std::pair<std::string, int>> keys;
        for (const SegmentRow& row : r.rows) {
            keys.emplace_back(row.meeting_id, row.index);
        }
        return keys;
    };
    const auto ref_keys = keys_of(runs.front());
    for (const MetaEvalReport& r : runs) {
        if (keys_of(r) != ref_keys) {
            throw Error("consistency_report: runs have mismatched segment keys");
        }
    }
    std::vector<NamedScores> series;
    for (size_t i = 0; i < runs.size(); ++i) {
        NamedScores s;
        s.name = runs[i].metadata.contains("backend")
                     ? runs[i].metadata["backend"].get<std::string>()
                     : "run" + std::to_string(i);
        for (const SegmentRow& row : runs[i].rows) {
            s.values.push_back(row.aligned_pred ? *row.aligned_pred
                                                : row.raw_pred.value_or(0.0));
        }
        series.push_back(std::move(s));
    }
    ConsistencyReport out;
    out.matrix = pairwise_correlation_matrix(series, kind);
    std::vector<double> human;
    bool has_human = true;
    for (const SegmentRow& row : runs.front().rows) {
        if (!row.gt_mean) {
            has_human = false;
            break;
        }
        human.push_back(*row.gt_mean);
    }
    for (const NamedScores& s : series) {
        out.human_corr.push_back(has_human ? correlation(kind, s.values, human)
                                           : CorrValue{0.0, true});
    }
    return out;
}

json MetaEvalReport::to_json() const {
    json j;
    j["spearman"] = corr_json(spearman_corr);
    j["kendall"] = corr_json(kendall_corr);
    j["upper_bound_spearman"] = corr_json(ub_spearman);
    j["upper_bound_kendall"] = corr_json(ub_kendall);
    j["pk"] = pk_mean ? json(*pk_mean) : json(nullptr);
    j["window_diff"] = wd_mean ? json(*wd_mean) : json(nullptr);
    if (objectives) {
        j["objective_metrics"] = {{"hamming_loss", objectives->hamming_loss},
                                  {"micro_f1", objectives->micro_f1},
                                  {"degenerate", objectives->degenerate}};
    } else {
        j["objective_metrics"] = nullptr;
    }
    j["segments"] = json::array();
    for (const SegmentRow& r : rows) {
        json row = {{"meeting_id", r.meeting_id}, {"index", r.index},
                    {"start_s", r.start_s},       {"end_s", r.end_s},
                    {"duration_s", r.duration_s}};
        row["gt_mean"] = r.gt_mean ? json(*r.gt_mean) : json(nullptr);
        row["aligned_pred"] = r.aligned_pred ? json(*r.aligned_pred) : json(nullptr);
        row["raw_pred"] = r.raw_pred ? json(*r.raw_pred) : json(nullptr);
        j["segments"].push_back(std::move(row));
    }
    j["per_meeting"] = json::array();
    for (const MeetingEval& m : meetings) {
        json jm = {{"meeting_id", m.meeting_id},
                   {"class", m.meeting_class},
                   {"repair_count", m.repair_count}};
        jm["pk"] = m.pk_value ? json(*m.pk_value) : json(nullptr);
        jm["window_diff"] = m.wd_value ? json(*m.wd_value) : json(nullptr);
        jm["upper_bound_spearman"] = corr_json(m.ub_spearman);
        jm["upper_bound_kendall"] = corr_json(m.ub_kendall);
        if (m.objective_match) {
            jm["objective_match"] = {{"tp", m.objective_match->tp},
                                     {"fp", m.objective_match->fp},
                                     {"fn", m.objective_match->fn}};
        }
        j["per_meeting"].push_back(std::move(jm));
    }
    j["metadata"] = metadata;
    return j;
}

std::string MetaEvalReport::segments_csv() const {
    std::ostringstream ss;
    ss << "meeting_id,index,start_s,end_s,duration_s,gt_mean,aligned_pred,"
          "raw_pred\n";
    auto num = [](std::optional<double> v) {
        if (!v) return std::string();
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.12g", *v);
        return std::string(buf);
    };
    for (const SegmentRow& r : rows) {
        ss << r.meeting_id << "," << r.index << "," << num(r.start_s) << ","
           << num(r.end_s) << "," << num(r.duration_s) << "," << num(r.gt_mean)
           << "," << num(r.aligned_pred) << "," << num(r.raw_pred) << "\n";
    }
    return ss.str();
}

std::string write_report(const MetaEvalReport& report, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
        std::ofstream out(dir / "report.json");
        out << report.to_json().dump(2) << "\n";
    }
    {
        std::ofstream out(dir / "segments.csv");
        out << report.segments_csv();
    }
    return (dir / "report.json").string();
}

}  // namespace meval
