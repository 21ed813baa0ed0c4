#include "meval/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace meval {

using nlohmann::json;

double Transcript::total_span() const {
    if (utterances.empty()) return 0.0;
    return utterances.back().end_time;
}

void Segmentation::derive_times(const Transcript& t) {
    if (segments.empty()) return;
    const double span = t.total_span();
    for (size_t i = 0; i < segments.size(); ++i) {
        Segment& s = segments[i];
        if (i == 0) {
            s.start_time = 0.0;
        } else {
            s.start_time = t.utterances.at(s.start_id).start_time;
        }
        if (i + 1 < segments.size()) {
            s.end_time = t.utterances.at(segments[i + 1].start_id).start_time;
        } else {
            s.end_time = span;
        }
    }
}

std::vector<int> Segmentation::boundary_gaps() const {
    std::vector<int> gaps;
    for (size_t i = 0; i + 1 < segments.size(); ++i) {
        gaps.push_back(segments[i].end_id);
    }
    return gaps;
}

void Segmentation::validate(const Transcript& t) const {
    const std::string& mid = t.meeting_id;
    if (segments.empty()) {
        throw ValidationError("meeting " + mid + ": empty segmentation");
    }
    if (segments.front().start_id != 0) {
        throw ValidationError("meeting " + mid +
                              ": segmentation does not cover utterance 0");
    }
    int prev_end = -1;
    for (size_t i = 0; i < segments.size(); ++i) {
        const Segment& s = segments[i];
        if (s.start_id > s.end_id) {
            throw ValidationError("meeting " + mid + ": segment " +
                                  std::to_string(i) + " has start_id > end_id");
        }
        if (i > 0 && s.start_id != prev_end + 1) {
            throw ValidationError("meeting " + mid +
                                  ": non-contiguous segmentation at segment " +
                                  std::to_string(i) + " (previous ends at " +
                                  std::to_string(prev_end) + ", next starts at " +
                                  std::to_string(s.start_id) + ")");
        }
        if (s.end_id >= t.size()) {
            throw ValidationError("meeting " + mid + ": segment " +
                                  std::to_string(i) + " references utterance " +
                                  std::to_string(s.end_id) + " beyond transcript");
        }
        prev_end = s.end_id;
    }
    if (prev_end != t.size() - 1) {
        throw ValidationError("meeting " + mid +
                              ": segmentation does not cover the final utterance");
    }
    // Derived intervals must partition [0, T].
    double sum = 0.0;
    for (const Segment& s : segments) {
        if (!(s.end_time > s.start_time)) {
            throw ValidationError("meeting " + mid + ": zero-duration segment [" +
                                  std::to_string(s.start_id) + "," +
                                  std::to_string(s.end_id) + "]");
        }
        sum += s.duration();
    }
    if (std::abs(sum - t.total_span()) > 1e-9) {
        throw ValidationError("meeting " + mid +
                              ": derived intervals do not sum to T");
    }
}

void ScoredSegmentation::validate(const Transcript& t) const {
    segmentation.validate(t);
    if (scores.size() != segmentation.segments.size()) {
        throw ValidationError("meeting " + t.meeting_id +
                              ": score count does not match segment count");
    }
    for (double s : scores) {
        if (s < 1.0 || s > 5.0) {
            throw ValidationError("meeting " + t.meeting_id + ": score " +
                                  std::to_string(s) + " outside [1,5]");
        }
    }
}

void ObjectiveSet::validate() const {
    if (static_cast<int>(labels.size()) > cap) {
        throw ValidationError("objective set exceeds cap of " +
                              std::to_string(cap));
    }
    for (int l : labels) {
        if (l < 1 || l > 19) {
            throw ValidationError("objective label " + std::to_string(l) +
                                  " outside taxonomy {1..19}");
        }
    }
}

int Dataset::total_segments() const {
    int n = 0;
    for (const Meeting& m : meetings) {
        if (m.gt_segmentation) n += m.gt_segmentation->size();
    }
    return n;
}

namespace {

Transcript parse_transcript(const json& jm) {
    Transcript t;
    t.meeting_id = jm.at("meeting_id").get<std::string>();
    const json& jutts = jm.at("utterances");
    if (!jutts.is_array() || jutts.empty()) {
        throw ValidationError("meeting " + t.meeting_id + ": empty transcript");
    }
    for (const json& ju : jutts) {
        Utterance u;
        u.original_id = ju.at("id").get<int>();
        u.speaker = ju.at("speaker").get<std::string>();
        u.start_time = ju.at("start").get<double>();
        u.end_time = ju.at("end").get<double>();
        u.text = ju.at("text").get<std::string>();
        if (u.start_time < 0.0) {
            throw ValidationError("meeting " + t.meeting_id + ": utterance " +
                                  std::to_string(u.original_id) +
                                  " has negative start time");
        }
        if (u.end_time < u.start_time) {
            throw ValidationError("meeting " + t.meeting_id + ": utterance " +
                                  std::to_string(u.original_id) +
                                  " has end < start");
        }
        t.utterances.push_back(std::move(u));
    }
    if (!std::is_sorted(t.utterances.begin(), t.utterances.end(),
                        [](const Utterance& a, const Utterance& b) {
                            return a.start_time < b.start_time;
                        })) {
        throw ValidationError("meeting " + t.meeting_id +
                              ": utterances not sorted by start time");
    }
    // Renumber to dense 0-based ids in start-time order.
    for (size_t i = 0; i < t.utterances.size(); ++i) {
        t.utterances[i].id = static_cast<int>(i);
    }
    if (t.total_span() <= 0.0) {
        throw ValidationError("meeting " + t.meeting_id + ": total span is zero");
    }
    return t;
}

Segmentation parse_segments(const json& jsegs, const Transcript& t,
                            const std::map<int, int>& id_map) {
    Segmentation seg;
    seg.source = SegSource::ground_truth;
    for (const json& js : jsegs) {
        Segment s;
        int raw_start = js.at("start_id").get<int>();
        int raw_end = js.at("end_id").get<int>();
        auto it_s = id_map.find(raw_start);
        auto it_e = id_map.find(raw_end);
        if (it_s == id_map.end() || it_e == id_map.end()) {
            throw ValidationError("meeting " + t.meeting_id +
                                  ": segment references unknown utterance id");
        }
        s.start_id = it_s->second;
        s.end_id = it_e->second;
        s.topic = js.value("topic", "");
        s.description = js.value("description", "");
        seg.segments.push_back(std::move(s));
    }
    seg.derive_times(t);
    seg.validate(t);
    return seg;
}

AnnotationMatrix parse_annotations(const json& ja, const Transcript& t,
                                   int segment_count) {
    AnnotationMatrix a;
    a.raters = ja.at("raters").get<std::vector<std::string>>();
    const json& scores = ja.at("scores");
    if (static_cast<int>(scores.size()) != segment_count) {
        throw ValidationError("meeting " + t.meeting_id +
                              ": annotation rows do not match segment count");
    }
    for (size_t i = 0; i < scores.size(); ++i) {
        const json& row = scores[i];
        if (row.size() != a.raters.size()) {
            throw ValidationError("meeting " + t.meeting_id +
                                  ": incomplete rating row for segment " +
                                  std::to_string(i));
        }
        std::vector<int> r;
        for (size_t j = 0; j < row.size(); ++j) {
            int v = row[j].get<int>();
            if (v < 1 || v > 5) {
                throw ValidationError(
                    "meeting " + t.meeting_id + ": rating " + std::to_string(v) +
                    " outside {1..5} at segment " + std::to_string(i) +
                    ", rater " + a.raters[j]);
            }
            r.push_back(v);
        }
        a.ratings.push_back(std::move(r));
    }
    if (ja.contains("served_objectives")) {
        const json& so = ja.at("served_objectives");
        if (static_cast<int>(so.size()) != segment_count) {
            throw ValidationError("meeting " + t.meeting_id +
                                  ": served_objectives length mismatch");
        }
        for (const json& row : so) {
            a.served_objectives.emplace_back(row.begin(), row.end());
        }
    } else {
        a.served_objectives.resize(segment_count);
    }
    return a;
}

ObjectiveGroundTruth parse_objective_gt(const json& jo,
                                        const std::string& meeting_id) {
    ObjectiveGroundTruth gt;
    for (const json& js : jo) {
        ObjectiveSlot slot;
        slot.name = js.at("name").get<std::string>();
        for (const json& l : js.at("allowed_labels")) {
            int v = l.get<int>();
            if (v < 1 || v > 19) {
                throw ValidationError("meeting " + meeting_id +
                                      ": objective label " + std::to_string(v) +
                                      " outside taxonomy {1..19}");
            }
            slot.allowed_labels.insert(v);
        }
        if (slot.allowed_labels.empty()) {
            throw ValidationError("meeting " + meeting_id +
                                  ": empty objective slot '" + slot.name + "'");
        }
        gt.push_back(std::move(slot));
    }
    return gt;
}

}  // namespace

Dataset parse_dataset(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    if (!root.contains("meetings")) {
        throw ValidationError("missing top-level 'meetings' array");
    }
    Dataset d;
    for (const json& jm : root.at("meetings")) {
        Meeting m;
        try {
            m.transcript = parse_transcript(jm);
            std::map<int, int> id_map;
            for (const Utterance& u : m.transcript.utterances) {
                id_map[u.original_id] = u.id;
            }
            if (jm.contains("segments")) {
                m.gt_segmentation =
                    parse_segments(jm.at("segments"), m.transcript, id_map);
            }
            if (jm.contains("annotations")) {
                if (!m.gt_segmentation) {
                    throw ValidationError("meeting " + m.transcript.meeting_id +
                                          ": annotations without segments");
                }
                m.annotations = parse_annotations(jm.at("annotations"),
                                                  m.transcript,
                                                  m.gt_segmentation->size());
            }
            if (jm.contains("objective_gt")) {
                m.objective_gt = parse_objective_gt(jm.at("objective_gt"),
                                                    m.transcript.meeting_id);
            }
            m.meeting_class = jm.value("class", "");
        } catch (const json::exception& e) {
            std::string mid = jm.contains("meeting_id") && jm["meeting_id"].is_string()
                                  ? jm["meeting_id"].get<std::string>()
                                  : "<unknown>";
            throw ValidationError("meeting " + mid + ": schema violation: " +
                                  e.what());
        }
        d.meetings.push_back(std::move(m));
    }
    return d;
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_dataset(ss.str());
}

std::string serialize_dataset(const Dataset& d) {
    json root;
    root["meetings"] = json::array();
    for (const Meeting& m : d.meetings) {
        json jm;
        jm["meeting_id"] = m.transcript.meeting_id;
        jm["utterances"] = json::array();
        for (const Utterance& u : m.transcript.utterances) {
            jm["utterances"].push_back({{"id", u.original_id},
                                        {"speaker", u.speaker},
                                        {"start", u.start_time},
                                        {"end", u.end_time},
                                        {"text", u.text}});
        }
        if (m.gt_segmentation) {
            json js = json::array();
            for (const Segment& s : m.gt_segmentation->segments) {
                // Emit original ids so a re-load maps back identically.
                js.push_back(
                    {{"start_id", m.transcript.utterances[s.start_id].original_id},
                     {"end_id", m.transcript.utterances[s.end_id].original_id},
                     {"topic", s.topic},
                     {"description", s.description}});
            }
            jm["segments"] = js;
        }
        if (m.annotations) {
            json ja;
            ja["raters"] = m.annotations->raters;
            ja["scores"] = m.annotations->ratings;
            json so = json::array();
            for (const auto& row : m.annotations->served_objectives) {
                so.push_back(row);
            }
            ja["served_objectives"] = so;
            jm["annotations"] = ja;
        }
        if (m.objective_gt) {
            json jo = json::array();
            for (const ObjectiveSlot& slot : *m.objective_gt) {
                jo.push_back({{"name", slot.name},
                              {"allowed_labels", slot.allowed_labels}});
            }
            jm["objective_gt"] = jo;
        }
        if (!m.meeting_class.empty()) jm["class"] = m.meeting_class;
        root["meetings"].push_back(std::move(jm));
    }
    return root.dump(2);
}

void save_dataset(const Dataset& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dataset file: " + path);
    out << serialize_dataset(d) << "\n";
}

std::vector<double> mean_annotation_scores(const AnnotationMatrix& a) {
    if (a.ratings.empty() || a.raters.empty()) {
        throw ValidationError("empty annotation matrix");
    }
    std::vector<double> means;
    means.reserve(a.ratings.size());
    for (const auto& row : a.ratings) {
        double sum = 0.0;
        for (int v : row) sum += v;
        means.push_back(sum / static_cast<double>(row.size()));
    }
    return means;
}

}  // namespace meval
