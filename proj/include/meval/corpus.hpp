#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meval/errors.hpp"

namespace meval {

struct Utterance {
    int id = 0;           // dense 0-based index within the transcript
    int original_id = 0;  // id as it appeared in the input file
    std::string speaker;
    double start_time = 0.0;  // seconds
    double end_time = 0.0;    // seconds, >= start_time
    std::string text;
};

struct Transcript {
    std::string meeting_id;
    std::vector<Utterance> utterances;  // sorted by start_time, ids 0..n-1

    // Total span T: end time of the last utterance.
    double total_span() const;
    int size() const { return static_cast<int>(utterances.size()); }
};

struct Segment {
    int start_id = 0;
    int end_id = 0;  // inclusive
    std::string topic;
    std::string description;
    // Derived from the time model; filled by derive_times().
    double start_time = 0.0;
    double end_time = 0.0;

    double duration() const { return end_time - start_time; }
};

enum class SegSource { ground_truth, predicted };

struct Segmentation {
    std::vector<Segment> segments;
    SegSource source = SegSource::ground_truth;

    int size() const { return static_cast<int>(segments.size()); }

    // Time model: segment i spans [start of its first utterance, start of
    // segment i+1's first utterance); the first boundary is clamped to 0 and
    // the last segment ends at the end of the final utterance, so the derived
    // intervals partition [0, T] exactly.
    void derive_times(const Transcript& t);

    // Internal boundary positions as gap indices: boundary after utterance g
    // is gap g, for g in 0..n-2.
    std::vector<int> boundary_gaps() const;

    // Throws ValidationError on contiguity/coverage violations.
    void validate(const Transcript& t) const;
};

struct ScoredSegmentation {
    Segmentation segmentation;
    std::vector<double> scores;  // one per segment, each in [1,5]

    void validate(const Transcript& t) const;
};

struct ObjectiveSet {
    std::set<int> labels;  // subset of {1..19}
    int cap = 3;

    void validate() const;
};

struct AnnotationMatrix {
    std::vector<std::string> raters;
    std::vector<std::vector<int>> ratings;  // n segments x k raters, values 1..5
    std::vector<std::set<std::string>> served_objectives;  // per segment, may be empty

    int segment_count() const { return static_cast<int>(ratings.size()); }
    int rater_count() const { return static_cast<int>(raters.size()); }
};

struct ObjectiveSlot {
    std::string name;
    std::set<int> allowed_labels;  // non-empty, subset of {1..19}
};

// Per-meeting GT objective slots; one-to-many label mapping.
using ObjectiveGroundTruth = std::vector<ObjectiveSlot>;

struct Meeting {
    Transcript transcript;
    std::optional<Segmentation> gt_segmentation;
    std::optional<AnnotationMatrix> annotations;
    std::optional<ObjectiveGroundTruth> objective_gt;
    std::string meeting_class;  // e.g. "scenario" / "non_scenario"; may be empty
};

struct Dataset {
    std::vector<Meeting> meetings;

    int total_segments() const;
};

Dataset load_dataset(const std::string& path);
Dataset parse_dataset(const std::string& json_text);
std::string serialize_dataset(const Dataset& d);
void save_dataset(const Dataset& d, const std::string& path);

// Row means of a complete ratings matrix; throws on an empty matrix.
std::vector<double> mean_annotation_scores(const AnnotationMatrix& a);

}  // namespace meval
