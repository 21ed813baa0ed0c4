#pragma once

#include <vector>

#include "meval/corpus.hpp"
#include "meval/metrics.hpp"

namespace meval {

struct Overlap {
    int gt_index = 0;
    int pred_index = 0;
    double duration = 0.0;  // seconds, >= 0
};

struct AlignedScores {
    std::vector<double> values;  // one per GT segment
};

// Overlaps shorter than this are treated as zero to avoid floating-point
// slivers at shared boundaries.
inline constexpr double kOverlapEpsilon = 1e-9;

// All pairwise overlaps with positive duration, in (gt, pred) order.
std::vector<Overlap> overlaps(const Segmentation& gt, const Segmentation& pred);

// Maps predicted segment scores onto GT segments: each GT segment receives
// the overlap-duration-weighted average of the predicted scores covering it.
AlignedScores align(const Segmentation& gt, const ScoredSegmentation& pred);

// Duration-weighted average of segment scores over [0, T].
double overall_effectiveness(const ScoredSegmentation& s);

struct UpperBound {
    CorrValue corr;
    std::vector<double> round_trip_scores;  // GT scores after the alignment round trip
};

// Loose upper bound on the correlation achievable given a predicted
// segmentation: align GT scores onto pred, treat the result as a prediction,
// re-align back onto the GT segmentation, and correlate with the GT scores.
UpperBound upper_bound(const ScoredSegmentation& gt, const Segmentation& pred,
                       CorrKind kind);

struct BoundaryConfusion {
    long long tp = 0;
    long long fp = 0;
    long long fn = 0;
    long long tn = 0;
};

// Boundary placement as binary classification over the n-1 gaps between
// adjacent utterances.
BoundaryConfusion boundary_confusion(const Segmentation& gt,
                                     const Segmentation& pred, int n_utterances);

}  // namespace meval
