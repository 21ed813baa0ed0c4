#include "meval/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace meval {

namespace {

void require_same_span(const Segmentation& a, const Segmentation& b) {
    if (a.segments.empty() || b.segments.empty()) {
        throw Error("align: empty segmentation");
    }
    const double ta = a.segments.back().end_time;
    const double tb = b.segments.back().end_time;
    if (std::abs(ta - tb) > 1e-6 ||
        std::abs(a.segments.front().start_time - b.segments.front().start_time) > 1e-6) {
        throw Error("align: segmentations span different intervals");
    }
}

}  // namespace

std::vector<Overlap> overlaps(const Segmentation& gt, const Segmentation& pred) {
    std::vector<Overlap> out;
    // Both lists are time-ordered; walk them in tandem.
    size_t j0 = 0;
    for (size_t i = 0; i < gt.segments.size(); ++i) {
        const Segment& g = gt.segments[i];
        for (size_t j = j0; j < pred.segments.size(); ++j) {
            const Segment& p = pred.segments[j];
            if (p.end_time <= g.start_time) {
                j0 = j + 1;
                continue;
            }
            if (p.start_time >= g.end_time) break;
            const double d = std::min(g.end_time, p.end_time) -
                             std::max(g.start_time, p.start_time);
            if (d > kOverlapEpsilon) {
                out.push_back({static_cast<int>(i), static_cast<int>(j), d});
            }
        }
    }
    return out;
}

AlignedScores align(const Segmentation& gt, const ScoredSegmentation& pred) {
    require_same_span(gt, pred.segmentation);
    if (pred.scores.size() != pred.segmentation.segments.size()) {
        throw Error("align: score count does not match predicted segments");
    }
    for (const Segment& g : gt.segments) {
        if (!(g.duration() > 0.0)) throw Error("align: zero-duration GT segment");
    }
    const size_t n = gt.segments.size();
    std::vector<double> weighted(n, 0.0), total(n, 0.0);
    // first/uniform track the exact-copy cases: a GT segment covered by a
    // single predicted segment, or by several carrying the same score, must
    // receive that score without round-off.
    std::vector<double> first(n, 0.0);
    std::vector<char> seen(n, 0), uniform(n, 1);
    for (const Overlap& o : overlaps(gt, pred.segmentation)) {
        const double s = pred.scores[o.pred_index];
        weighted[o.gt_index] += s * o.duration;
        total[o.gt_index] += o.duration;
        if (!seen[o.gt_index]) {
            seen[o.gt_index] = 1;
            first[o.gt_index] = s;
        } else if (s != first[o.gt_index]) {
            uniform[o.gt_index] = 0;
        }
    }
    AlignedScores out;
    out.values.resize(n);
    for (size_t i = 0; i < n; ++i) {
        if (!seen[i] || total[i] <= 0.0) {
            throw Error("align: GT segment has no overlap");
        }
        out.values[i] = uniform[i] ? first[i] : weighted[i] / total[i];
    }
    // Identity alignment must be an exact score copy.
    if (gt.segments.size() == pred.segmentation.segments.size()) {
        bool identical = true;
        for (size_t i = 0; i < n && identical; ++i) {
            identical = gt.segments[i].start_time == pred.segmentation.segments[i].start_time &&
                        gt.segments[i].end_time == pred.segmentation.segments[i].end_time;
        }
        if (identical) out.values = pred.scores;
    }
    return out;
}

double overall_effectiveness(const ScoredSegmentation& s) {
    if (s.segmentation.segments.empty()) {
        throw Error("overall_effectiveness: empty segmentation");
    }
    if (s.scores.size() != s.segmentation.segments.size()) {
        throw Error("overall_effectiveness: score count mismatch");
    }
    double total = 0.0, weighted = 0.0;
    for (size_t i = 0; i < s.scores.size(); ++i) {
        const double d = s.segmentation.segments[i].duration();
        total += d;
        weighted += s.scores[i] * d;
    }
    if (total <= 0.0) throw Error("overall_effectiveness: zero total span");
    return weighted / total;
}

UpperBound upper_bound(const ScoredSegmentation& gt, const Segmentation& pred,
                       CorrKind kind) {
    // GT scores projected onto the predicted segmentation...
    AlignedScores onto_pred = align(pred, gt);
    // ...then carried back onto the GT segmentation.
    ScoredSegmentation as_pred{pred, onto_pred.values};
    AlignedScores round_trip = align(gt.segmentation, as_pred);
    UpperBound out;
    out.round_trip_scores = round_trip.values;
    out.corr = correlation(kind, gt.scores, round_trip.values);
    return out;
}

BoundaryConfusion boundary_confusion(const Segmentation& gt,
                                     const Segmentation& pred, int n_utterances) {
    if (gt.segments.empty() || pred.segments.empty()) {
        throw Error("boundary_confusion: empty segmentation");
    }
    if (gt.segments.back().end_id != n_utterances - 1 ||
        pred.segments.back().end_id != n_utterances - 1) {
        throw Error("boundary_confusion: segmentations cover different transcripts");
    }
    const auto g = gt.boundary_gaps();
    const auto p = pred.boundary_gaps();
    const std::set<int> gs(g.begin(), g.end());
    const std::set<int> ps(p.begin(), p.end());
    BoundaryConfusion c;
    for (int gap = 0; gap < n_utterances - 1; ++gap) {
        const bool in_gt = gs.count(gap) > 0;
        const bool in_pred = ps.count(gap) > 0;
        if (in_gt && in_pred) ++c.tp;
        else if (in_pred) ++c.fp;
        else if (in_gt) ++c.fn;
        else ++c.tn;
    }
    return c;
}

}  // namespace meval
