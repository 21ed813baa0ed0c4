#pragma once

#include <string>
#include <vector>

#include "meval/corpus.hpp"

namespace meval {

// Correlation of a zero-variance vector is reported as 0 with the degenerate
// flag set, so batch runs never abort on constant judges.
struct CorrValue {
    double value = 0.0;
    bool degenerate = false;
};

enum class CorrKind { spearman, kendall };

CorrValue spearman(const std::vector<double>& x, const std::vector<double>& y);
CorrValue kendall(const std::vector<double>& x, const std::vector<double>& y);  // tau-b
CorrValue correlation(CorrKind kind, const std::vector<double>& x,
                      const std::vector<double>& y);

struct SegMetricConfig {
    // Window width in utterances; 0 means auto:
    // k = max(2, round(n / (2 * |reference segments|))).
    int window = 0;

    int resolve(int n, int ref_segments) const;
};

double pk(const Segmentation& ref, const Segmentation& hyp, int n,
          const SegMetricConfig& cfg = {});
double window_diff(const Segmentation& ref, const Segmentation& hyp, int n,
                   const SegMetricConfig& cfg = {});

struct IccValue {
    double value = 0.0;
    bool degenerate = false;  // zero between-subject variance
};

// ICC(2,k): two-way random effects, absolute agreement, average of k raters.
IccValue icc_2k(const AnnotationMatrix& ratings);

struct MatchResult {
    std::vector<std::pair<int, int>> matched_pairs;  // (pred label, gt slot index)
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

// Maximum-cardinality bipartite matching of predicted labels against GT
// slots; label p may serve slot s iff p is in the slot's allowed set.
MatchResult match_objectives(const ObjectiveSet& pred,
                             const ObjectiveGroundTruth& gt);

struct ObjectiveMetrics {
    double hamming_loss = 0.0;  // sum(FP+FN) / (19 * meetings)
    double micro_f1 = 0.0;      // 2*TP / (2*TP + FP + FN)
    bool degenerate = false;    // all-zero denominators
};

ObjectiveMetrics objective_metrics(const std::vector<MatchResult>& results);

struct NamedScores {
    std::string name;
    std::vector<double> values;
};

struct CorrelationMatrix {
    std::vector<std::string> names;
    std::vector<std::vector<CorrValue>> values;  // symmetric, diagonal 1.0
};

CorrelationMatrix pairwise_correlation_matrix(const std::vector<NamedScores>& runs,
                                              CorrKind kind);

}  // namespace meval
