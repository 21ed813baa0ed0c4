#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "meval/temporal.hpp"
#include "test_support.hpp"

using namespace meval;
using namespace testsupport;

namespace {

ScoredSegmentation scored(Segmentation s, std::vector<double> scores) {
    ScoredSegmentation out;
    out.segmentation = std::move(s);
    out.scores = std::move(scores);
    return out;
}

}  // namespace

TEST_CASE("hand-worked alignment example") {
    Segmentation gt = timeline_segmentation({0.0, 10.0, 20.0});
    ScoredSegmentation pred = scored(timeline_segmentation({0.0, 5.0, 20.0}), {2.0, 4.0});
    AlignedScores a = align(gt, pred);
    REQUIRE(a.values.size() == 2);
    // GT segment 1: 5s of score 2 and 5s of score 4 -> 3. GT segment 2: all 4.
    CHECK(a.values[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(a.values[1] == 4.0);
}

TEST_CASE("identity alignment is exact") {
    std::mt19937 rng(21);
    for (int trial = 0; trial < 100; ++trial) {
        Transcript t = make_transcript(rng, 15, "id");
        Segmentation s = random_segmentation(rng, t, 6);
        std::vector<double> scores = random_scores(rng, s.size());
        AlignedScores a = align(s, scored(s, scores));
        REQUIRE(a.values.size() == scores.size());
        for (size_t i = 0; i < scores.size(); ++i) CHECK(a.values[i] == scores[i]);
    }
}

TEST_CASE("monolithic prediction propagates its score exactly") {
    std::mt19937 rng(22);
    Transcript t = make_transcript(rng, 20, "mono");
    Segmentation gt = random_segmentation(rng, t, 6);
    Segmentation mono = segmentation_from_gaps(t, {});
    AlignedScores a = align(gt, scored(mono, {3.7}));
    for (double v : a.values) CHECK(v == 3.7);
}

TEST_CASE("alignment matches a 1 ms grid oracle on random pairs") {
    std::mt19937 rng(23);
    for (int trial = 0; trial < 60; ++trial) {
        Transcript t = make_transcript(rng, 15, "grid");
        Segmentation gt = random_segmentation(rng, t, 6);
        ScoredSegmentation pred = scored(random_segmentation(rng, t, 6),
                                         random_scores(rng, 1));
        pred.scores = random_scores(rng, pred.segmentation.size());
        AlignedScores a = align(gt, pred);
        std::vector<double> oracle = grid_align_oracle(gt, pred);
        REQUIRE(a.values.size() == oracle.size());
        for (size_t i = 0; i < oracle.size(); ++i) {
            CHECK(std::abs(a.values[i] - oracle[i]) < 1e-6);
        }
    }
}

TEST_CASE("aligned scores are bounded by the predicted score range") {
    std::mt19937 rng(24);
    for (int trial = 0; trial < 50; ++trial) {
        Transcript t = make_transcript(rng, 12, "bound");
        Segmentation gt = random_segmentation(rng, t, 5);
        ScoredSegmentation pred = scored(random_segmentation(rng, t, 5), {});
        pred.scores = random_scores(rng, pred.segmentation.size());
        const double lo = *std::min_element(pred.scores.begin(), pred.scores.end());
        const double hi = *std::max_element(pred.scores.begin(), pred.scores.end());
        for (double v : align(gt, pred).values) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("splitting a predicted segment without changing scores is a no-op") {
    std::mt19937 rng(25);
    for (int trial = 0; trial < 50; ++trial) {
        Transcript t = make_transcript(rng, 14, "split");
        Segmentation gt = random_segmentation(rng, t, 5);
        ScoredSegmentation pred = scored(random_segmentation(rng, t, 4), {});
        pred.scores = random_scores(rng, pred.segmentation.size());
        AlignedScores before = align(gt, pred);

        // Split each predicted segment at its midpoint, duplicating the score.
        ScoredSegmentation split;
        for (size_t j = 0; j < pred.segmentation.segments.size(); ++j) {
            Segment s = pred.segmentation.segments[j];
            Segment a = s, b = s;
            a.end_time = (s.start_time + s.end_time) / 2.0;
            b.start_time = a.end_time;
            split.segmentation.segments.push_back(a);
            split.segmentation.segments.push_back(b);
            split.scores.push_back(pred.scores[j]);
            split.scores.push_back(pred.scores[j]);
        }
        AlignedScores after = align(gt, split);
        for (size_t i = 0; i < before.values.size(); ++i) {
            CHECK(std::abs(before.values[i] - after.values[i]) < 1e-12);
        }
    }
}

TEST_CASE("overlap list covers every positive intersection") {
    Segmentation gt = timeline_segmentation({0.0, 4.0, 9.0, 12.0});
    Segmentation pred = timeline_segmentation({0.0, 6.0, 12.0});
    std::vector<Overlap> ov = overlaps(gt, pred);
    REQUIRE(ov.size() == 4);
    CHECK(ov[0].gt_index == 0);
    CHECK(ov[0].pred_index == 0);
    CHECK(ov[0].duration == doctest::Approx(4.0));
    CHECK(ov[1].gt_index == 1);
    CHECK(ov[1].pred_index == 0);
    CHECK(ov[1].duration == doctest::Approx(2.0));
    CHECK(ov[2].gt_index == 1);
    CHECK(ov[2].pred_index == 1);
    CHECK(ov[2].duration == doctest::Approx(3.0));
    CHECK(ov[3].gt_index == 2);
    CHECK(ov[3].pred_index == 1);
    CHECK(ov[3].duration == doctest::Approx(3.0));
    // Shared boundaries produce no sliver overlaps.
    for (const Overlap& o : ov) CHECK(o.duration > kOverlapEpsilon);
}

TEST_CASE("mismatched spans are rejected") {
    Segmentation gt = timeline_segmentation({0.0, 5.0, 10.0});
    ScoredSegmentation pred = scored(timeline_segmentation({0.0, 11.0}), {3.0});
    CHECK_THROWS_AS(align(gt, pred), Error);
}

TEST_CASE("overall effectiveness equals the duration-weighted mean") {
    ScoredSegmentation s = scored(timeline_segmentation({0.0, 1.0, 4.0}), {5.0, 1.0});
    CHECK(overall_effectiveness(s) == doctest::Approx((5.0 * 1 + 1.0 * 3) / 4.0));
    ScoredSegmentation c = scored(timeline_segmentation({0.0, 2.0, 3.0, 7.0}),
                                  {2.5, 2.5, 2.5});
    CHECK(overall_effectiveness(c) == doctest::Approx(2.5).epsilon(1e-15));
}

TEST_CASE("overall effectiveness equals monolithic alignment on random inputs") {
    std::mt19937 rng(26);
    for (int trial = 0; trial < 100; ++trial) {
        Transcript t = make_transcript(rng, 16, "app_a");
        ScoredSegmentation s = scored(random_segmentation(rng, t, 7), {});
        s.scores = random_scores(rng, s.segmentation.size());
        Segmentation mono = segmentation_from_gaps(t, {});
        AlignedScores a = align(mono, s);
        REQUIRE(a.values.size() == 1);
        CHECK(std::abs(overall_effectiveness(s) - a.values[0]) < 1e-12);
    }
}

TEST_CASE("upper bound endpoints") {
    std::mt19937 rng(27);
    Transcript t = make_transcript(rng, 18, "ub");
    std::set<int> all_gaps;
    for (int g = 0; g < t.size() - 1; ++g) all_gaps.insert(g);

    Segmentation gt_seg = segmentation_from_gaps(t, {3, 8, 12});
    ScoredSegmentation gt = scored(gt_seg, {2.0, 4.5, 1.5, 3.0});

    SUBCASE("per-utterance prediction reaches 1.0 exactly") {
        UpperBound ub = upper_bound(gt, segmentation_from_gaps(t, all_gaps),
                                    CorrKind::spearman);
        CHECK(ub.corr.value == 1.0);
        CHECK_FALSE(ub.corr.degenerate);
        UpperBound ubk = upper_bound(gt, segmentation_from_gaps(t, all_gaps),
                                     CorrKind::kendall);
        CHECK(ubk.corr.value == 1.0);
    }
    SUBCASE("identical segmentation reaches 1.0 exactly") {
        UpperBound ub = upper_bound(gt, gt_seg, CorrKind::spearman);
        CHECK(ub.corr.value == 1.0);
        for (size_t i = 0; i < gt.scores.size(); ++i) {
            CHECK(ub.round_trip_scores[i] == gt.scores[i]);
        }
    }
    SUBCASE("monolithic prediction collapses to a degenerate 0") {
        UpperBound ub = upper_bound(gt, segmentation_from_gaps(t, {}),
                                    CorrKind::spearman);
        CHECK(ub.corr.value == 0.0);
        CHECK(ub.corr.degenerate);
    }
}

TEST_CASE("upper bound is non-decreasing along refinement chains") {
    // Per-step monotonicity of a rank correlation under arbitrary splits only
    // holds when the ground-truth scores are ordered in time: the round trip
    // then stays co-monotone with the truth and refinement can only break
    // ties, never create new rank inversions.
    std::mt19937 rng(28);
    for (int chain = 0; chain < 20; ++chain) {
        Transcript t = make_transcript(rng, 20, "chain");
        Segmentation gt_seg = random_segmentation(rng, t, 6);
        while (gt_seg.size() < 3) gt_seg = random_segmentation(rng, t, 6);
        std::vector<double> sc = random_scores(rng, gt_seg.size());
        std::sort(sc.begin(), sc.end());
        ScoredSegmentation gt = scored(gt_seg, sc);

        CorrKind kind = (chain % 2 == 0) ? CorrKind::spearman : CorrKind::kendall;
        std::set<int> gaps;
        std::vector<int> remaining;
        for (int g = 0; g < t.size() - 1; ++g) remaining.push_back(g);
        std::shuffle(remaining.begin(), remaining.end(), rng);
        double prev = upper_bound(gt, segmentation_from_gaps(t, gaps), kind).corr.value;
        for (int g : remaining) {
            gaps.insert(g);
            double cur = upper_bound(gt, segmentation_from_gaps(t, gaps), kind).corr.value;
            CHECK(cur >= prev - 1e-12);
            prev = cur;
        }
        CHECK(prev == 1.0);
    }
}

TEST_CASE("boundary confusion hand example") {
    std::mt19937 rng(29);
    Transcript t = make_transcript(rng, 10, "bc");  // 9 gaps
    Segmentation gt = segmentation_from_gaps(t, {2, 5, 7});
    Segmentation pred = segmentation_from_gaps(t, {2, 6, 7, 8});
    BoundaryConfusion c = boundary_confusion(gt, pred, t.size());
    CHECK(c.tp == 2);  // gaps 2 and 7
    CHECK(c.fp == 2);  // gaps 6 and 8
    CHECK(c.fn == 1);  // gap 5
    CHECK(c.tn == 4);
    CHECK(c.tp + c.fp + c.fn + c.tn == t.size() - 1);
}

TEST_CASE("boundary confusion on identical segmentations has no errors") {
    std::mt19937 rng(30);
    Transcript t = make_transcript(rng, 25, "bc2");
    Segmentation s = random_segmentation(rng, t, 8);
    BoundaryConfusion c = boundary_confusion(s, s, t.size());
    CHECK(c.fp == 0);
    CHECK(c.fn == 0);
    CHECK(c.tp == s.size() - 1);
}
