#include "meval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace meval {

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t t = i; t <= j; ++t) ranks[idx[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

CorrValue pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const size_t n = x.size();
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return {0.0, true};
    // Perfect (anti)correlation resolves exactly.
    if (sxy * sxy == sxx * syy) return {sxy > 0.0 ? 1.0 : -1.0, false};
    return {sxy / std::sqrt(sxx * syy), false};
}

void require_corr_input(const std::vector<double>& x,
                        const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("correlation: length mismatch");
    if (x.size() < 2) throw Error("correlation: need at least 2 elements");
}

// Inversions of v counted by merge sort.
long long count_inversions(std::vector<double>& v) {
    const size_t n = v.size();
    if (n < 2) return 0;
    std::vector<double> buf(n);
    long long inv = 0;
    for (size_t width = 1; width < n; width *= 2) {
        for (size_t lo = 0; lo + width < n; lo += 2 * width) {
            const size_t mid = lo + width;
            const size_t hi = std::min(lo + 2 * width, n);
            size_t a = lo, b = mid, out = lo;
            while (a < mid && b < hi) {
                if (v[b] < v[a]) {
                    inv += static_cast<long long>(mid - a);
                    buf[out++] = v[b++];
                } else {
                    buf[out++] = v[a++];
                }
            }
            while (a < mid) buf[out++] = v[a++];
            while (b < hi) buf[out++] = v[b++];
            std::copy(buf.begin() + lo, buf.begin() + hi, v.begin() + lo);
        }
    }
    return inv;
}

template <typename Key>
long long tie_pair_count(std::vector<Key> keys) {
    std::sort(keys.begin(), keys.end());
    long long pairs = 0;
    size_t i = 0;
    while (i < keys.size()) {
        size_t j = i;
        while (j + 1 < keys.size() && keys[j + 1] == keys[i]) ++j;
        const long long t = static_cast<long long>(j - i + 1);
        pairs += t * (t - 1) / 2;
        i = j + 1;
    }
    return pairs;
}

}  // namespace

CorrValue spearman(const std::vector<double>& x, const std::vector<double>& y) {
    require_corr_input(x, y);
    return pearson(average_ranks(x), average_ranks(y));
}

CorrValue kendall(const std::vector<double>& x, const std::vector<double>& y) {
    require_corr_input(x, y);
    const size_t n = x.size();
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });
    const long long total = static_cast<long long>(n) * (n - 1) / 2;
    const long long xtie = tie_pair_count(x);
    const long long ytie = tie_pair_count(y);
    std::vector<std::pair<double, double>> xy(n);
    for (size_t i = 0; i < n; ++i) xy[i] = {x[i], y[i]};
    const long long xytie = tie_pair_count(std::move(xy));
    if (xtie == total || ytie == total) return {0.0, true};
    std::vector<double> y_sorted(n);
    for (size_t i = 0; i < n; ++i) y_sorted[i] = y[idx[i]];
    const long long discordant = count_inversions(y_sorted);
    const long long num = total - xtie - ytie + xytie - 2 * discordant;
    const long long denom_sq = (total - xtie) * (total - ytie);
    if (num * num == denom_sq) return {num > 0 ? 1.0 : (num < 0 ? -1.0 : 0.0), false};
    return {static_cast<double>(num) / std::sqrt(static_cast<double>(denom_sq)),
            false};
}

CorrValue correlation(CorrKind kind, const std::vector<double>& x,
                      const std::vector<double>& y) {
    return kind == CorrKind::spearman ? spearman(x, y) : kendall(x, y);
}

int SegMetricConfig::resolve(int n, int ref_segments) const {
    if (window > 0) return window;
    if (ref_segments <= 0) throw Error("segmentation metric: empty reference");
    const int k = static_cast<int>(
        std::lround(static_cast<double>(n) / (2.0 * ref_segments)));
    return std::max(2, k);
}

namespace {

// Segment index per utterance position.
std::vector<int> segment_index_of(const Segmentation& s, int n) {
    std::vector<int> out(n, -1);
    for (size_t i = 0; i < s.segments.size(); ++i) {
        for (int u = s.segments[i].start_id; u <= s.segments[i].end_id; ++u) {
            if (u < 0 || u >= n) throw Error("segmentation metric: utterance id out of range");
            out[u] = static_cast<int>(i);
        }
    }
    for (int v : out) {
        if (v < 0) throw Error("segmentation metric: segmentation does not cover transcript");
    }
    return out;
}

}  // namespace

double pk(const Segmentation& ref, const Segmentation& hyp, int n,
          const SegMetricConfig& cfg) {
    const int k = cfg.resolve(n, ref.size());
    if (n <= k) throw Error("pk: transcript shorter than window");
    const auto r = segment_index_of(ref, n);
    const auto h = segment_index_of(hyp, n);
    int errors = 0;
    for (int i = 0; i + k < n; ++i) {
        const bool same_ref = r[i] == r[i + k];
        const bool same_hyp = h[i] == h[i + k];
        if (same_ref != same_hyp) ++errors;
    }
    return static_cast<double>(errors) / (n - k);
}

double window_diff(const Segmentation& ref, const Segmentation& hyp, int n,
                   const SegMetricConfig& cfg) {
    const int k = cfg.resolve(n, ref.size());
    if (n <= k) throw Error("window_diff: transcript shorter than window");
    const auto r = segment_index_of(ref, n);
    const auto h = segment_index_of(hyp, n);
    auto boundaries_in = [&](const std::vector<int>& seg, int lo, int hi) {
        int b = 0;
        for (int g = lo; g < hi; ++g) {
            if (seg[g] != seg[g + 1]) ++b;
        }
        return b;
    };
    int errors = 0;
    for (int i = 0; i + k < n; ++i) {
        if (boundaries_in(r, i, i + k) != boundaries_in(h, i, i + k)) ++errors;
    }
    return static_cast<double>(errors) / (n - k);
}

IccValue icc_2k(const AnnotationMatrix& m) {
    const int n = m.segment_count();
    const int k = m.rater_count();
    if (n < 2 || k < 2) throw Error("icc_2k: need at least 2 subjects and 2 raters");
    for (const auto& row : m.ratings) {
        if (static_cast<int>(row.size()) != k) throw Error("icc_2k: incomplete matrix");
    }
    double grand = 0.0;
    std::vector<double> row_mean(n, 0.0), col_mean(k, 0.0);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            const double v = m.ratings[i][j];
            grand += v;
            row_mean[i] += v;
            col_mean[j] += v;
        }
    }
    grand /= n * k;
    for (double& v : row_mean) v /= k;
    for (double& v : col_mean) v /= n;

    double ss_rows = 0.0, ss_cols = 0.0, ss_res = 0.0;
    for (int i = 0; i < n; ++i) {
        ss_rows += (row_mean[i] - grand) * (row_mean[i] - grand);
    }
    ss_rows *= k;
    for (int j = 0; j < k; ++j) {
        ss_cols += (col_mean[j] - grand) * (col_mean[j] - grand);
    }
    ss_cols *= n;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < k; ++j) {
            const double r = m.ratings[i][j] - row_mean[i] - col_mean[j] + grand;
            ss_res += r * r;
        }
    }
    const double msr = ss_rows / (n - 1);
    const double msc = ss_cols / (k - 1);
    const double mse = ss_res / (static_cast<double>(n - 1) * (k - 1));
    const double denom = msr + (msc - mse) / n;
    if (msr <= 1e-12 || std::abs(denom) <= 1e-12) return {0.0, true};
    return {(msr - mse) / denom, false};
}

namespace {

bool augment(int p, const std::vector<std::vector<int>>& adj,
             std::vector<int>& slot_of_pred, std::vector<int>& pred_of_slot,
             std::vector<bool>& visited) {
    for (int s : adj[p]) {
        if (visited[s]) continue;
        visited[s] = true;
        if (pred_of_slot[s] < 0 ||
            augment(pred_of_slot[s], adj, slot_of_pred, pred_of_slot, visited)) {
            slot_of_pred[p] = s;
            pred_of_slot[s] = p;
            return true;
        }
    }
    return false;
}

}  // namespace

MatchResult match_objectives(const ObjectiveSet& pred,
                             const ObjectiveGroundTruth& gt) {
    std::vector<int> labels(pred.labels.begin(), pred.labels.end());
    const int np = static_cast<int>(labels.size());
    const int ns = static_cast<int>(gt.size());
    std::vector<std::vector<int>> adj(np);
    for (int p = 0; p < np; ++p) {
        for (int s = 0; s < ns; ++s) {
            if (gt[s].allowed_labels.count(labels[p])) adj[p].push_back(s);
        }
    }
    std::vector<int> slot_of_pred(np, -1), pred_of_slot(ns, -1);
    for (int p = 0; p < np; ++p) {
        std::vector<bool> visited(ns, false);
        augment(p, adj, slot_of_pred, pred_of_slot, visited);
    }
    MatchResult r;
    for (int p = 0; p < np; ++p) {
        if (slot_of_pred[p] >= 0) {
            r.matched_pairs.emplace_back(labels[p], slot_of_pred[p]);
        }
    }
    r.tp = static_cast<int>(r.matched_pairs.size());
    r.fp = np - r.tp;
    r.fn = ns - r.tp;
    return r;
}

ObjectiveMetrics objective_metrics(const std::vector<MatchResult>& results) {
    if (results.empty()) throw Error("objective_metrics: empty input");
    long long tp = 0, fp = 0, fn = 0;
    for (const MatchResult& r : results) {
        tp += r.tp;
        fp += r.fp;
        fn += r.fn;
    }
    ObjectiveMetrics out;
    out.hamming_loss = static_cast<double>(fp + fn) /
                       (19.0 * static_cast<double>(results.size()));
    const double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom == 0.0) {
        out.micro_f1 = 0.0;
        out.degenerate = true;
    } else {
        out.micro_f1 = 2.0 * static_cast<double>(tp) / denom;
    }
    return out;
}

CorrelationMatrix pairwise_correlation_matrix(const std::vector<NamedScores>& runs,
                                              CorrKind kind) {
    const size_t m = runs.size();
    for (const NamedScores& r : runs) {
        if (r.values.size() != runs.front().values.size()) {
            throw Error("pairwise_correlation_matrix: length mismatch");
        }
    }
    CorrelationMatrix out;
    out.values.assign(m, std::vector<CorrValue>(m));
    for (const NamedScores& r : runs) out.names.push_back(r.name);
    for (size_t i = 0; i < m; ++i) {
        out.values[i][i] = {1.0, false};
        for (size_t j = i + 1; j < m; ++j) {
            const CorrValue c = correlation(kind, runs[i].values, runs[j].values);
            out.values[i][j] = c;
            out.values[j][i] = c;
        }
    }
    return out;
}

}  // namespace meval
