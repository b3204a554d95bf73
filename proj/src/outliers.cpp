#include "steer/outliers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <set>

namespace steer::outliers {

namespace {

std::vector<int> region_query(const Eigen::MatrixXd& pts, int i, double eps) {
    std::vector<int> out;
    for (int j = 0; j < pts.rows(); ++j)
        if ((pts.row(i) - pts.row(j)).norm() <= eps) out.push_back(j);
    return out;
}

}  // namespace

ClusterLabels dbscan(const Eigen::MatrixXd& points, double eps, int min_pts) {
    const int n = static_cast<int>(points.rows());
    ClusterLabels out;
    out.labels.assign(n, -2);  // -2 = unvisited
    out.core_flags.assign(n, 0);
    int cluster = 0;
    for (int i = 0; i < n; ++i) {
        if (out.labels[i] != -2) continue;
        auto nb = region_query(points, i, eps);
        if (static_cast<int>(nb.size()) < min_pts) {
            out.labels[i] = -1;
            continue;
        }
        const int c = cluster++;
        out.labels[i] = c;
        out.core_flags[i] = 1;
        std::deque<int> seeds(nb.begin(), nb.end());
        while (!seeds.empty()) {
            int q = seeds.front();
            seeds.pop_front();
            if (out.labels[q] == -1) out.labels[q] = c;  // border point
            if (out.labels[q] != -2) continue;
            out.labels[q] = c;
            auto nq = region_query(points, q, eps);
            if (static_cast<int>(nq.size()) >= min_pts) {
                out.core_flags[q] = 1;
                seeds.insert(seeds.end(), nq.begin(), nq.end());
            }
        }
    }
    return out;
}

double kdist_eps(const Eigen::MatrixXd& points, int k) {
    const int n = static_cast<int>(points.rows());
    if (n <= k) throw SteerError(ErrorCode::TOO_FEW_POINTS, "kdist_eps needs n > k");
    std::vector<double> kd(n);
    std::vector<double> d(n);
    for (int i = 0; i < n; ++i) {
        int m = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) d[m++] = (points.row(i) - points.row(j)).norm();
        std::nth_element(d.begin(), d.begin() + (k - 1), d.begin() + m);
        kd[i] = d[k - 1];
    }
    std::sort(kd.begin(), kd.end());
    return kd[(n - 1) / 2];  // lower median
}

std::vector<double> lof(const Eigen::MatrixXd& points, int k) {
    const int n = static_cast<int>(points.rows());
    if (n <= k || k < 1) throw SteerError(ErrorCode::TOO_FEW_POINTS, "lof needs n > k >= 1");
    // k nearest neighbors per point, ties broken by lower index
    std::vector<std::vector<int>> nbrs(n);
    std::vector<double> kdist(n);
    std::vector<std::pair<double, int>> order(n - 1);
    for (int i = 0; i < n; ++i) {
        int m = 0;
        for (int j = 0; j < n; ++j)
            if (j != i) order[m++] = {(points.row(i) - points.row(j)).norm(), j};
        std::sort(order.begin(), order.end());
        nbrs[i].reserve(k);
        for (int t = 0; t < k; ++t) nbrs[i].push_back(order[t].second);
        kdist[i] = order[k - 1].first;
    }
    std::vector<double> lrd(n);
    for (int i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int o : nbrs[i])
            sum += std::max(kdist[o], (points.row(i) - points.row(o)).norm());
        lrd[i] = sum > 0.0 ? static_cast<double>(k) / sum
                           : std::numeric_limits<double>::infinity();
    }
    std::vector<double> score(n);
    for (int i = 0; i < n; ++i) {
        if (std::isinf(lrd[i])) {
            score[i] = 1.0;  // coincident group contract
            continue;
        }
        double sum = 0.0;
        for (int o : nbrs[i]) sum += lrd[o];
        score[i] = sum / static_cast<double>(k) / lrd[i];
    }
    return score;
}

namespace {

DetectParams resolve_eps(const Eigen::MatrixXd& latents, DetectParams dp) {
    if (dp.eps <= 0.0) dp.eps = kdist_eps(latents, dp.min_pts);
    return dp;
}

RestartCandidate make_candidate(const FrameInfo& fi, double score, Policy policy,
                                int64_t weights_version) {
    RestartCandidate c;
    c.frame = fi.frame;
    c.rmsd = fi.rmsd;
    c.outlier_score = score;
    c.policy = policy;
    c.weights_version = weights_version;
    return c;
}

using SourceKey = std::pair<int64_t, int64_t>;  // (sim_id, step)

SourceKey key_of(const FrameInfo& fi) { return {fi.frame.sim_id, fi.frame.step}; }

}  // namespace

SelectionResult select_ml_only(const Eigen::MatrixXd& latents, const std::vector<FrameInfo>& frames,
                               int64_t restart_count, const DetectParams& dp0,
                               int64_t weights_version) {
    if (latents.rows() != static_cast<Eigen::Index>(frames.size()))
        throw SteerError(ErrorCode::SHAPE_MISMATCH, "latents/frames length mismatch");
    SelectionResult res;
    res.policy = Policy::ML_ONLY;
    if (restart_count == 0) return res;
    DetectParams dp = resolve_eps(latents, dp0);
    ClusterLabels cl = dbscan(latents, dp.eps, dp.min_pts);
    std::vector<double> scores = lof(latents, dp.lof_k);
    const int n = static_cast<int>(frames.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // noise points first, then the fill pool; both by LOF descending
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        bool na = cl.labels[a] == -1, nb = cl.labels[b] == -1;
        if (na != nb) return na;
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::set<SourceKey> seen;
    for (int i : idx) {
        if (static_cast<int64_t>(res.candidates.size()) >= restart_count) break;
        if (!seen.insert(key_of(frames[i])).second) continue;
        res.candidates.push_back(
            make_candidate(frames[i], scores[i], Policy::ML_ONLY, weights_version));
    }
    res.outliers_found = std::count(cl.labels.begin(), cl.labels.end(), -1);
    res.outliers_filtered = static_cast<int64_t>(res.candidates.size());
    return res;
}

SelectionResult select_greedy_rmsd(const std::vector<FrameInfo>& window, int64_t restart_count) {
    if (window.empty()) throw SteerError(ErrorCode::WINDOW_EMPTY, "greedy selection over empty window");
    SelectionResult res;
    res.policy = Policy::GREEDY_RMSD;
    const int n = static_cast<int>(window.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (window[a].rmsd != window[b].rmsd) return window[a].rmsd < window[b].rmsd;
        if (window[a].frame.step != window[b].frame.step)
            return window[a].frame.step < window[b].frame.step;
        return window[a].frame.sim_id < window[b].frame.sim_id;
    });
    std::set<SourceKey> seen;
    for (int i : idx) {
        if (static_cast<int64_t>(res.candidates.size()) >= restart_count) break;
        if (!seen.insert(key_of(window[i])).second) continue;
        res.candidates.push_back(make_candidate(window[i], 0.0, Policy::GREEDY_RMSD, 0));
    }
    return res;
}

SelectionResult select_ml_rmsd(const Eigen::MatrixXd& latents, const std::vector<FrameInfo>& frames,
                               int64_t restart_count, const DetectParams& dp0,
                               int64_t weights_version) {
    if (latents.rows() != static_cast<Eigen::Index>(frames.size()))
        throw SteerError(ErrorCode::SHAPE_MISMATCH, "latents/frames length mismatch");
    SelectionResult res;
    res.policy = Policy::ML_RMSD;
    if (restart_count == 0) return res;
    DetectParams dp = resolve_eps(latents, dp0);
    ClusterLabels cl = dbscan(latents, dp.eps, dp.min_pts);
    const int n = static_cast<int>(frames.size());
    std::vector<int> noise;
    for (int i = 0; i < n; ++i)
        if (cl.labels[i] == -1) noise.push_back(i);
    std::sort(noise.begin(), noise.end(), [&](int a, int b) {
        if (frames[a].rmsd != frames[b].rmsd) return frames[a].rmsd < frames[b].rmsd;
        if (frames[a].frame.step != frames[b].frame.step)
            return frames[a].frame.step < frames[b].frame.step;
        return frames[a].frame.sim_id < frames[b].frame.sim_id;
    });
    std::set<SourceKey> seen;
    for (int i : noise) {
        if (static_cast<int64_t>(res.candidates.size()) >= restart_count) break;
        if (!seen.insert(key_of(frames[i])).second) continue;
        res.candidates.push_back(make_candidate(frames[i], 1.0, Policy::ML_RMSD, weights_version));
    }
    res.outliers_found = static_cast<int64_t>(noise.size());
    if (static_cast<int64_t>(res.candidates.size()) < restart_count) {
        // too few noise points: fill greedily from the same window
        SelectionResult greedy = select_greedy_rmsd(frames, static_cast<int64_t>(frames.size()));
        for (const auto& c : greedy.candidates) {
            if (static_cast<int64_t>(res.candidates.size()) >= restart_count) break;
            if (!seen.insert({c.frame.sim_id, c.frame.step}).second) continue;
            res.candidates.push_back(
                make_candidate({c.frame, c.rmsd}, 0.0, Policy::ML_RMSD, weights_version));
        }
    }
    res.outliers_filtered = static_cast<int64_t>(res.candidates.size());
    return res;
}

}  // namespace steer::outliers
