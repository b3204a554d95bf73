#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "steer/types.hpp"

namespace steer::outliers {

struct ClusterLabels {
    std::vector<int> labels;       // -1 = noise; clusters numbered in first-touch order
    std::vector<uint8_t> core_flags;
};

struct SelectionResult {
    std::vector<RestartCandidate> candidates;  // ordered by the policy's score
    Policy policy = Policy::ML_RMSD;
    int64_t outliers_found = 0;
    int64_t outliers_filtered = 0;
};

// Standard DBSCAN, Euclidean metric, points scanned in index order; border
// points join the first core cluster that reaches them.
ClusterLabels dbscan(const Eigen::MatrixXd& points, double eps, int min_pts);

// Median k-th nearest-neighbor distance; the AUTO eps heuristic.
double kdist_eps(const Eigen::MatrixXd& points, int k);

// Classic LOF scores; neighborhood ties broken by lower index. Groups of
// >= k+1 coincident points score exactly 1.0.
std::vector<double> lof(const Eigen::MatrixXd& points, int k);

struct FrameInfo {
    ChainFrame frame;
    double rmsd = 0.0;
};

struct DetectParams {
    double eps = 0.0;  // 0 = AUTO via kdist_eps(min_pts)
    int min_pts = 11;
    int lof_k = 20;
};

SelectionResult select_ml_only(const Eigen::MatrixXd& latents, const std::vector<FrameInfo>& frames,
                               int64_t restart_count, const DetectParams& dp,
                               int64_t weights_version);

SelectionResult select_greedy_rmsd(const std::vector<FrameInfo>& window, int64_t restart_count);

SelectionResult select_ml_rmsd(const Eigen::MatrixXd& latents, const std::vector<FrameInfo>& frames,
                               int64_t restart_count, const DetectParams& dp,
                               int64_t weights_version);

}  // namespace steer::outliers
