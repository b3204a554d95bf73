#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "steer/report.hpp"

namespace steer::telemetry {

// Total idle time inside the slots' allocation spans: for every slot, the
// span from its first task start to its last task end, minus busy time.
double overhead_seconds(const RunReport& rep);

// Iterations per hour per instance of the given task type over its active
// span. Throws NO_TASKS when the report has no task of that type.
double throughput(const RunReport& rep, TaskType type);

struct StageSummary {
    TaskType type = TaskType::SIM;
    int64_t instances = 0;
    double iterations = 0.0;     // per instance
    double mean_duration = 0.0;  // seconds
    double it_per_hour = 0.0;
};

std::vector<StageSummary> summarize(const RunReport& rep);
std::string render_summary(const RunReport& rep);

struct KmeansResult {
    Eigen::MatrixXd centroids;  // k x d
    std::vector<int> assignment;
};

// k-means++ seeding, Lloyd iterations (<= 300); an emptied cluster is
// reseeded on the point farthest from its centroid. Throws TOO_FEW_POINTS
// when n < k.
KmeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed);

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

// Prefix-minimum RMSD against aggregate simulated steps; frames are ordered
// by (step, sim_id) and each contributes steps_per_frame to the x axis.
std::vector<CurvePoint> best_rmsd_curve(const std::vector<FrameStat>& frames,
                                        int64_t steps_per_frame);

// Fraction of reference centroids visited after each embedded frame.
// `embedded` rows follow the same (step, sim_id) frame order.
std::vector<CurvePoint> coverage_curve(const Eigen::MatrixXd& embedded,
                                       const Eigen::MatrixXd& centroids, int64_t steps_per_frame);

// First x where the curve reaches `target`; +inf when it never does.
double steps_to_coverage(const std::vector<CurvePoint>& curve, double target);

struct LatencyRow {
    TaskType type = TaskType::TRAIN;
    double mean_before = 0.0;
    double std_before = 0.0;
    double mean_after = 0.0;
    double std_after = 0.0;
};

// Data-acquisition latency, file-coupled run vs stream-coupled run.
// Throws MISMATCHED_WORKLOADS unless the two runs are comparable.
std::vector<LatencyRow> read_latency_table(const RunReport& before, const RunReport& after);

struct CurveRow {
    std::string kind;
    double x = 0.0;
    double y = 0.0;
    int64_t trial = 0;
};

void export_timeline(const RunReport& rep, const std::filesystem::path& path);
void export_curves(const std::vector<CurveRow>& rows, const std::filesystem::path& path);
void export_gantt(const RunReport& rep, const std::filesystem::path& path);

}  // namespace steer::telemetry
