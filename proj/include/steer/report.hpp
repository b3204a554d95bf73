#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "steer/config.hpp"
#include "steer/types.hpp"

namespace steer {

enum class TaskType { SIM, AGG, TRAIN, INFER };

const char* to_string(TaskType t);
TaskType task_type_from(const std::string& s);

// One scheduled compute burst: the unit of the Fig.-3-style timeline.
struct TaskRecord {
    TaskType type = TaskType::SIM;
    int64_t instance = 0;
    int64_t iteration = 0;
    int64_t slot = 0;
    double start = 0.0;
    double end = 0.0;
};

struct FrameStat {
    double time = 0.0;  // virtual emission time
    int64_t sim_id = 0;
    int64_t segment_index = 0;
    int64_t step = 0;
    int64_t lineage_id = 0;
    double rmsd = 0.0;
    ContactMap map;
};

struct LineageNode {
    int64_t id = 0;
    int64_t parent = -1;  // -1 = initial state
    int64_t source_sim = -1;
    int64_t source_step = -1;
};

struct RunReport {
    RunConfig config;
    std::vector<TaskRecord> tasks;
    std::vector<FrameStat> frames;  // emission order
    std::vector<LineageNode> lineage;
    std::vector<double> train_acq_latency;  // real seconds per trainer iteration
    std::vector<double> infer_acq_latency;
    std::vector<int64_t> train_samples;    // samples per trainer iteration
    std::vector<int64_t> outlier_counts;   // DBSCAN outliers per inference iteration
    int64_t records_produced = 0;
    int64_t records_consumed = 0;
    double end_time = 0.0;
    int exit_code = 0;
    std::string error;
};

}  // namespace steer
