#include "steer/report.hpp"

namespace steer {

const char* to_string(TaskType t) {
    switch (t) {
        case TaskType::SIM: return "SIM";
        case TaskType::AGG: return "AGG";
        case TaskType::TRAIN: return "TRAIN";
        case TaskType::INFER: return "INFER";
    }
    return "?";
}

TaskType task_type_from(const std::string& s) {
    if (s == "SIM") return TaskType::SIM;
    if (s == "AGG") return TaskType::AGG;
    if (s == "TRAIN") return TaskType::TRAIN;
    if (s == "INFER") return TaskType::INFER;
    throw SteerError(ErrorCode::CONSTRAINT_VIOLATION, "unknown task type: " + s);
}

}  // namespace steer
