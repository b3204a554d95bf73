#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace steer {

enum class ErrorCode {
    UNKNOWN_KEY,
    CONSTRAINT_VIOLATION,
    NO_CONVERGENCE,
    NON_FINITE,
    SHAPE_MISMATCH,
    CORRUPT_BLOB,
    CORRUPT_STREAM,
    CLOSED,
    TOO_FEW_POINTS,
    WINDOW_EMPTY,
    NO_TASKS,
    DEADLOCK,
    IO_FAILURE,
    MISSING_REFERENCE,
    MISMATCHED_WORKLOADS,
};

const char* to_string(ErrorCode c);

class SteerError : public std::runtime_error {
public:
    SteerError(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// One snapshot of all bead positions; the unit of data flow.
struct ChainFrame {
    int64_t sim_id = 0;
    int64_t segment_index = 0;
    int64_t step = 0;
    int64_t lineage_id = 0;
    Eigen::MatrixX2d positions;  // B x 2

    int beads() const { return static_cast<int>(positions.rows()); }
};

// Symmetric boolean matrix of bead pairs within a distance cutoff.
class ContactMap {
public:
    ContactMap() = default;
    explicit ContactMap(int size) : size_(size), bits_(static_cast<size_t>(size) * size, 0) {
        for (int i = 0; i < size; ++i) set(i, i, true);
    }

    int size() const { return size_; }
    bool at(int i, int j) const { return bits_[static_cast<size_t>(i) * size_ + j] != 0; }
    void set(int i, int j, bool v) {
        bits_[static_cast<size_t>(i) * size_ + j] = v;
        bits_[static_cast<size_t>(j) * size_ + i] = v;
    }

    bool operator==(const ContactMap& o) const { return size_ == o.size_ && bits_ == o.bits_; }

    // flattened row-major {0,1} values, the model input
    Eigen::VectorXd flatten() const {
        Eigen::VectorXd x(static_cast<Eigen::Index>(size_) * size_);
        for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = bits_[static_cast<size_t>(i)];
        return x;
    }

private:
    int size_ = 0;
    std::vector<uint8_t> bits_;
};

struct LatentPoint {
    Eigen::VectorXd z;
    int64_t sim_id = 0;
    int64_t segment_index = 0;
    int64_t step = 0;
    int64_t weights_version = 0;
};

enum class Policy { ML_ONLY, GREEDY_RMSD, ML_RMSD };

const char* to_string(Policy p);

struct RestartCandidate {
    ChainFrame frame;
    double rmsd = 0.0;
    double outlier_score = 0.0;  // LOF score, or 0 when the policy ignores ML
    Policy policy = Policy::ML_RMSD;
    int64_t weights_version = 0;
};

}  // namespace steer
