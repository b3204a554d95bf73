#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "steer/report.hpp"

namespace steer {

// Fixed pool of execution slots with earliest-free placement.
class ResourcePool {
  public:
    explicit ResourcePool(int64_t slots);

    int64_t slots() const { return static_cast<int64_t>(avail_.size()); }
    // Returns {slot, start}. Ties on free time go to the lowest slot id.
    std::pair<int64_t, double> schedule(double ready, double duration);
    const std::vector<std::vector<std::pair<double, double>>>& busy() const { return busy_; }

  private:
    std::vector<double> avail_;
    std::vector<std::vector<std::pair<double, double>>> busy_;
};

// Runs one full pipeline per cfg.mode, writing segments/, weights/ and the
// lineage table under run_dir. Never throws for pipeline-level failures:
// errors are reported via exit_code (2 = component fault, 3 = deadlock).
RunReport run_pipeline(const RunConfig& cfg, const std::filesystem::path& run_dir);

}  // namespace steer
