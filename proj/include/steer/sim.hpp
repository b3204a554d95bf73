#pragma once

#include <tuple>
#include <vector>

#include "steer/config.hpp"
#include "steer/rng.hpp"
#include "steer/types.hpp"

namespace steer::sim {

struct NativePair {
    int i = 0;
    int j = 0;       // |i - j| >= 3
    double d_nat = 0.0;
};

// Go-style bead-chain parameters: harmonic bonds, native-pair 12-6 wells,
// short-range repulsion, overdamped Langevin dynamics.
struct SimParams {
    int beads = 28;
    double bond_k = 100.0;
    double bond_len = 1.0;
    std::vector<NativePair> native_pairs;
    double eps_nat = 1.0;
    double rep_eps = 1.0;
    double rep_sigma = 0.8;
    double gamma = 1.0;
    double temperature = 0.2;
    double dt = 0.001;
    int64_t steps_per_segment = 400;
    int64_t report_interval = 40;
};

struct NativeReference {
    Eigen::MatrixX2d positions;
    double rmsd_band_mean = 0.0;
    double rmsd_band_std = 0.0;
};

struct SegmentEntry {
    ChainFrame frame;
    ContactMap map;
    double rmsd = 0.0;
};

struct TrajectorySegment {
    std::vector<SegmentEntry> entries;
};

SimParams sim_params_from_config(const RunConfig& cfg);

// Deterministic extended starting chain; seed adds a tiny jitter so the
// zero-temperature relaxation breaks ties reproducibly.
Eigen::MatrixX2d zigzag_chain(int beads, double bond_len, uint64_t seed);

double potential_energy(const Eigen::MatrixX2d& positions, const SimParams& params);

Eigen::MatrixX2d force(const Eigen::MatrixX2d& positions, const SimParams& params);

// Zero-temperature relaxation from the zig-zag chain; the minimizer defines
// the toy system's folded state. Throws NO_CONVERGENCE past the iteration cap.
NativeReference make_native(const SimParams& params, uint64_t seed,
                            int64_t max_iterations = 2000000);

// Euler-Maruyama overdamped update; deterministic given (frame, params, rng).
ChainFrame step_langevin(const ChainFrame& frame, const SimParams& params, CounterRng& rng);

TrajectorySegment run_segment(const ChainFrame& start, const SimParams& params, CounterRng& rng,
                              double contact_cutoff, const NativeReference& ref);

ContactMap contact_map(const ChainFrame& frame, double cutoff);

// Minimum RMSD over 2-D rigid motions (rotation + translation), closed form.
double rmsd_aligned(const Eigen::MatrixX2d& positions, const Eigen::MatrixX2d& ref);
double rmsd_aligned(const ChainFrame& frame, const NativeReference& ref);

// Default system: native pairs taken from a compact spiral target, then
// re-derived from the relaxed reference so the wells match its geometry.
std::pair<SimParams, NativeReference> make_default_system(const RunConfig& cfg);

}  // namespace steer::sim
