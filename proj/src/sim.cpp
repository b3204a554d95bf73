#include "steer/sim.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace steer::sim {

SimParams sim_params_from_config(const RunConfig& cfg) {
    SimParams p;
    p.beads = static_cast<int>(cfg.beads);
    p.bond_k = cfg.bond_k;
    p.bond_len = cfg.bond_len;
    p.eps_nat = cfg.eps_nat;
    p.rep_eps = cfg.rep_eps;
    p.rep_sigma = cfg.rep_sigma;
    p.gamma = cfg.gamma;
    p.temperature = cfg.temperature;
    p.dt = cfg.dt;
    p.steps_per_segment = cfg.steps_per_segment;
    p.report_interval = cfg.report_interval;
    return p;
}

Eigen::MatrixX2d zigzag_chain(int beads, double bond_len, uint64_t seed) {
    Eigen::MatrixX2d pos(beads, 2);
    CounterRng rng(derive_key(seed, "zigzag"));
    const double dx = bond_len * std::cos(M_PI / 6.0);
    const double dy = bond_len * std::sin(M_PI / 6.0);
    for (int i = 0; i < beads; ++i) {
        pos(i, 0) = i * dx + 1e-4 * rng.normal();
        pos(i, 1) = (i % 2 == 0 ? 0.0 : dy) + 1e-4 * rng.normal();
    }
    return pos;
}

namespace {

// pair key for the native set; i < j
std::set<std::pair<int, int>> native_set(const SimParams& p) {
    std::set<std::pair<int, int>> s;
    for (const auto& np : p.native_pairs) s.insert({std::min(np.i, np.j), std::max(np.i, np.j)});
    return s;
}

}  // namespace

double potential_energy(const Eigen::MatrixX2d& pos, const SimParams& p) {
    const int b = static_cast<int>(pos.rows());
    const auto nat = native_set(p);
    double e = 0.0;
    for (int i = 0; i + 1 < b; ++i) {
        double r = (pos.row(i) - pos.row(i + 1)).norm();
        e += p.bond_k * (r - p.bond_len) * (r - p.bond_len);
    }
    for (const auto& np : p.native_pairs) {
        double r = (pos.row(np.i) - pos.row(np.j)).norm();
        if (r == 0.0) throw SteerError(ErrorCode::NON_FINITE, "coincident native pair");
        double q = np.d_nat / r;
        double q6 = q * q * q * q * q * q;
        e += p.eps_nat * (q6 * q6 - 2.0 * q6);
    }
    for (int i = 0; i < b; ++i) {
        for (int j = i + 2; j < b; ++j) {
            if (nat.count({i, j})) continue;
            double r = (pos.row(i) - pos.row(j)).norm();
            if (r == 0.0) throw SteerError(ErrorCode::NON_FINITE, "coincident repulsive pair");
            double q = p.rep_sigma / r;
            double q6 = q * q * q * q * q * q;
            e += p.rep_eps * q6 * q6;
        }
    }
    if (!std::isfinite(e)) throw SteerError(ErrorCode::NON_FINITE, "potential energy diverged");
    return e;
}

Eigen::MatrixX2d force(const Eigen::MatrixX2d& pos, const SimParams& p) {
    const int b = static_cast<int>(pos.rows());
    const auto nat = native_set(p);
    Eigen::MatrixX2d f = Eigen::MatrixX2d::Zero(b, 2);
    auto add_pair = [&](int i, int j, double r, double dedr) {
        Eigen::RowVector2d g = (-dedr / r) * (pos.row(i) - pos.row(j));
        f.row(i) += g;
        f.row(j) -= g;
    };
    for (int i = 0; i + 1 < b; ++i) {
        double r = (pos.row(i) - pos.row(i + 1)).norm();
        add_pair(i, i + 1, r, 2.0 * p.bond_k * (r - p.bond_len));
    }
    for (const auto& np : p.native_pairs) {
        double r = (pos.row(np.i) - pos.row(np.j)).norm();
        if (r == 0.0) throw SteerError(ErrorCode::NON_FINITE, "coincident native pair");
        double q = np.d_nat / r;
        double q6 = q * q * q * q * q * q;
        add_pair(np.i, np.j, r, (-12.0 * p.eps_nat / r) * (q6 * q6 - q6));
    }
    for (int i = 0; i < b; ++i) {
        for (int j = i + 2; j < b; ++j) {
            if (nat.count({i, j})) continue;
            double r = (pos.row(i) - pos.row(j)).norm();
            if (r == 0.0) throw SteerError(ErrorCode::NON_FINITE, "coincident repulsive pair");
            double q = p.rep_sigma / r;
            double q6 = q * q * q * q * q * q;
            add_pair(i, j, r, -12.0 * p.rep_eps * q6 * q6 / r);
        }
    }
    if (!f.allFinite()) throw SteerError(ErrorCode::NON_FINITE, "force diverged");
    return f;
}

namespace {

// FIRE relaxation; plain steepest descent crawls on the stiff bond terms.
Eigen::MatrixX2d relax(Eigen::MatrixX2d x, const SimParams& p, int64_t max_iterations) {
    const double dt0 = 0.02 / std::sqrt(p.bond_k);
    const double dt_max = 10.0 * dt0;
    double dt = dt0;
    double alpha = 0.1;
    int npos = 0;
    Eigen::MatrixX2d v = Eigen::MatrixX2d::Zero(x.rows(), 2);
    for (int64_t it = 0; it < max_iterations; ++it) {
        Eigen::MatrixX2d f = force(x, p);
        if (f.cwiseAbs().maxCoeff() < 1e-8) return x;
        const double power = (f.array() * v.array()).sum();
        if (power > 0.0) {
            if (++npos > 5) {
                dt = std::min(dt * 1.1, dt_max);
                alpha *= 0.99;
            }
        } else {
            npos = 0;
            dt *= 0.5;
            alpha = 0.1;
            v.setZero();
        }
        v += dt * f;
        const double vn = v.norm();
        const double fn = f.norm();
        if (fn > 0.0) v = (1.0 - alpha) * v + (alpha * vn / fn) * f;
        x += dt * v;
        if (!x.allFinite()) throw SteerError(ErrorCode::NON_FINITE, "relaxation diverged");
    }
    throw SteerError(ErrorCode::NO_CONVERGENCE, "relaxation iteration cap reached");
}

}  // namespace

NativeReference make_native(const SimParams& params, uint64_t seed, int64_t max_iterations) {
    NativeReference ref;
    ref.positions = relax(zigzag_chain(params.beads, params.bond_len, seed), params, max_iterations);
    // rmsd band: short finite-T run from the minimizer, stats over reports
    SimParams bp = params;
    ChainFrame fr;
    fr.positions = ref.positions;
    CounterRng rng(derive_key(seed, "band"));
    std::vector<double> vals;
    for (int k = 0; k < 200; ++k) {
        for (int s = 0; s < 10; ++s) fr = step_langevin(fr, bp, rng);
        vals.push_back(rmsd_aligned(fr.positions, ref.positions));
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0.0;
    for (double v : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    ref.rmsd_band_mean = mean;
    ref.rmsd_band_std = std::sqrt(var);
    return ref;
}

ChainFrame step_langevin(const ChainFrame& frame, const SimParams& p, CounterRng& rng) {
    ChainFrame out = frame;
    Eigen::MatrixX2d f = force(frame.positions, p);
    const double drift = p.dt / p.gamma;
    const double noise = std::sqrt(2.0 * p.temperature * p.dt / p.gamma);
    for (Eigen::Index i = 0; i < out.positions.rows(); ++i) {
        for (int c = 0; c < 2; ++c)
            out.positions(i, c) += drift * f(i, c) + noise * rng.normal();
    }
    if (!out.positions.allFinite()) throw SteerError(ErrorCode::NON_FINITE, "trajectory diverged");
    out.step = frame.step + 1;
    return out;
}

TrajectorySegment run_segment(const ChainFrame& start, const SimParams& p, CounterRng& rng,
                              double contact_cutoff, const NativeReference& ref) {
    TrajectorySegment seg;
    ChainFrame fr = start;
    for (int64_t s = 1; s <= p.steps_per_segment; ++s) {
        fr = step_langevin(fr, p, rng);
        if (s % p.report_interval == 0) {
            SegmentEntry e;
            e.frame = fr;
            e.map = contact_map(fr, contact_cutoff);
            e.rmsd = rmsd_aligned(fr, ref);
            seg.entries.push_back(std::move(e));
        }
    }
    return seg;
}

ContactMap contact_map(const ChainFrame& frame, double cutoff) {
    const int b = frame.beads();
    ContactMap m(b);
    for (int i = 0; i < b; ++i)
        for (int j = i + 1; j < b; ++j)
            m.set(i, j, (frame.positions.row(i) - frame.positions.row(j)).norm() < cutoff);
    return m;
}

double rmsd_aligned(const Eigen::MatrixX2d& positions, const Eigen::MatrixX2d& ref) {
    if (positions.rows() != ref.rows())
        throw SteerError(ErrorCode::SHAPE_MISMATCH, "rmsd over mismatched bead counts");
    const double b = static_cast<double>(positions.rows());
    Eigen::MatrixX2d p = positions.rowwise() - positions.colwise().mean();
    Eigen::MatrixX2d q = ref.rowwise() - ref.colwise().mean();
    double c = 0.0, s = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        c += p(i, 0) * q(i, 0) + p(i, 1) * q(i, 1);
        s += p(i, 0) * q(i, 1) - p(i, 1) * q(i, 0);
    }
    double theta = std::atan2(s, c);
    double ss = p.squaredNorm() + q.squaredNorm() -
                2.0 * (c * std::cos(theta) + s * std::sin(theta));
    return std::sqrt(std::max(0.0, ss) / b);
}

double rmsd_aligned(const ChainFrame& frame, const NativeReference& ref) {
    return rmsd_aligned(frame.positions, ref.positions);
}

std::pair<SimParams, NativeReference> make_default_system(const RunConfig& cfg) {
    SimParams p = sim_params_from_config(cfg);
    const int b = p.beads;
    // compact spiral target with arc spacing = bond length
    Eigen::MatrixX2d spiral(b, 2);
    const double c = 1.25 * p.bond_len / (2.0 * M_PI);
    double theta = 1.0;
    for (int i = 0; i < b; ++i) {
        double r = c * theta;
        spiral(i, 0) = r * std::cos(theta);
        spiral(i, 1) = r * std::sin(theta);
        theta += p.bond_len / std::sqrt(c * c + r * r);
    }
    auto pairs_from = [&](const Eigen::MatrixX2d& pos) {
        std::vector<NativePair> pairs;
        for (int i = 0; i < b; ++i)
            for (int j = i + 3; j < b; ++j) {
                double d = (pos.row(i) - pos.row(j)).norm();
                if (d < cfg.native_pair_cutoff) pairs.push_back({i, j, d});
            }
        return pairs;
    };
    p.native_pairs = pairs_from(spiral);
    NativeReference ref = make_native(p, cfg.seed);
    // re-derive the wells from the relaxed geometry and relax once more
    p.native_pairs = pairs_from(ref.positions);
    ref = make_native(p, cfg.seed);
    return {p, ref};
}

}  // namespace steer::sim
