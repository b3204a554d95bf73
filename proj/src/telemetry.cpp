#include "steer/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "steer/rng.hpp"

namespace steer::telemetry {

namespace {

std::string fmt_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    return {mean, std::sqrt(var)};
}

}  // namespace

double overhead_seconds(const RunReport& rep) {
    std::map<int64_t, std::vector<const TaskRecord*>> by_slot;
    for (const auto& t : rep.tasks) by_slot[t.slot].push_back(&t);
    double overhead = 0.0;
    for (auto& [slot, tasks] : by_slot) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        double busy = 0.0;
        for (const auto* t : tasks) {
            lo = std::min(lo, t->start);
            hi = std::max(hi, t->end);
            busy += t->end - t->start;
        }
        overhead += (hi - lo) - busy;
    }
    return overhead;
}

double throughput(const RunReport& rep, TaskType type) {
    std::set<int64_t> instances;
    int64_t count = 0;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& t : rep.tasks) {
        if (t.type != type) continue;
        instances.insert(t.instance);
        ++count;
        lo = std::min(lo, t.start);
        hi = std::max(hi, t.end);
    }
    if (count == 0) throw SteerError(ErrorCode::NO_TASKS, std::string("no ") + to_string(type) + " tasks");
    const double span_h = (hi - lo) / 3600.0;
    if (span_h <= 0.0) throw SteerError(ErrorCode::NO_TASKS, "degenerate task span");
    const double per_instance = static_cast<double>(count) / static_cast<double>(instances.size());
    return per_instance / span_h;
}

std::vector<StageSummary> summarize(const RunReport& rep) {
    std::vector<StageSummary> out;
    for (TaskType type : {TaskType::SIM, TaskType::AGG, TaskType::TRAIN, TaskType::INFER}) {
        std::set<int64_t> instances;
        int64_t count = 0;
        double total = 0.0;
        for (const auto& t : rep.tasks) {
            if (t.type != type) continue;
            instances.insert(t.instance);
            ++count;
            total += t.end - t.start;
        }
        if (count == 0) continue;
        StageSummary s;
        s.type = type;
        s.instances = static_cast<int64_t>(instances.size());
        s.iterations = static_cast<double>(count) / static_cast<double>(s.instances);
        s.mean_duration = total / static_cast<double>(count);
        s.it_per_hour = throughput(rep, type);
        out.push_back(s);
    }
    return out;
}

std::string render_summary(const RunReport& rep) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-6s %9s %10s %10s %8s\n", "stage", "instances", "iters",
                  "time(s)", "it/h");
    out += buf;
    for (const auto& s : summarize(rep)) {
        std::snprintf(buf, sizeof buf, "%-6s %9lld %10.1f %10.1f %8.1f", to_string(s.type),
                      static_cast<long long>(s.instances), s.iterations, s.mean_duration,
                      s.it_per_hour);
        out += buf;
        if (s.type == TaskType::TRAIN && !rep.train_samples.empty()) {
            double mean_samples = 0.0;
            for (int64_t v : rep.train_samples) mean_samples += static_cast<double>(v);
            mean_samples /= static_cast<double>(rep.train_samples.size());
            std::snprintf(buf, sizeof buf, "  (%.0f samples; %lld epochs)", mean_samples,
                          static_cast<long long>(rep.config.epochs_per_training));
            out += buf;
        }
        out += '\n';
    }
    std::snprintf(buf, sizeof buf, "overhead(s) %.3f\n", overhead_seconds(rep));
    out += buf;
    return out;
}

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, uint64_t seed) {
    const Eigen::Index n = points.rows();
    if (n < k) throw SteerError(ErrorCode::TOO_FEW_POINTS, "fewer points than clusters");
    CounterRng rng(derive_key(seed, "kmeans"));

    auto pick_index = [&](Eigen::Index limit) {
        auto u = rng.uniform();  // (0, 1]
        auto i = static_cast<Eigen::Index>(u * static_cast<double>(limit));
        return std::min(i, limit - 1);
    };

    Eigen::MatrixXd centroids(k, points.cols());
    centroids.row(0) = points.row(pick_index(n));
    Eigen::VectorXd d2 = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        const double total = d2.sum();
        Eigen::Index chosen = 0;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            double acc = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= target) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick_index(n);
        }
        centroids.row(c) = points.row(chosen);
        d2 = d2.cwiseMin((points.rowwise() - centroids.row(c)).rowwise().squaredNorm());
    }

    std::vector<int> assign(static_cast<size_t>(n), 0);
    for (int round = 0; round < 300; ++round) {
        bool changed = false;
        std::vector<double> far_dist(static_cast<size_t>(k), -1.0);
        std::vector<Eigen::Index> far_point(static_cast<size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                double d = (points.row(i) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[static_cast<size_t>(i)] != best) {
                assign[static_cast<size_t>(i)] = best;
                changed = true;
            }
            if (best_d > far_dist[static_cast<size_t>(best)]) {
                far_dist[static_cast<size_t>(best)] = best_d;
                far_point[static_cast<size_t>(best)] = i;
            }
        }
        if (!changed && round > 0) break;
        Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int64_t> counts(static_cast<size_t>(k), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            sums.row(assign[static_cast<size_t>(i)]) += points.row(i);
            ++counts[static_cast<size_t>(assign[static_cast<size_t>(i)])];
        }
        // reseed an emptied cluster on the globally worst-fit point
        Eigen::Index worst = 0;
        double worst_d = -1.0;
        for (int c = 0; c < k; ++c)
            if (far_dist[static_cast<size_t>(c)] > worst_d) {
                worst_d = far_dist[static_cast<size_t>(c)];
                worst = far_point[static_cast<size_t>(c)];
            }
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<size_t>(c)] > 0)
                centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<size_t>(c)]);
            else
                centroids.row(c) = points.row(worst);
        }
    }
    return {std::move(centroids), std::move(assign)};
}

namespace {

std::vector<size_t> frame_order(const std::vector<FrameStat>& frames) {
    std::vector<size_t> idx(frames.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        const auto& fa = frames[a];
        const auto& fb = frames[b];
        if (fa.step != fb.step) return fa.step < fb.step;
        if (fa.sim_id != fb.sim_id) return fa.sim_id < fb.sim_id;
        return fa.segment_index < fb.segment_index;
    });
    return idx;
}

}  // namespace

std::vector<CurvePoint> best_rmsd_curve(const std::vector<FrameStat>& frames,
                                        int64_t steps_per_frame) {
    std::vector<CurvePoint> curve;
    curve.reserve(frames.size());
    double best = std::numeric_limits<double>::infinity();
    int64_t steps = 0;
    for (size_t i : frame_order(frames)) {
        best = std::min(best, frames[i].rmsd);
        steps += steps_per_frame;
        curve.push_back({static_cast<double>(steps), best});
    }
    return curve;
}

std::vector<CurvePoint> coverage_curve(const Eigen::MatrixXd& embedded,
                                       const Eigen::MatrixXd& centroids, int64_t steps_per_frame) {
    const int k = static_cast<int>(centroids.rows());
    std::vector<uint8_t> seen(static_cast<size_t>(k), 0);
    int seen_count = 0;
    std::vector<CurvePoint> curve;
    curve.reserve(static_cast<size_t>(embedded.rows()));
    int64_t steps = 0;
    for (Eigen::Index i = 0; i < embedded.rows(); ++i) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double d = (embedded.row(i) - centroids.row(c)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (!seen[static_cast<size_t>(best)]) {
            seen[static_cast<size_t>(best)] = 1;
            ++seen_count;
        }
        steps += steps_per_frame;
        curve.push_back({static_cast<double>(steps), static_cast<double>(seen_count) / k});
    }
    return curve;
}

double steps_to_coverage(const std::vector<CurvePoint>& curve, double target) {
    for (const auto& p : curve)
        if (p.y >= target) return p.x;
    return std::numeric_limits<double>::infinity();
}

std::vector<LatencyRow> read_latency_table(const RunReport& before, const RunReport& after) {
    if (before.config.workload != after.config.workload || before.config.mode != after.config.mode)
        throw SteerError(ErrorCode::MISMATCHED_WORKLOADS,
                         "latency comparison needs runs of the same shape");
    std::vector<LatencyRow> rows;
    {
        LatencyRow r;
        r.type = TaskType::TRAIN;
        std::tie(r.mean_before, r.std_before) = mean_std(before.train_acq_latency);
        std::tie(r.mean_after, r.std_after) = mean_std(after.train_acq_latency);
        rows.push_back(r);
    }
    {
        LatencyRow r;
        r.type = TaskType::INFER;
        std::tie(r.mean_before, r.std_before) = mean_std(before.infer_acq_latency);
        std::tie(r.mean_after, r.std_after) = mean_std(after.infer_acq_latency);
        rows.push_back(r);
    }
    return rows;
}

void export_timeline(const RunReport& rep, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot write " + path.string());
    f << "task_type,instance,iteration,slot,start,end\n";
    for (const auto& t : rep.tasks)
        f << to_string(t.type) << ',' << t.instance << ',' << t.iteration << ',' << t.slot << ','
          << fmt_g17(t.start) << ',' << fmt_g17(t.end) << '\n';
}

void export_curves(const std::vector<CurveRow>& rows, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot write " + path.string());
    f << "kind,x,y,trial\n";
    for (const auto& r : rows)
        f << r.kind << ',' << fmt_g17(r.x) << ',' << fmt_g17(r.y) << ',' << r.trial << '\n';
}

void export_gantt(const RunReport& rep, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot write " + path.string());
    int64_t max_slot = 0;
    double t_end = 1.0;
    for (const auto& t : rep.tasks) {
        max_slot = std::max(max_slot, t.slot);
        t_end = std::max(t_end, t.end);
    }
    const double width = 1000.0;
    const double row_h = 14.0;
    const double height = row_h * static_cast<double>(max_slot + 1) + 20.0;
    auto color = [](TaskType type) {
        switch (type) {
            case TaskType::SIM: return "#4878cf";
            case TaskType::AGG: return "#ee854a";
            case TaskType::TRAIN: return "#6acc65";
            case TaskType::INFER: return "#d65f5f";
        }
        return "#888888";
    };
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\">\n";
    for (const auto& t : rep.tasks) {
        const double x = t.start / t_end * width;
        const double w = std::max(0.5, (t.end - t.start) / t_end * width);
        const double y = 10.0 + row_h * static_cast<double>(t.slot);
        f << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\""
          << row_h - 2.0 << "\" fill=\"" << color(t.type) << "\"/>\n";
    }
    f << "</svg>\n";
}

}  // namespace steer::telemetry
