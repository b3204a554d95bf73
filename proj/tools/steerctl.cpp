// steerctl: run and inspect steered-ensemble pipelines.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "steer/codec.hpp"
#include "steer/orchestrator.hpp"
#include "steer/rng.hpp"
#include "steer/sim.hpp"
#include "steer/telemetry.hpp"
#include "steer/vae.hpp"

namespace fs = std::filesystem;
using namespace steer;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream f(p);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot read " + p.string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

RunConfig load_config(const std::string& config_path, const std::vector<std::string>& sets) {
    std::string text = config_path.empty() ? std::string{} : read_file(config_path);
    auto vr = validate_config(text, sets);
    if (!vr.ok()) {
        for (const auto& v : vr.violations)
            std::cerr << v.code << ": " << v.message << "\n";
        std::exit(1);
    }
    return *vr.config;
}

void write_matrix(const fs::path& p, const Eigen::MatrixXd& m) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot write " + p.string());
    int64_t rows = m.rows(), cols = m.cols();
    f.write(reinterpret_cast<const char*>(&rows), 8);
    f.write(reinterpret_cast<const char*>(&cols), 8);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) {
            double v = m(i, j);
            f.write(reinterpret_cast<const char*>(&v), 8);
        }
}

Eigen::MatrixXd read_matrix(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot read " + p.string());
    int64_t rows = 0, cols = 0;
    f.read(reinterpret_cast<char*>(&rows), 8);
    f.read(reinterpret_cast<char*>(&cols), 8);
    Eigen::MatrixXd m(rows, cols);
    for (int64_t i = 0; i < rows; ++i)
        for (int64_t j = 0; j < cols; ++j) {
            double v = 0;
            f.read(reinterpret_cast<char*>(&v), 8);
            m(i, j) = v;
        }
    if (!f) throw SteerError(ErrorCode::CORRUPT_BLOB, "truncated matrix in " + p.string());
    return m;
}

std::vector<uint8_t> read_blob(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot read " + p.string());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// rebuilds the task list from a saved timeline.csv
RunReport load_timeline(const fs::path& run_dir) {
    RunReport rep;
    std::ifstream f(run_dir / "telemetry" / "timeline.csv");
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "no timeline in " + run_dir.string());
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        std::string type, field;
        TaskRecord t;
        std::getline(ss, type, ',');
        t.type = task_type_from(type);
        std::getline(ss, field, ',');
        t.instance = std::stoll(field);
        std::getline(ss, field, ',');
        t.iteration = std::stoll(field);
        std::getline(ss, field, ',');
        t.slot = std::stoll(field);
        std::getline(ss, field, ',');
        t.start = std::stod(field);
        std::getline(ss, field, ',');
        t.end = std::stod(field);
        rep.tasks.push_back(t);
    }
    auto cfg_path = run_dir / "config.txt";
    if (fs::exists(cfg_path)) {
        auto vr = validate_config(read_file(cfg_path));
        if (vr.ok()) rep.config = *vr.config;
    }
    return rep;
}

std::vector<telemetry::CurveRow> load_curves(const fs::path& run_dir) {
    std::vector<telemetry::CurveRow> rows;
    std::ifstream f(run_dir / "telemetry" / "curves.csv");
    if (!f) return rows;
    std::string line;
    std::getline(f, line);
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        telemetry::CurveRow r;
        std::string field;
        std::getline(ss, r.kind, ',');
        std::getline(ss, field, ',');
        r.x = std::stod(field);
        std::getline(ss, field, ',');
        r.y = std::stod(field);
        std::getline(ss, field, ',');
        r.trial = std::stoll(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

Eigen::MatrixXd embed_frames(const vae::VaeModel& m, const std::vector<FrameStat>& frames) {
    // same (step, sim_id) order the curves use
    std::vector<size_t> idx(frames.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (frames[a].step != frames[b].step) return frames[a].step < frames[b].step;
        return frames[a].sim_id < frames[b].sim_id;
    });
    Eigen::MatrixXd out(static_cast<Eigen::Index>(frames.size()), m.latent);
    for (size_t i = 0; i < idx.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) =
            vae::encode(m, frames[idx[i]].map.flatten()).first.transpose();
    return out;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            const std::vector<std::string>& sets, const std::string& reference) {
    RunConfig cfg = load_config(config_path, sets);
    fs::path out(out_dir);
    RunReport rep = run_pipeline(cfg, out);

    std::ofstream(out / "config.txt") << serialize_config(cfg);
    telemetry::export_timeline(rep, out / "telemetry" / "timeline.csv");
    telemetry::export_gantt(rep, out / "telemetry" / "gantt.svg");

    std::vector<telemetry::CurveRow> curves;
    for (const auto& p : telemetry::best_rmsd_curve(rep.frames, cfg.report_interval))
        curves.push_back({"best_rmsd", p.x, p.y, 0});
    if (!reference.empty() && !rep.frames.empty()) {
        fs::path ref(reference);
        auto model = vae::import_weights(read_blob(ref / "weights.bin"));
        auto centroids = read_matrix(ref / "centroids.bin");
        auto emb = embed_frames(model, rep.frames);
        for (const auto& p : telemetry::coverage_curve(emb, centroids, cfg.report_interval))
            curves.push_back({"coverage", p.x, p.y, 0});
    }
    telemetry::export_curves(curves, out / "telemetry" / "curves.csv");

    std::string summary = telemetry::render_summary(rep);
    std::ofstream(out / "telemetry" / "summary.txt") << summary;
    std::cout << summary;
    if (rep.exit_code != 0) std::cerr << "pipeline failed: " << rep.error << "\n";
    return rep.exit_code;
}

// Unsteered reference ensemble: plain segments, one training pass, k-means
// centroids over the embedding. Everything downstream measures against this
// frozen landscape.
int cmd_oracle(const std::string& config_path, const std::string& out_dir,
               const std::vector<std::string>& sets) {
    RunConfig cfg = load_config(config_path, sets);
    fs::path out(out_dir);
    fs::create_directories(out);

    auto sys = sim::make_default_system(cfg);
    std::vector<sim::SegmentEntry> entries;
    for (int64_t i = 0; i < cfg.n_sims; ++i) {
        ChainFrame fr;
        fr.sim_id = i;
        fr.lineage_id = i;
        fr.positions = sim::zigzag_chain(static_cast<int>(cfg.beads), cfg.bond_len,
                                         derive_key(cfg.seed, "init", static_cast<uint64_t>(i)));
        CounterRng rng(derive_key(cfg.seed, "sim", static_cast<uint64_t>(i),
                                  static_cast<uint64_t>(i)));
        for (int64_t seg = 0; seg < cfg.budget_segments; ++seg) {
            auto ts = sim::run_segment(fr, sys.first, rng, cfg.contact_cutoff, sys.second);
            fr = ts.entries.back().frame;
            fr.segment_index += 1;
            for (auto& e : ts.entries) entries.push_back(std::move(e));
        }
    }
    if (entries.empty()) throw SteerError(ErrorCode::WINDOW_EMPTY, "oracle produced no frames");

    const int p = static_cast<int>(cfg.beads * cfg.beads);
    vae::TrainBatch batch;
    batch.inputs.resize(static_cast<Eigen::Index>(entries.size()), p);
    for (size_t i = 0; i < entries.size(); ++i) {
        batch.inputs.row(static_cast<Eigen::Index>(i)) = entries[i].map.flatten().transpose();
        batch.source_ids.push_back(entries[i].frame.sim_id);
    }
    auto model = vae::init_model(p, static_cast<int>(cfg.hidden_units),
                                 static_cast<int>(cfg.latent_dim), cfg.dropout,
                                 derive_key(cfg.seed, "vae"));
    CounterRng trng(derive_key(cfg.seed, "train", 0));
    vae::Hyper hp{cfg.lr, cfg.rho, cfg.eps};
    model = vae::train(model, batch, cfg.epochs_per_training, hp, trng);

    Eigen::MatrixXd emb(batch.inputs.rows(), model.latent);
    for (Eigen::Index i = 0; i < emb.rows(); ++i)
        emb.row(i) = vae::encode(model, batch.inputs.row(i).transpose()).first.transpose();
    auto km = telemetry::kmeans(emb, static_cast<int>(cfg.kmeans_k), cfg.seed);

    auto blob = vae::export_weights(model);
    std::ofstream wf(out / "weights.bin", std::ios::binary);
    wf.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
    write_matrix(out / "centroids.bin", km.centroids);
    std::cout << "reference: " << entries.size() << " frames, " << cfg.kmeans_k << " centroids -> "
              << out_dir << "\n";
    return 0;
}

int cmd_report(const std::string& run_dir) {
    auto rep = load_timeline(run_dir);
    std::cout << telemetry::render_summary(rep);
    return 0;
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b) {
    auto a = load_timeline(dir_a);
    auto b = load_timeline(dir_b);
    std::cout << "stage        A it/h     B it/h      B/A\n";
    for (TaskType type : {TaskType::SIM, TaskType::AGG, TaskType::TRAIN, TaskType::INFER}) {
        double ta = 0, tb = 0;
        bool ha = true, hb = true;
        try {
            ta = telemetry::throughput(a, type);
        } catch (const SteerError&) {
            ha = false;
        }
        try {
            tb = telemetry::throughput(b, type);
        } catch (const SteerError&) {
            hb = false;
        }
        if (!ha && !hb) continue;
        char buf[160];
        if (ha && hb)
            std::snprintf(buf, sizeof buf, "%-6s %10.2f %10.2f %8.2f\n", to_string(type), ta, tb,
                          tb / ta);
        else
            std::snprintf(buf, sizeof buf, "%-6s %10s %10s %8s\n", to_string(type),
                          ha ? "yes" : "-", hb ? "yes" : "-", "-");
        std::cout << buf;
    }

    auto curves_a = load_curves(dir_a);
    auto curves_b = load_curves(dir_b);
    auto last_of = [](const std::vector<telemetry::CurveRow>& rows, const std::string& kind) {
        double v = std::numeric_limits<double>::quiet_NaN();
        for (const auto& r : rows)
            if (r.kind == kind) v = r.y;
        return v;
    };
    double ra = last_of(curves_a, "best_rmsd"), rb = last_of(curves_b, "best_rmsd");
    if (!std::isnan(ra) && !std::isnan(rb))
        std::cout << "best rmsd    A " << ra << "   B " << rb << "\n";

    auto cross = [](const std::vector<telemetry::CurveRow>& rows) {
        std::vector<telemetry::CurvePoint> c;
        for (const auto& r : rows)
            if (r.kind == "coverage") c.push_back({r.x, r.y});
        return telemetry::steps_to_coverage(c, 0.8);
    };
    double xa = cross(curves_a), xb = cross(curves_b);
    if (std::isfinite(xa) || std::isfinite(xb))
        std::cout << "steps to 80% coverage    A " << xa << "   B " << xb << "\n";
    return 0;
}

int cmd_validate(const std::string& config_path, const std::vector<std::string>& sets) {
    std::string text = config_path.empty() ? std::string{} : read_file(config_path);
    auto vr = validate_config(text, sets);
    if (!vr.ok()) {
        for (const auto& v : vr.violations)
            std::cout << v.code << ": " << v.message << "\n";
        return 1;
    }
    std::cout << serialize_config(*vr.config);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"steered ensemble pipeline driver"};
    app.require_subcommand(1);

    std::string config_path, out_dir, run_dir, dir_a, dir_b, reference;
    std::vector<std::string> sets;

    auto* run = app.add_subcommand("run", "execute a pipeline");
    run->add_option("--config", config_path, "config file");
    run->add_option("--out", out_dir, "run directory")->required();
    run->add_option("--set", sets, "key=value override");
    run->add_option("--reference", reference, "oracle directory for coverage curves");

    auto* oracle = app.add_subcommand("oracle", "build the unsteered reference landscape");
    oracle->add_option("--config", config_path, "config file");
    oracle->add_option("--out", out_dir, "output directory")->required();
    oracle->add_option("--set", sets, "key=value override");

    auto* report = app.add_subcommand("report", "summarize a finished run");
    report->add_option("--run", run_dir, "run directory")->required();

    auto* compare = app.add_subcommand("compare", "compare two finished runs");
    compare->add_option("--a", dir_a, "first run directory")->required();
    compare->add_option("--b", dir_b, "second run directory")->required();

    auto* validate = app.add_subcommand("validate", "check a config document");
    validate->add_option("--config", config_path, "config file");
    validate->add_option("--set", sets, "key=value override");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(config_path, out_dir, sets, reference);
        if (oracle->parsed()) return cmd_oracle(config_path, out_dir, sets);
        if (report->parsed()) return cmd_report(run_dir);
        if (compare->parsed()) return cmd_compare(dir_a, dir_b);
        if (validate->parsed()) return cmd_validate(config_path, sets);
    } catch (const SteerError& e) {
        std::cerr << e.what() << "\n";
        return e.code() == ErrorCode::DEADLOCK ? 3 : 2;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return 0;
}
