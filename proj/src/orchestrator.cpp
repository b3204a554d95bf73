#include "steer/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <deque>
#include <fstream>
#include <memory>
#include <thread>

#include "steer/codec.hpp"
#include "steer/outliers.hpp"
#include "steer/rng.hpp"
#include "steer/sched.hpp"
#include "steer/sim.hpp"
#include "steer/vae.hpp"

namespace fs = std::filesystem;

namespace steer {

ResourcePool::ResourcePool(int64_t slots) {
    if (slots < 1) throw SteerError(ErrorCode::CONSTRAINT_VIOLATION, "need at least one slot");
    avail_.assign(static_cast<size_t>(slots), 0.0);
    busy_.resize(static_cast<size_t>(slots));
}

std::pair<int64_t, double> ResourcePool::schedule(double ready, double duration) {
    size_t best = 0;
    for (size_t i = 1; i < avail_.size(); ++i)
        if (avail_[i] < avail_[best]) best = i;
    double start = std::max(ready, avail_[best]);
    avail_[best] = start + duration;
    busy_[best].emplace_back(start, start + duration);
    return {static_cast<int64_t>(best), start};
}

namespace {

double wall_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

struct SimState {
    ChainFrame frame;
    CounterRng rng;
};

// Latest published weights; a stale reader just sees the previous version.
struct Mailbox {
    std::vector<uint8_t> blob;
    int64_t version = -1;
};

struct Ctx {
    const RunConfig& cfg;
    fs::path run_dir;
    RunReport rep;
    bool toy = false;
    sim::SimParams params;
    sim::NativeReference ref;
    vae::VaeModel model;  // trainer-side
    Mailbox mail;
    int64_t next_lineage = 0;
    std::vector<SimState> sims;
    std::deque<sim::SegmentEntry> window;  // outlier-search window
    outliers::DetectParams dp;
    vae::Hyper hp;
    Policy policy = Policy::ML_RMSD;
};

void init_ctx(Ctx& c, const fs::path& run_dir) {
    const RunConfig& cfg = c.cfg;
    c.run_dir = run_dir;
    fs::create_directories(run_dir / "segments");
    fs::create_directories(run_dir / "weights");
    fs::create_directories(run_dir / "telemetry");
    c.rep.config = cfg;
    c.toy = cfg.workload == Workload::TOY;
    c.policy = static_cast<Policy>(cfg.policy);
    c.dp.eps = cfg.dbscan_eps;
    c.dp.min_pts = static_cast<int>(cfg.dbscan_min_pts);
    c.dp.lof_k = static_cast<int>(cfg.lof_k);
    c.hp = {cfg.lr, cfg.rho, cfg.eps};
    const int B = static_cast<int>(cfg.beads);
    if (c.toy) {
        auto sys = sim::make_default_system(cfg);
        c.params = sys.first;
        c.ref = sys.second;
        if (c.policy != Policy::GREEDY_RMSD) {
            c.model = vae::init_model(B * B, static_cast<int>(cfg.hidden_units),
                                      static_cast<int>(cfg.latent_dim), cfg.dropout,
                                      derive_key(cfg.seed, "vae"));
            c.mail.blob = vae::export_weights(c.model);
            c.mail.version = c.model.version;
        }
    }
    for (int64_t i = 0; i < cfg.n_sims; ++i) {
        SimState s;
        s.frame.sim_id = i;
        s.frame.lineage_id = i;
        s.frame.positions = c.toy
                                ? sim::zigzag_chain(B, cfg.bond_len, derive_key(cfg.seed, "init",
                                                                                static_cast<uint64_t>(i)))
                                : Eigen::MatrixX2d::Zero(B, 2);
        s.rng = CounterRng(derive_key(cfg.seed, "sim", static_cast<uint64_t>(i),
                                      static_cast<uint64_t>(i)));
        c.sims.push_back(std::move(s));
        c.rep.lineage.push_back({i, -1, -1, -1});
    }
    c.next_lineage = cfg.n_sims;
}

std::vector<sim::SegmentEntry> produce_segment(Ctx& c, int64_t i) {
    SimState& s = c.sims[static_cast<size_t>(i)];
    std::vector<sim::SegmentEntry> out;
    if (c.toy) {
        auto seg = sim::run_segment(s.frame, c.params, s.rng, c.cfg.contact_cutoff, c.ref);
        out = std::move(seg.entries);
        s.frame = out.back().frame;
    } else {
        sim::SegmentEntry e;
        e.frame = s.frame;
        e.map = ContactMap(static_cast<int>(c.cfg.beads));
        for (int k = 0; k + 1 < e.map.size(); ++k) e.map.set(k, k + 1, true);
        out.push_back(std::move(e));
        s.frame.step += c.cfg.steps_per_segment;
    }
    s.frame.segment_index += 1;
    return out;
}

fabric::FrameRecord to_record(const Ctx& c, const sim::SegmentEntry& e) {
    fabric::FrameRecord r;
    r.sim_id = e.frame.sim_id;
    r.segment_index = e.frame.segment_index;
    r.step = e.frame.step;
    r.weights_version_hint = std::max<int64_t>(c.mail.version, 0);
    r.lineage_id = e.frame.lineage_id;
    r.compressed = c.cfg.compression == Compression::BITPACK_RLE;
    r.positions = e.frame.positions;
    r.rmsd = e.rmsd;
    r.map = e.map;
    return r;
}

void note_frame(Ctx& c, const sim::SegmentEntry& e, double t) {
    c.rep.frames.push_back(
        {t, e.frame.sim_id, e.frame.segment_index, e.frame.step, e.frame.lineage_id, e.rmsd, e.map});
}

void absorb(const Ctx& c, std::deque<sim::SegmentEntry>& win,
            const std::vector<fabric::FrameRecord>& recs) {
    for (const auto& r : recs) {
        sim::SegmentEntry e;
        e.frame.sim_id = r.sim_id;
        e.frame.segment_index = r.segment_index;
        e.frame.step = r.step;
        e.frame.lineage_id = r.lineage_id;
        e.frame.positions = r.positions;
        e.map = r.map;
        e.rmsd = r.rmsd;
        win.push_back(std::move(e));
    }
    while (static_cast<int64_t>(win.size()) > c.cfg.selection_window) win.pop_front();
}

// Retrains on the full sample window and publishes the new weights.
// Returns the wall time spent assembling the batch (the in-memory analog of
// the consumers' data-acquisition latency).
double train_now(Ctx& c, const std::deque<sim::SegmentEntry>& win) {
    if (!c.toy || c.policy == Policy::GREEDY_RMSD || win.empty()) return 0.0;
    const double w0 = wall_seconds();
    const Eigen::Index n = static_cast<Eigen::Index>(win.size());
    vae::TrainBatch batch;
    batch.inputs.resize(n, c.model.input_dim);
    batch.source_ids.reserve(win.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        batch.inputs.row(i) = win[static_cast<size_t>(i)].map.flatten().transpose();
        batch.source_ids.push_back(win[static_cast<size_t>(i)].frame.sim_id);
    }
    const double acq = wall_seconds() - w0;
    CounterRng rng(derive_key(c.cfg.seed, "train", static_cast<uint64_t>(c.model.version)));
    c.model = vae::train(c.model, batch, c.cfg.epochs_per_training, c.hp, rng);
    c.mail.blob = vae::export_weights(c.model);
    c.mail.version = c.model.version;
    std::ofstream f(c.run_dir / "weights" / ("weights_v" + std::to_string(c.model.version) + ".bin"),
                    std::ios::binary);
    f.write(reinterpret_cast<const char*>(c.mail.blob.data()),
            static_cast<std::streamsize>(c.mail.blob.size()));
    if (!f) throw SteerError(ErrorCode::IO_FAILURE, "cannot write weights blob");
    return acq;
}

outliers::SelectionResult run_selection(Ctx& c, const vae::VaeModel& m) {
    std::vector<outliers::FrameInfo> frames;
    frames.reserve(c.window.size());
    for (const auto& e : c.window) frames.push_back({e.frame, e.rmsd});
    const int64_t r = c.cfg.effective_restart_count();
    outliers::SelectionResult empty;
    empty.policy = c.policy;
    if (frames.empty()) return empty;
    if (c.policy == Policy::GREEDY_RMSD) return outliers::select_greedy_rmsd(frames, r);
    // ML scoring needs enough points for the density estimates
    const int64_t n = static_cast<int64_t>(frames.size());
    if (n <= std::max<int64_t>(c.dp.lof_k, c.dp.min_pts)) return empty;
    Eigen::MatrixXd latents(n, m.latent);
    size_t idx = 0;
    for (const auto& e : c.window) {
        latents.row(static_cast<Eigen::Index>(idx)) =
            vae::encode(m, e.map.flatten()).first.transpose();
        ++idx;
    }
    if (c.policy == Policy::ML_ONLY)
        return outliers::select_ml_only(latents, frames, r, c.dp, m.version);
    return outliers::select_ml_rmsd(latents, frames, r, c.dp, m.version);
}

void apply_restart(Ctx& c, int64_t i, const RestartCandidate& cand) {
    const int64_t nl = c.next_lineage++;
    c.rep.lineage.push_back({nl, cand.frame.lineage_id, cand.frame.sim_id, cand.frame.step});
    SimState& s = c.sims[static_cast<size_t>(i)];
    s.frame.positions = cand.frame.positions;
    s.frame.lineage_id = nl;
    // fresh RNG stream per lineage so a restarted run stays reproducible
    s.rng = CounterRng(derive_key(c.cfg.seed, "sim", static_cast<uint64_t>(i),
                                  static_cast<uint64_t>(nl)));
}

fs::path segment_path(const Ctx& c, int64_t j) {
    return c.run_dir / "segments" / ("agg_" + std::to_string(j) + ".seg");
}

// ---------------------------------------------------------------- F mode --

void run_f(Ctx& c) {
    const RunConfig& cfg = c.cfg;
    ResourcePool pool(cfg.effective_slots());
    std::vector<std::unique_ptr<fabric::SegmentWriter>> writers;
    for (int64_t j = 0; j < cfg.n_aggregators; ++j)
        writers.push_back(std::make_unique<fabric::SegmentWriter>(segment_path(c, j)));

    const double sim_d = cfg.synthetic_sim_s;
    const double train_d = cfg.synthetic_train_s;
    const double infer_d = cfg.synthetic_infer_s;
    auto pace = [&](double from, double to) {
        if (cfg.clock == ClockKind::REAL && to > from)
            std::this_thread::sleep_for(std::chrono::duration<double>(to - from));
    };

    double t = 0.0;
    int64_t iter = 0;
    while (true) {
        const bool trains = iter % 2 == 0;
        if (cfg.budget_segments > 0) {
            if (iter >= cfg.budget_segments) break;
        } else {
            const double len = sim_d + (trains ? train_d : 0.0) + infer_d;
            if (t + len > cfg.budget_wall_clock + 1e-9) break;
        }

        double stage_end = t;
        for (int64_t i = 0; i < cfg.n_sims; ++i) {
            auto [slot, start] = pool.schedule(t, sim_d);
            const double end = start + sim_d;
            c.rep.tasks.push_back({TaskType::SIM, i, iter, slot, start, end});
            stage_end = std::max(stage_end, end);
            auto entries = produce_segment(c, i);
            for (auto& e : entries) {
                note_frame(c, e, end);
                writers[static_cast<size_t>(i % cfg.n_aggregators)]->write_record(to_record(c, e));
                ++c.rep.records_produced;
                ++c.rep.records_consumed;
            }
            for (auto& e : entries) c.window.push_back(std::move(e));
            while (static_cast<int64_t>(c.window.size()) > cfg.selection_window)
                c.window.pop_front();
        }
        pace(t, stage_end);
        t = stage_end;

        if (trains) {
            auto [slot, start] = pool.schedule(t, train_d);
            c.rep.tasks.push_back({TaskType::TRAIN, 0, iter, slot, start, start + train_d});
            c.rep.train_samples.push_back(static_cast<int64_t>(c.window.size()));
            c.rep.train_acq_latency.push_back(train_now(c, c.window));
            pace(t, start + train_d);
            t = start + train_d;
        }

        {
            auto [slot, start] = pool.schedule(t, infer_d);
            c.rep.tasks.push_back({TaskType::INFER, 0, iter, slot, start, start + infer_d});
            c.rep.infer_acq_latency.push_back(0.0);
            pace(t, start + infer_d);
            t = start + infer_d;
        }
        if (c.toy) {
            auto sel = run_selection(c, c.model);
            c.rep.outlier_counts.push_back(sel.outliers_found);
            const int64_t r =
                std::min<int64_t>(cfg.effective_restart_count(),
                                  static_cast<int64_t>(sel.candidates.size()));
            for (int64_t k = 0; k < r; ++k) apply_restart(c, k % cfg.n_sims, sel.candidates[k]);
        }
        ++iter;
    }
    for (auto& w : writers) {
        w->write_end();
        w->flush();
    }
    c.rep.end_time = t;
}

// ---------------------------------------------------------------- S mode --

struct Batch {
    std::vector<fabric::FrameRecord> recs;  // stream-coupled payload
    int64_t agg_id = 0;
    int64_t count = 0;  // file-coupled notice
};

std::vector<fabric::SegmentTailReader> make_tails(const Ctx& c) {
    std::vector<fabric::SegmentTailReader> tails;
    for (int64_t j = 0; j < c.cfg.n_aggregators; ++j)
        tails.emplace_back(segment_path(c, j));
    return tails;
}

// STREAM hands the decoded records over directly; FILE re-reads them from
// the aggregator's segment file, which is where the decode cost lives.
std::vector<fabric::FrameRecord> take_batch(const Ctx& c, Batch&& b,
                                            std::vector<fabric::SegmentTailReader>& tails) {
    if (c.cfg.coupling == Coupling::STREAM) return std::move(b.recs);
    auto res = tails[static_cast<size_t>(b.agg_id)].poll();
    return std::move(res.records);
}

void collect(std::vector<fabric::FrameRecord>& into, std::vector<fabric::FrameRecord>&& more) {
    for (auto& r : more) into.push_back(std::move(r));
}

bool sim_budget_ok(const Ctx& c, const sched::Scheduler& sch, int64_t seg) {
    if (c.cfg.budget_segments > 0) return seg < c.cfg.budget_segments;
    return sch.now() + c.cfg.synthetic_sim_s <= c.cfg.budget_wall_clock + 1e-9;
}

sched::Task sim_loop(Ctx& c, sched::Scheduler& sch, int64_t i,
                     sched::Channel<fabric::FrameRecord>& out,
                     std::vector<std::deque<RestartCandidate>>& control) {
    for (int64_t seg = 0; sim_budget_ok(c, sch, seg); ++seg) {
        const double t0 = sch.now();
        co_await sch.sleep(c.cfg.synthetic_sim_s);
        auto entries = produce_segment(c, i);
        c.rep.tasks.push_back({TaskType::SIM, i, seg, i, t0, sch.now()});
        for (auto& e : entries) {
            note_frame(c, e, sch.now());
            ++c.rep.records_produced;
            co_await out.put(to_record(c, e));
        }
        auto& inbox = control[static_cast<size_t>(i)];
        if (!inbox.empty()) {
            apply_restart(c, i, inbox.back());  // latest wins
            inbox.clear();
        }
    }
    out.remove_producer();
}

sched::Task agg_loop(Ctx& c, sched::Scheduler& sch, int64_t j,
                     sched::Channel<fabric::FrameRecord>& in, sched::Channel<Batch>& to_train,
                     sched::Channel<Batch>& to_infer, fabric::SegmentWriter& writer) {
    const int64_t batch_size = c.cfg.n_sims / c.cfg.n_aggregators;
    const bool paced = c.cfg.budget_segments == 0;  // wall budget: free-running loop
    int64_t iter = 0;
    bool eos = false;
    while (!eos) {
        Batch b;
        b.agg_id = j;
        if (paced) {
            if (sch.now() + c.cfg.synthetic_agg_s > c.cfg.budget_wall_clock + 1e-9) break;
            while (auto r = in.try_get()) {
                ++c.rep.records_consumed;
                b.recs.push_back(std::move(*r));
            }
        } else {
            while (static_cast<int64_t>(b.recs.size()) < batch_size) {
                auto r = co_await in.get();
                if (!r) {
                    eos = true;
                    break;
                }
                ++c.rep.records_consumed;
                b.recs.push_back(std::move(*r));
            }
            if (b.recs.empty()) break;
        }
        const double t0 = sch.now();
        co_await sch.sleep(c.cfg.synthetic_agg_s);
        c.rep.tasks.push_back({TaskType::AGG, j, iter++, c.cfg.n_sims + j, t0, sch.now()});
        if (!b.recs.empty()) {
            for (const auto& r : b.recs) writer.write_record(r);
            writer.flush();
            b.count = static_cast<int64_t>(b.recs.size());
            if (c.cfg.coupling == Coupling::FILE) b.recs.clear();
            Batch dup = b;
            co_await to_train.put(std::move(b));
            co_await to_infer.put(std::move(dup));
        }
    }
    // a paced aggregator stops on budget; unblock any still-parked producers
    while (paced) {
        auto r = co_await in.get();
        if (!r) break;
        ++c.rep.records_consumed;
        writer.write_record(*r);
    }
    writer.write_end();
    writer.flush();
    to_train.remove_producer();
    to_infer.remove_producer();
}

sched::Task trainer_loop(Ctx& c, sched::Scheduler& sch, sched::Channel<Batch>& in) {
    const RunConfig& cfg = c.cfg;
    const int64_t slot = cfg.n_sims + cfg.n_aggregators;
    const bool paced = cfg.budget_segments == 0;  // wall budget: free-running loop
    std::deque<sim::SegmentEntry> win;
    auto tails = make_tails(c);
    int64_t iter = 0;
    while (true) {
        const double w0 = wall_seconds();
        std::vector<fabric::FrameRecord> recs;
        if (paced) {
            if (sch.now() + cfg.synthetic_train_s > cfg.budget_wall_clock + 1e-9) break;
            while (auto m = in.try_get()) collect(recs, take_batch(c, std::move(*m), tails));
        } else {
            auto first = co_await in.get();
            if (!first) break;
            collect(recs, take_batch(c, std::move(*first), tails));
            while (auto m = in.try_get()) collect(recs, take_batch(c, std::move(*m), tails));
        }
        double lat = wall_seconds() - w0;
        absorb(c, win, recs);
        const double t0 = sch.now();
        co_await sch.sleep(cfg.synthetic_train_s);
        lat += train_now(c, win);
        c.rep.tasks.push_back({TaskType::TRAIN, 0, iter++, slot, t0, sch.now()});
        c.rep.train_samples.push_back(static_cast<int64_t>(win.size()));
        c.rep.train_acq_latency.push_back(lat);
    }
    // keep draining so producers never block on a stopped consumer
    while (true) {
        auto m = co_await in.get();
        if (!m) break;
    }
}

sched::Task infer_loop(Ctx& c, sched::Scheduler& sch, sched::Channel<Batch>& in,
                       std::vector<std::deque<RestartCandidate>>& control) {
    const RunConfig& cfg = c.cfg;
    const int64_t slot = cfg.n_sims + cfg.n_aggregators + 1;
    const bool paced = cfg.budget_segments == 0;
    auto tails = make_tails(c);
    vae::VaeModel local;
    int64_t local_version = -1;
    int64_t iter = 0;
    while (true) {
        const double w0 = wall_seconds();
        std::vector<fabric::FrameRecord> recs;
        if (paced) {
            if (sch.now() + cfg.synthetic_infer_s > cfg.budget_wall_clock + 1e-9) break;
            while (auto m = in.try_get()) collect(recs, take_batch(c, std::move(*m), tails));
        } else {
            auto first = co_await in.get();
            if (!first) break;
            collect(recs, take_batch(c, std::move(*first), tails));
            while (auto m = in.try_get()) collect(recs, take_batch(c, std::move(*m), tails));
        }
        const double lat = wall_seconds() - w0;
        absorb(c, c.window, recs);
        const double t0 = sch.now();
        co_await sch.sleep(cfg.synthetic_infer_s);
        c.rep.tasks.push_back({TaskType::INFER, 0, iter++, slot, t0, sch.now()});
        c.rep.infer_acq_latency.push_back(lat);
        if (c.toy && !c.window.empty()) {
            if (c.policy != Policy::GREEDY_RMSD && c.mail.version > local_version) {
                local = vae::import_weights(c.mail.blob);
                local_version = local.version;
            }
            auto sel = run_selection(c, local);
            c.rep.outlier_counts.push_back(sel.outliers_found);
            const int64_t r =
                std::min<int64_t>(cfg.effective_restart_count(),
                                  static_cast<int64_t>(sel.candidates.size()));
            for (int64_t k = 0; k < r; ++k)
                control[static_cast<size_t>(k % cfg.n_sims)].push_back(sel.candidates[k]);
        }
    }
    while (true) {
        auto m = co_await in.get();
        if (!m) break;
    }
}

void run_s(Ctx& c) {
    const RunConfig& cfg = c.cfg;
    sched::Scheduler sch(cfg.clock == ClockKind::REAL);
    const int64_t n = cfg.n_sims;
    const int64_t m = cfg.n_aggregators;

    std::vector<std::unique_ptr<sched::Channel<fabric::FrameRecord>>> agg_in;
    for (int64_t j = 0; j < m; ++j)
        agg_in.push_back(
            std::make_unique<sched::Channel<fabric::FrameRecord>>(sch, cfg.channel_capacity));
    // Wall-budget replays model free-running consumers that read the
    // aggregated stream on their own cadence, so the batch channels must not
    // throttle the aggregators between consumer wakeups.
    const int64_t batch_cap = cfg.budget_segments == 0
                                  ? std::max(cfg.channel_capacity, cfg.n_sims)
                                  : cfg.channel_capacity;
    sched::Channel<Batch> to_train(sch, batch_cap);
    sched::Channel<Batch> to_infer(sch, batch_cap);

    std::vector<std::unique_ptr<fabric::SegmentWriter>> writers;
    for (int64_t j = 0; j < m; ++j)
        writers.push_back(std::make_unique<fabric::SegmentWriter>(segment_path(c, j)));

    std::vector<std::deque<RestartCandidate>> control(static_cast<size_t>(n));

    for (int64_t i = 0; i < n; ++i) agg_in[static_cast<size_t>(i % m)]->add_producer();
    for (int64_t j = 0; j < m; ++j) {
        to_train.add_producer();
        to_infer.add_producer();
    }

    for (int64_t i = 0; i < n; ++i)
        sch.spawn(sim_loop(c, sch, i, *agg_in[static_cast<size_t>(i % m)], control));
    for (int64_t j = 0; j < m; ++j)
        sch.spawn(agg_loop(c, sch, j, *agg_in[static_cast<size_t>(j)], to_train, to_infer,
                           *writers[static_cast<size_t>(j)]));
    sch.spawn(trainer_loop(c, sch, to_train));
    sch.spawn(infer_loop(c, sch, to_infer, control));

    sch.run();
    c.rep.end_time = sch.now();
}

void write_lineage(const Ctx& c) {
    std::ofstream f(c.run_dir / "telemetry" / "lineage.csv");
    if (!f) return;
    f << "id,parent,source_sim,source_step\n";
    for (const auto& node : c.rep.lineage)
        f << node.id << ',' << node.parent << ',' << node.source_sim << ',' << node.source_step
          << '\n';
}

}  // namespace

RunReport run_pipeline(const RunConfig& cfg, const fs::path& run_dir) {
    Ctx c{cfg};
    try {
        init_ctx(c, run_dir);
        if (cfg.mode == Mode::F)
            run_f(c);
        else
            run_s(c);
    } catch (const SteerError& e) {
        c.rep.exit_code = e.code() == ErrorCode::DEADLOCK ? 3 : 2;
        c.rep.error = e.what();
    } catch (const std::exception& e) {
        c.rep.exit_code = 2;
        c.rep.error = e.what();
    }
    write_lineage(c);
    return std::move(c.rep);
}

}  // namespace steer
