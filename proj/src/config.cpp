#include "steer/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "steer/types.hpp"

namespace steer {

const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::UNKNOWN_KEY: return "UNKNOWN_KEY";
        case ErrorCode::CONSTRAINT_VIOLATION: return "CONSTRAINT_VIOLATION";
        case ErrorCode::NO_CONVERGENCE: return "NO_CONVERGENCE";
        case ErrorCode::NON_FINITE: return "NON_FINITE";
        case ErrorCode::SHAPE_MISMATCH: return "SHAPE_MISMATCH";
        case ErrorCode::CORRUPT_BLOB: return "CORRUPT_BLOB";
        case ErrorCode::CORRUPT_STREAM: return "CORRUPT_STREAM";
        case ErrorCode::CLOSED: return "CLOSED";
        case ErrorCode::TOO_FEW_POINTS: return "TOO_FEW_POINTS";
        case ErrorCode::WINDOW_EMPTY: return "WINDOW_EMPTY";
        case ErrorCode::NO_TASKS: return "NO_TASKS";
        case ErrorCode::DEADLOCK: return "DEADLOCK";
        case ErrorCode::IO_FAILURE: return "IO_FAILURE";
        case ErrorCode::MISSING_REFERENCE: return "MISSING_REFERENCE";
        case ErrorCode::MISMATCHED_WORKLOADS: return "MISMATCHED_WORKLOADS";
    }
    return "UNKNOWN";
}

const char* to_string(Policy p) {
    switch (p) {
        case Policy::ML_ONLY: return "ML_ONLY";
        case Policy::GREEDY_RMSD: return "GREEDY_RMSD";
        case Policy::ML_RMSD: return "ML_RMSD";
    }
    return "?";
}

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

struct Setter {
    std::function<bool(RunConfig&, const std::string&)> apply;  // false = bad value
};

bool parse_i64(const std::string& v, int64_t& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc() && p == v.data() + v.size();
}

bool parse_f64(const std::string& v, double& out) {
    char* end = nullptr;
    out = std::strtod(v.c_str(), &end);
    return end == v.c_str() + v.size() && !v.empty() && std::isfinite(out);
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        auto i64 = [&](const std::string& k, int64_t RunConfig::* f) {
            t[k] = {[f](RunConfig& c, const std::string& v) {
                return parse_i64(v, c.*f);
            }};
        };
        auto f64 = [&](const std::string& k, double RunConfig::* f) {
            t[k] = {[f](RunConfig& c, const std::string& v) {
                return parse_f64(v, c.*f);
            }};
        };
        t["mode"] = {[](RunConfig& c, const std::string& v) {
            if (v == "F") c.mode = Mode::F;
            else if (v == "S") c.mode = Mode::S;
            else return false;
            return true;
        }};
        i64("n_sims", &RunConfig::n_sims);
        i64("n_aggregators", &RunConfig::n_aggregators);
        i64("beads", &RunConfig::beads);
        f64("contact_cutoff", &RunConfig::contact_cutoff);
        i64("latent_dim", &RunConfig::latent_dim);
        i64("hidden_units", &RunConfig::hidden_units);
        f64("dropout", &RunConfig::dropout);
        f64("lr", &RunConfig::lr);
        f64("rho", &RunConfig::rho);
        f64("eps", &RunConfig::eps);
        i64("epochs_per_training", &RunConfig::epochs_per_training);
        i64("selection_window", &RunConfig::selection_window);
        i64("restart_count", &RunConfig::restart_count);
        t["dbscan_eps"] = {[](RunConfig& c, const std::string& v) {
            if (v == "AUTO") { c.dbscan_eps = 0.0; return true; }
            return parse_f64(v, c.dbscan_eps) && c.dbscan_eps > 0.0;
        }};
        i64("dbscan_min_pts", &RunConfig::dbscan_min_pts);
        i64("lof_k", &RunConfig::lof_k);
        i64("channel_capacity", &RunConfig::channel_capacity);
        t["compression"] = {[](RunConfig& c, const std::string& v) {
            if (v == "BITPACK_RLE") c.compression = Compression::BITPACK_RLE;
            else if (v == "NONE") c.compression = Compression::NONE;
            else return false;
            return true;
        }};
        t["coupling"] = {[](RunConfig& c, const std::string& v) {
            if (v == "STREAM") c.coupling = Coupling::STREAM;
            else if (v == "FILE") c.coupling = Coupling::FILE;
            else return false;
            return true;
        }};
        i64("budget_segments", &RunConfig::budget_segments);
        f64("budget_wall_clock", &RunConfig::budget_wall_clock);
        i64("kmeans_k", &RunConfig::kmeans_k);
        t["seed"] = {[](RunConfig& c, const std::string& v) {
            int64_t s;
            if (!parse_i64(v, s) || s < 0) return false;
            c.seed = static_cast<uint64_t>(s);
            return true;
        }};
        i64("slots", &RunConfig::slots);
        t["policy"] = {[](RunConfig& c, const std::string& v) {
            if (v == "ML_ONLY") c.policy = 0;
            else if (v == "GREEDY_RMSD") c.policy = 1;
            else if (v == "ML_RMSD") c.policy = 2;
            else return false;
            return true;
        }};
        t["clock"] = {[](RunConfig& c, const std::string& v) {
            if (v == "VIRTUAL") c.clock = ClockKind::VIRTUAL;
            else if (v == "REAL") c.clock = ClockKind::REAL;
            else return false;
            return true;
        }};
        t["workload"] = {[](RunConfig& c, const std::string& v) {
            if (v == "TOY") c.workload = Workload::TOY;
            else if (v == "SYNTHETIC") c.workload = Workload::SYNTHETIC;
            else return false;
            return true;
        }};
        f64("synthetic_sim_s", &RunConfig::synthetic_sim_s);
        f64("synthetic_agg_s", &RunConfig::synthetic_agg_s);
        f64("synthetic_train_s", &RunConfig::synthetic_train_s);
        f64("synthetic_infer_s", &RunConfig::synthetic_infer_s);
        f64("bond_k", &RunConfig::bond_k);
        f64("bond_len", &RunConfig::bond_len);
        f64("eps_nat", &RunConfig::eps_nat);
        f64("rep_eps", &RunConfig::rep_eps);
        f64("rep_sigma", &RunConfig::rep_sigma);
        f64("gamma", &RunConfig::gamma);
        f64("temperature", &RunConfig::temperature);
        f64("dt", &RunConfig::dt);
        i64("steps_per_segment", &RunConfig::steps_per_segment);
        i64("report_interval", &RunConfig::report_interval);
        f64("native_pair_cutoff", &RunConfig::native_pair_cutoff);
        return t;
    }();
    return table;
}

void check_invariants(const RunConfig& c, std::vector<ConfigViolation>& out) {
    auto bad = [&](const std::string& msg) { out.push_back({"CONSTRAINT_VIOLATION", msg}); };
    if (!(c.n_sims > c.n_aggregators)) bad("n_sims > n_aggregators required (N > M)");
    if (c.n_aggregators < 1) bad("n_aggregators >= 1 required");
    if (c.n_aggregators >= 1 && c.n_sims % c.n_aggregators != 0)
        bad("n_sims must be divisible by n_aggregators");
    if (c.beads < 2) bad("beads >= 2 required");
    if (c.latent_dim < 1) bad("latent_dim >= 1 required (d >= 1)");
    if (c.hidden_units < 1) bad("hidden_units >= 1 required");
    if (!(c.dropout >= 0.0 && c.dropout <= 1.0)) bad("dropout must be in [0,1]");
    if (!(c.lr >= 0.0)) bad("lr must be >= 0");
    if (!(c.rho > 0.0 && c.rho < 1.0)) bad("rho must be in (0,1)");
    if (!(c.eps > 0.0)) bad("eps must be positive");
    if (c.epochs_per_training < 1) bad("epochs_per_training >= 1 required");
    if (c.selection_window < 1) bad("selection_window >= 1 required");
    if (c.restart_count < 0) bad("restart_count must be >= 0");
    if (c.dbscan_eps < 0.0) bad("dbscan_eps must be positive or AUTO");
    if (c.dbscan_min_pts < 1) bad("dbscan_min_pts >= 1 required");
    if (c.lof_k < 1) bad("lof_k >= 1 required");
    if (c.channel_capacity < 1) bad("channel_capacity >= 1 required (Q >= 1)");
    if (c.budget_segments < 0) bad("budget_segments must be >= 0");
    if (c.budget_wall_clock < 0.0) bad("budget_wall_clock must be >= 0");
    if (c.budget_segments == 0 && c.budget_wall_clock == 0.0)
        bad("a budget is required (budget_segments or budget_wall_clock)");
    if (c.kmeans_k < 1) bad("kmeans_k >= 1 required");
    if (c.slots < 0) bad("slots must be >= 0 (0 = auto)");
    if (!(c.contact_cutoff > 0.0)) bad("contact_cutoff must be positive");
    if (!(c.synthetic_sim_s > 0.0 && c.synthetic_agg_s > 0.0 && c.synthetic_train_s > 0.0 &&
          c.synthetic_infer_s > 0.0))
        bad("synthetic durations must be positive");
    if (!(c.bond_k > 0.0 && c.bond_len > 0.0 && c.eps_nat > 0.0 && c.rep_eps > 0.0 &&
          c.rep_sigma > 0.0 && c.gamma > 0.0 && c.temperature >= 0.0 && c.dt > 0.0))
        bad("simulator parameters must be positive");
    if (c.steps_per_segment < 1) bad("steps_per_segment >= 1 required");
    if (c.report_interval < 1 || c.steps_per_segment % c.report_interval != 0)
        bad("report_interval must divide steps_per_segment");
    if (!(c.native_pair_cutoff > 0.0)) bad("native_pair_cutoff must be positive");
    if (c.dt * c.bond_k / c.gamma >= 0.25) bad("dt*bond_k/gamma < 0.25 stability bound violated");
}

bool apply_line(RunConfig& cfg, const std::string& line, std::vector<ConfigViolation>& out) {
    std::string s = line;
    if (auto hash = s.find('#'); hash != std::string::npos) s = s.substr(0, hash);
    s = trim(s);
    if (s.empty()) return true;
    auto eq = s.find('=');
    if (eq == std::string::npos) {
        out.push_back({"CONSTRAINT_VIOLATION", "malformed line (expected key = value): " + s});
        return false;
    }
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    auto it = setters().find(key);
    if (it == setters().end()) {
        out.push_back({"UNKNOWN_KEY", "unknown key: " + key});
        return false;
    }
    if (!it->second.apply(cfg, val)) {
        out.push_back({"CONSTRAINT_VIOLATION", "bad value for " + key + ": " + val});
        return false;
    }
    return true;
}

}  // namespace

ValidationResult validate_config(const std::string& text,
                                 const std::vector<std::string>& overrides) {
    RunConfig cfg;
    std::vector<ConfigViolation> violations;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) apply_line(cfg, line, violations);
    for (const auto& ov : overrides) apply_line(cfg, ov, violations);
    check_invariants(cfg, violations);
    if (!violations.empty()) return {std::nullopt, violations};
    return {cfg, {}};
}

ValidationResult validate_config(const std::string& text) { return validate_config(text, {}); }

std::string serialize_config(const RunConfig& c) {
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    std::ostringstream o;
    o << "mode = " << (c.mode == Mode::F ? "F" : "S") << "\n";
    o << "n_sims = " << c.n_sims << "\n";
    o << "n_aggregators = " << c.n_aggregators << "\n";
    o << "beads = " << c.beads << "\n";
    o << "contact_cutoff = " << num(c.contact_cutoff) << "\n";
    o << "latent_dim = " << c.latent_dim << "\n";
    o << "hidden_units = " << c.hidden_units << "\n";
    o << "dropout = " << num(c.dropout) << "\n";
    o << "lr = " << num(c.lr) << "\n";
    o << "rho = " << num(c.rho) << "\n";
    o << "eps = " << num(c.eps) << "\n";
    o << "epochs_per_training = " << c.epochs_per_training << "\n";
    o << "selection_window = " << c.selection_window << "\n";
    o << "restart_count = " << c.restart_count << "\n";
    if (c.dbscan_eps == 0.0) o << "dbscan_eps = AUTO\n";
    else o << "dbscan_eps = " << num(c.dbscan_eps) << "\n";
    o << "dbscan_min_pts = " << c.dbscan_min_pts << "\n";
    o << "lof_k = " << c.lof_k << "\n";
    o << "channel_capacity = " << c.channel_capacity << "\n";
    o << "compression = " << (c.compression == Compression::BITPACK_RLE ? "BITPACK_RLE" : "NONE")
      << "\n";
    o << "coupling = " << (c.coupling == Coupling::STREAM ? "STREAM" : "FILE") << "\n";
    o << "budget_segments = " << c.budget_segments << "\n";
    o << "budget_wall_clock = " << num(c.budget_wall_clock) << "\n";
    o << "kmeans_k = " << c.kmeans_k << "\n";
    o << "seed = " << c.seed << "\n";
    o << "slots = " << c.slots << "\n";
    o << "policy = " << to_string(static_cast<Policy>(c.policy)) << "\n";
    o << "clock = " << (c.clock == ClockKind::VIRTUAL ? "VIRTUAL" : "REAL") << "\n";
    o << "workload = " << (c.workload == Workload::TOY ? "TOY" : "SYNTHETIC") << "\n";
    o << "synthetic_sim_s = " << num(c.synthetic_sim_s) << "\n";
    o << "synthetic_agg_s = " << num(c.synthetic_agg_s) << "\n";
    o << "synthetic_train_s = " << num(c.synthetic_train_s) << "\n";
    o << "synthetic_infer_s = " << num(c.synthetic_infer_s) << "\n";
    o << "bond_k = " << num(c.bond_k) << "\n";
    o << "bond_len = " << num(c.bond_len) << "\n";
    o << "eps_nat = " << num(c.eps_nat) << "\n";
    o << "rep_eps = " << num(c.rep_eps) << "\n";
    o << "rep_sigma = " << num(c.rep_sigma) << "\n";
    o << "gamma = " << num(c.gamma) << "\n";
    o << "temperature = " << num(c.temperature) << "\n";
    o << "dt = " << num(c.dt) << "\n";
    o << "steps_per_segment = " << c.steps_per_segment << "\n";
    o << "report_interval = " << c.report_interval << "\n";
    o << "native_pair_cutoff = " << num(c.native_pair_cutoff) << "\n";
    return o.str();
}

}  // namespace steer
