#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace steer {

enum class Mode { F, S };
enum class Compression { BITPACK_RLE, NONE };
enum class Coupling { STREAM, FILE };
enum class ClockKind { VIRTUAL, REAL };
enum class Workload { TOY, SYNTHETIC };
enum class Policy;

// Fully-defaulted run configuration. Field names double as the config-file
// keys (flat `key = value` lines, `#` comments).
struct RunConfig {
    Mode mode = Mode::S;
    int64_t n_sims = 8;          // N
    int64_t n_aggregators = 2;   // M
    int64_t beads = 28;          // B
    double contact_cutoff = 2.1;
    int64_t latent_dim = 10;     // d
    int64_t hidden_units = 128;  // h
    double dropout = 0.4;
    double lr = 0.001;
    double rho = 0.9;
    double eps = 1e-8;
    int64_t epochs_per_training = 50;
    int64_t selection_window = 20000;  // W, also the trainer sample window
    int64_t restart_count = 0;         // R; 0 = default to N
    double dbscan_eps = 0.0;           // 0 = AUTO via k-distance heuristic
    int64_t dbscan_min_pts = 11;
    int64_t lof_k = 20;
    int64_t channel_capacity = 4;  // Q
    Compression compression = Compression::BITPACK_RLE;
    Coupling coupling = Coupling::STREAM;
    int64_t budget_segments = 8;    // segments per simulation; 0 = use wall clock
    double budget_wall_clock = 0.0; // virtual seconds; 0 = use segments
    int64_t kmeans_k = 50;
    uint64_t seed = 1;
    int64_t slots = 0;  // resource slots; 0 = auto (N for F, N+M+2 for S)
    int policy = 2;     // Policy enum value; ML_RMSD by default
    ClockKind clock = ClockKind::VIRTUAL;
    Workload workload = Workload::TOY;

    // virtual task durations (seconds); Table-style synthetic replay knobs
    double synthetic_sim_s = 576.0;
    double synthetic_agg_s = 3.2;
    double synthetic_train_s = 216.0;
    double synthetic_infer_s = 13.0;

    // toy simulator parameters
    double bond_k = 100.0;
    double bond_len = 1.0;
    double eps_nat = 1.0;
    double rep_eps = 1.0;
    double rep_sigma = 0.8;
    double gamma = 1.0;
    double temperature = 0.2;
    double dt = 0.001;
    int64_t steps_per_segment = 400;
    int64_t report_interval = 40;
    double native_pair_cutoff = 2.2;

    int64_t effective_restart_count() const { return restart_count > 0 ? restart_count : n_sims; }
    int64_t effective_slots() const {
        if (slots > 0) return slots;
        return mode == Mode::F ? n_sims : n_sims + n_aggregators + 2;
    }
};

struct ConfigViolation {
    std::string code;  // UNKNOWN_KEY or CONSTRAINT_VIOLATION
    std::string message;
};

struct ValidationResult {
    std::optional<RunConfig> config;
    std::vector<ConfigViolation> violations;
    bool ok() const { return config.has_value(); }
};

// Parses the flat key=value document and validates every invariant.
// Either yields a fully-defaulted config or the complete violation list;
// defaults are never partially applied.
ValidationResult validate_config(const std::string& text);

// Applies `key=value` overrides on top of a document before validation.
ValidationResult validate_config(const std::string& text,
                                 const std::vector<std::string>& overrides);

std::string serialize_config(const RunConfig& cfg);

}  // namespace steer
