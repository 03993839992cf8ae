#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace mmofl {

enum class StrategyKind { FC, IS, ZP, PNR, PQ, BQ, PLR, QQR };

StrategyKind parse_strategy(const std::string& name);
std::string to_string(StrategyKind kind);

struct Strategy {
    StrategyKind kind = StrategyKind::FC;
    double beta = 0.5;  // PLR/QQR loss weight
    int bits = 32;      // prototype uplink quantization

    bool substitutes() const {  // PNR-style feature substitution
        return kind == StrategyKind::PNR || kind == StrategyKind::QQR;
    }
    bool plr() const {  // PLR loss active
        return kind == StrategyKind::PLR || kind == StrategyKind::QQR;
    }
    bool uses_prototypes() const { return substitutes() || plr(); }
    bool disables_quantity() const { return kind == StrategyKind::FC; }
    bool disables_quality() const { return kind == StrategyKind::PQ; }
};

/// Flat `section.key = value` configuration. Key names and defaults are
/// documented in the README; unknown keys are a hard error.
struct ExperimentConfig {
    // data
    std::string source = "synthetic";  // synthetic | har-file
    std::string har_path;
    int clients = 5;
    int modalities = 2;
    int classes = 4;
    int dim = 8;
    int window = 200;
    int refresh = 20;
    int pool = 600;  // per-client long-term pool target (master pool = clients * pool)
    double alpha = 1.0;
    double separation = 6.0;
    double noise_std = 1.5;
    int test_size = 400;
    // model
    int hidden = 32;
    int feat = 16;
    double eta = 0.08;
    double decay = 1.0;
    double eta_min = 0.001;
    int local_steps = 1;
    int batch_size = 0;  // recorded for provenance; training is full-batch
    // imbalance
    double miss_fraction = 0.0;
    double round_fraction_quantity = 0.0;
    double round_fraction_quality = 0.0;
    double snr_db = 10.0;
    // strategy
    Strategy strategy;
    bool support_weighted = false;
    bool literal_round_count = false;
    // run
    int rounds = 150;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds;  // empty -> {seed}
    std::string out = "out";
    int hindsight_epochs = 0;  // cap on comparator epochs; 0 = initial model
    double hindsight_eta = 0.0;  // 0 -> model.eta

    std::vector<std::uint64_t> seed_list() const {
        return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
    }
};

/// Set one key. `line` only feeds error messages.
void apply_kv(ExperimentConfig& cfg, const std::string& key, const std::string& value,
              int line = 0);

/// Cross-field validation (ranges that single keys cannot check alone).
void validate_config(const ExperimentConfig& cfg);

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// Canonical flat key=value listing (every key, current values) — the
/// config echo embedded in summary JSON and printed by `validate`.
std::vector<std::pair<std::string, std::string>> config_echo(const ExperimentConfig& cfg);

}  // namespace mmofl
