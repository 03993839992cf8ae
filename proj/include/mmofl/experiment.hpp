#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmofl/config.hpp"
#include "mmofl/federation.hpp"

namespace mmofl {

struct ExperimentSummary {
    std::vector<std::uint64_t> seeds;
    Vec final_accs;   // per seed
    Vec last10_accs;  // per seed
    Vec mean_acc_per_round;
    Vec std_acc_per_round;
    double mean_final = 0.0;
    double std_final = 0.0;
    double mean_last10 = 0.0;
    double std_last10 = 0.0;
    double wall_seconds = 0.0;       // stdout only, never written to artifacts
    std::vector<std::string> files;  // artifact paths, relative to the out dir
};

/// Per seed: metrics CSV + summary JSON. Across seeds: aggregate JSON/CSV,
/// gnuplot script, manifest with content hashes. Writes under cfg.out.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

struct SweepRow {
    std::string value;
    std::string strategy;
    double mean_final = 0.0;
    double std_final = 0.0;
    double mean_last10 = 0.0;
};

/// One sub-experiment per axis value under cfg.out, plus sweep.csv and a
/// combined plot script.
std::vector<SweepRow> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                const std::vector<std::string>& values);

/// FNV-1a 64-bit content hash (manifest entries).
std::uint64_t fnv1a64(const void* data, std::size_t n);

}  // namespace mmofl
