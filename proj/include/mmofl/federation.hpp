#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmofl/config.hpp"
#include "mmofl/data.hpp"
#include "mmofl/model.hpp"
#include "mmofl/prototype.hpp"
#include "mmofl/rng.hpp"

namespace mmofl {

struct RoundMetrics {
    int round = 0;
    double train_loss = 0.0;   // mean first-step loss across training clients
    double test_acc = 0.0;     // post-aggregation model on the held-out set
    double cum_loss = 0.0;     // running sum of train_loss
    double online_clean = 0.0;     // CE of the round-start model on clean batches
    double online_degraded = 0.0;  // same model on the degraded (ZP-convention) batches
    std::size_t bytes_model_up = 0;
    std::size_t bytes_model_down = 0;
    std::size_t bytes_proto_up = 0;
    std::size_t bytes_proto_down = 0;
};

struct RunCounters {
    std::size_t is_skips = 0;            // client-rounds skipped under IS
    std::size_t pnr_zero_fallbacks = 0;  // missing bank cell -> zero substitution
    std::size_t pce_row_fallbacks = 0;   // incomplete bank row -> CE-only modality
    std::size_t zero_pad_fallbacks = 0;  // plain-encode strategy hit a missing modality
    std::size_t gate_violations = 0;     // prototype gate bookkeeping mismatches
};

struct RunResult {
    std::vector<RoundMetrics> metrics;
    Vec regret_clean;     // r(t) against the clean-data comparator
    Vec regret_degraded;  // r(t) against the degraded-data comparator
    RunCounters counters;
    double final_acc = 0.0;
    double last10_acc = 0.0;  // mean test accuracy over the last 10 rounds
    double hindsight_clean_total = 0.0;    // comparator cumulative clean loss
    double online_clean_total = 0.0;       // learner cumulative clean loss
    GlobalModel final_model;
};

GlobalModel fedavg(const std::vector<GlobalModel>& models);

/// accuracy = fraction argmax-correct, loss = mean CE, on a clean
/// complete-modality sample set.
std::pair<double, double> evaluate(const GlobalModel& model,
                                   const std::vector<ModalSample>& test_set);

struct HindsightComparator {
    GlobalModel model;
    Vec epoch_losses;  // training log
};

/// Offline full-gradient descent on pre-materialized data: up to
/// `max_epochs` steps, stopping once the loss has not improved by more than
/// 1e-5 over a 10-epoch window. max_epochs = 0 returns `init` untouched.
HindsightComparator train_hindsight(const GlobalModel& init,
                                    const std::vector<TrainSample>& data, const Vec& weights,
                                    int max_epochs, double eta);

/// r(t) = (sum_{s<=t} online(s) - hindsight(s)) / (t+1), 0-indexed rounds.
Vec regret_trace(const Vec& online, const Vec& hindsight);

/// One seed's full protocol: stream advance + injectors, strategy feature
/// pipeline, local OGD, FedAvg, prototype flow, evaluation, regret.
RunResult run_federation(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace mmofl
