#include "mmofl/federation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <unordered_map>

#include "mmofl/errors.hpp"

namespace mmofl {

namespace {

std::vector<TrainSample> raw_from_pool(const std::vector<ModalSample>& pool,
                                       const std::vector<std::size_t>& idx) {
    std::vector<TrainSample> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) {
        const ModalSample& s = pool[i];
        TrainSample t;
        t.label = s.label;
        t.inputs.reserve(s.modalities());
        for (std::size_t m = 0; m < s.modalities(); ++m)
            t.inputs.push_back({FeatureOrigin::Raw, s.features[m]});
        out.push_back(std::move(t));
    }
    return out;
}

// Fixed ZP-convention view of a (possibly injected) batch: raw where the
// modality is present, zero feature constant where it is not. This is the
// strategy-independent representation behind the degraded loss trace.
std::vector<TrainSample> zp_instances(const RoundBatch& batch, std::size_t feat) {
    std::vector<TrainSample> out;
    out.reserve(batch.samples.size());
    for (const ModalSample& s : batch.samples) {
        TrainSample t;
        t.label = s.label;
        t.inputs.reserve(s.modalities());
        for (std::size_t m = 0; m < s.modalities(); ++m) {
            if (s.available[m])
                t.inputs.push_back({FeatureOrigin::Raw, s.features[m]});
            else
                t.inputs.push_back({FeatureOrigin::Constant, Vec(feat, 0.0)});
        }
        out.push_back(std::move(t));
    }
    return out;
}

bool row_filled(const std::vector<Vec>& row) {
    if (row.empty()) return false;
    for (const Vec& v : row)
        if (v.empty()) return false;
    return true;
}

std::vector<TrainSample> build_pipeline(const RoundBatch& batch, const Strategy& strategy,
                                        const std::vector<std::vector<Vec>>& stale_rows,
                                        std::size_t feat, RunCounters& counters) {
    std::vector<TrainSample> out;
    out.reserve(batch.samples.size());
    for (const ModalSample& s : batch.samples) {
        if (strategy.kind == StrategyKind::IS) {
            bool complete = true;
            for (std::size_t m = 0; m < s.modalities(); ++m)
                if (!s.available[m]) complete = false;
            if (!complete) continue;
        }
        TrainSample t;
        t.label = s.label;
        t.inputs.reserve(s.modalities());
        for (std::size_t m = 0; m < s.modalities(); ++m) {
            if (s.available[m]) {
                t.inputs.push_back({FeatureOrigin::Raw, s.features[m]});
                continue;
            }
            if (strategy.substitutes()) {
                const auto c = static_cast<std::size_t>(s.label);
                if (m < stale_rows.size() && c < stale_rows[m].size() &&
                    !stale_rows[m][c].empty()) {
                    t.inputs.push_back({FeatureOrigin::Constant, stale_rows[m][c]});
                } else {
                    ++counters.pnr_zero_fallbacks;  // cold start: zero substitution
                    t.inputs.push_back({FeatureOrigin::Constant, Vec(feat, 0.0)});
                }
            } else {
                // ZP by definition; FC/PQ/BQ only reach this if the config
                // pairs them with quantity imbalance they do not handle
                if (strategy.kind != StrategyKind::ZP) ++counters.zero_pad_fallbacks;
                t.inputs.push_back({FeatureOrigin::Constant, Vec(feat, 0.0)});
            }
        }
        out.push_back(std::move(t));
    }
    return out;
}

double mean_or_zero(double sum, std::size_t n) {
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

}  // namespace

GlobalModel fedavg(const std::vector<GlobalModel>& models) {
    if (models.empty()) throw ProtocolError("fedavg: no models");
    Vec sum = flatten(models[0]);
    for (std::size_t k = 1; k < models.size(); ++k) {
        Vec theta = flatten(models[k]);
        if (theta.size() != sum.size())
            throw ProtocolError("fedavg: parameter count mismatch at client " +
                                std::to_string(k));
        for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += theta[i];
    }
    const double inv = 1.0 / static_cast<double>(models.size());
    for (double& v : sum) v *= inv;
    return unflatten(shape_of(models[0]), sum);
}

std::pair<double, double> evaluate(const GlobalModel& model,
                                   const std::vector<ModalSample>& test_set) {
    if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
    std::size_t correct = 0;
    double loss = 0.0;
    std::vector<Vec> features(model.encoders.size());
    for (const ModalSample& s : test_set) {
        if (s.modalities() != model.encoders.size())
            throw ShapeError("evaluate: modality count mismatch");
        for (std::size_t m = 0; m < features.size(); ++m)
            features[m] = encode(model.encoders[m], s.features[m]);
        Vec logits = predict(model, features);
        if (argmax(logits) == s.label) ++correct;
        loss += ce_loss(logits, s.label);
    }
    return {static_cast<double>(correct) / static_cast<double>(test_set.size()),
            loss / static_cast<double>(test_set.size())};
}

HindsightComparator train_hindsight(const GlobalModel& init,
                                    const std::vector<TrainSample>& data, const Vec& weights,
                                    int max_epochs, double eta) {
    HindsightComparator h{init, {}};
    if (max_epochs <= 0 || data.empty()) return h;
    LossConfig cfg;
    if (!weights.empty()) cfg.weights = &weights;
    double best = std::numeric_limits<double>::infinity();
    int stalled = 0;
    for (int e = 0; e < max_epochs; ++e) {
        auto [loss, grad] = backward(h.model, data, cfg);
        h.epoch_losses.push_back(loss);
        if (loss < best - 1e-5) {
            best = loss;
            stalled = 0;
        } else if (++stalled >= 10) {
            break;  // plateau: no 1e-5 improvement in 10 epochs
        }
        ogd_step(h.model, grad, eta);
    }
    return h;
}

Vec regret_trace(const Vec& online, const Vec& hindsight) {
    if (online.size() != hindsight.size())
        throw std::invalid_argument("regret_trace: length mismatch");
    Vec r(online.size());
    double cum = 0.0;
    for (std::size_t t = 0; t < online.size(); ++t) {
        cum += online[t] - hindsight[t];
        r[t] = cum / static_cast<double>(t + 1);
    }
    return r;
}

RunResult run_federation(const ExperimentConfig& cfg, std::uint64_t seed) {
    validate_config(cfg);
    const int K = cfg.clients;
    const int T = cfg.rounds;
    const auto M = static_cast<std::size_t>(cfg.modalities);
    const Strategy& strategy = cfg.strategy;

    Rng root(seed);

    // --- data ---
    std::vector<ModalSample> master, test_set;
    const std::vector<int> dims(M, cfg.dim);
    if (cfg.source == "synthetic") {
        Rng data_rng = root.child("pool");
        SynthSpec spec =
            make_synth_spec(data_rng, cfg.classes, dims, cfg.separation, cfg.noise_std);
        master = draw_samples(data_rng, spec,
                              static_cast<std::size_t>(cfg.pool) * static_cast<std::size_t>(K));
        Rng test_rng = root.child("test");
        test_set = draw_samples(test_rng, spec, static_cast<std::size_t>(cfg.test_size));
    } else {
        std::vector<ModalSample> all =
            load_har_numeric(cfg.har_path, dims, cfg.classes, true);
        if (all.size() <= static_cast<std::size_t>(cfg.test_size))
            throw ConfigError("data.test_size: no samples left for training pools");
        test_set.assign(all.end() - cfg.test_size, all.end());
        all.resize(all.size() - static_cast<std::size_t>(cfg.test_size));
        master = std::move(all);
    }

    Rng part_rng = root.child("dirichlet");
    std::vector<std::vector<ModalSample>> pools =
        partition_dirichlet(part_rng, master, cfg.alpha, K);

    std::vector<std::optional<ClientStream>> streams(static_cast<std::size_t>(K));
    std::size_t active = 0;
    for (int k = 0; k < K; ++k) {
        auto& pool = pools[static_cast<std::size_t>(k)];
        if (pool.empty()) continue;  // a starved client skips every round
        streams[static_cast<std::size_t>(k)].emplace(
            std::move(pool), static_cast<std::size_t>(cfg.window),
            static_cast<std::size_t>(cfg.refresh), k);
        ++active;
    }
    if (active == 0) throw ProtocolError("no client received any data");

    // --- model & imbalance ---
    ModelShape shape{dims, cfg.hidden, cfg.feat, cfg.classes};
    Rng init_rng = root.child("init");
    GlobalModel global = init_model(init_rng, shape);
    const GlobalModel theta0 = global;
    const std::size_t model_bytes = to_f32_bytes(global).size();
    const auto F = static_cast<std::size_t>(cfg.feat);

    ImbalanceSpec imb;
    imb.miss_fraction = cfg.miss_fraction;
    imb.round_fraction_quantity = cfg.round_fraction_quantity;
    imb.round_fraction_quality = cfg.round_fraction_quality;
    imb.snr_db = cfg.snr_db;
    {
        Rng imb_rng = root.child("imbalance");
        imb.seed = imb_rng.next_u64();
    }
    const bool quantity_on = !strategy.disables_quantity();
    const bool quality_on = !strategy.disables_quality();
    std::vector<std::uint8_t> qty_mask(static_cast<std::size_t>(T), 0);
    std::vector<std::uint8_t> qual_mask(static_cast<std::size_t>(T), 0);
    if (quantity_on)
        qty_mask = affected_rounds(imb.seed, T, imb.round_fraction_quantity, "qty");
    if (quality_on)
        qual_mask = affected_rounds(imb.seed, T, imb.round_fraction_quality, "qual");

    const bool degraded_differs =
        (quantity_on && imb.miss_fraction > 0.0 && imb.round_fraction_quantity > 0.0) ||
        (quality_on && imb.round_fraction_quality > 0.0 && std::isfinite(imb.snr_db));

    PrototypeBank bank(static_cast<int>(M), cfg.classes);
    bank.literal_round_count = cfg.literal_round_count;

    RunResult res;
    res.metrics.reserve(static_cast<std::size_t>(T));
    Vec online_clean(static_cast<std::size_t>(T), 0.0);
    Vec online_degraded(static_cast<std::size_t>(T), 0.0);

    // per (client, round) bookkeeping for the hindsight comparators
    std::vector<std::vector<std::vector<std::size_t>>> widx(
        static_cast<std::size_t>(K), std::vector<std::vector<std::size_t>>(
                                         static_cast<std::size_t>(T)));
    std::vector<std::vector<std::vector<TrainSample>>> degraded_store;
    if (degraded_differs)
        degraded_store.assign(static_cast<std::size_t>(K),
                              std::vector<std::vector<TrainSample>>(static_cast<std::size_t>(T)));

    double cum_loss = 0.0;
    std::vector<GlobalModel> client_models(static_cast<std::size_t>(K));
    std::vector<RoundBatch> batches(static_cast<std::size_t>(K));

    for (int t = 0; t < T; ++t) {
        const double eta_t =
            std::max(cfg.eta_min, cfg.eta * std::pow(cfg.decay, static_cast<double>(t)));
        const std::vector<std::vector<Vec>> stale_rows = bank.rows();

        double train_loss_sum = 0.0, clean_sum = 0.0, deg_sum = 0.0;
        std::size_t trained = 0;

        for (int k = 0; k < K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            if (!streams[ku].has_value()) {
                client_models[ku] = global;
                continue;
            }
            ClientStream& stream = *streams[ku];
            RoundBatch batch = stream.advance(t);
            widx[ku][static_cast<std::size_t>(t)] = stream.window_indices();
            if (quantity_on) batch = inject_quantity(std::move(batch), imb, t, qty_mask);
            if (quality_on) batch = inject_quality(std::move(batch), imb, t, qual_mask);

            // online losses of the round-start model
            std::vector<TrainSample> clean =
                raw_from_pool(stream.pool(), widx[ku][static_cast<std::size_t>(t)]);
            clean_sum += batch_loss(global, clean, LossConfig{});
            std::vector<TrainSample> deg = zp_instances(batch, F);
            deg_sum += batch_loss(global, deg, LossConfig{});
            if (degraded_differs)
                degraded_store[ku][static_cast<std::size_t>(t)] = std::move(deg);

            // strategy pipeline + local training
            std::vector<TrainSample> train =
                build_pipeline(batch, strategy, stale_rows, F, res.counters);
            LossConfig loss_cfg;
            if (strategy.plr()) {
                loss_cfg.beta = strategy.beta;
                loss_cfg.quality = batch.quality;
                for (std::size_t m = 0; m < M; ++m) {
                    if (loss_cfg.quality[m]) continue;
                    if (!row_filled(stale_rows[m])) {
                        loss_cfg.quality[m] = 1;  // CE-only until the row fills
                        ++res.counters.pce_row_fallbacks;
                    }
                }
                loss_cfg.bank = &stale_rows;
            }
            client_models[ku] = global;
            if (train.empty()) {
                ++res.counters.is_skips;
            } else {
                train_loss_sum += local_update(client_models[ku], train, loss_cfg,
                                               cfg.local_steps, eta_t);
                ++trained;
            }
            batches[ku] = std::move(batch);
        }

        global = fedavg(client_models);

        RoundMetrics rm;
        rm.round = t;
        rm.bytes_model_up = static_cast<std::size_t>(K) * model_bytes;
        rm.bytes_model_down = static_cast<std::size_t>(K) * model_bytes;

        if (strategy.uses_prototypes()) {
            std::vector<LocalPrototypeSet> received;
            for (int k = 0; k < K; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                if (!streams[ku].has_value()) continue;
                GateCounters gate;
                LocalPrototypeSet lp =
                    local_prototypes(batches[ku], client_models[ku].encoders, &gate);
                if (gate.accepted + gate.rejected_missing + gate.rejected_quality != gate.seen)
                    ++res.counters.gate_violations;
                QuantizedPrototypeSet qp = quantize(lp, strategy.bits);
                rm.bytes_proto_up += wire_size(qp);
                received.push_back(dequantize(qp));
            }
            InstantPrototypes instant = aggregate_instant(received, cfg.support_weighted);
            update_cumulative(bank, instant, t);
            rm.bytes_proto_down += static_cast<std::size_t>(K) * bank_wire_size(bank);
        }

        rm.train_loss = mean_or_zero(train_loss_sum, trained);
        cum_loss += rm.train_loss;
        rm.cum_loss = cum_loss;
        rm.online_clean = mean_or_zero(clean_sum, active);
        rm.online_degraded = mean_or_zero(deg_sum, active);
        online_clean[static_cast<std::size_t>(t)] = rm.online_clean;
        online_degraded[static_cast<std::size_t>(t)] = rm.online_degraded;
        rm.test_acc = evaluate(global, test_set).first;
        res.metrics.push_back(rm);
    }

    // --- hindsight comparators and regret traces ---
    const double h_eta = cfg.hindsight_eta > 0.0 ? cfg.hindsight_eta : cfg.eta;

    std::vector<TrainSample> clean_union;
    Vec clean_weights;
    for (int k = 0; k < K; ++k) {
        const auto ku = static_cast<std::size_t>(k);
        if (!streams[ku].has_value()) continue;
        std::unordered_map<std::size_t, double> mult;
        for (int t = 0; t < T; ++t)
            for (std::size_t i : widx[ku][static_cast<std::size_t>(t)]) mult[i] += 1.0;
        std::vector<std::size_t> keys;
        keys.reserve(mult.size());
        for (const auto& kv : mult) keys.push_back(kv.first);
        std::sort(keys.begin(), keys.end());
        std::vector<TrainSample> unique = raw_from_pool(streams[ku]->pool(), keys);
        for (std::size_t j = 0; j < keys.size(); ++j) {
            clean_union.push_back(std::move(unique[j]));
            clean_weights.push_back(mult[keys[j]]);
        }
    }
    HindsightComparator star_clean =
        train_hindsight(theta0, clean_union, clean_weights, cfg.hindsight_epochs, h_eta);

    Vec hindsight_clean(static_cast<std::size_t>(T), 0.0);
    for (int t = 0; t < T; ++t) {
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
            const auto ku = static_cast<std::size_t>(k);
            if (!streams[ku].has_value()) continue;
            std::vector<TrainSample> clean =
                raw_from_pool(streams[ku]->pool(), widx[ku][static_cast<std::size_t>(t)]);
            sum += batch_loss(star_clean.model, clean, LossConfig{});
        }
        hindsight_clean[static_cast<std::size_t>(t)] = mean_or_zero(sum, active);
    }
    res.regret_clean = regret_trace(online_clean, hindsight_clean);

    if (!degraded_differs) {
        res.regret_degraded = res.regret_clean;
    } else {
        // subsampled union of the stored degraded instances
        std::size_t total = 0;
        for (const auto& per_client : degraded_store)
            for (const auto& round_batch : per_client) total += round_batch.size();
        const std::size_t stride = std::max<std::size_t>(1, total / 4000);
        std::vector<TrainSample> deg_union;
        std::size_t counter = 0;
        for (const auto& per_client : degraded_store)
            for (const auto& round_batch : per_client)
                for (const TrainSample& s : round_batch)
                    if (counter++ % stride == 0) deg_union.push_back(s);
        HindsightComparator star_deg =
            train_hindsight(theta0, deg_union, Vec{}, cfg.hindsight_epochs, h_eta);
        Vec hindsight_deg(static_cast<std::size_t>(T), 0.0);
        for (int t = 0; t < T; ++t) {
            double sum = 0.0;
            for (int k = 0; k < K; ++k) {
                const auto ku = static_cast<std::size_t>(k);
                if (!streams[ku].has_value()) continue;
                sum += batch_loss(star_deg.model,
                                  degraded_store[ku][static_cast<std::size_t>(t)], LossConfig{});
            }
            hindsight_deg[static_cast<std::size_t>(t)] = mean_or_zero(sum, active);
        }
        res.regret_degraded = regret_trace(online_degraded, hindsight_deg);
    }

    res.online_clean_total =
        std::accumulate(online_clean.begin(), online_clean.end(), 0.0);
    res.hindsight_clean_total =
        std::accumulate(hindsight_clean.begin(), hindsight_clean.end(), 0.0);
    res.final_acc = res.metrics.back().test_acc;
    const std::size_t tail = std::min<std::size_t>(10, res.metrics.size());
    double acc_sum = 0.0;
    for (std::size_t i = res.metrics.size() - tail; i < res.metrics.size(); ++i)
        acc_sum += res.metrics[i].test_acc;
    res.last10_acc = acc_sum / static_cast<double>(tail);
    res.final_model = std::move(global);
    return res;
}

}  // namespace mmofl
