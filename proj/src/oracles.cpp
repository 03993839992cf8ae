#include "mmofl/oracles.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

#include "mmofl/data.hpp"
#include "mmofl/linalg.hpp"
#include "mmofl/model.hpp"
#include "mmofl/prototype.hpp"
#include "mmofl/rng.hpp"

namespace mmofl {

namespace {

struct Table {
    std::ostream& out;
    int failures = 0;
    void row(const std::string& name, bool pass, const std::string& detail) {
        out << std::left << std::setw(24) << name << (pass ? "PASS  " : "FAIL  ") << detail
            << '\n';
        if (!pass) ++failures;
    }
};

// deliberately separate from encode(): index-by-index affine + tanh
Vec naive_encoder(const EncoderParams& e, const Vec& x) {
    Vec h(e.w1.rows);
    for (std::size_t r = 0; r < e.w1.rows; ++r) {
        double s = e.b1[r];
        for (std::size_t c = 0; c < e.w1.cols; ++c) s += e.w1.at(r, c) * x[c];
        h[r] = std::tanh(s);
    }
    Vec z(e.w2.rows);
    for (std::size_t r = 0; r < e.w2.rows; ++r) {
        double s = e.b2[r];
        for (std::size_t c = 0; c < e.w2.cols; ++c) s += e.w2.at(r, c) * h[c];
        z[r] = s;
    }
    return z;
}

void forward_oracle(Table& tb) {
    Rng rng(2024);
    double worst = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        ModelShape shape{{3 + rep % 3, 4}, 5, 3, 3};
        Rng mr = rng.child("model", static_cast<std::uint64_t>(rep));
        GlobalModel model = init_model(mr, shape);
        std::vector<Vec> features;
        Vec cat;
        for (std::size_t m = 0; m < 2; ++m) {
            Rng xr = rng.child("x", static_cast<std::uint64_t>(rep), m);
            Vec x = gaussian(xr, 0.0, 1.0,
                             static_cast<std::size_t>(shape.dims[m]));
            Vec z = encode(model.encoders[m], x);
            Vec z2 = naive_encoder(model.encoders[m], x);
            for (std::size_t j = 0; j < z.size(); ++j)
                worst = std::max(worst, std::fabs(z[j] - z2[j]));
            features.push_back(z);
            cat.insert(cat.end(), z2.begin(), z2.end());
        }
        Vec logits = predict(model, features);
        Vec logits2 = naive_encoder(model.head, cat);
        for (std::size_t j = 0; j < logits.size(); ++j)
            worst = std::max(worst, std::fabs(logits[j] - logits2[j]));
    }
    tb.row("forward_duplicate", worst < 1e-12, "max abs diff " + std::to_string(worst));
}

void softmax_oracle(Table& tb) {
    Vec p = softmax({1.0, 2.0, 3.0});
    const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
        worst = std::max(worst,
                         std::fabs(p[static_cast<std::size_t>(i)] -
                                   std::exp(1.0 + i) / z));
    const double ce = ce_loss({1.0, 2.0, 3.0}, 0);
    worst = std::max(worst, std::fabs(ce + std::log(std::exp(1.0) / z)));
    tb.row("softmax_ce_formula", worst < 1e-12, "max abs diff " + std::to_string(worst));
}

void pce_oracle(Table& tb) {
    // z sits on prototype 0, squared distance 2 from prototype 1
    Vec z{0.0, 0.0};
    std::vector<Vec> row{{0.0, 0.0}, {std::sqrt(2.0), 0.0}};
    const double got = pce_loss(z, row, 0);
    const double want = -std::log(1.0 / (1.0 + std::exp(-2.0)));
    tb.row("pce_worked_case", std::fabs(got - want) < 1e-9,
           "got " + std::to_string(got) + " want " + std::to_string(want));
}

double rel_err(const Vec& a, const Vec& f) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::fabs(a[i]), std::fabs(f[i]), 1e-4});
        worst = std::max(worst, std::fabs(a[i] - f[i]) / denom);
    }
    return worst;
}

void gradient_oracle(Table& tb) {
    Rng rng(99);
    ModelShape shape{{3, 3}, 4, 3, 2};
    Rng mr = rng.child("model");
    GlobalModel model = init_model(mr, shape);

    std::vector<TrainSample> batch;
    for (int i = 0; i < 5; ++i) {
        TrainSample s;
        s.label = i % 2;
        Rng xr = rng.child("x", static_cast<std::uint64_t>(i));
        s.inputs.push_back({FeatureOrigin::Raw, gaussian(xr, 0.0, 1.0, 3)});
        if (i == 2) {
            Rng cr = rng.child("const", static_cast<std::uint64_t>(i));
            s.inputs.push_back({FeatureOrigin::Constant, gaussian(cr, 0.0, 1.0, 3)});
        } else {
            Rng xr2 = rng.child("x2", static_cast<std::uint64_t>(i));
            s.inputs.push_back({FeatureOrigin::Raw, gaussian(xr2, 0.0, 1.0, 3)});
        }
        batch.push_back(std::move(s));
    }
    std::vector<std::vector<Vec>> bank(2);
    for (int m = 0; m < 2; ++m)
        for (int c = 0; c < 2; ++c) {
            Rng br = rng.child("bank", static_cast<std::uint64_t>(m),
                               static_cast<std::uint64_t>(c));
            bank[static_cast<std::size_t>(m)].push_back(
                l2_normalize(gaussian(br, 0.0, 1.0, 3)));
        }
    LossConfig cfg;
    cfg.beta = 0.5;
    cfg.quality = {1, 0};
    cfg.bank = &bank;

    auto [loss, grad] = backward(model, batch, cfg);
    (void)loss;
    Vec analytic = flatten(grad);
    Vec theta = flatten(model);
    Vec fd = finite_diff_grad(
        [&](const Vec& th) { return batch_loss(unflatten(shape, th), batch, cfg); }, theta,
        1e-5);
    const double worst = rel_err(analytic, fd);
    tb.row("gradient_spot_plr", worst < 1e-4, "max rel err " + std::to_string(worst));
}

double centroid_accuracy(const std::vector<ModalSample>& fit,
                         const std::vector<ModalSample>& eval, int classes) {
    const std::size_t dim = fit[0].features[0].size() + fit[0].features[1].size();
    std::vector<Vec> centroid(static_cast<std::size_t>(classes), Vec(dim, 0.0));
    std::vector<std::size_t> count(static_cast<std::size_t>(classes), 0);
    for (const ModalSample& s : fit) {
        Vec cat = s.features[0];
        cat.insert(cat.end(), s.features[1].begin(), s.features[1].end());
        axpy(1.0, cat, centroid[static_cast<std::size_t>(s.label)]);
        ++count[static_cast<std::size_t>(s.label)];
    }
    for (int c = 0; c < classes; ++c)
        if (count[static_cast<std::size_t>(c)] > 0)
            for (double& v : centroid[static_cast<std::size_t>(c)])
                v /= static_cast<double>(count[static_cast<std::size_t>(c)]);
    std::size_t correct = 0;
    for (const ModalSample& s : eval) {
        Vec cat = s.features[0];
        cat.insert(cat.end(), s.features[1].begin(), s.features[1].end());
        int best = 0;
        double best_d = squared_distance(cat, centroid[0]);
        for (int c = 1; c < classes; ++c) {
            double d = squared_distance(cat, centroid[static_cast<std::size_t>(c)]);
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (best == s.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval.size());
}

void centroid_oracle(Table& tb) {
    Rng rng(7);
    std::vector<ModalSample> pool = synth_pool(rng, 4, {8, 8}, 2000, 6.0, 1.0);
    std::vector<ModalSample> fit(pool.begin(), pool.begin() + 1000);
    std::vector<ModalSample> eval(pool.begin() + 1000, pool.end());
    const double acc = centroid_accuracy(fit, eval, 4);
    tb.row("nearest_centroid_sep6", acc > 0.95, "accuracy " + std::to_string(acc));

    Rng rng0(8);
    std::vector<ModalSample> blind = synth_pool(rng0, 4, {8, 8}, 2000, 0.0, 1.0);
    std::vector<ModalSample> fit0(blind.begin(), blind.begin() + 1000);
    std::vector<ModalSample> eval0(blind.begin() + 1000, blind.end());
    const double acc0 = centroid_accuracy(fit0, eval0, 4);
    tb.row("nearest_centroid_sep0", std::fabs(acc0 - 0.25) < 0.08,
           "accuracy " + std::to_string(acc0) + " (chance 0.25)");
}

void quantizer_oracle(Table& tb) {
    Rng rng(41);
    double worst_excess = -1.0;
    bool ok = true;
    for (int rep = 0; rep < 1000; ++rep) {
        Rng vr = rng.child("v", static_cast<std::uint64_t>(rep));
        Vec v = l2_normalize(gaussian(vr, 0.0, 1.0, 16));
        LocalPrototypeSet set;
        set.entries[{0, 0}] = {v, 1};
        for (int b = 1; b <= 12; ++b) {
            QuantizedPrototypeSet q = quantize(set, b);
            LocalPrototypeSet back = dequantize_raw(q);
            const Vec& hat = back.entries.at({0, 0}).v;
            const double lo = static_cast<double>(q.entries[0].lo);
            const double hi = static_cast<double>(q.entries[0].hi);
            const double bound = (hi - lo) / (2.0 * ((1 << b) - 1)) + 1e-6;
            for (std::size_t j = 0; j < v.size(); ++j) {
                const double err = std::fabs(v[j] - hat[j]);
                worst_excess = std::max(worst_excess, err - bound);
                if (err > bound) ok = false;
            }
        }
    }
    tb.row("quantizer_bound", ok,
           "max err minus bound " + std::to_string(worst_excess));
}

void wire_oracle(Table& tb) {
    Rng rng(42);
    bool ok = true;
    std::string note = "formula and byte round-trip agree";
    for (int rep = 0; rep < 100 && ok; ++rep) {
        Rng r = rng.child("set", static_cast<std::uint64_t>(rep));
        const int bits_choice[] = {1, 2, 4, 7, 8, 12, 16, 32};
        const int bits = bits_choice[r.below(8)];
        const std::size_t dim = 4 + r.below(29);
        LocalPrototypeSet set;
        const int n_entries = 1 + static_cast<int>(r.below(6));
        for (int e = 0; e < n_entries; ++e) {
            Rng vr = r.child("v", static_cast<std::uint64_t>(e));
            set.entries[{static_cast<int>(e % 3), static_cast<int>(e / 3)}] = {
                l2_normalize(gaussian(vr, 0.0, 1.0, dim)),
                static_cast<std::uint32_t>(1 + vr.below(100))};
        }
        QuantizedPrototypeSet q = quantize(set, bits);
        const std::size_t per_entry =
            2 + 4 + 8 +
            (dim * static_cast<std::size_t>(bits) + 7) / 8;  // independent re-derivation
        if (wire_size(q) != per_entry * set.entries.size()) {
            ok = false;
            note = "wire_size formula mismatch";
            break;
        }
        auto bytes = to_bytes(q);
        if (bytes.size() != wire_size(q)) {
            ok = false;
            note = "serialized size != wire_size";
            break;
        }
        QuantizedPrototypeSet q2 = from_bytes(bytes, bits, dim);
        if (to_bytes(q2) != bytes) {
            ok = false;
            note = "byte round-trip mismatch";
        }
    }
    tb.row("wire_format", ok, note);
}

void bank_oracle(Table& tb) {
    Rng rng(11);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        Rng r = rng.child("seq", static_cast<std::uint64_t>(rep));
        const std::size_t len = 1 + r.below(50);
        PrototypeBank bank(1, 1);
        bank.normalize = false;
        Vec mean(6, 0.0);
        for (std::size_t i = 0; i < len; ++i) {
            Rng vr = r.child("v", i);
            Vec v = l2_normalize(gaussian(vr, 0.0, 1.0, 6));
            axpy(1.0, v, mean);
            InstantPrototypes instant;
            instant[{0, 0}] = v;
            update_cumulative(bank, instant, static_cast<int>(i));
        }
        for (std::size_t j = 0; j < mean.size(); ++j)
            worst = std::max(worst, std::fabs(bank.cell(0, 0).v[j] -
                                              mean[j] / static_cast<double>(len)));
    }
    tb.row("bank_recurrence_mean", worst < 1e-12, "max abs diff " + std::to_string(worst));
}

double measure_snr_worst_dev(int dim, std::uint64_t seed) {
    Rng rng(seed);
    RoundBatch batch;
    batch.client = 3;
    batch.round = 5;
    batch.quality = {1, 1};
    for (int i = 0; i < 50; ++i) {
        ModalSample s;
        s.label = i % 4;
        for (int m = 0; m < 2; ++m) {
            Rng xr = rng.child("x", static_cast<std::uint64_t>(i),
                               static_cast<std::uint64_t>(m));
            s.features.push_back(gaussian(xr, 0.5, 1.0, static_cast<std::size_t>(dim)));
            s.available.push_back(1);
        }
        batch.samples.push_back(std::move(s));
    }
    RoundBatch clean = batch;
    ImbalanceSpec spec;
    spec.round_fraction_quality = 1.0;
    spec.snr_db = 10.0;
    spec.seed = seed;
    std::vector<std::uint8_t> affected(10, 1);
    RoundBatch noisy = inject_quality(std::move(batch), spec, 5, affected);
    std::size_t m_star = noisy.quality[0] ? 1 : 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < noisy.samples.size(); ++i) {
        const Vec& x = clean.samples[i].features[m_star];
        const Vec& y = noisy.samples[i].features[m_star];
        double ps = 0.0, pn = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            ps += x[j] * x[j];
            pn += (y[j] - x[j]) * (y[j] - x[j]);
        }
        const double snr = 10.0 * std::log10(ps / pn);
        worst = std::max(worst, std::fabs(snr - 10.0));
    }
    return worst;
}

void snr_oracle(Table& tb) {
    const double dev8 = measure_snr_worst_dev(8, 101);
    const double dev64 = measure_snr_worst_dev(64, 102);
    tb.row("awgn_snr_power", dev8 <= 2.0 && dev64 <= 0.5,
           "max |snr-10| dB: dim8 " + std::to_string(dev8) + ", dim64 " +
               std::to_string(dev64));
}

void quantity_count_oracle(Table& tb) {
    bool exact = true;
    double m0 = 0.0;
    const int reps = 50;
    for (int rep = 0; rep < reps; ++rep) {
        RoundBatch batch;
        batch.client = rep;
        batch.round = 3;
        batch.quality = {1, 1};
        for (int i = 0; i < 500; ++i) {
            ModalSample s;
            s.label = 0;
            s.features = {Vec(2, 1.0), Vec(2, 1.0)};
            s.available = {1, 1};
            batch.samples.push_back(std::move(s));
        }
        ImbalanceSpec spec;
        spec.miss_fraction = 0.5;
        spec.round_fraction_quantity = 1.0;
        spec.seed = 77;
        std::vector<std::uint8_t> affected(10, 1);
        RoundBatch out = inject_quantity(std::move(batch), spec, 3, affected);
        int miss = 0, miss0 = 0;
        for (const ModalSample& s : out.samples) {
            const int gone = (s.available[0] ? 0 : 1) + (s.available[1] ? 0 : 1);
            if (gone > 1) exact = false;
            miss += gone;
            if (!s.available[0]) ++miss0;
        }
        if (miss != 250) exact = false;
        m0 += miss0;
    }
    m0 /= reps;
    const bool balanced = m0 > 110.0 && m0 < 140.0;
    tb.row("quantity_injector_count", exact && balanced,
           "250/500 missing, mean modality-0 share " + std::to_string(m0));
}

void dirichlet_oracle(Table& tb) {
    Rng rng(5);
    double worst = 0.0;
    for (int rep = 0; rep < 100; ++rep) {
        Rng r = rng.child("draw", static_cast<std::uint64_t>(rep));
        Vec w = dirichlet(r, 1e6, 5);
        for (double v : w) worst = std::max(worst, std::fabs(v - 0.2) / 0.2);
    }
    tb.row("dirichlet_concentration", worst < 0.05,
           "max rel deviation from uniform " + std::to_string(worst));
}

void advance_oracle(Table& tb) {
    Rng rng(3);
    std::vector<ModalSample> pool = synth_pool(rng, 2, {2, 2}, 100, 1.0, 1.0);
    ClientStream stream(pool, 10, 3, 0);
    RoundBatch last;
    const int T = 7;
    for (int t = 0; t < T; ++t) last = stream.advance(t);
    bool ok = last.samples.size() == 10;
    for (std::size_t i = 0; i < 10 && ok; ++i) {
        const std::size_t want = static_cast<std::size_t>(T) * 3 + i;  // cursor0=N cancels N
        if (last.samples[i].features[0] != pool[want].features[0]) ok = false;
    }
    tb.row("stream_index_arith", ok, "window == pool[T*r .. T*r+N) after T advances");
}

}  // namespace

int run_oracles(std::ostream& out) {
    Table tb{out};
    out << "oracle suite (independent re-computations of derived values)\n";
    forward_oracle(tb);
    softmax_oracle(tb);
    pce_oracle(tb);
    gradient_oracle(tb);
    centroid_oracle(tb);
    quantizer_oracle(tb);
    wire_oracle(tb);
    bank_oracle(tb);
    snr_oracle(tb);
    quantity_count_oracle(tb);
    dirichlet_oracle(tb);
    advance_oracle(tb);
    out << (tb.failures == 0 ? "all oracles passed\n"
                             : std::to_string(tb.failures) + " oracle(s) failed\n");
    return tb.failures;
}

}  // namespace mmofl
