#include "mmofl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "mmofl/errors.hpp"

namespace mmofl {

namespace {

// ceil(f * n) guarded against binary-fraction drift (0.1 * 150 = 15.000...002).
std::size_t frac_count(double f, std::size_t n) {
    if (f <= 0.0 || n == 0) return 0;
    auto c = static_cast<std::size_t>(std::ceil(f * static_cast<double>(n) - 1e-9));
    return std::min(c, n);
}

void check_fraction(double f, const char* name) {
    if (!(f >= 0.0 && f <= 1.0))
        throw std::invalid_argument(std::string(name) + " must be in [0,1]");
}

}  // namespace

SynthSpec make_synth_spec(Rng& rng, int classes, const std::vector<int>& dims,
                          double separation, double noise_std) {
    if (classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
    if (dims.size() < 2) throw std::invalid_argument("synth: need at least 2 modalities");
    for (int d : dims)
        if (d < 1) throw std::invalid_argument("synth: modality dims must be >= 1");
    if (!(separation >= 0.0) || !std::isfinite(separation))
        throw std::invalid_argument("synth: separation must be >= 0");
    if (!(noise_std >= 0.0) || !std::isfinite(noise_std))
        throw std::invalid_argument("synth: noise_std must be >= 0");

    SynthSpec spec;
    spec.noise_std = noise_std;
    spec.means.assign(classes, std::vector<Vec>(dims.size()));

    // Class directions per modality. With d >= C the directions are
    // orthonormalized so every pair of class means sits exactly `separation`
    // apart over the concatenated modalities; each modality alone carries
    // 1/M of the squared separation, so losing one genuinely costs signal.
    // Smaller dims fall back to plain normalization.
    const double radius = separation / std::sqrt(2.0 * static_cast<double>(dims.size()));
    for (std::size_t m = 0; m < dims.size(); ++m) {
        const int d = dims[m];
        std::vector<Vec> dirs;
        for (int c = 0; c < classes; ++c) {
            Rng r = rng.child("mean", static_cast<std::uint64_t>(c), m);
            Vec v = gaussian(r, 0.0, 1.0, static_cast<std::size_t>(d));
            if (d >= classes) {
                for (;;) {
                    Vec u = v;
                    for (const Vec& prev : dirs) axpy(-dot(u, prev), prev, u);
                    if (norm2(u) > 1e-8) {
                        v = std::move(u);
                        break;
                    }
                    v = gaussian(r, 0.0, 1.0, static_cast<std::size_t>(d));
                }
            }
            v = l2_normalize(v);
            dirs.push_back(v);
            Vec mu(static_cast<std::size_t>(d), 0.0);
            axpy(radius, v, mu);
            spec.means[static_cast<std::size_t>(c)][m] = std::move(mu);
        }
    }
    return spec;
}

std::vector<ModalSample> draw_samples(Rng& rng, const SynthSpec& spec, std::size_t size) {
    const int C = spec.classes();
    if (C == 0) throw std::invalid_argument("synth: empty spec");
    const std::size_t M = spec.means[0].size();
    std::vector<ModalSample> out(size);
    for (std::size_t i = 0; i < size; ++i) {
        ModalSample& s = out[i];
        s.label = static_cast<int>(i % static_cast<std::size_t>(C));
        s.features.resize(M);
        s.available.assign(M, 1);
        for (std::size_t m = 0; m < M; ++m) {
            const Vec& mu = spec.means[static_cast<std::size_t>(s.label)][m];
            Rng r = rng.child("sample", i, m);
            Vec x = gaussian(r, 0.0, spec.noise_std, mu.size());
            axpy(1.0, mu, x);
            s.features[m] = std::move(x);
        }
    }
    return out;
}

std::vector<ModalSample> synth_pool(Rng& rng, int classes, const std::vector<int>& dims,
                                    std::size_t size, double separation, double noise_std) {
    if (size < static_cast<std::size_t>(classes))
        throw std::invalid_argument("synth: size must be >= classes");
    SynthSpec spec = make_synth_spec(rng, classes, dims, separation, noise_std);
    return draw_samples(rng, spec, size);
}

void zscore_standardize(std::vector<ModalSample>& pool) {
    if (pool.empty()) return;
    const std::size_t M = pool[0].modalities();
    for (std::size_t m = 0; m < M; ++m) {
        const std::size_t d = pool[0].features[m].size();
        for (std::size_t j = 0; j < d; ++j) {
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (const ModalSample& s : pool) {
                if (!s.available[m]) continue;
                double v = s.features[m][j];
                sum += v;
                sq += v * v;
                ++n;
            }
            if (n == 0) continue;
            double mean = sum / static_cast<double>(n);
            double var = sq / static_cast<double>(n) - mean * mean;
            double sd = var > 0.0 ? std::sqrt(var) : 0.0;
            for (ModalSample& s : pool) {
                if (!s.available[m]) continue;
                double& v = s.features[m][j];
                v -= mean;
                if (sd > 1e-12) v /= sd;
            }
        }
    }
}

std::vector<ModalSample> load_har_numeric(const std::string& path,
                                          const std::vector<int>& layout, int classes,
                                          bool standardize) {
    if (layout.empty()) throw std::invalid_argument("loader: empty modality layout");
    std::size_t total = 0;
    for (int d : layout) {
        if (d < 1) throw std::invalid_argument("loader: layout dims must be >= 1");
        total += static_cast<std::size_t>(d);
    }
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);

    std::vector<ModalSample> pool;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        std::istringstream ss(line);
        std::vector<double> row;
        row.reserve(total);
        double v;
        for (std::size_t f = 0; f < total; ++f) {
            if (!(ss >> v)) throw ParseError(line_no, "expected " + std::to_string(total + 1) +
                                                          " fields");
            row.push_back(v);
        }
        long label;
        if (!(ss >> label)) throw ParseError(line_no, "missing label field");
        std::string rest;
        if (ss >> rest) throw ParseError(line_no, "trailing field '" + rest + "'");
        if (label < 0 || (classes > 0 && label >= classes))
            throw SchemaError("line " + std::to_string(line_no) + ": label " +
                              std::to_string(label) + " outside [0," +
                              std::to_string(classes) + ")");

        ModalSample s;
        s.label = static_cast<int>(label);
        s.available.assign(layout.size(), 1);
        std::size_t off = 0;
        for (int d : layout) {
            s.features.emplace_back(row.begin() + static_cast<long>(off),
                                    row.begin() + static_cast<long>(off + d));
            off += static_cast<std::size_t>(d);
        }
        pool.push_back(std::move(s));
    }
    if (standardize) zscore_standardize(pool);
    return pool;
}

void save_pool(const std::string& path, const std::vector<ModalSample>& pool) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path);
    out << std::setprecision(17);
    for (const ModalSample& s : pool) {
        for (std::size_t m = 0; m < s.modalities(); ++m) {
            if (!s.available[m])
                throw std::invalid_argument("save_pool: sample has a missing modality");
            for (double v : s.features[m]) out << v << ' ';
        }
        out << s.label << '\n';
    }
    if (!out) throw FormatError("write failed for " + path);
}

std::vector<std::vector<ModalSample>> partition_dirichlet(Rng& rng,
                                                          const std::vector<ModalSample>& pool,
                                                          double alpha, int clients) {
    if (!(alpha > 0.0) || !std::isfinite(alpha))
        throw std::invalid_argument("partition: alpha must be > 0");
    if (clients < 1) throw std::invalid_argument("partition: need at least 1 client");
    if (pool.empty()) throw std::invalid_argument("partition: empty pool");
    if (static_cast<std::size_t>(clients) > pool.size())
        throw std::invalid_argument("partition: more clients than samples");

    int max_label = 0;
    for (const ModalSample& s : pool) {
        if (s.label < 0) throw SchemaError("partition: negative label");
        max_label = std::max(max_label, s.label);
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < pool.size(); ++i)
        by_class[static_cast<std::size_t>(pool[i].label)].push_back(i);

    const auto K = static_cast<std::size_t>(clients);
    std::vector<std::vector<ModalSample>> out(K);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const auto& idx = by_class[c];
        if (idx.empty()) continue;
        Rng r = rng.child("partition", c);
        Vec w = dirichlet(r, alpha, K);

        // Largest-remainder rounding of n_c * w_k; ties favor lower k.
        const auto n = static_cast<double>(idx.size());
        std::vector<std::size_t> take(K);
        std::vector<std::pair<double, std::size_t>> frac(K);
        std::size_t assigned = 0;
        for (std::size_t k = 0; k < K; ++k) {
            double target = n * w[k];
            take[k] = static_cast<std::size_t>(std::floor(target));
            frac[k] = {target - std::floor(target), k};
            assigned += take[k];
        }
        std::stable_sort(frac.begin(), frac.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r2 = 0; assigned < idx.size(); ++r2, ++assigned)
            ++take[frac[r2 % K].second];

        std::size_t pos = 0;
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < take[k]; ++j) out[k].push_back(pool[idx[pos++]]);
    }
    for (std::size_t k = 0; k < K; ++k) {
        Rng r = rng.child("order", k);
        shuffle(r, out[k]);
    }
    return out;
}

ClientStream::ClientStream(std::vector<ModalSample> pool, std::size_t window,
                           std::size_t refresh, int client)
    : pool_(std::move(pool)), window_(window), refresh_(refresh), client_(client) {
    if (pool_.empty()) throw std::invalid_argument("stream: empty pool");
    if (window_ == 0) throw std::invalid_argument("stream: window must be >= 1");
    cursor_ = window_;  // window starts as pool[0..N); consumed as a ring beyond that
}

std::vector<std::size_t> ClientStream::window_indices() const {
    std::vector<std::size_t> idx(window_);
    for (std::size_t i = 0; i < window_; ++i)
        idx[i] = (cursor_ - window_ + i) % pool_.size();
    return idx;
}

RoundBatch ClientStream::advance(int round) {
    cursor_ += refresh_;
    RoundBatch batch;
    batch.round = round;
    batch.client = client_;
    batch.samples.reserve(window_);
    for (std::size_t i : window_indices()) batch.samples.push_back(pool_[i]);
    batch.quality.assign(batch.samples[0].modalities(), 1);
    return batch;
}

std::vector<std::uint8_t> affected_rounds(std::uint64_t seed, int total_rounds,
                                          double fraction, std::string_view label) {
    check_fraction(fraction, "round fraction");
    if (total_rounds < 0) throw std::invalid_argument("total_rounds must be >= 0");
    const auto T = static_cast<std::size_t>(total_rounds);
    std::vector<std::uint8_t> mask(T, 0);
    Rng root(seed);
    Rng r = root.child(label);
    for (std::size_t t : sample_indices(r, T, frac_count(fraction, T))) mask[t] = 1;
    return mask;
}

RoundBatch inject_quantity(RoundBatch batch, const ImbalanceSpec& spec, int round,
                           const std::vector<std::uint8_t>& affected) {
    check_fraction(spec.miss_fraction, "miss_fraction");
    if (round < 0 || static_cast<std::size_t>(round) >= affected.size() || !affected[round] ||
        spec.miss_fraction == 0.0 || batch.samples.empty())
        return batch;

    const std::size_t N = batch.samples.size();
    const std::size_t M = batch.samples[0].modalities();
    Rng root(spec.seed);
    Rng r = root.child("inj_qty", static_cast<std::uint64_t>(batch.client),
                       static_cast<std::uint64_t>(round));
    for (std::size_t i : sample_indices(r, N, frac_count(spec.miss_fraction, N))) {
        auto m = static_cast<std::size_t>(r.below(M));
        batch.samples[i].available[m] = 0;
    }
    return batch;
}

RoundBatch inject_quality(RoundBatch batch, const ImbalanceSpec& spec, int round,
                          const std::vector<std::uint8_t>& affected) {
    if (round < 0 || static_cast<std::size_t>(round) >= affected.size() || !affected[round] ||
        batch.samples.empty())
        return batch;

    const std::size_t M = batch.samples[0].modalities();
    Rng root(spec.seed);
    Rng r = root.child("inj_qual", static_cast<std::uint64_t>(batch.client),
                       static_cast<std::uint64_t>(round));
    const auto m = static_cast<std::size_t>(r.below(M));
    batch.quality[m] = 0;
    if (std::isinf(spec.snr_db)) return batch;  // sentinel: flags only

    const double tau = std::pow(10.0, -spec.snr_db / 10.0);
    for (ModalSample& s : batch.samples) {
        if (!s.available[m]) continue;
        Vec& x = s.features[m];
        const auto d = static_cast<double>(x.size());
        double p_sig = dot(x, x) / d;
        if (p_sig <= 0.0) continue;  // zero-power vector: flag only
        Vec noise = gaussian(r, 0.0, 1.0, x.size());
        double p_raw = dot(noise, noise) / d;
        if (p_raw <= 0.0) continue;
        // rescale so the realized per-vector SNR hits snr_db exactly
        axpy(std::sqrt(p_sig * tau / p_raw), noise, x);
    }
    return batch;
}

}  // namespace mmofl
