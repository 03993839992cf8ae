#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmofl/linalg.hpp"
#include "mmofl/rng.hpp"

namespace mmofl {

/// One labeled observation. features[m] is only meaningful while
/// available[m] is true; consumers must never read an unavailable modality.
struct ModalSample {
    std::vector<Vec> features;
    std::vector<std::uint8_t> available;
    int label = 0;

    std::size_t modalities() const { return features.size(); }
};

/// A client's dataset for one global round, plus the per-modality quality
/// flags set by the quality injector.
struct RoundBatch {
    std::vector<ModalSample> samples;
    std::vector<std::uint8_t> quality;  // q[m]: 1 normal, 0 degraded
    int round = 0;
    int client = 0;
};

/// Gaussian-mixture generator state: one mean per (class, modality).
/// RMS pairwise distance between class means equals `separation`.
struct SynthSpec {
    std::vector<std::vector<Vec>> means;  // [class][modality]
    double noise_std = 1.0;
    int classes() const { return static_cast<int>(means.size()); }
};

SynthSpec make_synth_spec(Rng& rng, int classes, const std::vector<int>& dims,
                          double separation, double noise_std);

/// `size` samples with stratified labels (sample i gets class i mod C); both
/// modalities of a sample come from the same class component.
std::vector<ModalSample> draw_samples(Rng& rng, const SynthSpec& spec, std::size_t size);

/// One-shot convenience: mixture spec plus `size` draws from it.
std::vector<ModalSample> synth_pool(Rng& rng, int classes, const std::vector<int>& dims,
                                    std::size_t size, double separation,
                                    double noise_std = 1.0);

/// Whitespace-separated numeric text, one sample per line: all modality
/// features in layout order, then an integer label. `classes` > 0 enables a
/// label range check; `standardize` applies per-coordinate z-scoring with
/// pool statistics.
std::vector<ModalSample> load_har_numeric(const std::string& path,
                                          const std::vector<int>& layout,
                                          int classes = 0, bool standardize = true);

/// Inverse of load_har_numeric (full double precision, round-trip safe).
void save_pool(const std::string& path, const std::vector<ModalSample>& pool);

/// Per-coordinate z-scoring in place; constant coordinates are left centered.
void zscore_standardize(std::vector<ModalSample>& pool);

/// Per class, split that class's samples across K clients proportionally to a
/// Dirichlet(alpha) draw with largest-remainder rounding. Outputs are
/// disjoint and their union is the input pool.
std::vector<std::vector<ModalSample>> partition_dirichlet(Rng& rng,
                                                          const std::vector<ModalSample>& pool,
                                                          double alpha, int clients);

/// Sliding window over a client's long-term pool, consumed as a ring.
/// The window starts as the first N pool positions; each advance drops the
/// oldest `refresh` samples and appends the next `refresh` pool samples.
class ClientStream {
  public:
    ClientStream(std::vector<ModalSample> pool, std::size_t window, std::size_t refresh,
                 int client);

    bool empty() const { return pool_.empty(); }
    int client() const { return client_; }
    std::size_t window_size() const { return window_; }

    /// Refresh the window and return it as the next round's batch
    /// (availability and quality untouched; injectors run afterwards).
    RoundBatch advance(int round);

    /// Pool positions currently in the window (for hindsight bookkeeping).
    std::vector<std::size_t> window_indices() const;

    const std::vector<ModalSample>& pool() const { return pool_; }

  private:
    std::vector<ModalSample> pool_;
    std::size_t window_;
    std::size_t refresh_;
    std::size_t cursor_ = 0;  // next pool position to append
    int client_;
};

/// Imbalance injection parameters. Affected-round sets are a function of
/// (seed, T, fraction) only, identical for every client.
struct ImbalanceSpec {
    double miss_fraction = 0.0;            // share of window samples losing one modality
    double round_fraction_quantity = 0.0;  // share of rounds with quantity imbalance
    double round_fraction_quality = 0.0;   // share of rounds with quality imbalance
    double snr_db = 10.0;                  // +infinity = flags only, no noise
    std::uint64_t seed = 0;
};

/// The fixed set of affected rounds: a seeded random subset of [0, T) of size
/// ceil(fraction * T). `label` separates the quantity and quality subsets.
std::vector<std::uint8_t> affected_rounds(std::uint64_t seed, int total_rounds,
                                          double fraction, std::string_view label);

/// Quantity imbalance: on affected rounds, ceil(miss_fraction * N) samples
/// lose exactly one modality each (chosen uniformly per sample).
RoundBatch inject_quantity(RoundBatch batch, const ImbalanceSpec& spec, int round,
                           const std::vector<std::uint8_t>& affected);

/// Quality imbalance: on affected rounds, one modality (uniform per client
/// and round) has AWGN added to every available feature vector so the
/// per-vector signal-to-noise ratio equals snr_db, and its quality flag
/// cleared. Zero-power vectors keep their values but the flag is still set.
RoundBatch inject_quality(RoundBatch batch, const ImbalanceSpec& spec, int round,
                          const std::vector<std::uint8_t>& affected);

}  // namespace mmofl
