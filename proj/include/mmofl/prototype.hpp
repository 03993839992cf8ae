#pragma once

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "mmofl/data.hpp"
#include "mmofl/linalg.hpp"
#include "mmofl/model.hpp"

namespace mmofl {

struct ProtoEntry {
    Vec v;  // unit norm
    std::uint32_t support = 0;
};

/// Sparse per-client prototypes for one round: (modality, class) -> entry.
/// Cells with no qualifying samples are absent, never zero.
struct LocalPrototypeSet {
    std::map<std::pair<int, int>, ProtoEntry> entries;
    int client = 0;
    int round = 0;
};

using InstantPrototypes = std::map<std::pair<int, int>, Vec>;

struct BankCell {
    Vec v;
    std::uint32_t updates = 0;
    bool empty() const { return updates == 0; }
};

/// Cumulative global prototype matrix, M x C cells.
struct PrototypeBank {
    int modalities = 0;
    int classes = 0;
    std::vector<BankCell> cells;  // index m * classes + c
    int round = -1;               // last round that updated the bank
    bool normalize = true;        // test mode may disable re-normalization
    bool literal_round_count = false;  // running count = global round index, not per-cell

    PrototypeBank() = default;
    PrototypeBank(int m, int c)
        : modalities(m), classes(c),
          cells(static_cast<std::size_t>(m) * static_cast<std::size_t>(c)) {}

    BankCell& cell(int m, int c) {
        return cells[static_cast<std::size_t>(m) * static_cast<std::size_t>(classes) +
                     static_cast<std::size_t>(c)];
    }
    const BankCell& cell(int m, int c) const {
        return cells[static_cast<std::size_t>(m) * static_cast<std::size_t>(classes) +
                     static_cast<std::size_t>(c)];
    }
    bool row_complete(int m) const;

    /// rows()[m][c] is the cell vector, empty Vec for EMPTY cells —
    /// the shape plr_loss consumes.
    std::vector<std::vector<Vec>> rows() const;
};

struct GateCounters {
    std::size_t seen = 0;
    std::size_t rejected_missing = 0;  // p = 0
    std::size_t rejected_quality = 0;  // q = 0 for the sample's modality
    std::size_t accepted = 0;
};

/// Eq. 13/14: per (m, c), the normalized mean encoding over samples passing
/// the gate (modality present, modality quality normal, label = c). A mean
/// that is exactly zero cannot be normalized and the cell is omitted.
LocalPrototypeSet local_prototypes(const RoundBatch& batch,
                                   const std::vector<EncoderParams>& encoders,
                                   GateCounters* counters = nullptr);

/// Eq. 15 with the contributing-clients-only correction: per cell, mean over
/// the clients that submitted it (ascending client order), re-normalized.
InstantPrototypes aggregate_instant(const std::vector<LocalPrototypeSet>& sets,
                                    bool support_weighted = false);

/// Eq. 16: empty cell adopts the instantaneous prototype; otherwise
/// v <- normalize((n*v + instant) / (n+1)) with n the cell's update count
/// (or the global round index in the literal variant).
void update_cumulative(PrototypeBank& bank, const InstantPrototypes& instant, int round);

/// Uniform scalar quantization, b bits per coordinate against a per-vector
/// [min, max] range stored as 32-bit floats. b = 32 is a full-precision
/// passthrough sentinel.
struct QuantEntry {
    int m = 0;
    int c = 0;
    std::uint32_t support = 0;
    float lo = 0.0f;
    float hi = 0.0f;
    std::vector<std::uint16_t> codes;  // empty when bits = 32
    Vec raw;                           // used only when bits = 32
};

struct QuantizedPrototypeSet {
    std::vector<QuantEntry> entries;
    int bits = 32;
    int client = 0;
    int round = 0;
    std::size_t dim = 0;
};

QuantizedPrototypeSet quantize(const LocalPrototypeSet& set, int bits);

/// Reconstruction x^ = lo + code/(2^b - 1) * (hi - lo), then re-normalized
/// to unit length (skipped for the exact b = 32 passthrough and for
/// zero-norm reconstructions).
LocalPrototypeSet dequantize(const QuantizedPrototypeSet& qset);

/// Reconstruction without the final re-normalization (error-bound checks).
LocalPrototypeSet dequantize_raw(const QuantizedPrototypeSet& qset);

/// Per entry: 1B modality + 1B class + 4B support + two 4B scales +
/// ceil(dim * bits / 8) payload bytes.
std::size_t wire_size(const QuantizedPrototypeSet& qset);

/// Broadcast accounting: the bank serialized at full precision
/// (non-empty cells only, b = 32 entry layout, updates as support).
std::size_t bank_wire_size(const PrototypeBank& bank);

/// Little-endian serialization in wire_size's field order; codes are packed
/// LSB-first. from_bytes needs the out-of-band (bits, dim) pair.
std::vector<std::uint8_t> to_bytes(const QuantizedPrototypeSet& qset);
QuantizedPrototypeSet from_bytes(const std::vector<std::uint8_t>& bytes, int bits,
                                 std::size_t dim);

}  // namespace mmofl
