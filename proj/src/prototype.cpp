#include "mmofl/prototype.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "mmofl/errors.hpp"

namespace mmofl {

namespace {

void push_u32(std::vector<std::uint8_t>& out, std::uint32_t u) {
    out.push_back(static_cast<std::uint8_t>(u & 0xff));
    out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xff));
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | (static_cast<std::uint32_t>(b[at + 1]) << 8) |
           (static_cast<std::uint32_t>(b[at + 2]) << 16) |
           (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

std::size_t payload_bytes(std::size_t dim, int bits) {
    return (dim * static_cast<std::size_t>(bits) + 7) / 8;
}

void check_bits(int bits) {
    if (!((bits >= 1 && bits <= 16) || bits == 32))
        throw std::invalid_argument("quantize: bits must be in [1,16] or the sentinel 32");
}

}  // namespace

bool PrototypeBank::row_complete(int m) const {
    for (int c = 0; c < classes; ++c)
        if (cell(m, c).empty()) return false;
    return true;
}

std::vector<std::vector<Vec>> PrototypeBank::rows() const {
    std::vector<std::vector<Vec>> out(static_cast<std::size_t>(modalities));
    for (int m = 0; m < modalities; ++m) {
        auto& row = out[static_cast<std::size_t>(m)];
        row.resize(static_cast<std::size_t>(classes));
        for (int c = 0; c < classes; ++c)
            if (!cell(m, c).empty()) row[static_cast<std::size_t>(c)] = cell(m, c).v;
    }
    return out;
}

LocalPrototypeSet local_prototypes(const RoundBatch& batch,
                                   const std::vector<EncoderParams>& encoders,
                                   GateCounters* counters) {
    LocalPrototypeSet set;
    set.client = batch.client;
    set.round = batch.round;
    if (batch.samples.empty()) return set;
    const std::size_t M = encoders.size();
    if (batch.quality.size() != M) throw ShapeError("local_prototypes: quality flag count");

    for (std::size_t m = 0; m < M; ++m) {
        std::map<int, std::pair<Vec, std::uint32_t>> acc;  // class -> (sum, count)
        for (const ModalSample& s : batch.samples) {
            if (counters) ++counters->seen;
            if (!batch.quality[m]) {
                if (counters) ++counters->rejected_quality;
                continue;
            }
            if (!s.available[m]) {
                if (counters) ++counters->rejected_missing;
                continue;
            }
            if (counters) ++counters->accepted;
            Vec z = encode(encoders[m], s.features[m]);
            auto it = acc.find(s.label);
            if (it == acc.end())
                acc.emplace(s.label, std::make_pair(std::move(z), 1u));
            else {
                axpy(1.0, z, it->second.first);
                ++it->second.second;
            }
        }
        for (auto& [c, sum_count] : acc) {
            auto& [sum, count] = sum_count;
            for (double& x : sum) x /= static_cast<double>(count);
            if (norm2(sum) == 0.0) continue;  // cannot normalize; cell stays absent
            set.entries[{static_cast<int>(m), c}] = {l2_normalize(sum), count};
        }
    }
    return set;
}

InstantPrototypes aggregate_instant(const std::vector<LocalPrototypeSet>& sets,
                                    bool support_weighted) {
    InstantPrototypes out;
    std::map<std::pair<int, int>, double> weight;
    int round = sets.empty() ? 0 : sets[0].round;
    for (const LocalPrototypeSet& set : sets) {
        if (set.round != round) throw ProtocolError("aggregate_instant: mixed rounds");
        for (const auto& [key, entry] : set.entries) {
            const double w = support_weighted ? static_cast<double>(entry.support) : 1.0;
            auto it = out.find(key);
            if (it == out.end()) {
                Vec v = entry.v;
                for (double& x : v) x *= w;
                out.emplace(key, std::move(v));
                weight[key] = w;
            } else {
                if (it->second.size() != entry.v.size())
                    throw ProtocolError("aggregate_instant: dimension mismatch across clients");
                axpy(w, entry.v, it->second);
                weight[key] += w;
            }
        }
    }
    for (auto& [key, v] : out) {
        const double w = weight[key];
        if (w > 0.0)
            for (double& x : v) x /= w;
        v = l2_normalize(v);
    }
    return out;
}

void update_cumulative(PrototypeBank& bank, const InstantPrototypes& instant, int round) {
    if (round <= bank.round)
        throw ProtocolError("update_cumulative: round index must increase");
    for (const auto& [key, v] : instant) {
        auto [m, c] = key;
        if (m < 0 || m >= bank.modalities || c < 0 || c >= bank.classes)
            throw ProtocolError("update_cumulative: cell outside the bank grid");
        BankCell& cell = bank.cell(m, c);
        if (cell.empty()) {
            cell.v = v;
            cell.updates = 1;
            continue;
        }
        if (cell.v.size() != v.size())
            throw ProtocolError("update_cumulative: dimension mismatch");
        const double n = bank.literal_round_count ? static_cast<double>(round)
                                                  : static_cast<double>(cell.updates);
        for (std::size_t j = 0; j < cell.v.size(); ++j)
            cell.v[j] = (n * cell.v[j] + v[j]) / (n + 1.0);
        if (bank.normalize && norm2(cell.v) > 0.0) cell.v = l2_normalize(cell.v);
        ++cell.updates;
    }
    bank.round = round;
}

QuantizedPrototypeSet quantize(const LocalPrototypeSet& set, int bits) {
    check_bits(bits);
    QuantizedPrototypeSet q;
    q.bits = bits;
    q.client = set.client;
    q.round = set.round;
    for (const auto& [key, entry] : set.entries) {
        QuantEntry e;
        e.m = key.first;
        e.c = key.second;
        e.support = entry.support;
        q.dim = entry.v.size();
        if (bits == 32) {
            e.raw = entry.v;
            const auto [lo, hi] = std::minmax_element(entry.v.begin(), entry.v.end());
            e.lo = static_cast<float>(*lo);
            e.hi = static_cast<float>(*hi);
        } else {
            const auto [lo, hi] = std::minmax_element(entry.v.begin(), entry.v.end());
            e.lo = static_cast<float>(*lo);
            e.hi = static_cast<float>(*hi);
            const double span = static_cast<double>(e.hi) - static_cast<double>(e.lo);
            const double steps = static_cast<double>((1u << bits) - 1);
            e.codes.resize(entry.v.size(), 0);
            if (span > 0.0) {
                for (std::size_t j = 0; j < entry.v.size(); ++j) {
                    double t = (entry.v[j] - static_cast<double>(e.lo)) / span * steps;
                    long code = std::lround(std::min(std::max(t, 0.0), steps));
                    e.codes[j] = static_cast<std::uint16_t>(code);
                }
            }
        }
        q.entries.push_back(std::move(e));
    }
    return q;
}

namespace {

LocalPrototypeSet reconstruct(const QuantizedPrototypeSet& qset, bool renormalize) {
    check_bits(qset.bits);
    LocalPrototypeSet set;
    set.client = qset.client;
    set.round = qset.round;
    for (const QuantEntry& e : qset.entries) {
        Vec v;
        if (qset.bits == 32) {
            v = e.raw;  // exact passthrough, never re-normalized
        } else {
            const auto steps = static_cast<std::uint32_t>((1u << qset.bits) - 1);
            const double span = static_cast<double>(e.hi) - static_cast<double>(e.lo);
            v.resize(e.codes.size());
            for (std::size_t j = 0; j < e.codes.size(); ++j) {
                if (e.codes[j] > steps)
                    throw FormatError("dequantize: code exceeds 2^b - 1");
                v[j] = static_cast<double>(e.lo) +
                       static_cast<double>(e.codes[j]) / static_cast<double>(steps) * span;
            }
            if (renormalize && norm2(v) > 0.0) v = l2_normalize(v);
        }
        set.entries[{e.m, e.c}] = {std::move(v), e.support};
    }
    return set;
}

}  // namespace

LocalPrototypeSet dequantize(const QuantizedPrototypeSet& qset) {
    return reconstruct(qset, true);
}

LocalPrototypeSet dequantize_raw(const QuantizedPrototypeSet& qset) {
    return reconstruct(qset, false);
}

std::size_t wire_size(const QuantizedPrototypeSet& qset) {
    return qset.entries.size() * (2 + 4 + 8 + payload_bytes(qset.dim, qset.bits));
}

std::size_t bank_wire_size(const PrototypeBank& bank) {
    std::size_t total = 0;
    for (const BankCell& cell : bank.cells)
        if (!cell.empty()) total += 2 + 4 + 8 + payload_bytes(cell.v.size(), 32);
    return total;
}

std::vector<std::uint8_t> to_bytes(const QuantizedPrototypeSet& qset) {
    check_bits(qset.bits);
    std::vector<std::uint8_t> out;
    for (const QuantEntry& e : qset.entries) {
        if (e.m < 0 || e.m > 255 || e.c < 0 || e.c > 255)
            throw FormatError("to_bytes: modality/class outside one byte");
        out.push_back(static_cast<std::uint8_t>(e.m));
        out.push_back(static_cast<std::uint8_t>(e.c));
        push_u32(out, e.support);
        push_u32(out, std::bit_cast<std::uint32_t>(e.lo));
        push_u32(out, std::bit_cast<std::uint32_t>(e.hi));
        if (qset.bits == 32) {
            for (double x : e.raw)
                push_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(x)));
        } else {
            std::uint64_t buf = 0;
            int filled = 0;
            std::size_t emitted = 0;
            for (std::uint16_t code : e.codes) {
                buf |= static_cast<std::uint64_t>(code) << filled;
                filled += qset.bits;
                while (filled >= 8) {
                    out.push_back(static_cast<std::uint8_t>(buf & 0xff));
                    buf >>= 8;
                    filled -= 8;
                    ++emitted;
                }
            }
            if (filled > 0) {
                out.push_back(static_cast<std::uint8_t>(buf & 0xff));
                ++emitted;
            }
            if (emitted != payload_bytes(e.codes.size(), qset.bits))
                throw FormatError("to_bytes: payload size bookkeeping error");
        }
    }
    return out;
}

QuantizedPrototypeSet from_bytes(const std::vector<std::uint8_t>& bytes, int bits,
                                 std::size_t dim) {
    check_bits(bits);
    const std::size_t entry_size = 2 + 4 + 8 + payload_bytes(dim, bits);
    if (entry_size == 0 || bytes.size() % entry_size != 0)
        throw FormatError("from_bytes: byte count not a multiple of the entry size");
    QuantizedPrototypeSet q;
    q.bits = bits;
    q.dim = dim;
    for (std::size_t at = 0; at < bytes.size(); at += entry_size) {
        QuantEntry e;
        e.m = bytes[at];
        e.c = bytes[at + 1];
        e.support = read_u32(bytes, at + 2);
        e.lo = std::bit_cast<float>(read_u32(bytes, at + 6));
        e.hi = std::bit_cast<float>(read_u32(bytes, at + 10));
        std::size_t p = at + 14;
        if (bits == 32) {
            e.raw.resize(dim);
            for (std::size_t j = 0; j < dim; ++j)
                e.raw[j] = static_cast<double>(std::bit_cast<float>(read_u32(bytes, p + 4 * j)));
        } else {
            e.codes.resize(dim);
            std::uint64_t buf = 0;
            int filled = 0;
            const auto mask = static_cast<std::uint64_t>((1u << bits) - 1);
            for (std::size_t j = 0; j < dim; ++j) {
                while (filled < bits) {
                    buf |= static_cast<std::uint64_t>(bytes[p++]) << filled;
                    filled += 8;
                }
                e.codes[j] = static_cast<std::uint16_t>(buf & mask);
                buf >>= bits;
                filled -= bits;
            }
        }
        q.entries.push_back(std::move(e));
    }
    return q;
}

}  // namespace mmofl
