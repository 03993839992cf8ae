#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mmofl/errors.hpp"
#include "mmofl/prototype.hpp"

using namespace mmofl;

namespace {

// encoder that maps every input to the fixed vector `z`
EncoderParams const_encoder(std::size_t in, const Vec& z) {
    EncoderParams e;
    e.w1 = Mat(2, in);
    e.b1.assign(2, 0.0);
    e.w2 = Mat(z.size(), 2);
    e.b2 = z;
    return e;
}

ModalSample sample(int label, const Vec& f0, const Vec& f1) {
    ModalSample s;
    s.label = label;
    s.features = {f0, f1};
    s.available = {1, 1};
    return s;
}

LocalPrototypeSet one_entry_set(const Vec& v, std::uint32_t support, int round) {
    LocalPrototypeSet s;
    s.round = round;
    s.entries[{0, 0}] = {v, support};
    return s;
}

}  // namespace

TEST_CASE("gate rejects missing and low-quality samples with bookkeeping") {
    std::vector<EncoderParams> enc{const_encoder(2, {3.0, 4.0}),
                                   const_encoder(2, {0.0, 2.0})};
    RoundBatch batch;
    batch.client = 4;
    batch.round = 9;
    batch.quality = {1, 1};
    for (int i = 0; i < 4; ++i) batch.samples.push_back(sample(0, {1.0, 1.0}, {1.0, 1.0}));
    ModalSample holey = sample(1, {1.0, 1.0}, {1.0, 1.0});
    holey.available[0] = 0;
    batch.samples.push_back(holey);

    GateCounters gc;
    LocalPrototypeSet set = local_prototypes(batch, enc, &gc);
    CHECK(set.client == 4);
    CHECK(set.round == 9);
    CHECK(gc.seen == 10);  // 5 samples x 2 modalities
    CHECK(gc.rejected_missing == 1);
    CHECK(gc.rejected_quality == 0);
    CHECK(gc.accepted == 9);
    CHECK(gc.accepted + gc.rejected_missing + gc.rejected_quality == gc.seen);

    // modality 0 only saw class 0; modality 1 saw both classes
    REQUIRE(set.entries.count({0, 0}) == 1);
    CHECK(set.entries.count({0, 1}) == 0);
    REQUIRE(set.entries.count({1, 0}) == 1);
    REQUIRE(set.entries.count({1, 1}) == 1);
    CHECK(set.entries[{0, 0}].support == 4);
    CHECK(set.entries[{1, 1}].support == 1);

    // constant encoder (3,4) -> unit prototype (0.6, 0.8)
    CHECK(set.entries[{0, 0}].v[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(set.entries[{0, 0}].v[1] == doctest::Approx(0.8).epsilon(1e-12));

    // flip quality for modality 1: everything there is rejected
    batch.quality = {1, 0};
    GateCounters gq;
    LocalPrototypeSet qset = local_prototypes(batch, enc, &gq);
    CHECK(gq.rejected_quality == 5);
    CHECK(qset.entries.count({1, 0}) == 0);
    CHECK(qset.entries.count({1, 1}) == 0);
}

TEST_CASE("instant aggregation averages client prototypes and renormalizes") {
    LocalPrototypeSet a = one_entry_set({1.0, 0.0}, 3, 5);
    LocalPrototypeSet b = one_entry_set({0.0, 1.0}, 1, 5);
    a.client = 0;
    b.client = 1;

    InstantPrototypes mean = aggregate_instant({a, b});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(mean[{0, 0}][0] == doctest::Approx(inv_sqrt2).epsilon(1e-12));
    CHECK(mean[{0, 0}][1] == doctest::Approx(inv_sqrt2).epsilon(1e-12));

    // support weighting tilts towards the bigger contributor
    InstantPrototypes wavg = aggregate_instant({a, b}, true);
    Vec expect = l2_normalize({0.75, 0.25});
    CHECK(wavg[{0, 0}][0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(wavg[{0, 0}][1] == doctest::Approx(expect[1]).epsilon(1e-12));

    // single-set aggregation is idempotent
    InstantPrototypes solo = aggregate_instant({a});
    CHECK(solo[{0, 0}][0] == doctest::Approx(1.0).epsilon(1e-12));

    LocalPrototypeSet stale = one_entry_set({1.0, 0.0}, 1, 4);
    CHECK_THROWS_AS((void)aggregate_instant({a, stale}), ProtocolError);
}

TEST_CASE("cumulative bank recurrence") {
    PrototypeBank bank(2, 2);
    CHECK(bank.round == -1);
    CHECK(bank.cell(1, 1).empty());
    CHECK(!bank.row_complete(0));

    InstantPrototypes first;
    first[{0, 0}] = {1.0, 0.0};
    update_cumulative(bank, first, 0);
    CHECK(bank.round == 0);
    CHECK(bank.cell(0, 0).updates == 1);
    CHECK(bank.cell(0, 0).v == Vec{1.0, 0.0});  // adopted verbatim
    CHECK(bank.cell(0, 1).empty());             // untouched cells stay empty

    InstantPrototypes second;
    second[{0, 0}] = {0.0, 1.0};
    update_cumulative(bank, second, 1);
    Vec expect = l2_normalize({0.5, 0.5});  // (1*v + instant) / 2, renormalized
    CHECK(bank.cell(0, 0).v[0] == doctest::Approx(expect[0]).epsilon(1e-12));
    CHECK(bank.cell(0, 0).v[1] == doctest::Approx(expect[1]).epsilon(1e-12));
    CHECK(bank.cell(0, 0).updates == 2);

    // rounds with no contribution for a cell leave it untouched
    InstantPrototypes other;
    other[{1, 0}] = {1.0, 0.0};
    Vec before = bank.cell(0, 0).v;
    update_cumulative(bank, other, 2);
    CHECK(bank.cell(0, 0).v == before);
    CHECK(bank.cell(0, 0).updates == 2);

    CHECK_THROWS_AS(update_cumulative(bank, other, 2), ProtocolError);  // round regression
    InstantPrototypes oob;
    oob[{5, 0}] = {1.0, 0.0};
    CHECK_THROWS_AS(update_cumulative(bank, oob, 3), ProtocolError);

    InstantPrototypes fill;
    fill[{0, 1}] = {0.0, 1.0};
    update_cumulative(bank, fill, 3);
    CHECK(bank.row_complete(0));
    auto rows = bank.rows();
    CHECK(rows[0][0] == bank.cell(0, 0).v);
    CHECK(rows[1][1].empty());  // EMPTY cell -> empty Vec
}

TEST_CASE("literal round-count variant uses the round index as n") {
    PrototypeBank bank(1, 1);
    bank.literal_round_count = true;
    bank.normalize = false;
    InstantPrototypes p0;
    p0[{0, 0}] = {1.0, 0.0};
    update_cumulative(bank, p0, 0);
    InstantPrototypes p4;
    p4[{0, 0}] = {0.0, 1.0};
    update_cumulative(bank, p4, 4);  // n = t = 4: v = (4*v + inst) / 5
    CHECK(bank.cell(0, 0).v[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(bank.cell(0, 0).v[1] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("bank recurrence with normalization off equals the running mean") {
    PrototypeBank bank(1, 1);
    bank.normalize = false;
    Rng rng(17);
    Vec mean(4, 0.0);
    for (int t = 0; t < 25; ++t) {
        Rng r = rng.child("v", static_cast<std::uint64_t>(t));
        Vec v = l2_normalize(gaussian(r, 0.0, 1.0, 4));
        axpy(1.0, v, mean);
        InstantPrototypes inst;
        inst[{0, 0}] = v;
        update_cumulative(bank, inst, t);
    }
    for (std::size_t j = 0; j < 4; ++j)
        CHECK(bank.cell(0, 0).v[j] == doctest::Approx(mean[j] / 25.0).epsilon(1e-12));
}

TEST_CASE("quantizer round trips and honors the error bound") {
    Rng rng(19);
    Vec v = l2_normalize(gaussian(rng, 0.0, 1.0, 16));
    LocalPrototypeSet set = one_entry_set(v, 7, 3);
    set.client = 2;

    // b = 32 sentinel: exact passthrough
    QuantizedPrototypeSet full = quantize(set, 32);
    CHECK(full.entries[0].codes.empty());
    LocalPrototypeSet back32 = dequantize(full);
    CHECK(back32.entries[{0, 0}].v == v);
    CHECK(back32.entries[{0, 0}].support == 7);
    CHECK(back32.client == 2);
    CHECK(back32.round == 3);

    for (int b = 1; b <= 12; ++b) {
        QuantizedPrototypeSet q = quantize(set, b);
        LocalPrototypeSet raw = dequantize_raw(q);
        const double span = static_cast<double>(q.entries[0].hi) -
                            static_cast<double>(q.entries[0].lo);
        const double bound = span / (2.0 * ((1 << b) - 1)) + 1e-6;
        for (std::size_t j = 0; j < v.size(); ++j)
            CHECK(std::fabs(raw.entries[{0, 0}].v[j] - v[j]) <= bound);
        // the shipped reconstruction is unit length again
        CHECK(norm2(dequantize(q).entries[{0, 0}].v) == doctest::Approx(1.0).epsilon(1e-12));
    }

    // constant vectors survive exactly (span 0 -> all codes 0)
    LocalPrototypeSet flat = one_entry_set(Vec(8, 0.5), 1, 0);
    QuantizedPrototypeSet qflat = quantize(flat, 4);
    for (auto c : qflat.entries[0].codes) CHECK(c == 0);
    CHECK(dequantize_raw(qflat).entries[{0, 0}].v == Vec(8, 0.5));

    CHECK_THROWS_AS((void)quantize(set, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)quantize(set, 17), std::invalid_argument);
}

TEST_CASE("wire size matches the documented layout") {
    Rng rng(20);
    LocalPrototypeSet set;
    set.round = 1;
    for (int c = 0; c < 3; ++c) {
        Rng r = rng.child("v", static_cast<std::uint64_t>(c));
        set.entries[{0, c}] = {l2_normalize(gaussian(r, 0.0, 1.0, 16)), 5};
    }
    // per entry: 1 + 1 + 4 + 4 + 4 + ceil(16*4/8) = 22 bytes
    QuantizedPrototypeSet q4 = quantize(set, 4);
    CHECK(wire_size(q4) == 3 * 22);
    QuantizedPrototypeSet q32 = quantize(set, 32);
    CHECK(wire_size(q32) == 3 * (14 + 64));
    QuantizedPrototypeSet q3 = quantize(set, 3);
    CHECK(wire_size(q3) == 3 * (14 + 6));  // ceil(48/8)

    CHECK(to_bytes(q4).size() == wire_size(q4));
    CHECK(to_bytes(q32).size() == wire_size(q32));

    PrototypeBank bank(2, 2);
    InstantPrototypes inst;
    inst[{0, 0}] = Vec(5, 1.0);
    inst[{0, 1}] = Vec(5, 1.0);
    inst[{1, 1}] = Vec(5, 1.0);
    update_cumulative(bank, inst, 0);
    CHECK(bank_wire_size(bank) == 3 * (14 + 20));
}

TEST_CASE("byte serialization round trips") {
    Rng rng(21);
    LocalPrototypeSet set;
    set.round = 2;
    for (int c = 0; c < 4; ++c) {
        Rng r = rng.child("v", static_cast<std::uint64_t>(c));
        set.entries[{c % 2, c}] = {l2_normalize(gaussian(r, 0.0, 1.0, 11)),
                                   static_cast<std::uint32_t>(c + 1)};
    }
    for (int bits : {1, 3, 4, 8, 11, 16, 32}) {
        QuantizedPrototypeSet q = quantize(set, bits);
        auto bytes = to_bytes(q);
        QuantizedPrototypeSet back = from_bytes(bytes, bits, 11);
        CHECK(to_bytes(back) == bytes);
        REQUIRE(back.entries.size() == q.entries.size());
        for (std::size_t i = 0; i < q.entries.size(); ++i) {
            CHECK(back.entries[i].m == q.entries[i].m);
            CHECK(back.entries[i].c == q.entries[i].c);
            CHECK(back.entries[i].support == q.entries[i].support);
            CHECK(back.entries[i].codes == q.entries[i].codes);
        }
    }
    CHECK_THROWS_AS((void)from_bytes(std::vector<std::uint8_t>(7, 0), 4, 11), FormatError);

    // tampered code outside [0, 2^b - 1] is rejected at reconstruction
    QuantizedPrototypeSet evil = quantize(set, 4);
    evil.entries[0].codes[0] = 16;
    CHECK_THROWS_AS((void)dequantize(evil), FormatError);
}
