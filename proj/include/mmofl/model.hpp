#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mmofl/linalg.hpp"
#include "mmofl/rng.hpp"

namespace mmofl {

/// Two affine layers with tanh between: x -> w2 * tanh(w1 x + b1) + b2.
struct EncoderParams {
    Mat w1;
    Vec b1;
    Mat w2;
    Vec b2;
};
using HeadParams = EncoderParams;  // same structure, M*D_feat -> hidden -> C

struct ModelShape {
    std::vector<int> dims;  // input dim per modality
    int hidden = 32;
    int feat = 16;  // shared encoder output dimension D_feat
    int classes = 4;
    std::size_t modalities() const { return dims.size(); }
};

struct GlobalModel {
    HeadParams head;
    std::vector<EncoderParams> encoders;
};
using Gradient = GlobalModel;  // shape-congruent by construction

/// Symmetric uniform fan-in init, U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
/// biases zero. Each layer draws from its own child stream.
GlobalModel init_model(Rng& rng, const ModelShape& shape);
Gradient zero_like(const GlobalModel& m);
ModelShape shape_of(const GlobalModel& m);

Vec encode(const EncoderParams& enc, const Vec& x);
Vec predict(const GlobalModel& m, const std::vector<Vec>& features);
int argmax(const Vec& v);  // lowest index wins ties

double ce_loss(const Vec& logits, int label);

/// -log softmax over negative squared Euclidean distances to the row's
/// prototypes. Empty cell -> MissingPrototypeError.
double pce_loss(const Vec& z, const std::vector<Vec>& row, int label);

/// ce + beta * sum_m (1 - q_m) * pce(z[m], bank_rows[m], label).
/// With beta = 0 or all quality flags set this is exactly ce_loss(logits).
double plr_loss(const Vec& logits, int label, const std::vector<Vec>& z,
                const std::vector<std::vector<Vec>>& bank_rows,
                const std::vector<std::uint8_t>& quality, double beta);

/// How a sample feeds modality m: a raw input run through encoder m, or an
/// already-substituted feature vector (prototype / zero pad) that is a
/// constant in backprop — no gradient reaches encoder m from it.
enum class FeatureOrigin { Raw, Constant };
struct FeatureSource {
    FeatureOrigin origin = FeatureOrigin::Raw;
    Vec value;  // dim d_m when Raw, dim D_feat when Constant
};
struct TrainSample {
    std::vector<FeatureSource> inputs;
    int label = 0;
};

struct LossConfig {
    double beta = 0.0;
    std::vector<std::uint8_t> quality;  // per-modality q flags; empty = all 1
    // bank rows for PCE, indexed [m][c]; only consulted for q_m = 0, beta > 0
    const std::vector<std::vector<Vec>>* bank = nullptr;
    // optional per-sample weights (multiplicity); null = uniform. The loss
    // is the weighted mean sum(w_i l_i) / sum(w_i).
    const Vec* weights = nullptr;
};

/// Weighted mean per-sample loss over the batch and its analytic gradient
/// w.r.t. all parameters.
std::pair<double, Gradient> backward(const GlobalModel& m,
                                     const std::vector<TrainSample>& batch,
                                     const LossConfig& cfg);

/// Forward-only evaluation of the same weighted mean loss.
double batch_loss(const GlobalModel& m, const std::vector<TrainSample>& batch,
                  const LossConfig& cfg);

void ogd_step(GlobalModel& m, const Gradient& g, double eta);

/// `steps` sequential full-batch OGD steps; returns the batch loss measured
/// before the first step (the online loss of the incoming model).
double local_update(GlobalModel& m, const std::vector<TrainSample>& batch,
                    const LossConfig& cfg, int steps, double eta);

/// Canonical parameter vector: head w1 (row-major), b1, w2, b2, then each
/// encoder in modality order with the same block layout. The 32-bit
/// little-endian serialization of this vector is the model wire format.
std::size_t param_count(const GlobalModel& m);
Vec flatten(const GlobalModel& m);
GlobalModel unflatten(const ModelShape& shape, const Vec& theta);
std::vector<std::uint8_t> to_f32_bytes(const GlobalModel& m);
GlobalModel from_f32_bytes(const ModelShape& shape, const std::vector<std::uint8_t>& bytes);

}  // namespace mmofl
