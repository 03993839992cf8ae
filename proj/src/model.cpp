#include "mmofl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

#include "mmofl/errors.hpp"

namespace mmofl {

namespace {

template <class Params, class Fn>
void each_block(Params& p, Fn fn) {
    fn(p.w1.a);
    fn(p.b1);
    fn(p.w2.a);
    fn(p.b2);
}

template <class Model, class Fn>
void each_model_block(Model& m, Fn fn) {
    each_block(m.head, fn);
    for (auto& e : m.encoders) each_block(e, fn);
}

Mat zeros(int rows, int cols) {
    Mat m;
    m.rows = rows;
    m.cols = cols;
    m.a.assign(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0);
    return m;
}

EncoderParams zero_layer_pair(int in, int hidden, int out) {
    EncoderParams p;
    p.w1 = zeros(hidden, in);
    p.b1.assign(static_cast<std::size_t>(hidden), 0.0);
    p.w2 = zeros(out, hidden);
    p.b2.assign(static_cast<std::size_t>(out), 0.0);
    return p;
}

void fill_uniform(Rng& rng, Mat& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols));
    for (double& v : w.a) v = (2.0 * rng.uniform01() - 1.0) * bound;
}

void check_shape(const ModelShape& s) {
    if (s.dims.empty()) throw std::invalid_argument("model: need at least 1 modality");
    for (int d : s.dims)
        if (d < 1) throw std::invalid_argument("model: input dims must be >= 1");
    if (s.hidden < 1 || s.feat < 1) throw std::invalid_argument("model: hidden/feat must be >= 1");
    if (s.classes < 2) throw std::invalid_argument("model: need at least 2 classes");
}

// g += dy * x^T
void add_outer(Mat& g, const Vec& dy, const Vec& x) {
    double* row = g.a.data();
    for (std::size_t r = 0; r < dy.size(); ++r, row += x.size()) {
        const double d = dy[r];
        if (d == 0.0) continue;
        for (std::size_t c = 0; c < x.size(); ++c) row[c] += d * x[c];
    }
}

void add_vec(Vec& g, const Vec& d) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += d[i];
}

Vec tanh_vec(Vec v) {
    for (double& x : v) x = std::tanh(x);
    return v;
}

// d(loss)/dz for pce_loss(z, row, label), scaled by `scale`, added into out.
void add_pce_grad(const Vec& z, const std::vector<Vec>& row, int label, double scale, Vec& out) {
    Vec logits(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) logits[c] = -squared_distance(z, row[c]);
    Vec p = softmax(logits);
    p[static_cast<std::size_t>(label)] -= 1.0;
    for (std::size_t c = 0; c < row.size(); ++c) {
        const double coef = -2.0 * scale * p[c];
        const Vec& v = row[c];
        for (std::size_t j = 0; j < z.size(); ++j) out[j] += coef * (z[j] - v[j]);
    }
}

const std::vector<Vec>& bank_row(const LossConfig& cfg, std::size_t m) {
    if (cfg.bank == nullptr || m >= cfg.bank->size() || (*cfg.bank)[m].empty())
        throw MissingPrototypeError("no prototype row for modality " + std::to_string(m));
    return (*cfg.bank)[m];
}

}  // namespace

GlobalModel init_model(Rng& rng, const ModelShape& shape) {
    check_shape(shape);
    GlobalModel m;
    const auto M = static_cast<int>(shape.modalities());
    m.head = zero_layer_pair(M * shape.feat, shape.hidden, shape.classes);
    {
        Rng r1 = rng.child("init_head", 0);
        fill_uniform(r1, m.head.w1);
        Rng r2 = rng.child("init_head", 1);
        fill_uniform(r2, m.head.w2);
    }
    for (int mm = 0; mm < M; ++mm) {
        EncoderParams e =
            zero_layer_pair(shape.dims[static_cast<std::size_t>(mm)], shape.hidden, shape.feat);
        Rng r1 = rng.child("init_enc", static_cast<std::uint64_t>(mm), 0);
        fill_uniform(r1, e.w1);
        Rng r2 = rng.child("init_enc", static_cast<std::uint64_t>(mm), 1);
        fill_uniform(r2, e.w2);
        m.encoders.push_back(std::move(e));
    }
    return m;
}

Gradient zero_like(const GlobalModel& m) {
    Gradient g = m;
    each_model_block(g, [](Vec& v) { std::fill(v.begin(), v.end(), 0.0); });
    return g;
}

ModelShape shape_of(const GlobalModel& m) {
    ModelShape s;
    for (const auto& e : m.encoders) s.dims.push_back(e.w1.cols);
    s.hidden = m.head.w1.rows;
    s.feat = m.encoders.empty() ? m.head.w1.cols : m.encoders[0].w2.rows;
    s.classes = m.head.w2.rows;
    return s;
}

Vec encode(const EncoderParams& enc, const Vec& x) {
    return affine(enc.w2, tanh_vec(affine(enc.w1, x, enc.b1)), enc.b2);
}

Vec predict(const GlobalModel& m, const std::vector<Vec>& features) {
    if (features.size() != m.encoders.size())
        throw ShapeError("predict: expected " + std::to_string(m.encoders.size()) +
                         " feature vectors");
    Vec cat;
    for (const Vec& z : features) cat.insert(cat.end(), z.begin(), z.end());
    return encode(m.head, cat);
}

int argmax(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("argmax of empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return static_cast<int>(best);
}

double ce_loss(const Vec& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size())
        throw std::invalid_argument("ce_loss: label out of range");
    const double hi = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double v : logits) sum += std::exp(v - hi);
    return std::max(0.0, hi + std::log(sum) - logits[static_cast<std::size_t>(label)]);
}

double pce_loss(const Vec& z, const std::vector<Vec>& row, int label) {
    if (row.empty()) throw MissingPrototypeError("pce_loss: empty prototype row");
    if (label < 0 || static_cast<std::size_t>(label) >= row.size())
        throw std::invalid_argument("pce_loss: label out of range");
    Vec logits(row.size());
    for (std::size_t c = 0; c < row.size(); ++c) {
        if (row[c].empty()) throw MissingPrototypeError("pce_loss: unpopulated prototype cell");
        logits[c] = -squared_distance(z, row[c]);
    }
    return ce_loss(logits, label);
}

double plr_loss(const Vec& logits, int label, const std::vector<Vec>& z,
                const std::vector<std::vector<Vec>>& bank_rows,
                const std::vector<std::uint8_t>& quality, double beta) {
    if (beta < 0.0) throw std::invalid_argument("plr_loss: beta must be >= 0");
    double loss = ce_loss(logits, label);
    if (beta == 0.0) return loss;
    if (quality.size() != z.size()) throw ShapeError("plr_loss: quality/feature count mismatch");
    for (std::size_t m = 0; m < z.size(); ++m) {
        if (quality[m]) continue;
        if (m >= bank_rows.size() || bank_rows[m].empty())
            throw MissingPrototypeError("plr_loss: no prototype row for modality " +
                                        std::to_string(m));
        loss += beta * pce_loss(z[m], bank_rows[m], label);
    }
    return loss;
}

namespace {

struct ForwardCache {
    std::vector<Vec> hid, zmod;
    Vec cat, hh, logits;
};

void forward_sample(const GlobalModel& model, const TrainSample& s, std::size_t F,
                    ForwardCache& fc) {
    const std::size_t M = model.encoders.size();
    if (s.inputs.size() != M) throw ShapeError("forward: sample modality count mismatch");
    fc.hid.resize(M);
    fc.zmod.resize(M);
    fc.cat.clear();
    fc.cat.reserve(M * F);
    for (std::size_t m = 0; m < M; ++m) {
        const FeatureSource& in = s.inputs[m];
        if (in.origin == FeatureOrigin::Raw) {
            fc.hid[m] = tanh_vec(affine(model.encoders[m].w1, in.value, model.encoders[m].b1));
            fc.zmod[m] = affine(model.encoders[m].w2, fc.hid[m], model.encoders[m].b2);
        } else {
            if (in.value.size() != F)
                throw ShapeError("forward: substituted feature has wrong dimension");
            fc.zmod[m] = in.value;
        }
        fc.cat.insert(fc.cat.end(), fc.zmod[m].begin(), fc.zmod[m].end());
    }
    fc.hh = tanh_vec(affine(model.head.w1, fc.cat, model.head.b1));
    fc.logits = affine(model.head.w2, fc.hh, model.head.b2);
}

struct BatchLossSpec {
    std::size_t feat;
    bool use_pce;
    double weight_sum;
};

BatchLossSpec check_batch(const GlobalModel& model, const std::vector<TrainSample>& batch,
                          const LossConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    if (cfg.beta < 0.0) throw std::invalid_argument("loss: beta must be >= 0");
    const std::size_t M = model.encoders.size();
    BatchLossSpec spec;
    spec.feat =
        static_cast<std::size_t>(M == 0 ? model.head.w1.cols : model.encoders[0].w2.rows);
    spec.use_pce = cfg.beta > 0.0 && !cfg.quality.empty();
    if (spec.use_pce && cfg.quality.size() != M)
        throw ShapeError("loss: quality flag count mismatch");
    spec.weight_sum = static_cast<double>(batch.size());
    if (cfg.weights != nullptr) {
        if (cfg.weights->size() != batch.size())
            throw ShapeError("loss: weight count mismatch");
        spec.weight_sum = 0.0;
        for (double w : *cfg.weights) {
            if (!(w >= 0.0)) throw std::invalid_argument("loss: weights must be >= 0");
            spec.weight_sum += w;
        }
        if (spec.weight_sum <= 0.0) throw std::invalid_argument("loss: zero total weight");
    }
    return spec;
}

double sample_loss(const ForwardCache& fc, const TrainSample& s, const LossConfig& cfg,
                   bool use_pce) {
    double loss = ce_loss(fc.logits, s.label);
    if (use_pce)
        for (std::size_t m = 0; m < fc.zmod.size(); ++m)
            if (!cfg.quality[m]) loss += cfg.beta * pce_loss(fc.zmod[m], bank_row(cfg, m), s.label);
    return loss;
}

}  // namespace

std::pair<double, Gradient> backward(const GlobalModel& model,
                                     const std::vector<TrainSample>& batch,
                                     const LossConfig& cfg) {
    const BatchLossSpec spec = check_batch(model, batch, cfg);
    const std::size_t M = model.encoders.size();
    const std::size_t F = spec.feat;

    Gradient grad = zero_like(model);
    double loss_sum = 0.0;
    ForwardCache fc;

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const TrainSample& s = batch[i];
        const double w = cfg.weights ? (*cfg.weights)[i] : 1.0;
        if (w == 0.0) continue;

        forward_sample(model, s, F, fc);
        loss_sum += w * sample_loss(fc, s, cfg, spec.use_pce);

        // backward through the head
        Vec dlogits = softmax(fc.logits);
        dlogits[static_cast<std::size_t>(s.label)] -= 1.0;
        if (w != 1.0)
            for (double& d : dlogits) d *= w;
        add_outer(grad.head.w2, dlogits, fc.hh);
        add_vec(grad.head.b2, dlogits);
        Vec dhh = matvec_t(model.head.w2, dlogits);
        for (std::size_t j = 0; j < dhh.size(); ++j) dhh[j] *= 1.0 - fc.hh[j] * fc.hh[j];
        add_outer(grad.head.w1, dhh, fc.cat);
        add_vec(grad.head.b1, dhh);
        Vec dcat = matvec_t(model.head.w1, dhh);

        // split dcat per modality; substituted features are constants
        for (std::size_t m = 0; m < M; ++m) {
            if (s.inputs[m].origin != FeatureOrigin::Raw) continue;
            Vec dz(dcat.begin() + static_cast<long>(m * F),
                   dcat.begin() + static_cast<long>((m + 1) * F));
            if (spec.use_pce && !cfg.quality[m])
                add_pce_grad(fc.zmod[m], bank_row(cfg, m), s.label, cfg.beta * w, dz);
            EncoderParams& ge = grad.encoders[m];
            add_outer(ge.w2, dz, fc.hid[m]);
            add_vec(ge.b2, dz);
            Vec dhid = matvec_t(model.encoders[m].w2, dz);
            for (std::size_t j = 0; j < dhid.size(); ++j)
                dhid[j] *= 1.0 - fc.hid[m][j] * fc.hid[m][j];
            add_outer(ge.w1, dhid, s.inputs[m].value);
            add_vec(ge.b1, dhid);
        }
    }

    const double inv = 1.0 / spec.weight_sum;
    each_model_block(grad, [inv](Vec& v) {
        for (double& x : v) x *= inv;
    });
    return {loss_sum * inv, std::move(grad)};
}

double batch_loss(const GlobalModel& model, const std::vector<TrainSample>& batch,
                  const LossConfig& cfg) {
    const BatchLossSpec spec = check_batch(model, batch, cfg);
    double loss_sum = 0.0;
    ForwardCache fc;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double w = cfg.weights ? (*cfg.weights)[i] : 1.0;
        if (w == 0.0) continue;
        forward_sample(model, batch[i], spec.feat, fc);
        loss_sum += w * sample_loss(fc, batch[i], cfg, spec.use_pce);
    }
    return loss_sum / spec.weight_sum;
}

void ogd_step(GlobalModel& m, const Gradient& g, double eta) {
    if (!(eta >= 0.0) || !std::isfinite(eta))
        throw std::invalid_argument("ogd_step: eta must be >= 0");
    auto step = [eta](Vec& p, const Vec& gp) {
        if (p.size() != gp.size()) throw ShapeError("ogd_step: shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= eta * gp[i];
    };
    step(m.head.w1.a, g.head.w1.a);
    step(m.head.b1, g.head.b1);
    step(m.head.w2.a, g.head.w2.a);
    step(m.head.b2, g.head.b2);
    if (m.encoders.size() != g.encoders.size()) throw ShapeError("ogd_step: encoder count");
    for (std::size_t i = 0; i < m.encoders.size(); ++i) {
        step(m.encoders[i].w1.a, g.encoders[i].w1.a);
        step(m.encoders[i].b1, g.encoders[i].b1);
        step(m.encoders[i].w2.a, g.encoders[i].w2.a);
        step(m.encoders[i].b2, g.encoders[i].b2);
    }
}

double local_update(GlobalModel& m, const std::vector<TrainSample>& batch,
                    const LossConfig& cfg, int steps, double eta) {
    if (steps < 1) throw std::invalid_argument("local_update: need at least 1 step");
    double first_loss = 0.0;
    for (int s = 0; s < steps; ++s) {
        auto [loss, grad] = backward(m, batch, cfg);
        if (s == 0) first_loss = loss;
        ogd_step(m, grad, eta);
    }
    return first_loss;
}

std::size_t param_count(const GlobalModel& m) {
    std::size_t n = 0;
    each_model_block(const_cast<GlobalModel&>(m), [&n](Vec& v) { n += v.size(); });
    return n;
}

Vec flatten(const GlobalModel& m) {
    Vec theta;
    theta.reserve(param_count(m));
    each_model_block(const_cast<GlobalModel&>(m),
                     [&theta](Vec& v) { theta.insert(theta.end(), v.begin(), v.end()); });
    return theta;
}

GlobalModel unflatten(const ModelShape& shape, const Vec& theta) {
    check_shape(shape);
    GlobalModel m;
    const auto M = static_cast<int>(shape.modalities());
    m.head = zero_layer_pair(M * shape.feat, shape.hidden, shape.classes);
    for (int i = 0; i < M; ++i)
        m.encoders.push_back(
            zero_layer_pair(shape.dims[static_cast<std::size_t>(i)], shape.hidden, shape.feat));
    if (param_count(m) != theta.size())
        throw ShapeError("unflatten: expected " + std::to_string(param_count(m)) +
                         " parameters, got " + std::to_string(theta.size()));
    std::size_t off = 0;
    each_model_block(m, [&theta, &off](Vec& v) {
        std::copy(theta.begin() + static_cast<long>(off),
                  theta.begin() + static_cast<long>(off + v.size()), v.begin());
        off += v.size();
    });
    return m;
}

std::vector<std::uint8_t> to_f32_bytes(const GlobalModel& m) {
    Vec theta = flatten(m);
    std::vector<std::uint8_t> out;
    out.reserve(theta.size() * 4);
    for (double d : theta) {
        const auto u = std::bit_cast<std::uint32_t>(static_cast<float>(d));
        out.push_back(static_cast<std::uint8_t>(u & 0xff));
        out.push_back(static_cast<std::uint8_t>((u >> 8) & 0xff));
        out.push_back(static_cast<std::uint8_t>((u >> 16) & 0xff));
        out.push_back(static_cast<std::uint8_t>((u >> 24) & 0xff));
    }
    return out;
}

GlobalModel from_f32_bytes(const ModelShape& shape, const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() % 4 != 0) throw FormatError("model bytes not a multiple of 4");
    Vec theta(bytes.size() / 4);
    for (std::size_t i = 0; i < theta.size(); ++i) {
        std::uint32_t u = static_cast<std::uint32_t>(bytes[4 * i]) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                          (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
        theta[i] = static_cast<double>(std::bit_cast<float>(u));
    }
    return unflatten(shape, theta);
}

}  // namespace mmofl
