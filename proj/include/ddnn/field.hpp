#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddnn/errors.hpp"
#include "ddnn/rng.hpp"
#include "ddnn/solver.hpp"
#include "ddnn/vec.hpp"

namespace ddnn {

/// How current state z(t) and delayed state v = z(t - tau) are fed to the MLP:
/// Concat stacks [z || v], Convex blends lambda z + (1 - lambda) v.
enum class CombineMode { Concat, Convex };

/// Identity is a test-only linearization of the network; Tanh is production.
enum class Activation { Tanh, Identity };

/// Architecture of the neural right-hand side f(t, z, v; theta):
/// a two-layer MLP over the combined input, output width = state dim.
struct DelayFieldSpec {
    int state_dim = 2;
    int hidden_dim = 50;
    CombineMode combine = CombineMode::Convex;
    double lambda = 0.75; // Convex only
    double tau = 1.0;
    bool include_time = false; // append t as an extra input feature
    Activation activation = Activation::Tanh;

    [[nodiscard]] int combined_width() const {
        return combine == CombineMode::Concat ? 2 * state_dim : state_dim;
    }
    [[nodiscard]] int input_width() const { return combined_width() + (include_time ? 1 : 0); }

    void validate() const {
        if (state_dim < 1 || hidden_dim < 1) throw ConfigError("DelayFieldSpec: dims must be >= 1");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("DelayFieldSpec: lambda must be in [0, 1]");
        if (!(tau > 0.0)) throw ConfigError("DelayFieldSpec: tau must be positive");
    }
};

/// Offsets inside the flat parameter vector, in layout order:
/// W1 (H x m, row-major), b1 (H), W2 (d x H, row-major), b2 (d).
struct ParamLayout {
    int in_width = 0;
    int hidden = 0;
    int out = 0;

    [[nodiscard]] static ParamLayout of(const DelayFieldSpec& spec) {
        return {spec.input_width(), spec.hidden_dim, spec.state_dim};
    }
    [[nodiscard]] std::size_t w1() const { return 0; }
    [[nodiscard]] std::size_t b1() const { return static_cast<std::size_t>(hidden) * in_width; }
    [[nodiscard]] std::size_t w2() const { return b1() + hidden; }
    [[nodiscard]] std::size_t b2() const { return w2() + static_cast<std::size_t>(out) * hidden; }
    [[nodiscard]] std::size_t total() const { return b2() + out; }
};

[[nodiscard]] inline std::size_t param_count(const DelayFieldSpec& spec) {
    return ParamLayout::of(spec).total();
}

/// Zero-copy views of the individual weight blocks.
struct MlpViews {
    std::span<const double> w1, b1, w2, b2;
};

[[nodiscard]] inline MlpViews unpack(const DelayFieldSpec& spec, const Vec& theta) {
    const ParamLayout lay = ParamLayout::of(spec);
    if (theta.size() != lay.total()) throw DimensionMismatch("unpack: theta length");
    const double* p = theta.data();
    return {{p + lay.w1(), lay.b1() - lay.w1()},
            {p + lay.b1(), lay.w2() - lay.b1()},
            {p + lay.w2(), lay.b2() - lay.w2()},
            {p + lay.b2(), lay.total() - lay.b2()}};
}

[[nodiscard]] inline Vec pack(const DelayFieldSpec& spec, const MlpViews& views) {
    const ParamLayout lay = ParamLayout::of(spec);
    Vec theta;
    theta.reserve(lay.total());
    theta.insert(theta.end(), views.w1.begin(), views.w1.end());
    theta.insert(theta.end(), views.b1.begin(), views.b1.end());
    theta.insert(theta.end(), views.w2.begin(), views.w2.end());
    theta.insert(theta.end(), views.b2.begin(), views.b2.end());
    if (theta.size() != lay.total()) throw DimensionMismatch("pack: block widths");
    return theta;
}

/// Combined MLP input h(z, v), without the optional time feature.
inline void combine_into(const DelayFieldSpec& spec, std::span<const double> z,
                         std::span<const double> v, std::span<double> out) {
    const int d = spec.state_dim;
    if (static_cast<int>(z.size()) != d || static_cast<int>(v.size()) != d)
        throw DimensionMismatch("combine: state width");
    if (spec.combine == CombineMode::Concat) {
        if (static_cast<int>(out.size()) != 2 * d) throw DimensionMismatch("combine: output width");
        std::copy(z.begin(), z.end(), out.begin());
        std::copy(v.begin(), v.end(), out.begin() + d);
    } else {
        if (static_cast<int>(out.size()) != d) throw DimensionMismatch("combine: output width");
        const double lam = spec.lambda;
        for (int j = 0; j < d; ++j) out[j] = lam * z[j] + (1.0 - lam) * v[j];
    }
}

[[nodiscard]] inline Vec combine(const DelayFieldSpec& spec, std::span<const double> z,
                                 std::span<const double> v) {
    Vec out(static_cast<std::size_t>(spec.combined_width()));
    combine_into(spec, z, v, out);
    return out;
}

/// Activation record of one field evaluation, consumed by field_vjp.
struct EvalCache {
    double t = 0.0;
    Vec input;  // u, including the time feature when enabled
    Vec hidden; // activation outputs a = act(W1 u + b1)
    const double* theta_data = nullptr; // stale-cache detection
    std::size_t theta_size = 0;
};

/// dz/dt = W2 act(W1 u + b1) + b2 with u = h(z, v) [, t].
inline void field_eval(const DelayFieldSpec& spec, const Vec& theta, double t,
                       std::span<const double> z, std::span<const double> v,
                       std::span<double> out, EvalCache* cache = nullptr) {
    const int d = spec.state_dim;
    const int hid = spec.hidden_dim;
    const ParamLayout lay = ParamLayout::of(spec);
    const int m = lay.in_width;
    if (theta.size() != lay.total()) throw DimensionMismatch("field_eval: theta length");
    if (static_cast<int>(out.size()) != d) throw DimensionMismatch("field_eval: output width");

    EvalCache local;
    EvalCache& c = cache ? *cache : local;
    c.input.resize(m);
    c.hidden.resize(hid);
    combine_into(spec, z, v, std::span<double>(c.input.data(), spec.combined_width()));
    if (spec.include_time) c.input[m - 1] = t;

    const double* w1 = theta.data() + lay.w1();
    const double* b1 = theta.data() + lay.b1();
    const double* w2 = theta.data() + lay.w2();
    const double* b2 = theta.data() + lay.b2();
    const double* u = c.input.data();

    const bool use_tanh = spec.activation == Activation::Tanh;
    for (int k = 0; k < hid; ++k) {
        double s = b1[k];
        const double* row = w1 + static_cast<std::size_t>(k) * m;
        for (int l = 0; l < m; ++l) s += row[l] * u[l];
        c.hidden[k] = use_tanh ? std::tanh(s) : s;
    }
    const double* a = c.hidden.data();
    for (int i = 0; i < d; ++i) {
        double s = b2[i];
        const double* row = w2 + static_cast<std::size_t>(i) * hid;
        for (int k = 0; k < hid; ++k) s += row[k] * a[k];
        out[i] = s;
    }
    if (!all_finite(out)) throw NonFiniteOutput("field_eval: non-finite output at t = " + std::to_string(t));
    c.t = t;
    c.theta_data = theta.data();
    c.theta_size = theta.size();
}

[[nodiscard]] inline Vec field_eval(const DelayFieldSpec& spec, const Vec& theta, double t,
                                    std::span<const double> z, std::span<const double> v,
                                    EvalCache* cache = nullptr) {
    Vec out(static_cast<std::size_t>(spec.state_dim));
    field_eval(spec, theta, t, z, v, out, cache);
    return out;
}

/// Cotangent products a^T df/dz, a^T df/dv, a^T df/dtheta.
struct VjpTriple {
    Vec wrt_z, wrt_v, wrt_theta;
};

struct VjpScratch {
    Vec gpre; // hidden-width buffer
};

/// Reverse accumulation through the cached evaluation. For Convex the input
/// gradient g_u splits as wrt_z = lambda g_u, wrt_v = (1 - lambda) g_u; for
/// Concat it splits positionally. The time column contributes to no output.
inline void field_vjp_into(const DelayFieldSpec& spec, const Vec& theta, const EvalCache& cache,
                           std::span<const double> cotangent, VjpScratch& ws, VjpTriple& out) {
    const int d = spec.state_dim;
    const int hid = spec.hidden_dim;
    const ParamLayout lay = ParamLayout::of(spec);
    const int m = lay.in_width;
    if (theta.size() != lay.total()) throw DimensionMismatch("field_vjp: theta length");
    if (cache.theta_data != theta.data() || cache.theta_size != theta.size())
        throw StaleCache("field_vjp: cache was produced with a different theta");
    if (static_cast<int>(cache.input.size()) != m || static_cast<int>(cache.hidden.size()) != hid)
        throw StaleCache("field_vjp: cache widths do not match spec");
    if (static_cast<int>(cotangent.size()) != d) throw DimensionMismatch("field_vjp: cotangent width");

    out.wrt_z.resize(d);
    out.wrt_v.resize(d);
    out.wrt_theta.resize(lay.total());
    ws.gpre.resize(hid);

    const double* w1 = theta.data() + lay.w1();
    const double* w2 = theta.data() + lay.w2();
    const double* u = cache.input.data();
    const double* a = cache.hidden.data();
    double* gw1 = out.wrt_theta.data() + lay.w1();
    double* gb1 = out.wrt_theta.data() + lay.b1();
    double* gw2 = out.wrt_theta.data() + lay.w2();
    double* gb2 = out.wrt_theta.data() + lay.b2();

    // output layer
    for (int i = 0; i < d; ++i) {
        const double g = cotangent[i];
        gb2[i] = g;
        double* row = gw2 + static_cast<std::size_t>(i) * hid;
        for (int k = 0; k < hid; ++k) row[k] = g * a[k];
    }
    // back through activation: gpre = (W2^T cotangent) .* act'
    const bool use_tanh = spec.activation == Activation::Tanh;
    for (int k = 0; k < hid; ++k) {
        double s = 0.0;
        for (int i = 0; i < d; ++i) s += w2[static_cast<std::size_t>(i) * hid + k] * cotangent[i];
        ws.gpre[k] = use_tanh ? s * (1.0 - a[k] * a[k]) : s;
    }
    // hidden layer
    for (int k = 0; k < hid; ++k) {
        const double g = ws.gpre[k];
        gb1[k] = g;
        double* row = gw1 + static_cast<std::size_t>(k) * m;
        for (int l = 0; l < m; ++l) row[l] = g * u[l];
    }
    // input gradient, split per combine mode (time column dropped)
    const int cw = spec.combined_width();
    if (spec.combine == CombineMode::Concat) {
        for (int l = 0; l < cw; ++l) {
            double s = 0.0;
            for (int k = 0; k < hid; ++k) s += w1[static_cast<std::size_t>(k) * m + l] * ws.gpre[k];
            if (l < d)
                out.wrt_z[l] = s;
            else
                out.wrt_v[l - d] = s;
        }
    } else {
        const double lam = spec.lambda;
        for (int l = 0; l < cw; ++l) {
            double s = 0.0;
            for (int k = 0; k < hid; ++k) s += w1[static_cast<std::size_t>(k) * m + l] * ws.gpre[k];
            out.wrt_z[l] = lam * s;
            out.wrt_v[l] = (1.0 - lam) * s;
        }
    }
}

[[nodiscard]] inline VjpTriple field_vjp(const DelayFieldSpec& spec, const Vec& theta,
                                         const EvalCache& cache, std::span<const double> cotangent) {
    VjpTriple out;
    VjpScratch ws;
    field_vjp_into(spec, theta, cache, cotangent, ws, out);
    return out;
}

/// Glorot-uniform weights, zero biases; draws in layout order (W1 then W2)
/// from xoshiro256++ seeded with `seed`, so results are reproducible bit for bit.
[[nodiscard]] inline Vec init_params(const DelayFieldSpec& spec, std::uint64_t seed) {
    spec.validate();
    const ParamLayout lay = ParamLayout::of(spec);
    Vec theta(lay.total(), 0.0);
    Xoshiro256pp rng(seed);
    const double s1 = std::sqrt(6.0 / (lay.in_width + lay.hidden));
    for (std::size_t i = lay.w1(); i < lay.b1(); ++i) theta[i] = rng.uniform(-s1, s1);
    const double s2 = std::sqrt(6.0 / (lay.hidden + lay.out));
    for (std::size_t i = lay.w2(); i < lay.b2(); ++i) theta[i] = rng.uniform(-s2, s2);
    return theta;
}

/// Adapter so the neural field can drive the DDE solvers. Holds private
/// evaluation scratch, so one instance must not be shared across threads;
/// constructing one per solve is cheap.
class NeuralDelayRhs final : public DelayRhs {
public:
    NeuralDelayRhs(const DelayFieldSpec& spec, const Vec& theta) : spec_(spec), theta_(&theta) {
        spec_.validate();
        if (theta.size() != param_count(spec_)) throw DimensionMismatch("NeuralDelayRhs: theta length");
    }

    [[nodiscard]] int dim() const override { return spec_.state_dim; }
    [[nodiscard]] double delay() const override { return spec_.tau; }
    void eval(double t, std::span<const double> z, std::span<const double> v,
              std::span<double> out) const override {
        field_eval(spec_, *theta_, t, z, v, out, &scratch_);
    }

private:
    DelayFieldSpec spec_;
    const Vec* theta_;
    mutable EvalCache scratch_;
};

} // namespace ddnn
