#pragma once

#include <map>
#include <string>

#include "channel.hpp"
#include "graph.hpp"
#include "params.hpp"
#include "rng.hpp"

namespace fedjscc {

struct CodecError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Channel symbols per source dimension, as a rational ratio.
struct CompressionSpec {
    std::size_t ratio_num = 1;
    std::size_t ratio_den = 6;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 3;

    std::size_t source_dims() const { return height * width * channels; }

    std::size_t symbol_count() const {
        std::size_t k = source_dims() * ratio_num / ratio_den;
        return k == 0 ? 1 : k;
    }
};

struct CodecConfig {
    CompressionSpec spec;
    std::size_t feat = 8;       // main-pipeline channels
    std::size_t stages = 2;     // blocks per pipeline
    std::size_t pre_hidden = 32;
    bool dual_pipeline = true;
    bool decoder_preprocess = true;
    double snr_min_db = -5.0;
    double snr_max_db = 25.0;

    std::size_t stem_h() const { return (spec.height + 2 - 3) / 2 + 1; }
    std::size_t stem_w() const { return (spec.width + 2 - 3) / 2 + 1; }
    std::size_t feature_dims() const { return stem_h() * stem_w() * feat; }

    // snr scalar rescaled from the clamp range to [0,1]
    double snr01(double snr_db) const {
        double s = (snr_db - snr_min_db) / (snr_max_db - snr_min_db);
        return std::min(std::max(s, 0.0), 1.0);
    }
};

namespace detail {

inline Tensor he_init(std::vector<std::size_t> shape, std::size_t fan_in,
                      RngStream& rng) {
    return rng.gaussian_tensor(std::move(shape), 0.0, std::sqrt(1.0 / (double)fan_in));
}

}  // namespace detail

// Every trainable codec leaf, named. Aux / preprocess entries exist only when
// the corresponding toggle is on, so disabled variants have no orphan params.
inline ParamBlock init_codec_params(const CodecConfig& cfg, RngStream rng) {
    using detail::he_init;
    ParamBlock p;
    std::size_t F = cfg.feat, C = cfg.spec.channels;
    std::size_t K = cfg.spec.symbol_count(), n = cfg.feature_dims();

    p.emplace("enc.stem.w", he_init({3, 3, C, F}, 9 * C, rng));
    p.emplace("enc.stem.b", Tensor::zeros({F}));
    for (std::size_t s = 0; s < cfg.stages; ++s) {
        std::string es = "enc.main." + std::to_string(s);
        p.emplace(es + ".conv.w", he_init({3, 3, F, F}, 9 * F, rng));
        p.emplace(es + ".conv.b", Tensor::zeros({F}));
        p.emplace(es + ".lin.w", he_init({1, 1, F, F}, F, rng));
        p.emplace(es + ".lin.b", Tensor::zeros({F}));
        std::string ds = "dec.main." + std::to_string(s);
        p.emplace(ds + ".conv.w", he_init({3, 3, F, F}, 9 * F, rng));
        p.emplace(ds + ".conv.b", Tensor::zeros({F}));
        p.emplace(ds + ".lin.w", he_init({1, 1, F, F}, F, rng));
        p.emplace(ds + ".lin.b", Tensor::zeros({F}));
        if (cfg.dual_pipeline) {
            std::string as = "enc.aux." + std::to_string(s);
            p.emplace(as + ".conv.w", he_init({3, 3, 2 * F + 1, F}, 9 * (2 * F + 1), rng));
            p.emplace(as + ".conv.b", Tensor::zeros({F}));
            p.emplace(as + ".lin.w", he_init({1, 1, F, F}, F, rng));
            p.emplace(as + ".lin.b", Tensor::zeros({F}));
        }
    }
    p.emplace("enc.proj.w", he_init({n, K}, n, rng));
    p.emplace("enc.proj.b", Tensor::zeros({K}));
    p.emplace("dec.unproj.w", he_init({K, n}, K, rng));
    p.emplace("dec.unproj.b", Tensor::zeros({n}));
    p.emplace("dec.head.w", he_init({n, cfg.spec.source_dims()}, n, rng));
    p.emplace("dec.head.b", Tensor::full({cfg.spec.source_dims()}, 0.5));
    if (cfg.decoder_preprocess) {
        p.emplace("dec.pre.w1", he_init({K + 1, cfg.pre_hidden}, K + 1, rng));
        p.emplace("dec.pre.b1", Tensor::zeros({cfg.pre_hidden}));
        p.emplace("dec.pre.w2", he_init({cfg.pre_hidden, K}, cfg.pre_hidden, rng));
        p.emplace("dec.pre.b2", Tensor::zeros({K}));
    }
    return p;
}

// u-block: stem, main stages (enc+dec), projections, head.
// v-block: encoder auxiliary pipeline, decoder preprocess.
inline char classify_param(const std::string& name) {
    auto starts = [&](const char* pfx) { return name.rfind(pfx, 0) == 0; };
    if (starts("enc.aux.") || starts("dec.pre.")) return 'v';
    if (starts("enc.stem.") || starts("enc.main.") || starts("enc.proj.") ||
        starts("dec.unproj.") || starts("dec.main.") || starts("dec.head."))
        return 'u';
    throw CodecError("unclassified parameter leaf: " + name);
}

// With pfl=false every leaf is global (classic FedAvg ablation, v empty).
inline ParamSet partition_params(const ParamBlock& all, bool pfl = true) {
    ParamSet out;
    for (const auto& [name, t] : all) {
        char b = pfl ? classify_param(name) : 'u';
        (b == 'u' ? out.u : out.v).emplace(name, t);
    }
    return out;
}

using LeafMap = std::map<std::string, NodeId>;

inline LeafMap bind_params(Graph& g, const ParamSet& p, bool trainable = true) {
    LeafMap m;
    for (const auto& [name, t] : p.u) m[name] = g.leaf(t, trainable, name);
    for (const auto& [name, t] : p.v) m[name] = g.leaf(t, trainable, name);
    return m;
}

namespace detail {

inline NodeId conv(Graph& g, const LeafMap& L, NodeId x, const std::string& pfx,
                   int stride = 1) {
    return g.bias_add(g.conv2d(x, L.at(pfx + ".w"), stride), L.at(pfx + ".b"));
}

// local mixing convolution -> nonlinearity -> channelwise linear, residual
inline NodeId main_block(Graph& g, const LeafMap& L, NodeId f, const std::string& pfx) {
    NodeId t = g.tanh_(conv(g, L, f, pfx + ".conv"));
    return g.add(f, conv(g, L, t, pfx + ".lin"));
}

inline NodeId vec_linear(Graph& g, const LeafMap& L, NodeId x, const std::string& w,
                         const std::string& b) {
    const Tensor& xv = g.value(x);
    NodeId row = g.reshape(x, {1, xv.numel()});
    NodeId y = g.matmul(row, L.at(w));
    return g.add(g.reshape(y, {g.value(y).numel()}), L.at(b));
}

inline void check_finite(Graph& g, NodeId n, const char* where, std::size_t stage) {
    if (!g.value(n).all_finite())
        throw CodecError(std::string("numeric failure in ") + where + " at stage " +
                         std::to_string(stage));
}

}  // namespace detail

// One auxiliary stage: consumes its own previous hidden state, a tap of the
// main-pipeline features and the snr plane; emits a (0,2) multiplicative mask
// via 2*sigmoid plus the hidden state handed to the next stage.
struct AuxStageOut {
    NodeId mask;
    NodeId state;
};

inline AuxStageOut aux_mask(Graph& g, const LeafMap& L, std::size_t stage,
                            NodeId main_tap, NodeId prev_state, double snr01) {
    std::vector<std::size_t> tap_shape = g.value(main_tap).shape;
    NodeId plane = g.constant(Tensor::full({tap_shape[0], tap_shape[1], 1}, snr01));
    NodeId in = g.concat({prev_state, main_tap, plane});
    std::string pfx = "enc.aux." + std::to_string(stage);
    NodeId h = g.tanh_(detail::conv(g, L, in, pfx + ".conv"));
    NodeId mask = g.scale(g.sigmoid(detail::conv(g, L, h, pfx + ".lin")), 2.0);
    // The mask itself is the recurrent state: only the final mask is applied,
    // but earlier stages still shape it (and stay on the gradient path).
    return {mask, mask};
}

inline NodeId apply_mask(Graph& g, NodeId features, NodeId mask) {
    if (!g.value(features).same_shape(g.value(mask)))
        throw CodecError("apply_mask: shape mismatch");
    return g.mul(features, mask);
}

struct EncodeResult {
    NodeId emb_pre;  // projected symbols before power normalization
    NodeId emb_s;    // power-normalized transmit symbols
};

inline EncodeResult encode(Graph& g, const LeafMap& L, NodeId x, double snr_db,
                           const CodecConfig& cfg) {
    const Tensor& xv = g.value(x);
    if (xv.shape != std::vector<std::size_t>{cfg.spec.height, cfg.spec.width,
                                             cfg.spec.channels})
        throw CodecError("encode: input shape " + xv.shape_str() +
                         " does not match compression spec");
    if (!std::isfinite(snr_db)) throw CodecError("encode: non-finite snr");
    double s01 = cfg.snr01(snr_db);

    NodeId f = detail::conv(g, L, x, "enc.stem", /*stride=*/2);
    detail::check_finite(g, f, "encoder", 0);

    NodeId mask = -1;
    NodeId state = g.constant(Tensor::zeros({cfg.stem_h(), cfg.stem_w(), cfg.feat}));
    for (std::size_t s = 0; s < cfg.stages; ++s) {
        f = detail::main_block(g, L, f, "enc.main." + std::to_string(s));
        detail::check_finite(g, f, "encoder", s + 1);
        if (cfg.dual_pipeline) {
            auto a = aux_mask(g, L, s, f, state, s01);
            mask = a.mask;
            state = a.state;
        }
    }
    NodeId masked = cfg.dual_pipeline ? apply_mask(g, f, mask) : f;
    NodeId emb_pre = detail::vec_linear(g, L, masked, "enc.proj.w", "enc.proj.b");
    detail::check_finite(g, emb_pre, "encoder projection", cfg.stages);
    return {emb_pre, power_normalize_node(g, emb_pre)};
}

// Residual denoising stage: Emb_R' = Emb_R + Correction(Emb_R, snr).
inline NodeId preprocess(Graph& g, const LeafMap& L, NodeId emb_r, double snr_db,
                         const CodecConfig& cfg) {
    double s01 = cfg.snr01(snr_db);
    NodeId snr = g.constant(Tensor::vec({s01}));
    NodeId in = g.concat({emb_r, snr});
    NodeId h = g.tanh_(detail::vec_linear(g, L, in, "dec.pre.w1", "dec.pre.b1"));
    NodeId corr = detail::vec_linear(g, L, h, "dec.pre.w2", "dec.pre.b2");
    return g.add(emb_r, corr);
}

inline NodeId decode(Graph& g, const LeafMap& L, NodeId emb_r, double snr_db,
                     const CodecConfig& cfg) {
    const Tensor& rv = g.value(emb_r);
    if (rv.numel() != cfg.spec.symbol_count())
        throw CodecError("decode: symbol count " + std::to_string(rv.numel()) +
                         " does not match spec");
    NodeId emb = cfg.decoder_preprocess ? preprocess(g, L, emb_r, snr_db, cfg) : emb_r;
    NodeId f = g.reshape(detail::vec_linear(g, L, emb, "dec.unproj.w", "dec.unproj.b"),
                         {cfg.stem_h(), cfg.stem_w(), cfg.feat});
    for (std::size_t s = 0; s < cfg.stages; ++s) {
        f = detail::main_block(g, L, f, "dec.main." + std::to_string(s));
        detail::check_finite(g, f, "decoder", s);
    }
    NodeId flat = detail::vec_linear(g, L, f, "dec.head.w", "dec.head.b");
    NodeId img = g.reshape(flat, {cfg.spec.height, cfg.spec.width, cfg.spec.channels});
    return g.clamp01(img);
}

}  // namespace fedjscc
