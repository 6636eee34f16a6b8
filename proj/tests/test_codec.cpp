#include <catch2/catch_amalgamated.hpp>

#include "fedjscc/channel.hpp"
#include "fedjscc/codec.hpp"
#include "fedjscc/gradcheck.hpp"
#include "fedjscc/losses.hpp"

using namespace fedjscc;

namespace {

CodecConfig tiny_config() {
    CodecConfig cfg;
    cfg.spec = {1, 6, 8, 8, 3};
    cfg.feat = 4;
    cfg.stages = 2;
    cfg.pre_hidden = 8;
    return cfg;
}

Tensor random_image(const CodecConfig& cfg, RngStream& rng) {
    Tensor x({cfg.spec.height, cfg.spec.width, cfg.spec.channels});
    for (auto& v : x.data) v = rng.uniform();
    return x;
}

}  // namespace

TEST_CASE("compression spec symbol counts") {
    CHECK(CompressionSpec{1, 6, 32, 32, 3}.symbol_count() == 512);
    CHECK(CompressionSpec{1, 16, 128, 128, 3}.symbol_count() == 3072);
    CHECK(CompressionSpec{1, 6, 8, 8, 3}.symbol_count() == 32);
    CHECK(CompressionSpec{1, 1000000, 2, 2, 1}.symbol_count() == 1);  // floor >= 1
}

TEST_CASE("encode emits the spec'd symbol count, power normalized") {
    CodecConfig cfg;
    cfg.spec = {1, 6, 32, 32, 3};
    cfg.feat = 4;
    auto params = partition_params(init_codec_params(cfg, RngStream(5, 0, 0, 0)));
    Graph g;
    auto L = bind_params(g, params);
    RngStream rng(6, 0, 0, 0);
    NodeId x = g.constant(random_image(cfg, rng));
    auto enc = encode(g, L, x, 7.5, cfg);
    CHECK(g.value(enc.emb_s).numel() == 512);
    double ms = g.value(enc.emb_s).sq_norm() / 512.0;
    CHECK(std::abs(ms - 1.0) < 1e-12);
}

TEST_CASE("dual-pipeline disabled is bitwise a mask-free encoder") {
    CodecConfig on = tiny_config();
    CodecConfig off = tiny_config();
    off.dual_pipeline = false;

    auto p_on = init_codec_params(on, RngStream(5, 0, 0, 0));
    // zero the aux pipeline: mask becomes 2*sigmoid(0) = 1 everywhere
    for (auto& [name, t] : p_on)
        if (name.rfind("enc.aux.", 0) == 0)
            for (auto& v : t.data) v = 0.0;
    ParamBlock p_off;
    for (const auto& [name, t] : p_on)
        if (name.rfind("enc.aux.", 0) != 0) p_off.emplace(name, t);

    RngStream rng(6, 0, 0, 0);
    Tensor img = random_image(on, rng);
    Graph g1, g2;
    auto L1 = bind_params(g1, partition_params(p_on));
    auto L2 = bind_params(g2, partition_params(p_off));
    auto e1 = encode(g1, L1, g1.constant(img), 4.0, on);
    auto e2 = encode(g2, L2, g2.constant(img), 4.0, off);
    CHECK(g1.value(e1.emb_s).data == g2.value(e2.emb_s).data);
}

TEST_CASE("aux_mask zero weights give the unit mask") {
    CodecConfig cfg = tiny_config();
    auto p = init_codec_params(cfg, RngStream(5, 0, 0, 0));
    for (auto& [name, t] : p)
        if (name.rfind("enc.aux.0", 0) == 0)
            for (auto& v : t.data) v = 0.0;
    Graph g;
    auto L = bind_params(g, partition_params(p));
    RngStream rng(6, 0, 0, 0);
    NodeId tap = g.constant(rng.gaussian_tensor({cfg.stem_h(), cfg.stem_w(), cfg.feat}, 0, 1));
    NodeId state = g.constant(Tensor::zeros({cfg.stem_h(), cfg.stem_w(), cfg.feat}));
    auto a = aux_mask(g, L, 0, tap, state, 0.5);
    CHECK(g.value(a.mask).shape == g.value(tap).shape);
    for (double v : g.value(a.mask).data) REQUIRE(v == 1.0);
    // identity application
    CHECK(g.value(apply_mask(g, tap, a.mask)).data == g.value(tap).data);
}

TEST_CASE("aux_mask is sensitive to snr and respects the (0,2) range") {
    CodecConfig cfg = tiny_config();
    auto p = partition_params(init_codec_params(cfg, RngStream(5, 0, 0, 0)));
    Graph g;
    auto L = bind_params(g, p);
    RngStream rng(6, 0, 0, 0);
    NodeId tap = g.constant(rng.gaussian_tensor({cfg.stem_h(), cfg.stem_w(), cfg.feat}, 0, 1));
    NodeId state = g.constant(Tensor::zeros({cfg.stem_h(), cfg.stem_w(), cfg.feat}));
    auto lo = aux_mask(g, L, 0, tap, state, 0.1);
    auto hi = aux_mask(g, L, 0, tap, state, 0.9);
    CHECK(max_abs_diff(g.value(lo.mask), g.value(hi.mask)) > 1e-9);
    for (double v : g.value(lo.mask).data) {
        REQUIRE(v > 0.0);
        REQUIRE(v < 2.0);
    }
}

TEST_CASE("apply_mask basics") {
    Graph g;
    NodeId f = g.constant(Tensor({1, 1, 2}, {1, 2}));
    CHECK(g.value(apply_mask(g, f, g.constant(Tensor::full({1, 1, 2}, 1.0)))).data ==
          std::vector<double>{1, 2});
    CHECK(g.value(apply_mask(g, f, g.constant(Tensor::zeros({1, 1, 2})))).data ==
          std::vector<double>{0, 0});
    CHECK(g.value(apply_mask(g, f, g.constant(Tensor({1, 1, 2}, {0.5, 2})))).data ==
          std::vector<double>{0.5, 4});
    CHECK_THROWS_AS(apply_mask(g, f, g.constant(Tensor::zeros({1, 1, 3}))), CodecError);
}

TEST_CASE("preprocess with zero correction weights is the identity") {
    CodecConfig cfg = tiny_config();
    auto p = init_codec_params(cfg, RngStream(5, 0, 0, 0));
    for (auto& [name, t] : p)
        if (name.rfind("dec.pre.", 0) == 0)
            for (auto& v : t.data) v = 0.0;
    Graph g;
    auto L = bind_params(g, partition_params(p));
    RngStream rng(6, 0, 0, 0);
    Tensor r0 = rng.gaussian_tensor({cfg.spec.symbol_count()}, 0, 1);
    NodeId r = g.constant(r0);
    NodeId out = preprocess(g, L, r, 3.0, cfg);
    CHECK(g.value(out).data == r0.data);
    CHECK(g.value(out).shape == r0.shape);
}

TEST_CASE("decode round-trip shape contract and finiteness") {
    for (auto dims : {std::pair<std::size_t, std::size_t>{8, 8}, {16, 12}}) {
        CodecConfig cfg = tiny_config();
        cfg.spec.height = dims.first;
        cfg.spec.width = dims.second;
        auto p = partition_params(init_codec_params(cfg, RngStream(5, 0, 0, 0)));
        Graph g;
        auto L = bind_params(g, p);
        RngStream rng(6, 0, 0, 0);
        Tensor img = random_image(cfg, rng);
        auto enc = encode(g, L, g.constant(img), 2.0, cfg);
        auto chan = ChannelRealization::awgn(2.0);
        NodeId y = channel_node(g, enc.emb_s, chan, rng);
        NodeId xh = decode(g, L, y, 2.0, cfg);
        CHECK(g.value(xh).shape == img.shape);
        CHECK(g.value(xh).all_finite());
        for (double v : g.value(xh).data) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
        }
    }
}

TEST_CASE("decode rejects mismatched symbol counts") {
    CodecConfig cfg = tiny_config();
    auto p = partition_params(init_codec_params(cfg, RngStream(5, 0, 0, 0)));
    Graph g;
    auto L = bind_params(g, p);
    NodeId bad = g.constant(Tensor::zeros({cfg.spec.symbol_count() + 1}));
    CHECK_THROWS_AS(decode(g, L, bad, 0.0, cfg), CodecError);
}

TEST_CASE("parameter partition is a disjoint cover") {
    CodecConfig cfg = tiny_config();
    auto all = init_codec_params(cfg, RngStream(5, 0, 0, 0));
    auto p = partition_params(all);
    CHECK_FALSE(p.u.empty());
    CHECK_FALSE(p.v.empty());
    CHECK(p.u.size() + p.v.size() == all.size());
    for (const auto& [name, t] : p.u) CHECK(p.v.find(name) == p.v.end());
    // expected membership
    CHECK(p.v.count("enc.aux.0.conv.w") == 1);
    CHECK(p.v.count("dec.pre.w1") == 1);
    CHECK(p.u.count("enc.stem.w") == 1);
    CHECK(p.u.count("dec.head.w") == 1);

    // FedAvg ablation: v empty
    auto fedavg = partition_params(all, /*pfl=*/false);
    CHECK(fedavg.v.empty());
    CHECK(fedavg.u.size() == all.size());

    CHECK_THROWS_AS(classify_param("mystery.leaf"), CodecError);
}

TEST_CASE("gradients flow to every leaf in both blocks") {
    CodecConfig cfg = tiny_config();
    auto p = partition_params(init_codec_params(cfg, RngStream(5, 0, 0, 0)));
    Graph g;
    auto L = bind_params(g, p);
    RngStream rng(6, 0, 0, 0);
    Tensor img = random_image(cfg, rng);
    NodeId x = g.constant(img);
    auto enc = encode(g, L, x, 3.0, cfg);
    auto chan = ChannelRealization::awgn(3.0);
    NodeId y = channel_node(g, enc.emb_s, chan, rng);
    NodeId xh = decode(g, L, y, 3.0, cfg);
    g.backward(mse_node(g, x, xh));
    for (const auto& [name, id] : L) {
        INFO("leaf " << name);
        CHECK(g.grad(id).sq_norm() > 0.0);
    }
}

TEST_CASE("full codec loss graph passes the central-difference oracle on 4x4") {
    CodecConfig cfg;
    cfg.spec = {1, 4, 4, 4, 3};  // 4x4x3, 12 symbols
    cfg.feat = 2;
    cfg.stages = 2;
    cfg.pre_hidden = 3;
    std::map<std::string, Tensor> params = init_codec_params(cfg, RngStream(5, 0, 0, 0));
    RngStream rng(6, 0, 0, 0);
    Tensor img = random_image(cfg, rng);
    auto build = [&](Graph& g, const std::map<std::string, NodeId>& L) {
        NodeId x = g.constant(img);
        auto enc = encode(g, L, x, 1.0, cfg);
        auto chan = ChannelRealization::awgn(1.0);
        RngStream rr(7, 7, 7, 7);
        NodeId y = channel_node(g, enc.emb_s, chan, rr);
        NodeId xh = decode(g, L, y, 1.0, cfg);
        return mse_node(g, x, xh);
    };
    auto rep = grad_check(params, build, 1e-5);
    INFO("worst " << rep.worst_param << "[" << rep.worst_index << "]");
    CHECK(rep.max_rel_error < 1e-4);
}

TEST_CASE("encode validates input shape and snr") {
    CodecConfig cfg = tiny_config();
    auto p = partition_params(init_codec_params(cfg, RngStream(5, 0, 0, 0)));
    Graph g;
    auto L = bind_params(g, p);
    NodeId bad = g.constant(Tensor::zeros({4, 4, 3}));
    CHECK_THROWS_AS(encode(g, L, bad, 0.0, cfg), CodecError);
    RngStream rng(6, 0, 0, 0);
    NodeId ok = g.constant(random_image(cfg, rng));
    CHECK_THROWS_AS(encode(g, L, ok, std::nan(""), cfg), CodecError);
}
