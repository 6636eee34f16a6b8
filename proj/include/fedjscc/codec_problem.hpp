#pragma once

#include "channel.hpp"
#include "codec.hpp"
#include "federation.hpp"
#include "losses.hpp"
#include "metrics.hpp"

namespace fedjscc {

// Federated reconstruction objective over one client's image shard:
// L_total = mean MSE(x, decode(channel(encode(x)))) + cl_weight * InfoNCE,
// with the contrastive positive being the same image re-encoded under an
// independently drawn SNR.
struct CodecProblemConfig {
    CodecConfig codec;
    SnrDistribution snr;
    std::size_t batch = 2;
    std::size_t eval_images = 4;  // cap on eval subset per snr grid point
    double cl_weight = 0.1;
    double temperature = 0.1;
    bool fading = false;  // diagonal random fading instead of AWGN
    // Training loss is loss_scale * (mean MSE + cl_weight * mean InfoNCE);
    // 0 means "source dimension count", i.e. total squared error, which keeps
    // small learning rates effective regardless of frame size. Metrics are
    // always reported as unscaled means.
    double loss_scale = 0.0;
};

class CodecProblem final : public LocalProblem {
public:
    CodecProblem(CodecProblemConfig cfg, std::vector<Tensor> shard)
        : cfg_(std::move(cfg)), shard_(std::move(shard)) {
        if (shard_.empty()) throw FederationError("codec problem: empty shard");
        if (cfg_.batch < 1) throw FederationError("codec problem: batch must be >= 1");
    }

    const std::vector<Tensor>& shard() const { return shard_; }

    LocalGrads stochastic_grad(const ParamBlock& u, const ParamBlock& v,
                               RngStream& rng) override {
        Graph g;
        LeafMap L = bind_params(g, ParamSet{u, v});
        std::vector<std::size_t> batch;
        for (std::size_t i = 0; i < cfg_.batch; ++i)
            batch.push_back(rng.index(shard_.size()));
        NodeId loss = batch_loss(g, L, batch, rng);
        g.backward(loss);
        LocalGrads out;
        for (const auto& [name, id] : L) {
            Tensor grad = g.grad(id);
            (u.count(name) ? out.u : out.v).emplace(name, std::move(grad));
        }
        return out;
    }

    // Deterministic full-shard gradient with a fixed noise/SNR key, used for
    // theory instrumentation only.
    LocalGrads full_grad(const ParamBlock& u, const ParamBlock& v) override {
        Graph g;
        LeafMap L = bind_params(g, ParamSet{u, v});
        RngStream rng(full_grad_key_, 0, 0, 0);
        std::vector<std::size_t> all(shard_.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        g.backward(batch_loss(g, L, all, rng));
        LocalGrads out;
        for (const auto& [name, id] : L) {
            Tensor grad = g.grad(id);
            (u.count(name) ? out.u : out.v).emplace(name, std::move(grad));
        }
        return out;
    }

    EvalStats evaluate(const ParamBlock& u, const ParamBlock& v,
                       const std::vector<double>& snr_grid,
                       RngStream& rng) override {
        EvalStats s;
        {
            Graph g;
            LeafMap L = bind_params(g, ParamSet{u, v}, /*trainable=*/false);
            std::vector<std::size_t> batch;
            for (std::size_t i = 0; i < cfg_.batch; ++i)
                batch.push_back(rng.index(shard_.size()));
            double mse, cl;
            batch_loss(g, L, batch, rng, &mse, &cl);
            s.l_mse = mse;
            s.l_cl = cl;
            s.l_total = total_loss(mse, cl_term(cl));
        }
        std::size_t n_eval = std::min(cfg_.eval_images, shard_.size());
        // frames below the 11-pixel SSIM window cannot be scored; report 0
        int scales = ms_ssim_max_scales(cfg_.codec.spec.height, cfg_.codec.spec.width);
        scales = std::min(scales, 3);
        for (double snr_db : snr_grid) {
            double p = 0, m = 0;
            for (std::size_t i = 0; i < n_eval; ++i) {
                Graph g;
                LeafMap L = bind_params(g, ParamSet{u, v}, /*trainable=*/false);
                RngStream r = rng.fork(1000 + i);
                Tensor xh = reconstruct(g, L, shard_[i], snr_db, r);
                p += psnr(shard_[i], xh) / (double)n_eval;
                if (scales >= 1) m += ms_ssim(shard_[i], xh, scales) / (double)n_eval;
            }
            s.psnr.push_back(p);
            s.msssim.push_back(m);
        }
        return s;
    }

    // Single-image pass through encoder, channel, decoder at a fixed SNR.
    Tensor reconstruct(Graph& g, const LeafMap& L, const Tensor& x, double snr_db,
                       RngStream& rng) const {
        NodeId xi = g.constant(x);
        auto enc = encode(g, L, xi, snr_db, cfg_.codec);
        ChannelRealization chan = make_channel(snr_db, rng);
        NodeId y = channel_node(g, enc.emb_s, chan, rng);
        return g.value(decode(g, L, y, snr_db, cfg_.codec));
    }

private:
    double cl_term(double cl) const { return cfg_.cl_weight * cl; }

    ChannelRealization make_channel(double snr_db, RngStream& rng) const {
        if (!cfg_.fading) return ChannelRealization::awgn(snr_db);
        return ChannelRealization::diagonal_random(cfg_.codec.spec.symbol_count(),
                                                   snr_db, rng);
    }

    // mean MSE + cl_weight * mean InfoNCE over the given image indices.
    NodeId batch_loss(Graph& g, const LeafMap& L, const std::vector<std::size_t>& idx,
                      RngStream& rng, double* out_mse = nullptr,
                      double* out_cl = nullptr) {
        std::size_t B = idx.size();
        std::vector<NodeId> mses, anchors, cands;
        for (std::size_t i : idx) {
            double snr_a = sample_snr(cfg_.snr, rng);
            double snr_b = sample_snr(cfg_.snr, rng);
            NodeId x = g.constant(shard_[i]);
            auto enc = encode(g, L, x, snr_a, cfg_.codec);
            ChannelRealization chan = make_channel(snr_a, rng);
            NodeId y = channel_node(g, enc.emb_s, chan, rng);
            NodeId xh = decode(g, L, y, snr_a, cfg_.codec);
            mses.push_back(mse_node(g, x, xh));
            anchors.push_back(l2_normalize_node(g, enc.emb_pre));
            auto enc2 = encode(g, L, x, snr_b, cfg_.codec);
            cands.push_back(l2_normalize_node(g, enc2.emb_pre));
        }
        NodeId mse_sum = mses[0];
        for (std::size_t i = 1; i < B; ++i) mse_sum = g.add(mse_sum, mses[i]);
        NodeId mse_mean = g.scale(mse_sum, 1.0 / (double)B);

        NodeId cl_sum = g.constant(Tensor::scalar(0.0));
        for (std::size_t i = 0; i < B; ++i)
            cl_sum = g.add(cl_sum, infonce_node(g, anchors[i], cands, i,
                                                cfg_.temperature));
        NodeId cl_mean = g.scale(cl_sum, 1.0 / (double)B);

        if (out_mse) *out_mse = g.value(mse_mean).item();
        if (out_cl) *out_cl = g.value(cl_mean).item();
        double scale = cfg_.loss_scale > 0 ? cfg_.loss_scale
                                           : (double)cfg_.codec.spec.source_dims();
        return g.scale(g.add(mse_mean, g.scale(cl_mean, cfg_.cl_weight)), scale);
    }

    CodecProblemConfig cfg_;
    std::vector<Tensor> shard_;
    static constexpr std::uint64_t full_grad_key_ = 0x66756c6c67726164ull;
};

}  // namespace fedjscc
