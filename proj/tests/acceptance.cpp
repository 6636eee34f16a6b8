// Acceptance gate: one pass/fail line per criterion, exit 0 only if all hold.
// Run via ctest (test name: acceptance) or directly; slower end-to-end checks
// (8, 9) train real models and dominate the runtime.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "fedjscc/gradcheck.hpp"
#include "fedjscc/harness.hpp"

using namespace fedjscc;

namespace {

int failures = 0;

class Timer {
public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                             start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

void report(int idx, bool ok, const std::string& detail) {
    std::printf("%s  criterion %2d: %s\n", ok ? "PASS" : "FAIL", idx,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

void run(int idx, const std::string& label, bool (*fn)(std::string&)) {
    std::string detail = label;
    bool ok = false;
    try {
        ok = fn(detail);
    } catch (const std::exception& e) {
        detail += std::string(" — exception: ") + e.what();
    }
    report(idx, ok, detail);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// ---------------------------------------------------------------------------
// 1. Scale note (informational, always holds)

bool c1_scale_note(std::string& detail) {
    detail =
        "reference-scale benchmark figures (e.g. PSNR ~20 dB on full-size "
        "photo corpora) need large transformer codecs and GPU training and are "
        "out of scope at desk scale; criteria 2-10 substitute property checks";
    return true;
}

// ---------------------------------------------------------------------------
// 2. Gradient suite over random codec configs

bool c2_gradient_suite(std::string& detail) {
    Timer timer;
    double worst = 0;
    RngStream meta(2026, 0, 0, 0);
    for (int t = 0; t < 20; ++t) {
        CodecConfig cc;
        std::size_t h = 4 + meta.index(2), w = 4 + meta.index(2);
        cc.spec = {1, 2 + meta.index(4), h, w, 3};
        cc.feat = 2 + meta.index(2);
        cc.stages = 1 + meta.index(2);
        cc.pre_hidden = 2 + meta.index(3);
        double snr_a = -3.0 + 10.0 * meta.uniform();
        double snr_b = -3.0 + 10.0 * meta.uniform();
        bool fading = t % 2 == 1;

        auto params = init_codec_params(cc, RngStream(100 + t, 0, 0, 0));
        RngStream data(200 + t, 0, 0, 0);
        std::vector<Tensor> imgs(2, Tensor({h, w, 3}));
        for (auto& img : imgs)
            for (auto& v : img.data) v = data.uniform();

        // Noise/fading draws are re-derived from a fixed key inside the
        // builder, so every finite-difference evaluation sees the same
        // channel realization.
        auto build = [&](Graph& g, const std::map<std::string, NodeId>& L) {
            RngStream rr(300 + t, 0, 0, 0);
            std::vector<NodeId> mses, anchors, cands;
            for (const Tensor& img : imgs) {
                NodeId x = g.constant(img);
                auto enc = encode(g, L, x, snr_a, cc);
                ChannelRealization chan =
                    fading ? ChannelRealization::diagonal_random(
                                 cc.spec.symbol_count(), snr_a, rr)
                           : ChannelRealization::awgn(snr_a);
                NodeId y = channel_node(g, enc.emb_s, chan, rr);
                NodeId xh = decode(g, L, y, snr_a, cc);
                mses.push_back(mse_node(g, x, xh));
                anchors.push_back(l2_normalize_node(g, enc.emb_pre));
                auto enc2 = encode(g, L, x, snr_b, cc);
                cands.push_back(l2_normalize_node(g, enc2.emb_pre));
            }
            NodeId mse_mean =
                g.scale(g.add(mses[0], mses[1]), 0.5);
            NodeId cl_mean = g.scale(
                g.add(infonce_node(g, anchors[0], cands, 0, 0.1),
                      infonce_node(g, anchors[1], cands, 1, 0.1)),
                0.5);
            return g.add(mse_mean, g.scale(cl_mean, 0.1));
        };
        // eps = 1e-6: the decoder output is clamped to [0,1], and a wider
        // step can straddle a clamp kink on unlucky pixels.
        auto rep = grad_check(params, build, 1e-6);
        worst = std::max(worst, rep.max_rel_error);
    }
    double secs = timer.seconds();
    detail = "grad_check on 20 random full-loss configs: worst rel err " +
             fmt(worst) + " (< 1e-4), " + fmt(secs) + " s (< 60)";
    return worst < 1e-4 && secs < 60.0;
}

// ---------------------------------------------------------------------------
// 3. Channel identities

Tensor random_orthogonal(std::size_t n, RngStream& rng) {
    Tensor m = rng.gaussian_tensor({n, n}, 0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            double d = 0;
            for (std::size_t k = 0; k < n; ++k)
                d += m.data[i * n + k] * m.data[j * n + k];
            for (std::size_t k = 0; k < n; ++k)
                m.data[i * n + k] -= d * m.data[j * n + k];
        }
        double nn = 0;
        for (std::size_t k = 0; k < n; ++k)
            nn += m.data[i * n + k] * m.data[i * n + k];
        nn = std::sqrt(nn);
        for (std::size_t k = 0; k < n; ++k) m.data[i * n + k] /= nn;
    }
    return m;
}

bool c3_channel_identities(std::string& detail) {
    RngStream rng(11, 0, 0, 0);
    double worst_id = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t n = 2 + rng.index(5);
        Tensor u = random_orthogonal(n, rng), v = random_orthogonal(n, rng);
        Tensor h({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.5 + 1.5 * rng.uniform();
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t k = 0; k < n; ++k)
                    h.data[j * n + k] += u.data[j * n + i] * d * v.data[i * n + k];
        }
        auto chan = ChannelRealization::fading(h, 0.0);
        chan.noise_std = 0.0;
        Tensor e = power_normalize(rng.gaussian_tensor({n}, 0.0, 1.0));
        Tensor back = equalize(transmit(e, chan, rng), chan);
        for (std::size_t i = 0; i < n; ++i)
            worst_id = std::max(worst_id, std::abs(back.data[i] - e.data[i]));
    }

    auto chan = ChannelRealization::awgn(3.0);
    const std::size_t n_sym = 100000;
    Tensor e = power_normalize(rng.gaussian_tensor({n_sym}, 0.0, 1.0));
    Tensor y = transmit(e, chan, rng);
    double var = 0;
    for (std::size_t i = 0; i < n_sym; ++i) {
        double d = y.data[i] - e.data[i];
        var += d * d / (double)n_sym;
    }
    double target = chan.noise_std * chan.noise_std;
    double rel = std::abs(var / target - 1.0);

    detail = "zero-noise round trip worst |err| " + fmt(worst_id) +
             " (< 1e-12) over 100 H; noise variance rel err " + fmt(rel) +
             " (< 0.03) over 1e5 symbols";
    return worst_id < 1e-12 && rel < 0.03;
}

// ---------------------------------------------------------------------------
// 4. Protocol correctness

class Quadratic final : public LocalProblem {
public:
    explicit Quadratic(double a) : a_(a) {}
    LocalGrads stochastic_grad(const ParamBlock& u, const ParamBlock& v,
                               RngStream&) override {
        LocalGrads g;
        for (const auto& [name, t] : u)
            g.u.emplace(name, Tensor::scalar(a_ * t.item()));
        for (const auto& [name, t] : v)
            g.v.emplace(name, Tensor::scalar(a_ * t.item()));
        return g;
    }
    EvalStats evaluate(const ParamBlock&, const ParamBlock&,
                       const std::vector<double>&, RngStream&) override {
        return {};
    }

private:
    double a_;
};

bool c4_protocol(std::string& detail) {
    // (a) aggregation worked example: u=1, grad sums {2, 4}, eta=0.1, N=2
    ParamBlock u{{"w", Tensor::scalar(1.0)}};
    std::vector<ClientMessage> msgs{{0, {{"w", Tensor::scalar(2.0)}}},
                                    {1, {{"w", Tensor::scalar(4.0)}}}};
    bool a = std::abs(aggregate(u, msgs, 0.1, 2).at("w").item() - 0.7) < 1e-15;

    // (b) N=1, v empty: 50 federated rounds == 50 centralized SGD steps
    std::vector<std::shared_ptr<LocalProblem>> clients{
        std::make_shared<Quadratic>(2.0)};
    ParamBlock u0{{"w", Tensor::scalar(1.0)}};
    FlRun run;
    run.sched.rounds = 50;
    run.sched.local_steps = 1;
    run.sched.eta_u = 0.05;
    run.sched.eta_v = 0.05;
    auto res = run_training(clients, u0, {ParamBlock{}}, run);
    double w = 1.0;
    for (int t = 0; t < 50; ++t) w -= 0.05 * 2.0 * w;
    bool b = std::abs(res.u.at("w").item() - w) < 1e-12;

    // (c) codec uploads carry shared-block names only
    CodecProblemConfig pc;
    pc.codec.spec = {1, 6, 8, 8, 3};
    pc.codec.feat = 4;
    pc.codec.pre_hidden = 8;
    pc.snr = {7.5, 2.0, -5.0, 25.0};
    RngStream dr(3, 0, 0, 0);
    std::vector<Tensor> shard;
    for (int i = 0; i < 3; ++i) {
        Tensor t({8, 8, 3});
        for (auto& x : t.data) x = dr.uniform();
        shard.push_back(std::move(t));
    }
    ParamSet ps = partition_params(init_codec_params(pc.codec, RngStream(1, 0, 0, 0)));
    CodecProblem prob(pc, shard);
    ParamBlock v = ps.v;
    FlSchedule s;
    s.rounds = 1;
    s.local_steps = 2;
    s.eta_u = 1e-3;
    s.eta_v = 1e-3;
    ClientMessage msg = local_update(ps.u, v, prob, s, 7, 0, 0);
    bool c = msg.grad_sum_u.size() == ps.u.size();
    for (const auto& [name, t] : msg.grad_sum_u)
        c = c && classify_param(name) == 'u';
    for (const auto& [name, t] : ps.v) c = c && !message_mentions(msg, name);

    // (d) aggregation is bitwise invariant to upload order
    RngStream rng(13, 0, 0, 0);
    ParamBlock ub{{"a", rng.gaussian_tensor({5}, 0, 1)},
                  {"b", rng.gaussian_tensor({3}, 0, 1)}};
    std::vector<ClientMessage> ms;
    for (std::size_t n = 0; n < 4; ++n)
        ms.push_back({n,
                      {{"a", rng.gaussian_tensor({5}, 0, 1)},
                       {"b", rng.gaussian_tensor({3}, 0, 1)}}});
    ParamBlock fwd = aggregate(ub, ms, 0.05, 4);
    std::vector<ClientMessage> rev(ms.rbegin(), ms.rend());
    std::swap(rev[1], rev[2]);
    ParamBlock bwd = aggregate(ub, rev, 0.05, 4);
    bool d = true;
    for (const auto& [name, t] : fwd) {
        const Tensor& o = bwd.at(name);
        for (std::size_t i = 0; i < t.numel(); ++i)
            d = d && t.data[i] == o.data[i];
    }

    detail = std::string("a worked-example=") + (a ? "ok" : "BAD") +
             " b centralized-match=" + (b ? "ok" : "BAD") +
             " c u-only-uploads=" + (c ? "ok" : "BAD") +
             " d order-invariance=" + (d ? "ok" : "BAD");
    return a && b && c && d;
}

// ---------------------------------------------------------------------------
// 5. Drift lemma at the learning-rate caps

bool c5_lemma7(std::string& detail) {
    Timer timer;
    RngStream rng(2030, 0, 0, 0);
    int fails = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        SmoothnessConstants k;
        k.L_u = 0.1 + 9.9 * rng.uniform();
        k.L_v = 0.1 + 9.9 * rng.uniform();
        k.L_uv = 0.1 + 9.9 * rng.uniform();
        k.L_vu = 0.1 + 9.9 * rng.uniform();
        std::size_t tau = 1 + rng.index(20);
        auto caps = lemma7_caps(k, tau);
        if (!check_lemma7(caps.eta_u, caps.eta_v, tau, k).holds) ++fails;
    }
    double secs = timer.seconds();
    detail = "both drift inequalities at the caps: " + std::to_string(fails) +
             " failures over 1000 draws (need 0), " + fmt(secs) + " s (< 5)";
    return fails == 0 && secs < 5.0;
}

// ---------------------------------------------------------------------------
// 6. Convergence bound with measured constants

std::vector<std::shared_ptr<SyntheticProblem>> acceptance_family() {
    RngStream fam_rng(1, 0, 0, 13001);
    SyntheticFamilyConfig fc;
    fc.n_clients = 4;
    fc.dim_u = 4;
    fc.dim_v = 3;
    fc.homogeneous = true;
    fc.sin_amp = 0.1;
    return make_synthetic_family(fc, fam_rng);
}

bool c6_theorem_bound(std::string& detail) {
    Timer timer;
    auto fam = acceptance_family();
    bool all = true;
    std::string ratios;
    for (std::size_t T : {10, 20, 50, 100, 200}) {
        VerifyConfig vc;
        vc.T = T;
        vc.tau = 5;
        vc.seed = 1;
        vc.use_analytic_constants = false;  // measured, not analytic
        TheoremReport r = verify_theorem_empirically(fam, vc);
        all = all && r.pass;
        ratios += (ratios.empty() ? "" : " ") + fmt(r.ratio);
    }
    double secs = timer.seconds();
    detail = "lhs/rhs ratios over T in {10,20,50,100,200}: " + ratios +
             " (all <= 1), " + fmt(secs) + " s (< 120)";
    return all && secs < 120.0;
}

// ---------------------------------------------------------------------------
// 7. Convergence-rate fit with decaying c

bool c7_rate_fit(std::string& detail) {
    Timer timer;
    auto fam = acceptance_family();
    bool all = true;
    std::string slopes;
    for (double q : {-0.25, -0.5}) {
        std::vector<double> ts, lhs;
        for (std::size_t T : {25, 50, 100, 200, 400}) {
            VerifyConfig vc;
            vc.T = T;
            vc.tau = 5;
            vc.seed = 1;
            vc.c_fraction = std::pow((double)T / 25.0, q);
            vc.fstar_starts = 2;
            vc.fstar_steps = 500;
            TheoremReport r = verify_theorem_empirically(fam, vc);
            ts.push_back((double)T);
            lhs.push_back(r.lhs);
        }
        double slope = loglog_slope(ts, lhs);
        all = all && slope <= -(1.0 + q) + 0.2;
        slopes += (slopes.empty() ? "q=" : " q=") + fmt(q) + ":" + fmt(slope);
    }
    double secs = timer.seconds();
    detail = "log-log slopes " + slopes + " (need <= -(1+q)+0.2), " + fmt(secs) +
             " s (< 300)";
    return all && secs < 300.0;
}

// ---------------------------------------------------------------------------
// 8. Ablation direction at 0 dB over 3 seeds

bool c8_ablation(std::string& detail) {
    Timer timer;
    std::vector<double> avg(4, 0.0);
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        ExperimentConfig cfg;
        cfg.mode = "ablate";
        cfg.seed = seed;
        cfg.snr.mean_db = 0.0;
        cfg.sched.rounds = 150;
        CsvTable t = run_ablate(cfg, /*write_files=*/false);
        std::size_t psnr_col = 4;
        for (std::size_t r = 0; r < 4; ++r)
            avg[r] += t.rows[r][psnr_col] / 3.0;
    }
    bool ok = true;
    for (std::size_t r = 1; r < 4; ++r) ok = ok && avg[0] >= avg[r] - 0.1;
    double secs = timer.seconds();
    detail = "mean PSNR at 0 dB: full " + fmt(avg[0]) + ", no-dual " +
             fmt(avg[1]) + ", no-preproc " + fmt(avg[2]) + ", no-pfl " +
             fmt(avg[3]) + " (full >= each - 0.1 dB), " + fmt(secs) +
             " s (< 1800)";
    return ok && secs < 1800.0;
}

// ---------------------------------------------------------------------------
// 9. Training sanity at the default schedule

bool c9_training_sanity(std::string& detail) {
    namespace fs = std::filesystem;
    ExperimentConfig cfg;  // defaults: T=300, tau=5, eta=1e-4
    cfg.seed = 1;
    cfg.out = (fs::temp_directory_path() / "fedjscc_acceptance_train").string();
    fs::remove_all(cfg.out);

    TrainOutput out = run_train(cfg);
    double first = out.result.history.front().l_total;
    double last = out.result.history.back().l_total;
    double drop = 1.0 - last / first;

    CsvTable sweep = channel_sweep(cfg, /*write_files=*/false);
    std::vector<double> snrs, psnrs;
    for (const auto& r : sweep.rows) {
        snrs.push_back(r[0]);
        psnrs.push_back(r[1]);
    }
    double rho = spearman(snrs, psnrs);
    fs::remove_all(cfg.out);

    detail = "l_total " + fmt(first) + " -> " + fmt(last) + " (drop " +
             fmt(drop * 100) + "%, need >= 50%); sweep Spearman(psnr, snr) " +
             fmt(rho) + " (>= 0.9)";
    return drop >= 0.5 && rho >= 0.9;
}

// ---------------------------------------------------------------------------
// 10. Metric identities

bool c10_metric_identities(std::string& detail) {
    bool p = psnr_from_mse(0.01) == 20.0;

    RngStream rng(77, 0, 0, 0);
    Tensor img({48, 48, 3});  // 3 dyadic scales need >= 44 px
    for (auto& v : img.data) v = rng.uniform();
    bool m = std::abs(ms_ssim(img, img, 3) - 1.0) < 1e-9;

    ContrastiveBatch b;
    b.anchor = Tensor::vec({1.0, 0.0});
    b.candidates = {Tensor::vec({1.0, 0.0}), Tensor::vec({1.0, 0.0})};
    b.positive_index = 0;
    b.temperature = 0.1;
    bool i = std::abs(infonce_loss(b) - std::log(2.0)) < 1e-12;

    detail = std::string("psnr(mse=0.01)=20 ") + (p ? "ok" : "BAD") +
             "; ms_ssim(x,x)=1 " + (m ? "ok" : "BAD") + "; infonce=ln2 " +
             (i ? "ok" : "BAD");
    return p && m && i;
}

}  // namespace

int main() {
    run(1, "", c1_scale_note);
    run(2, "", c2_gradient_suite);
    run(3, "", c3_channel_identities);
    run(4, "", c4_protocol);
    run(5, "", c5_lemma7);
    run(6, "", c6_theorem_bound);
    run(7, "", c7_rate_fit);
    run(8, "", c8_ablation);
    run(9, "", c9_training_sanity);
    run(10, "", c10_metric_identities);
    std::printf("%d/10 criteria passed\n", 10 - failures);
    return failures == 0 ? 0 : 1;
}
