#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <vector>

#include "params.hpp"
#include "rng.hpp"

namespace fedjscc {

struct FederationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class LrRule { constant, inverse_sqrt_round, power };

struct FlSchedule {
    std::size_t rounds = 50;      // T
    std::size_t local_steps = 5;  // tau
    double eta_u = 1e-2;
    double eta_v = 1e-2;
    LrRule rule = LrRule::constant;
    double power_q = -0.5;       // rate ~ (t+1)^q when rule == power
    bool per_step_decay = false; // extra 1/(k+1) inside the local loop

    void validate() const {
        if (rounds < 1 || local_steps < 1)
            throw FederationError("schedule: rounds and local_steps must be >= 1");
        // eta_v = 0 is allowed: it freezes the personalized block in place.
        if (!(eta_u > 0.0) || !(eta_v >= 0.0))
            throw FederationError("schedule: learning rates must be positive");
        if (rule == LrRule::power && !(power_q > -1.0 && power_q < 0.0))
            throw FederationError("schedule: power exponent must lie in (-1, 0)");
    }

    double round_rate(double base, std::size_t t) const {
        switch (rule) {
            case LrRule::constant: return base;
            case LrRule::inverse_sqrt_round: return base / std::sqrt((double)(t + 1));
            case LrRule::power: return base * std::pow((double)(t + 1), power_q);
        }
        throw FederationError("schedule: unknown lr rule");
    }

    double step_factor(std::size_t k) const {
        return per_step_decay ? 1.0 / (double)(k + 1) : 1.0;
    }
};

struct LocalGrads {
    ParamBlock u;
    ParamBlock v;
};

// Per-round evaluation snapshot from one client. psnr/msssim are indexed by
// the caller-supplied snr grid (empty when not applicable).
struct EvalStats {
    double l_mse = 0.0;
    double l_cl = 0.0;
    double l_total = 0.0;
    std::vector<double> psnr;
    std::vector<double> msssim;
};

// One client's local objective. Clients own their data; the server never
// sees anything except u-block gradient sums.
class LocalProblem {
public:
    virtual ~LocalProblem() = default;

    // Gradient of the local loss at (u, v) on a sampled sub-batch; rng is
    // keyed by (seed, client, round, step) so the draw is reproducible
    // regardless of execution order.
    virtual LocalGrads stochastic_grad(const ParamBlock& u, const ParamBlock& v,
                                       RngStream& rng) = 0;

    // Deterministic full-batch gradient; only required when theory
    // instrumentation is on.
    virtual LocalGrads full_grad(const ParamBlock&, const ParamBlock&) {
        throw FederationError("full_grad not implemented for this problem");
    }

    virtual EvalStats evaluate(const ParamBlock& u, const ParamBlock& v,
                               const std::vector<double>& snr_grid,
                               RngStream& rng) = 0;
};

// What a client uploads: only the u-block gradient sum. The personalized
// block v never leaves the device.
struct ClientMessage {
    std::size_t client = 0;
    ParamBlock grad_sum_u;
};

inline bool message_mentions(const ClientMessage& msg, const std::string& name) {
    return msg.grad_sum_u.find(name) != msg.grad_sum_u.end();
}

// tau local steps from the broadcast copy of u. The u-copy drifts locally
// and is discarded; v_n is updated in place; the server receives sum_k G_{n,u}
// with per-step schedule factors folded in.
inline ClientMessage local_update(const ParamBlock& u_t, ParamBlock& v_n,
                                  LocalProblem& problem, const FlSchedule& sched,
                                  std::uint64_t seed, std::size_t round,
                                  std::size_t client) {
    sched.validate();
    ParamBlock u_local = u_t;
    ParamBlock grad_sum = block_zero_like(u_t);
    double eu = sched.round_rate(sched.eta_u, round);
    double ev = sched.round_rate(sched.eta_v, round);
    for (std::size_t k = 0; k < sched.local_steps; ++k) {
        RngStream rng(seed, client, round, k);
        LocalGrads g = problem.stochastic_grad(u_local, v_n, rng);
        if (!block_all_finite(g.u) || !block_all_finite(g.v))
            throw FederationError("non-finite gradient (round " + std::to_string(round) +
                                  ", client " + std::to_string(client) + ", step " +
                                  std::to_string(k) + ")");
        double f = sched.step_factor(k);
        block_axpy(grad_sum, f, g.u);
        block_axpy(u_local, -eu * f, g.u);
        if (!v_n.empty()) block_axpy(v_n, -ev * f, g.v);
    }
    return {client, std::move(grad_sum)};
}

// u^{t+1} = u^t - eta_u * sum_n w_n * grad_sums[n]; uniform w_n = 1/N by
// default, gamma weights optional. Accumulation runs in client-id order so
// the result is bitwise independent of arrival order.
inline ParamBlock aggregate(const ParamBlock& u_t,
                            const std::vector<ClientMessage>& msgs, double eta_u,
                            std::size_t n_clients,
                            const std::vector<double>& gamma = {}) {
    if (msgs.size() != n_clients)
        throw FederationError("aggregate: expected " + std::to_string(n_clients) +
                              " client messages, got " + std::to_string(msgs.size()));
    std::vector<const ClientMessage*> by_id(n_clients, nullptr);
    for (const auto& m : msgs) {
        if (m.client >= n_clients || by_id[m.client] != nullptr)
            throw FederationError("aggregate: duplicate or out-of-range client id " +
                                  std::to_string(m.client));
        by_id[m.client] = &m;
    }
    if (!gamma.empty()) {
        if (gamma.size() != n_clients)
            throw FederationError("aggregate: gamma size mismatch");
        double s = 0;
        for (double w : gamma) s += w;
        if (std::abs(s - 1.0) > 1e-12)
            throw FederationError("aggregate: gamma weights must sum to 1");
    }
    ParamBlock u_next = u_t;
    for (std::size_t n = 0; n < n_clients; ++n) {
        double w = gamma.empty() ? 1.0 / (double)n_clients : gamma[n];
        block_axpy(u_next, -eta_u * w, by_id[n]->grad_sum_u);
    }
    return u_next;
}

struct RoundMetrics {
    std::size_t round = 0;
    double l_mse = 0.0;
    double l_cl = 0.0;
    double l_total = 0.0;
    double grad_norm_u_sq = 0.0;
    double grad_norm_v_sq_avg = 0.0;
    std::vector<double> psnr;    // per eval snr grid point, client-averaged
    std::vector<double> msssim;  // per eval snr grid point, client-averaged
    double wall_ms = 0.0;
};

struct TrainResult {
    ParamBlock u;
    std::vector<ParamBlock> v;  // per client
    std::vector<RoundMetrics> history;
};

struct FlRun {
    FlSchedule sched;
    std::uint64_t seed = 1;
    std::vector<double> eval_snr_grid;      // empty -> skip psnr/msssim columns
    bool theory_instrumentation = false;    // full-batch grad norms per round
    std::vector<double> gamma;              // empty -> uniform 1/N
};

// Algorithm: T rounds of broadcast -> tau local steps on every client ->
// aggregate. Clients are logically parallel; the sequential loop below is
// equivalent because each client's randomness is keyed, not shared.
inline TrainResult run_training(std::vector<std::shared_ptr<LocalProblem>>& clients,
                                const ParamBlock& u0,
                                const std::vector<ParamBlock>& v0, const FlRun& run) {
    run.sched.validate();
    std::size_t N = clients.size();
    if (N == 0) throw FederationError("run_training: no clients");
    if (v0.size() != N) throw FederationError("run_training: v0 size mismatch");

    TrainResult out;
    out.u = u0;
    out.v = v0;
    const std::size_t eval_step = run.sched.local_steps;  // rng step ids past training
    for (std::size_t t = 0; t < run.sched.rounds; ++t) {
        auto tick = std::chrono::steady_clock::now();
        std::vector<ClientMessage> msgs;
        msgs.reserve(N);
        for (std::size_t n = 0; n < N; ++n)
            msgs.push_back(local_update(out.u, out.v[n], *clients[n], run.sched,
                                        run.seed, t, n));
        double eu = run.sched.round_rate(run.sched.eta_u, t);
        out.u = aggregate(out.u, msgs, eu, N, run.gamma);

        RoundMetrics m;
        m.round = t;
        for (std::size_t n = 0; n < N; ++n) {
            RngStream rng(run.seed, n, t, eval_step);
            EvalStats s = clients[n]->evaluate(out.u, out.v[n], run.eval_snr_grid, rng);
            m.l_mse += s.l_mse / (double)N;
            m.l_cl += s.l_cl / (double)N;
            m.l_total += s.l_total / (double)N;
            if (m.psnr.empty()) {
                m.psnr.assign(run.eval_snr_grid.size(), 0.0);
                m.msssim.assign(run.eval_snr_grid.size(), 0.0);
            }
            for (std::size_t i = 0; i < run.eval_snr_grid.size(); ++i) {
                m.psnr[i] += s.psnr.at(i) / (double)N;
                m.msssim[i] += s.msssim.at(i) / (double)N;
            }
        }
        if (run.theory_instrumentation) {
            ParamBlock gu_mean = block_zero_like(out.u);
            for (std::size_t n = 0; n < N; ++n) {
                LocalGrads g = clients[n]->full_grad(out.u, out.v[n]);
                block_axpy(gu_mean, 1.0 / (double)N, g.u);
                m.grad_norm_v_sq_avg += block_sq_norm(g.v) / (double)N;
            }
            m.grad_norm_u_sq = block_sq_norm(gu_mean);
        }
        m.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - tick)
                        .count();
        out.history.push_back(std::move(m));
    }
    return out;
}

}  // namespace fedjscc
