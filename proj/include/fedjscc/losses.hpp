#pragma once

#include <algorithm>
#include <vector>

#include "graph.hpp"

namespace fedjscc {

struct LossError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContrastiveBatch {
    Tensor anchor;
    std::vector<Tensor> candidates;
    std::size_t positive_index = 0;  // index of f(x+) within candidates
    double temperature = 0.1;

    void validate() const {
        if (temperature <= 0.0) throw LossError("infonce: temperature must be > 0");
        if (candidates.empty()) throw LossError("infonce: empty candidate set");
        if (positive_index >= candidates.size())
            throw LossError("infonce: positive not among candidates");
        for (const auto& c : candidates)
            if (!c.same_shape(anchor)) throw LossError("infonce: embedding dim mismatch");
    }
};

inline double mse_loss(const Tensor& x, const Tensor& x_hat) {
    if (!x.same_shape(x_hat)) throw LossError("mse: shape mismatch");
    double s = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double d = x.data[i] - x_hat.data[i];
        s += d * d;
    }
    return s / (double)x.numel();
}

// -log( exp(<a,p>/t) / sum_i exp(<a,c_i>/t) ), max-subtracted for stability.
inline double infonce_loss(const ContrastiveBatch& b) {
    b.validate();
    std::vector<double> sims(b.candidates.size());
    for (std::size_t i = 0; i < b.candidates.size(); ++i) {
        double s = 0;
        for (std::size_t j = 0; j < b.anchor.numel(); ++j)
            s += b.anchor.data[j] * b.candidates[i].data[j];
        sims[i] = s / b.temperature;
    }
    double m = *std::max_element(sims.begin(), sims.end());
    double z = 0;
    for (double s : sims) z += std::exp(s - m);
    return std::log(z) - (sims[b.positive_index] - m);
}

inline double total_loss(double mse, double cl) { return mse + cl; }

// ---- graph builders (used by the training path) ----

inline NodeId mse_node(Graph& g, NodeId x, NodeId x_hat) {
    if (!g.value(x).same_shape(g.value(x_hat)))
        throw LossError("mse: shape mismatch");
    NodeId d = g.sub(x, x_hat);
    return g.mean(g.mul(d, d));
}

// Anchor/candidates are flat embedding nodes. The max shift is a constant
// (softmax is shift-invariant, so the gradient is unaffected).
inline NodeId infonce_node(Graph& g, NodeId anchor,
                           const std::vector<NodeId>& candidates,
                           std::size_t positive_index, double temperature) {
    if (temperature <= 0.0) throw LossError("infonce: temperature must be > 0");
    if (positive_index >= candidates.size())
        throw LossError("infonce: positive not among candidates");
    std::vector<NodeId> sims;
    sims.reserve(candidates.size());
    double max_sim = -1e300;
    for (NodeId c : candidates) {
        NodeId s = g.scale(g.sum(g.mul(anchor, c)), 1.0 / temperature);
        max_sim = std::max(max_sim, g.value(s).item());
        sims.push_back(s);
    }
    NodeId shift = g.constant(max_sim);
    std::vector<NodeId> exps;
    exps.reserve(sims.size());
    for (NodeId s : sims) exps.push_back(g.reshape(g.exp_(g.sub(s, shift)), {1}));
    NodeId lse = g.log_(g.sum(g.concat(exps)));
    return g.sub(lse, g.sub(sims[positive_index], shift));
}

}  // namespace fedjscc
