#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>

#include "graph.hpp"

namespace fedjscc {

// Builds a scalar loss from a fresh graph and the given parameter leaves.
using LossBuilder =
    std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)>;

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
};

// Central-difference oracle: compares analytic reverse-mode gradients against
// (f(x+eps) - f(x-eps)) / (2 eps), componentwise over every parameter.
// Error metric: |analytic - fd| / max(1, |fd|).
inline GradCheckReport grad_check(const std::map<std::string, Tensor>& params,
                                  const LossBuilder& build, double epsilon) {
    if (!(epsilon > 0.0) || epsilon > 1e-2)
        throw GraphError("grad_check: epsilon must be in (0, 1e-2]");

    auto eval_value = [&](const std::map<std::string, Tensor>& p) {
        Graph g;
        std::map<std::string, NodeId> leaves;
        for (const auto& [name, t] : p) leaves[name] = g.leaf(t, true, name);
        return g.value(build(g, leaves)).item();
    };

    Graph g;
    std::map<std::string, NodeId> leaves;
    for (const auto& [name, t] : params) leaves[name] = g.leaf(t, true, name);
    g.backward(build(g, leaves));

    GradCheckReport rep;
    std::map<std::string, Tensor> work = params;
    for (auto& [name, t] : work) {
        const Tensor& analytic = g.grad(leaves.at(name));
        for (std::size_t i = 0; i < t.numel(); ++i) {
            double saved = t.data[i];
            t.data[i] = saved + epsilon;
            double fp = eval_value(work);
            t.data[i] = saved - epsilon;
            double fm = eval_value(work);
            t.data[i] = saved;
            double fd = (fp - fm) / (2.0 * epsilon);
            double err = std::abs(analytic.data[i] - fd) / std::max(1.0, std::abs(fd));
            if (err > rep.max_rel_error) {
                rep.max_rel_error = err;
                rep.worst_param = name;
                rep.worst_index = i;
            }
        }
    }
    return rep;
}

}  // namespace fedjscc
