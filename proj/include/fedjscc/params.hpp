#pragma once

#include <map>
#include <string>

#include "tensor.hpp"

namespace fedjscc {

// Named flat parameter arrays. std::map keeps iteration order deterministic.
using ParamBlock = std::map<std::string, Tensor>;

// Partitioned model parameters: globally shared block u, personalized block v.
struct ParamSet {
    ParamBlock u;
    ParamBlock v;
};

inline void block_axpy(ParamBlock& y, double a, const ParamBlock& x) {
    if (y.size() != x.size()) throw TensorError("param block: name set mismatch");
    auto it = x.begin();
    for (auto& [name, t] : y) {
        if (it->first != name) throw TensorError("param block: name set mismatch");
        axpy(t, a, it->second);
        ++it;
    }
}

inline ParamBlock block_zero_like(const ParamBlock& x) {
    ParamBlock z;
    for (const auto& [name, t] : x) z.emplace(name, Tensor::zeros(t.shape));
    return z;
}

inline double block_sq_norm(const ParamBlock& x) {
    double s = 0;
    for (const auto& [name, t] : x) s += t.sq_norm();
    return s;
}

inline bool block_all_finite(const ParamBlock& x) {
    for (const auto& [name, t] : x)
        if (!t.all_finite()) return false;
    return true;
}

inline bool block_equal(const ParamBlock& a, const ParamBlock& b) {
    if (a.size() != b.size()) return false;
    auto it = b.begin();
    for (const auto& [name, t] : a) {
        if (it->first != name || t.shape != it->second.shape ||
            t.data != it->second.data)
            return false;
        ++it;
    }
    return true;
}

}  // namespace fedjscc
