#pragma once

#include <optional>

#include "graph.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace fedjscc {

struct ChannelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Gaussian SNR draw in dB, clamped to [min_db, max_db].
struct SnrDistribution {
    double mean_db = 7.5;
    double std_db = 2.0;
    double min_db = -5.0;
    double max_db = 25.0;

    void validate() const {
        if (std_db < 0.0) throw ChannelError("snr distribution: std_db < 0");
        if (!(min_db <= mean_db && mean_db <= max_db))
            throw ChannelError("snr distribution: mean outside clamp range");
    }
};

inline double sample_snr(const SnrDistribution& dist, RngStream& rng) {
    dist.validate();
    double s = rng.gaussian(dist.mean_db, dist.std_db);
    return std::min(std::max(s, dist.min_db), dist.max_db);
}

// Per-symbol noise std for unit signal power: sqrt(1 / 10^(snr/10)).
inline double noise_std_for_snr(double snr_db) {
    return std::sqrt(std::pow(10.0, -snr_db / 10.0));
}

namespace detail {

// Solves (H^T H) X = H^T via Cholesky; returns the zero-forcing matrix
// (H^T H)^-1 H^T. Throws on a singular normal matrix.
inline Tensor zero_forcing_matrix(const Tensor& H) {
    if (H.rank() != 2 || H.shape[0] != H.shape[1])
        throw ChannelError("fading matrix must be square");
    std::size_t n = H.shape[0];
    // G = H^T H
    std::vector<double> G(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < n; ++k) s += H.data[k * n + i] * H.data[k * n + j];
            G[i * n + j] = s;
        }
    double gmax = 0.0;
    for (std::size_t i = 0; i < n; ++i) gmax = std::max(gmax, G[i * n + i]);
    // Cholesky G = L L^T; pivots are compared against the largest diagonal so
    // a rank-deficient H fails cleanly instead of leaking through rounding.
    std::vector<double> L(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = G[i * n + j];
            for (std::size_t k = 0; k < j; ++k) s -= L[i * n + k] * L[j * n + k];
            if (i == j) {
                if (s <= gmax * 1e-12)
                    throw ChannelError("channel singularity: H^T H not invertible");
                L[i * n + i] = std::sqrt(s);
            } else {
                L[i * n + j] = s / L[j * n + j];
            }
        }
    }
    // Solve L L^T X = H^T column by column.
    Tensor X({n, n});
    std::vector<double> y(n), x(n);
    for (std::size_t c = 0; c < n; ++c) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = H.data[c * n + i];  // (H^T)_{i,c}
            for (std::size_t k = 0; k < i; ++k) s -= L[i * n + k] * y[k];
            y[i] = s / L[i * n + i];
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) s -= L[k * n + ii] * x[k];
            x[ii] = s / L[ii * n + ii];
        }
        for (std::size_t i = 0; i < n; ++i) X.data[i * n + c] = x[i];
    }
    return X;
}

}  // namespace detail

// One transmission's channel state. Default mode is AWGN (H = identity);
// fading mode carries an explicit full-rank H plus its zero-forcing inverse.
struct ChannelRealization {
    double snr_db = 0.0;
    double noise_std = 1.0;
    std::optional<Tensor> H;   // absent => identity (AWGN)
    std::optional<Tensor> zf;  // (H^T H)^-1 H^T, cached

    static ChannelRealization awgn(double snr_db) {
        ChannelRealization c;
        c.snr_db = snr_db;
        c.noise_std = noise_std_for_snr(snr_db);
        return c;
    }

    static ChannelRealization fading(Tensor h, double snr_db) {
        ChannelRealization c;
        c.snr_db = snr_db;
        c.noise_std = noise_std_for_snr(snr_db);
        c.zf = detail::zero_forcing_matrix(h);  // rank check happens here
        c.H = std::move(h);
        return c;
    }

    // Diagonal positive random fading, exercises equalization without
    // touching the AWGN defaults.
    static ChannelRealization diagonal_random(std::size_t dim, double snr_db,
                                              RngStream& rng) {
        Tensor h({dim, dim});
        for (std::size_t i = 0; i < dim; ++i)
            h.data[i * dim + i] = 0.5 + rng.uniform() * 1.5;
        return fading(std::move(h), snr_db);
    }

    bool is_awgn() const { return !H.has_value(); }
};

// x / rms(x); rejects the all-zero signal.
inline Tensor power_normalize(const Tensor& emb) {
    double ms = emb.sq_norm() / (double)emb.numel();
    if (ms == 0.0) throw ChannelError("power_normalize: degenerate all-zero signal");
    Tensor out = emb;
    double inv = 1.0 / std::sqrt(ms);
    for (auto& v : out.data) v *= inv;
    return out;
}

inline Tensor mat_vec(const Tensor& M, const Tensor& v) {
    std::size_t n = M.shape[0], m = M.shape[1];
    if (v.numel() != m) throw ChannelError("channel: dimension mismatch");
    Tensor out({n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < m; ++j) s += M.data[i * m + j] * v.data[j];
        out.data[i] = s;
    }
    return out;
}

// Y = H * emb + N, with N iid zero-mean Gaussian of std = noise_std.
inline Tensor transmit(const Tensor& emb_s, const ChannelRealization& chan,
                       RngStream& rng) {
    Tensor y = chan.is_awgn() ? emb_s : mat_vec(*chan.H, emb_s);
    if (!chan.is_awgn() && y.numel() != emb_s.numel())
        throw ChannelError("channel: dimension mismatch");
    for (auto& v : y.data) v += rng.gaussian(0.0, chan.noise_std);
    return y;
}

// Emb_R = (H^T H)^-1 H^T Y. In AWGN mode this is the identity.
inline Tensor equalize(const Tensor& y, const ChannelRealization& chan) {
    if (chan.is_awgn()) return y;
    return mat_vec(*chan.zf, y);
}

// In-graph channel: noise is sampled here and enters as a constant leaf, so
// backward treats it as fixed (reparameterization pass-through); equalization
// with a fixed H is a constant linear map.
inline NodeId channel_node(Graph& g, NodeId emb_s, const ChannelRealization& chan,
                           RngStream& rng) {
    std::vector<std::size_t> shape = g.value(emb_s).shape;
    std::size_t k = g.value(emb_s).numel();
    Tensor noise = rng.gaussian_tensor(shape, 0.0, chan.noise_std);
    if (chan.is_awgn()) return g.add(emb_s, g.constant(noise));
    if (chan.H->shape[0] != k) throw ChannelError("channel: dimension mismatch");
    NodeId col = g.reshape(emb_s, {k, 1});
    NodeId y = g.add(g.matmul(g.constant(*chan.H), col),
                     g.constant(Tensor({k, 1}, noise.data)));
    NodeId r = g.matmul(g.constant(*chan.zf), y);
    return g.reshape(r, shape);
}

}  // namespace fedjscc
