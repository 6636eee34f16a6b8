#pragma once

#include <algorithm>
#include <array>
#include <numeric>
#include <vector>

#include "losses.hpp"
#include "tensor.hpp"

namespace fedjscc {

// 10*log10(1/mse) for unit-peak images; mse <= 0 hits the 100 dB cap.
inline double psnr_from_mse(double m) {
    if (m <= 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / m));
}

inline double psnr(const Tensor& x, const Tensor& x_hat) {
    return psnr_from_mse(mse_loss(x, x_hat));
}

struct MsSsimScaleError : std::runtime_error {
    int max_feasible;
    explicit MsSsimScaleError(int feasible, int requested)
        : std::runtime_error("ms_ssim: image too small for " +
                             std::to_string(requested) +
                             " scales; max feasible is " + std::to_string(feasible)),
          max_feasible(feasible) {}
};

namespace detail {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

inline std::vector<double> gaussian_window() {
    std::vector<double> w(kSsimWindow);
    double s = 0;
    for (int i = 0; i < kSsimWindow; ++i) {
        double d = i - (kSsimWindow - 1) / 2.0;
        w[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        s += w[i];
    }
    for (auto& v : w) v /= s;
    return w;
}

// Valid-mode separable Gaussian filter of one channel plane.
inline std::vector<double> filter_plane(const std::vector<double>& img, int h, int w) {
    static const std::vector<double> win = gaussian_window();
    int oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
    std::vector<double> tmp((std::size_t)h * ow, 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kSsimWindow; ++k) s += win[k] * img[(std::size_t)y * w + x + k];
            tmp[(std::size_t)y * ow + x] = s;
        }
    std::vector<double> out((std::size_t)oh * ow, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kSsimWindow; ++k) s += win[k] * tmp[(std::size_t)(y + k) * ow + x];
            out[(std::size_t)y * ow + x] = s;
        }
    return out;
}

struct SsimPair {
    double luminance;
    double contrast_structure;
};

inline SsimPair ssim_plane(const std::vector<double>& a, const std::vector<double>& b,
                           int h, int w) {
    constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    auto mul = [](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> r(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] * y[i];
        return r;
    };
    auto mu_a = filter_plane(a, h, w);
    auto mu_b = filter_plane(b, h, w);
    auto saa = filter_plane(mul(a, a), h, w);
    auto sbb = filter_plane(mul(b, b), h, w);
    auto sab = filter_plane(mul(a, b), h, w);
    double lum = 0, cs = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        double va = saa[i] - mu_a[i] * mu_a[i];
        double vb = sbb[i] - mu_b[i] * mu_b[i];
        double cov = sab[i] - mu_a[i] * mu_b[i];
        lum += (2.0 * mu_a[i] * mu_b[i] + c1) / (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1);
        cs += (2.0 * cov + c2) / (va + vb + c2);
    }
    return {lum / (double)mu_a.size(), cs / (double)mu_a.size()};
}

inline std::vector<double> downsample2(const std::vector<double>& img, int h, int w) {
    int oh = h / 2, ow = w / 2;
    std::vector<double> out((std::size_t)oh * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out[(std::size_t)y * ow + x] =
                0.25 * (img[(std::size_t)(2 * y) * w + 2 * x] +
                        img[(std::size_t)(2 * y) * w + 2 * x + 1] +
                        img[(std::size_t)(2 * y + 1) * w + 2 * x] +
                        img[(std::size_t)(2 * y + 1) * w + 2 * x + 1]);
    return out;
}

}  // namespace detail

inline int ms_ssim_max_scales(std::size_t h, std::size_t w) {
    int scales = 0;
    std::size_t m = std::min(h, w);
    while (m >= (std::size_t)detail::kSsimWindow && scales < 5) {
        ++scales;
        m /= 2;
    }
    return scales;
}

// Multi-scale SSIM with the standard five-scale weights, renormalized over the
// scales actually used. Inputs are HWC in [0,1]; channels are averaged.
inline double ms_ssim(const Tensor& x, const Tensor& x_hat, int scales = 3) {
    if (!x.same_shape(x_hat)) throw LossError("ms_ssim: shape mismatch");
    if (x.rank() != 3) throw LossError("ms_ssim: expected HWC image");
    int h = (int)x.shape[0], w = (int)x.shape[1], c = (int)x.shape[2];
    int feasible = ms_ssim_max_scales(x.shape[0], x.shape[1]);
    if (scales < 1 || scales > feasible) throw MsSsimScaleError(feasible, scales);

    static const std::array<double, 5> kWeights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
    double wsum = std::accumulate(kWeights.begin(), kWeights.begin() + scales, 0.0);

    double total = 0;
    for (int ch = 0; ch < c; ++ch) {
        std::vector<double> a((std::size_t)h * w), b((std::size_t)h * w);
        for (int i = 0; i < h * w; ++i) {
            a[i] = x.data[(std::size_t)i * c + ch];
            b[i] = x_hat.data[(std::size_t)i * c + ch];
        }
        int sh = h, sw = w;
        double prod = 1.0;
        for (int s = 0; s < scales; ++s) {
            auto p = detail::ssim_plane(a, b, sh, sw);
            double wgt = kWeights[s] / wsum;
            double cs = std::max(p.contrast_structure, 0.0);
            if (s + 1 == scales) {
                double l = std::max(p.luminance, 0.0);
                prod *= std::pow(l * cs, wgt);
            } else {
                prod *= std::pow(cs, wgt);
                a = detail::downsample2(a, sh, sw);
                b = detail::downsample2(b, sh, sw);
                sh /= 2;
                sw /= 2;
            }
        }
        total += prod;
    }
    return std::min(1.0, total / (double)c);
}

// Spearman rank correlation (average ranks for ties).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<std::size_t> idx(v.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
        std::vector<double> r(v.size());
        std::size_t i = 0;
        while (i < idx.size()) {
            std::size_t j = i;
            while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
            double avg = (double)(i + j) / 2.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    auto ra = ranks(a), rb = ranks(b);
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= (double)ra.size();
    mb /= (double)rb.size();
    double num = 0, da = 0, db = 0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0 || db == 0) return 0.0;
    return num / std::sqrt(da * db);
}

}  // namespace fedjscc
