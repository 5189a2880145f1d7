#pragma once

// Naive reference implementations used as test oracles. They are written
// from the definitions directly and share no code with the library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "spiketk/tensor.hpp"

namespace oracle {

using spiketk::Tensor;

/// Step-accumulation encoder on one pixel, in exact rational arithmetic:
/// intensity = num/den, threshold = theta (integer). Returns 1-based frames.
inline std::vector<std::size_t> encoder_spike_frames(long long num, long long den, long long theta,
                                                     std::size_t frames) {
    std::vector<std::size_t> out;
    long long v = 0;  // charge in units of 1/den
    for (std::size_t n = 1; n <= frames; ++n) {
        v += num;
        if (v >= theta * den) {
            out.push_back(n);
            v -= theta * den;
        }
    }
    return out;
}

/// Direct 6-loop convolution, zero padding.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const std::vector<double>& b, std::size_t stride,
                     std::size_t pad) {
    const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
    Tensor y({o, oh, ow});
    for (std::size_t oc = 0; oc < o; ++oc) {
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j) {
                double s = b.empty() ? 0.0 : b[oc];
                for (std::size_t ic = 0; ic < c; ++ic) {
                    for (std::size_t u = 0; u < kh; ++u) {
                        for (std::size_t v = 0; v < kw; ++v) {
                            const long long yy = static_cast<long long>(i * stride + u) - static_cast<long long>(pad);
                            const long long xx = static_cast<long long>(j * stride + v) - static_cast<long long>(pad);
                            if (yy < 0 || xx < 0 || yy >= static_cast<long long>(h) || xx >= static_cast<long long>(wd)) {
                                continue;
                            }
                            s += w.at(oc, ic, u, v) * x.at(ic, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
                        }
                    }
                }
                y.at(oc, i, j) = s;
            }
        }
    }
    return y;
}

/// Per-position brute-force SOP count: each active input counts the output
/// positions and channels whose receptive field contains it.
inline std::uint64_t conv_sops_bruteforce(const std::vector<std::uint8_t>& spikes, std::size_t c, std::size_t h,
                                          std::size_t w, std::size_t k, std::size_t stride, std::size_t pad,
                                          std::size_t out_channels) {
    const std::size_t oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            for (std::size_t u = 0; u < k; ++u) {
                for (std::size_t v = 0; v < k; ++v) {
                    const long long yy = static_cast<long long>(i * stride + u) - static_cast<long long>(pad);
                    const long long xx = static_cast<long long>(j * stride + v) - static_cast<long long>(pad);
                    if (yy < 0 || xx < 0 || yy >= static_cast<long long>(h) || xx >= static_cast<long long>(w)) continue;
                    for (std::size_t ic = 0; ic < c; ++ic) {
                        total += spikes[(ic * h + static_cast<std::size_t>(yy)) * w + static_cast<std::size_t>(xx)] *
                                 out_channels;
                    }
                }
            }
        }
    }
    return total;
}

inline std::vector<double> affine(const Tensor& w, const std::vector<double>& b, const std::vector<double>& x) {
    std::vector<double> y(w.dim(0), 0.0);
    for (std::size_t i = 0; i < w.dim(0); ++i) {
        double s = b.empty() ? 0.0 : b[i];
        for (std::size_t j = 0; j < w.dim(1); ++j) s += w.at(i, j) * x[j];
        y[i] = s;
    }
    return y;
}

struct MhaWeights {
    Tensor wq, wk, wv, wo;
    std::vector<double> bq, bk, bv, bo;
};

/// Loop-based multi-head attention. Returns outputs [Nq][out] and fills
/// probs[h][i][j].
inline std::vector<std::vector<double>> attention(const std::vector<std::vector<double>>& q_in,
                                                  const std::vector<std::vector<double>>& kv_in, const MhaWeights& w,
                                                  std::size_t heads,
                                                  std::vector<std::vector<std::vector<double>>>* probs = nullptr) {
    const std::size_t nq = q_in.size(), nk = kv_in.size();
    std::vector<std::vector<double>> q, k, v;
    for (const auto& x : q_in) q.push_back(affine(w.wq, w.bq, x));
    for (const auto& x : kv_in) {
        k.push_back(affine(w.wk, w.bk, x));
        v.push_back(affine(w.wv, w.bv, x));
    }
    const std::size_t width = q[0].size(), hd = width / heads;
    std::vector<std::vector<double>> concat(nq, std::vector<double>(width, 0.0));
    if (probs) probs->assign(heads, std::vector<std::vector<double>>(nq, std::vector<double>(nk)));
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < nq; ++i) {
            std::vector<double> logits(nk);
            for (std::size_t j = 0; j < nk; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < hd; ++c) s += q[i][h * hd + c] * k[j][h * hd + c];
                logits[j] = s / std::sqrt(static_cast<double>(hd));
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            for (double& l : logits) z += (l = std::exp(l - mx));
            for (double& l : logits) l /= z;
            if (probs) (*probs)[h][i] = logits;
            for (std::size_t j = 0; j < nk; ++j) {
                for (std::size_t c = 0; c < hd; ++c) concat[i][h * hd + c] += logits[j] * v[j][h * hd + c];
            }
        }
    }
    std::vector<std::vector<double>> out;
    for (const auto& c : concat) out.push_back(affine(w.wo, w.bo, c));
    return out;
}

inline std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& g,
                                      const std::vector<double>& b, double eps = 1e-5) {
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    std::vector<double> y(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) / std::sqrt(var + eps) * g[i] + b[i];
    return y;
}

inline double rel_err(double a, double b) { return std::fabs(a - b) / std::max(1.0, std::max(std::fabs(a), std::fabs(b))); }

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = d(rng);
    return t;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

/// Symmetric InfoNCE directly from its definition.
inline double infonce(const std::vector<std::vector<double>>& sim, double inv_tau) {
    const std::size_t b = sim.size();
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < b; ++j) {
            row += std::exp(inv_tau * sim[i][j]);
            col += std::exp(inv_tau * sim[j][i]);
        }
        total -= std::log(std::exp(inv_tau * sim[i][i]) / row) + std::log(std::exp(inv_tau * sim[i][i]) / col);
    }
    return total / static_cast<double>(b);
}

}  // namespace oracle
