#include "spiketk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spiketk/error.hpp"

namespace spiketk {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == element_count(shape_), "tensor data does not match shape " + shape_string());
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    require(element_count(shape) == data_.size(), "reshape changes element count");
    return Tensor(std::move(shape), data_);
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

const char* axis_name(Axis axis) {
    switch (axis) {
        case Axis::time: return "time";
        case Axis::batch: return "batch";
        case Axis::channel: return "channel";
        case Axis::height: return "height";
        case Axis::width: return "width";
    }
    return "?";
}

FeatureTensor::FeatureTensor(Tensor data, std::vector<Axis> axes) : data_(std::move(data)), axes_(std::move(axes)) {
    require(axes_.size() == data_.rank(), "axis roles do not match tensor rank");
    for (std::size_t i = 0; i < axes_.size(); ++i) {
        for (std::size_t j = i + 1; j < axes_.size(); ++j) {
            require(axes_[i] != axes_[j], std::string("duplicate axis role ") + axis_name(axes_[i]));
        }
    }
    for (double v : data_.values()) require(std::isfinite(v), "feature tensor holds a non-finite value");
}

bool FeatureTensor::has(Axis axis) const {
    return std::find(axes_.begin(), axes_.end(), axis) != axes_.end();
}

std::size_t FeatureTensor::extent(Axis axis) const {
    const auto it = std::find(axes_.begin(), axes_.end(), axis);
    require(it != axes_.end(), std::string("tensor has no ") + axis_name(axis) + " axis");
    return data_.dim(static_cast<std::size_t>(it - axes_.begin()));
}

Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const double> bias, std::size_t stride,
              std::size_t padding) {
    require(input.rank() == 3, "conv2d input must be [C,H,W], got " + input.shape_string());
    require(weight.rank() == 4, "conv2d weight must be [O,C,kh,kw], got " + weight.shape_string());
    require(stride >= 1, "conv2d stride must be >= 1");
    const std::size_t channels = input.dim(0);
    const std::size_t height = input.dim(1);
    const std::size_t width = input.dim(2);
    const std::size_t out_ch = weight.dim(0);
    const std::size_t kh = weight.dim(2);
    const std::size_t kw = weight.dim(3);
    require(weight.dim(1) == channels, "conv2d weight expects " + std::to_string(weight.dim(1)) +
                                           " input channels, got " + std::to_string(channels));
    require(bias.empty() || bias.size() == out_ch, "conv2d bias length mismatch");
    require(height + 2 * padding >= kh && width + 2 * padding >= kw, "conv2d kernel larger than padded input");

    const std::size_t oh = (height + 2 * padding - kh) / stride + 1;
    const std::size_t ow = (width + 2 * padding - kw) / stride + 1;
    Tensor out({out_ch, oh, ow});
    const auto pad = static_cast<std::ptrdiff_t>(padding);
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto ih = static_cast<std::ptrdiff_t>(height);
    const auto iw = static_cast<std::ptrdiff_t>(width);

    for (std::size_t o = 0; o < out_ch; ++o) {
        double* dst = out.data() + o * oh * ow;
        if (!bias.empty()) std::fill(dst, dst + oh * ow, bias[o]);
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = input.data() + c * height * width;
            for (std::size_t ky = 0; ky < kh; ++ky) {
                for (std::size_t kx = 0; kx < kw; ++kx) {
                    const double wv = weight.at(o, c, ky, kx);
                    if (wv == 0.0) continue;
                    const auto dy = static_cast<std::ptrdiff_t>(ky) - pad;
                    const auto dx = static_cast<std::ptrdiff_t>(kx) - pad;
                    // valid output columns: 0 <= ox*s + dx < iw
                    std::ptrdiff_t x0 = dx >= 0 ? 0 : (-dx + s - 1) / s;
                    std::ptrdiff_t x1 = (iw - 1 - dx) >= 0 ? (iw - 1 - dx) / s + 1 : 0;
                    x1 = std::min<std::ptrdiff_t>(x1, static_cast<std::ptrdiff_t>(ow));
                    for (std::size_t oy = 0; oy < oh; ++oy) {
                        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + dy;
                        if (iy < 0 || iy >= ih) continue;
                        const double* row = src + iy * iw;
                        double* orow = dst + oy * ow;
                        if (s == 1) {
                            for (std::ptrdiff_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox + dx];
                        } else {
                            for (std::ptrdiff_t ox = x0; ox < x1; ++ox) orow[ox] += wv * row[ox * s + dx];
                        }
                    }
                }
            }
        }
    }
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, std::span<const double> bias) {
    require(x.rank() == 2 && weight.rank() == 2, "linear expects [N,in] input and [out,in] weight");
    const std::size_t n = x.dim(0);
    const std::size_t in = x.dim(1);
    const std::size_t out_dim = weight.dim(0);
    require(weight.dim(1) == in, "linear weight expects " + std::to_string(weight.dim(1)) + " inputs, got " +
                                     std::to_string(in));
    require(bias.empty() || bias.size() == out_dim, "linear bias length mismatch");
    Tensor y({n, out_dim});
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.data() + i * in;
        for (std::size_t o = 0; o < out_dim; ++o) {
            const double* wo = weight.data() + o * in;
            double acc = bias.empty() ? 0.0 : bias[o];
            for (std::size_t k = 0; k < in; ++k) acc += wo[k] * xi[k];
            y.at(i, o) = acc;
        }
    }
    return y;
}

void relu_inplace(Tensor& t) {
    for (double& v : t.values()) v = v > 0.0 ? v : 0.0;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void softmax_inplace(std::span<double> row) {
    if (row.empty()) return;
    const double peak = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (double& v : row) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : row) v /= total;
}

Tensor layer_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta, double eps) {
    require(x.rank() == 2, "layer_norm expects [N,D]");
    const std::size_t n = x.dim(0);
    const std::size_t d = x.dim(1);
    require(gamma.size() == d && beta.size() == d, "layer_norm parameter length mismatch");
    Tensor y({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = x.data() + i * d;
        double mean = 0.0;
        for (std::size_t k = 0; k < d; ++k) mean += xi[k];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t k = 0; k < d; ++k) var += (xi[k] - mean) * (xi[k] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t k = 0; k < d; ++k) y.at(i, k) = (xi[k] - mean) * inv * gamma[k] + beta[k];
    }
    return y;
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values, const AttentionWeights& w,
                            std::size_t heads, Tensor* probs) {
    require(queries.rank() == 2 && keys_values.rank() == 2, "attention inputs must be [N,C]");
    require(heads >= 1, "attention needs at least one head");
    const Tensor q = linear(queries, w.wq, w.bq);
    const Tensor k = linear(keys_values, w.wk, w.bk);
    const Tensor v = linear(keys_values, w.wv, w.bv);
    const std::size_t nq = q.dim(0);
    const std::size_t nk = k.dim(0);
    const std::size_t width = q.dim(1);
    require(k.dim(1) == width && v.dim(1) == width, "attention projections disagree on width");
    require(width % heads == 0, "attention width " + std::to_string(width) + " not divisible by " +
                                    std::to_string(heads) + " heads");
    const std::size_t hd = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

    if (probs) *probs = Tensor({heads, nq, nk});
    Tensor context({nq, width});
    std::vector<double> row(nk);
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < nq; ++i) {
            for (std::size_t j = 0; j < nk; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < hd; ++c) dot += q.at(i, off + c) * k.at(j, off + c);
                row[j] = dot * scale;
            }
            softmax_inplace(row);
            if (probs) std::copy(row.begin(), row.end(), probs->data() + (h * nq + i) * nk);
            for (std::size_t c = 0; c < hd; ++c) {
                double acc = 0.0;
                for (std::size_t j = 0; j < nk; ++j) acc += row[j] * v.at(j, off + c);
                context.at(i, off + c) = acc;
            }
        }
    }
    return linear(context, w.wo, w.bo);
}

}  // namespace spiketk
