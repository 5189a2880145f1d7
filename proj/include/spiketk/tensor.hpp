#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spiketk {

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    template <typename... I>
    double& at(I... idx) { return data_[offset({static_cast<std::size_t>(idx)...})]; }
    template <typename... I>
    double at(I... idx) const { return data_[offset({static_cast<std::size_t>(idx)...})]; }

    /// Same data, new shape with the same element count.
    Tensor reshaped(std::vector<std::size_t> shape) const;

    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    std::size_t offset(std::initializer_list<std::size_t> idx) const {
        std::size_t off = 0;
        std::size_t axis = 0;
        for (std::size_t i : idx) off = off * shape_[axis++] + i;
        return off;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

enum class Axis { time, batch, channel, height, width };

const char* axis_name(Axis axis);

/// Tensor whose axes carry a role. Axis roles are unique and match the rank.
class FeatureTensor {
public:
    FeatureTensor(Tensor data, std::vector<Axis> axes);

    const Tensor& tensor() const { return data_; }
    Tensor& tensor() { return data_; }
    const std::vector<Axis>& axes() const { return axes_; }
    std::size_t extent(Axis axis) const;
    bool has(Axis axis) const;

    friend bool operator==(const FeatureTensor&, const FeatureTensor&) = default;

private:
    Tensor data_;
    std::vector<Axis> axes_;
};

std::size_t element_count(const std::vector<std::size_t>& shape);

/// 2-D cross-correlation. input [C,H,W], weight [O,C,kh,kw], optional bias [O].
/// Output [O, (H+2p−kh)/s+1, (W+2p−kw)/s+1]. Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::span<const double> bias, std::size_t stride,
              std::size_t padding);

/// x [N,in] · wᵀ + b, with w [out,in] and b [out] (may be empty).
Tensor linear(const Tensor& x, const Tensor& weight, std::span<const double> bias);

void relu_inplace(Tensor& t);
double sigmoid(double x);

/// Numerically stable softmax of one row, in place.
void softmax_inplace(std::span<double> row);

/// Row-wise layer normalization over the last axis of [N, D].
Tensor layer_norm(const Tensor& x, std::span<const double> gamma, std::span<const double> beta,
                  double eps = 1e-5);

struct AttentionWeights {
    Tensor wq, wk, wv, wo;  // [out,in]
    std::vector<double> bq, bk, bv, bo;
};

/// Multi-head scaled dot-product attention. queries [Nq, C], keys/values
/// [Nk, C]. When `probs` is given it receives [heads, Nq, Nk] softmax rows.
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values, const AttentionWeights& w,
                            std::size_t heads, Tensor* probs = nullptr);

}  // namespace spiketk
