#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace stmmot {

/// Dense row-major array of doubles with an explicit shape.
///
/// There is no broadcasting anywhere in the library: every operation checks
/// that its operands have exactly the shapes it expects and throws
/// std::invalid_argument otherwise.
class Tensor {
public:
    using Shape = std::vector<std::size_t>;

    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::vector<double> values);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // rank-2 access
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

    // rank-3 access
    double& operator()(std::size_t a, std::size_t b, std::size_t c) {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }
    double operator()(std::size_t a, std::size_t b, std::size_t c) const {
        return data_[(a * shape_[1] + b) * shape_[2] + c];
    }

    // rank-4 access
    double& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    double operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
        return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }

    /// Row `r` of a rank-2 tensor.
    std::span<double> row(std::size_t r);
    std::span<const double> row(std::size_t r) const;

    /// Same data, new shape; element counts must agree.
    Tensor reshaped(Shape shape) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_string(const Tensor::Shape& shape);

/// Throws std::invalid_argument naming `what` unless `t` has exactly `shape`.
void require_shape(const Tensor& t, const Tensor::Shape& shape, const char* what);

// Elementwise algebra on equal shapes.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// [n,k] x [k,m] -> [n,m]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// x [n,in] times weight [out,in] transposed, plus optional bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias = nullptr);

/// Stacks rank-1 tensors of equal length into a rank-2 tensor.
Tensor stack_rows(std::span<const Tensor> rows);
Tensor concat_rows(const Tensor& a, const Tensor& b);
/// Rank-1 view of row `r` as an owning tensor.
Tensor take_row(const Tensor& m, std::size_t r);
/// Concatenation of two [C,H,W] maps along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
double sigmoid(double x);
double logit(double p);

/// Row-wise layer normalization of a rank-2 tensor.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& v, std::size_t axis);

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

}  // namespace stmmot
