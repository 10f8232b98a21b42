#include "stmmot/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace stmmot {

namespace {

std::size_t element_count(const Tensor::Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                                    " vs " + shape_string(b.shape()));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_string(shape_) + " does not hold " +
                                    std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::invalid_argument("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                                    shape_string(shape_));
    }
    return shape_[axis];
}

std::span<double> Tensor::row(std::size_t r) {
    if (rank() != 2 || r >= shape_[0]) throw std::invalid_argument("Tensor::row: bad row access");
    return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
}

std::span<const double> Tensor::row(std::size_t r) const {
    if (rank() != 2 || r >= shape_[0]) throw std::invalid_argument("Tensor::row: bad row access");
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const Tensor::Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

void require_shape(const Tensor& t, const Tensor::Shape& shape, const char* what) {
    if (t.shape() != shape) {
        throw std::invalid_argument(std::string(what) + ": expected shape " + shape_string(shape) + ", got " +
                                    shape_string(t.shape()));
    }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul: incompatible shapes " + shape_string(a.shape()) + " x " +
                                    shape_string(b.shape()));
    }
    const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a(i, p);
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out(i, j) += aip * b(p, j);
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
    Tensor out({a.dim(1), a.dim(0)});
    for (std::size_t i = 0; i < a.dim(0); ++i)
        for (std::size_t j = 0; j < a.dim(1); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor* bias) {
    if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
        throw std::invalid_argument("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                                    shape_string(weight.shape()));
    }
    const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
    if (bias != nullptr) require_shape(*bias, {out_dim}, "linear bias");
    Tensor out({n, out_dim});
    for (std::size_t i = 0; i < n; ++i) {
        const auto xi = x.row(i);
        for (std::size_t o = 0; o < out_dim; ++o) {
            double s = bias != nullptr ? (*bias)[o] : 0.0;
            const double* w = weight.data().data() + o * in;
            for (std::size_t p = 0; p < in; ++p) s += w[p] * xi[p];
            out(i, o) = s;
        }
    }
    return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) throw std::invalid_argument("stack_rows: no rows");
    const std::size_t width = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * width);
    for (const Tensor& r : rows) {
        if (r.rank() != 1 || r.size() != width) throw std::invalid_argument("stack_rows: ragged rows");
        data.insert(data.end(), r.values().begin(), r.values().end());
    }
    return Tensor({rows.size(), width}, std::move(data));
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1)) {
        throw std::invalid_argument("concat_rows: width mismatch");
    }
    std::vector<double> data(a.values());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return Tensor({a.dim(0) + b.dim(0), a.dim(1)}, std::move(data));
}

Tensor take_row(const Tensor& m, std::size_t r) {
    const auto row = m.row(r);
    return Tensor({row.size()}, std::vector<double>(row.begin(), row.end()));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2)) {
        throw std::invalid_argument("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                                    shape_string(b.shape()));
    }
    std::vector<double> data(a.values());
    data.insert(data.end(), b.values().begin(), b.values().end());
    return Tensor({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)}, std::move(data));
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.data()) v = std::max(v, 0.0);
    return out;
}

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (x.rank() != 2) throw std::invalid_argument("layer_norm: rank-2 input required");
    const std::size_t d = x.dim(1);
    require_shape(gamma, {d}, "layer_norm gamma");
    require_shape(beta, {d}, "layer_norm beta");
    Tensor out(x.shape());
    for (std::size_t r = 0; r < x.dim(0); ++r) {
        const auto row = x.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (double v : row) var += (v - mean) * (v - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < d; ++c) out(r, c) = (row[c] - mean) * inv * gamma[c] + beta[c];
    }
    return out;
}

Tensor softmax(const Tensor& v, std::size_t axis) {
    if (axis >= v.rank()) {
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                                    shape_string(v.shape()));
    }
    const auto& shape = v.shape();
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
    const std::size_t n = shape[axis];

    Tensor out(shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t k = 0; k < n; ++k) mx = std::max(mx, v[base + k * inner]);
            double total = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double e = std::exp(v[base + k * inner] - mx);
                out[base + k * inner] = e;
                total += e;
            }
            for (std::size_t k = 0; k < n; ++k) out[base + k * inner] /= total;
        }
    }
    return out;
}

nlohmann::json tensor_to_json(const Tensor& t) {
    return nlohmann::json{{"shape", t.shape()}, {"data", t.values()}};
}

Tensor tensor_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
        throw std::invalid_argument("tensor_from_json: expected {\"shape\", \"data\"}");
    }
    return Tensor(j.at("shape").get<Tensor::Shape>(), j.at("data").get<std::vector<double>>());
}

}  // namespace stmmot
