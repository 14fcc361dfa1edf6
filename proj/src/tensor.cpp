#include "sqm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "sqm/error.hpp"

namespace sqm {

namespace {

std::size_t product(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
    }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = f(a[i]);
    }
    return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
    require_same_shape(a, b, op);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = f(a[i], b[i]);
    }
    return out;
}

}  // namespace

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += ",";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (auto d : shape_) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }
    data_.assign(product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) {
            throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }
    if (product(shape_) != data_.size()) {
        throw DimensionError("shape " + shape_string(shape_) + " does not match " +
                             std::to_string(data_.size()) + " values");
    }
}

Tensor Tensor::vector(std::vector<double> values) {
    Shape shape{values.size()};
    return Tensor(std::move(shape), std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
}

double Tensor::item() const {
    if (data_.size() != 1) {
        throw ArgumentError("item() requires a scalar, got shape " + shape_string(shape_));
    }
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || (b.rank() != 1 && b.rank() != 2) || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
    }
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    Tensor out = b.rank() == 1 ? Tensor({m}) : Tensor({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            if (aip == 0.0) {
                continue;
            }
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) {
        throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
    }
    Tensor out({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) {
            out.at(j, i) = a.at(i, j);
        }
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double c) {
    return map(a, [c](double x) { return c * x; });
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor tanh(const Tensor& a) {
    return map(a, [](double x) { return std::tanh(x); });
}

Tensor sigmoid(const Tensor& a) {
    return map(a, [](double x) { return sigmoid(x); });
}

Tensor softmax(const Tensor& x) {
    if (x.empty()) {
        throw ArgumentError("softmax: empty input");
    }
    if (x.rank() != 1) {
        throw DimensionError("softmax: expected a vector, got " + shape_string(x.shape()));
    }
    const double mx = *std::max_element(x.values().begin(), x.values().end());
    Tensor out(x.shape());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = std::exp(x[i] - mx);
        total += out[i];
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] /= total;
    }
    return out;
}

Tensor mean_pool(const Tensor& columns) {
    if (columns.empty()) {
        throw ArgumentError("mean_pool: no columns");
    }
    if (columns.rank() == 1) {
        return columns;
    }
    const std::size_t d = columns.rows();
    const std::size_t n = columns.cols();
    Tensor out({d});
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            s += columns.at(i, j);
        }
        out[i] = s / static_cast<double>(n);
    }
    return out;
}

Tensor column(const Tensor& m, std::size_t j) {
    if (m.rank() != 2 || j >= m.cols()) {
        throw DimensionError("column " + std::to_string(j) + " out of range for " +
                             shape_string(m.shape()));
    }
    Tensor out({m.rows()});
    for (std::size_t i = 0; i < m.rows(); ++i) {
        out[i] = m.at(i, j);
    }
    return out;
}

Tensor stack_columns(std::span<const Tensor> columns) {
    if (columns.empty()) {
        throw ArgumentError("stack_columns: no columns");
    }
    const std::size_t d = columns[0].size();
    Tensor out({d, columns.size()});
    for (std::size_t j = 0; j < columns.size(); ++j) {
        if (columns[j].rank() != 1 || columns[j].size() != d) {
            throw DimensionError("stack_columns: column " + std::to_string(j) + " has shape " +
                                 shape_string(columns[j].shape()));
        }
        for (std::size_t i = 0; i < d; ++i) {
            out.at(i, j) = columns[j][i];
        }
    }
    return out;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: length mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

double norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

double cosine(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) {
        throw DimensionError("cosine: length mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

}  // namespace sqm
