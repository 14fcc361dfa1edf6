#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sqm {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Rank 1 is a vector, rank 2 a matrix;
/// scalars are vectors of length one.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
    static Tensor scalar(double value) { return vector({value}); }
    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }
    bool is_scalar() const noexcept { return data_.size() == 1; }

    /// Leading dimension.
    std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
    /// Second dimension; a vector has one column.
    std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const;

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    void fill(double v);

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Plain (untaped) kernels. The taped operations in autodiff.hpp are built on these.

/// [m,k] x [k,n] -> [m,n]; [m,k] x [k] -> [m].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Numerically stable softmax of a non-empty vector.
Tensor softmax(const Tensor& x);
/// Column-wise mean of a d x n matrix (a vector counts as one column).
Tensor mean_pool(const Tensor& columns);
Tensor column(const Tensor& m, std::size_t j);
Tensor stack_columns(std::span<const Tensor> columns);
double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
/// a.b / (|a||b|); 0 when either norm is 0.
double cosine(const Tensor& a, const Tensor& b);
double sigmoid(double x);

}  // namespace sqm
