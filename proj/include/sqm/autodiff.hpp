#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sqm/tensor.hpp"

namespace sqm {

/// Trainable tensor with an accumulated gradient of the same shape.
struct Parameter {
    Parameter() = default;
    Parameter(std::string name, Tensor value);

    std::string name;
    Tensor value;
    Tensor grad;

    void zero_grad() { grad.fill(0.0); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grads(std::span<Parameter* const> params);

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }
    Tape* tape() const noexcept { return tape_; }
    std::size_t index() const noexcept { return index_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

    Tape* tape_ = nullptr;
    std::size_t index_ = 0;
};

/// Records a forward computation and replays adjoints in reverse order.
///
/// A tape runs one forward pass and at most one backward pass. After backward
/// the tape is consumed: further recording or a second backward throws until
/// reset() starts a new pass. With gradients disabled the tape only computes
/// values, which is the inference path.
class Tape {
public:
    /// Called during backward with the node's own index; reads grad(self) and
    /// accumulates into the gradients of the node's inputs.
    using BackwardFn = std::function<void(Tape&, std::size_t self)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Leaf bound to a parameter; gradients flow into `p.grad` on backward.
    Var param(Parameter& p);
    /// Read-only binding: the value enters the tape as a constant.
    Var param(const Parameter& p) { return constant(p.value); }

    /// Generic extension point used by every operation.
    Var record(Tensor value, std::span<const Var> inputs, BackwardFn backward);
    Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
        return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                      std::move(backward));
    }

    void backward(Var loss);

    const Tensor& value(std::size_t i) const { return nodes_[i].value; }
    const Tensor& grad(std::size_t i) const { return nodes_[i].grad; }
    /// Mutable gradient buffer of an input during backward; empty if it needs no gradient.
    Tensor* grad_slot(std::size_t i);
    bool requires_grad(const Var& v) const { return nodes_[v.index()].requires_grad; }
    bool grad_enabled() const noexcept { return grad_enabled_; }
    bool consumed() const noexcept { return consumed_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    void reset();

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        Parameter* param = nullptr;
        bool requires_grad = false;
    };

    void check_open() const;

    // A deque keeps Var::value() references valid while later nodes are recorded.
    std::deque<Node> nodes_;
    std::unordered_map<Parameter*, std::size_t> param_nodes_;
    bool grad_enabled_;
    bool consumed_ = false;
};

/// Taped operations. Shapes follow the plain kernels in tensor.hpp.
namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// 1 - a
Var one_minus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var softmax(Var x);
/// Elementwise max; ties route the gradient to `a`.
Var maximum(Var a, Var b);
/// Matrix plus a vector repeated across every column: m + v 1^T.
Var add_column_broadcast(Var m, Var v);
Var column(Var m, std::size_t j);
Var stack_columns(std::span<const Var> columns);
/// Concatenation of vectors.
Var concat(std::span<const Var> parts);
Var mean_pool(Var columns);
Var sum(Var a);
Var dot(Var a, Var b);
Var cosine(Var a, Var b);
/// Maximum over scalar vars; ties route the gradient to the first.
Var max_of(std::span<const Var> scalars);
/// Mean of equally shaped vars.
Var average(std::span<const Var> items);
/// -log softmax(logits)[target]
Var softmax_cross_entropy(Var logits, std::size_t target);
/// Columns are rows of `table` (V x d) selected by `rows`; an index equal to
/// `zero_row` yields a constant zero column.
Var gather_columns(Var table, std::span<const std::size_t> rows, std::size_t zero_row);

}  // namespace ad

}  // namespace sqm
