#include "sqm/autodiff.hpp"

#include <cmath>

#include "sqm/error.hpp"

namespace sqm {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros_like(value)) {}

void zero_grads(std::span<Parameter* const> params) {
    for (auto* p : params) {
        p->zero_grad();
    }
}

const Tensor& Var::value() const { return tape_->value(index_); }
const Tensor& Var::grad() const { return tape_->grad(index_); }

void Tape::check_open() const {
    if (consumed_) {
        throw ContractError("tape already consumed by backward; reset() before a new forward pass");
    }
}

Var Tape::constant(Tensor value) {
    check_open();
    nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
    return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
    check_open();
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) {
        return Var(this, it->second);
    }
    nodes_.push_back(Node{p.value, {}, {}, &p, grad_enabled_});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn backward) {
    check_open();
    bool needs = false;
    if (grad_enabled_) {
        for (const auto& in : inputs) {
            if (in.tape() != this) {
                throw ContractError("operation mixes vars from different tapes");
            }
            needs = needs || nodes_[in.index()].requires_grad;
        }
    }
    Node node{std::move(value), {}, {}, nullptr, needs};
    if (needs) {
        node.backward = std::move(backward);
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Tensor* Tape::grad_slot(std::size_t i) {
    Node& n = nodes_[i];
    return n.requires_grad ? &n.grad : nullptr;
}

void Tape::backward(Var loss) {
    if (loss.tape() != this) {
        throw ContractError("backward: loss belongs to a different tape");
    }
    if (consumed_) {
        throw ContractError("backward called twice without a new forward pass");
    }
    if (!nodes_[loss.index()].value.is_scalar()) {
        throw ArgumentError("backward requires a scalar loss, got shape " +
                            shape_string(nodes_[loss.index()].value.shape()));
    }
    consumed_ = true;
    if (!grad_enabled_) {
        throw ContractError("backward on a tape recorded with gradients disabled");
    }
    for (std::size_t i = 0; i <= loss.index(); ++i) {
        if (nodes_[i].requires_grad) {
            nodes_[i].grad = Tensor::zeros_like(nodes_[i].value);
        }
    }
    if (!nodes_[loss.index()].requires_grad) {
        return;
    }
    nodes_[loss.index()].grad[0] = 1.0;
    for (std::size_t i = loss.index() + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad) {
            continue;
        }
        if (n.backward) {
            n.backward(*this, i);
        }
        if (n.param != nullptr) {
            auto& g = n.param->grad;
            for (std::size_t k = 0; k < g.size(); ++k) {
                g[k] += n.grad[k];
            }
        }
    }
}

void Tape::reset() {
    nodes_.clear();
    param_nodes_.clear();
    consumed_ = false;
}

namespace ad {

namespace {

void accumulate(Tensor* slot, const Tensor& g) {
    if (slot == nullptr) {
        return;
    }
    for (std::size_t k = 0; k < g.size(); ++k) {
        (*slot)[k] += g[k];
    }
}

Tape& tape_of(Var a) {
    if (!a.valid()) {
        throw ContractError("operation on an unbound var");
    }
    return *a.tape();
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return t.record(sqm::matmul(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& av = tp.value(ia);
        const Tensor& bv = tp.value(ib);
        const std::size_t m = av.rows();
        const std::size_t k = av.cols();
        const std::size_t n = bv.cols();
        if (Tensor* ga = tp.grad_slot(ia)) {
            // dA = G B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double s = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        s += g[i * n + j] * bv[p * n + j];
                    }
                    (*ga)[i * k + p] += s;
                }
            }
        }
        if (Tensor* gb = tp.grad_slot(ib)) {
            // dB = A^T G
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = av[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        (*gb)[p * n + j] += aip * g[i * n + j];
                    }
                }
            }
        }
    });
}

Var transpose(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    return t.record(sqm::transpose(a.value()), {a}, [ia](Tape& tp, std::size_t self) {
        accumulate(tp.grad_slot(ia), sqm::transpose(tp.grad(self)));
    });
}

Var add(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return t.record(sqm::add(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        accumulate(tp.grad_slot(ia), tp.grad(self));
        accumulate(tp.grad_slot(ib), tp.grad(self));
    });
}

Var sub(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return t.record(sqm::sub(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        accumulate(tp.grad_slot(ia), tp.grad(self));
        accumulate(tp.grad_slot(ib), sqm::scale(tp.grad(self), -1.0));
    });
}

Var mul(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return t.record(sqm::mul(a.value(), b.value()), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& bv = tp.value(ib);
            for (std::size_t k = 0; k < g.size(); ++k) {
                (*ga)[k] += g[k] * bv[k];
            }
        }
        if (Tensor* gb = tp.grad_slot(ib)) {
            const Tensor& av = tp.value(ia);
            for (std::size_t k = 0; k < g.size(); ++k) {
                (*gb)[k] += g[k] * av[k];
            }
        }
    });
}

Var scale(Var a, double c) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    return t.record(sqm::scale(a.value(), c), {a}, [ia, c](Tape& tp, std::size_t self) {
        accumulate(tp.grad_slot(ia), sqm::scale(tp.grad(self), c));
    });
}

Var one_minus(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    Tensor out(a.shape());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = 1.0 - a.value()[k];
    }
    return t.record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
        accumulate(tp.grad_slot(ia), sqm::scale(tp.grad(self), -1.0));
    });
}

Var tanh(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    return t.record(sqm::tanh(a.value()), {a}, [ia](Tape& tp, std::size_t self) {
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& y = tp.value(self);
            const Tensor& g = tp.grad(self);
            for (std::size_t k = 0; k < g.size(); ++k) {
                (*ga)[k] += g[k] * (1.0 - y[k] * y[k]);
            }
        }
    });
}

Var sigmoid(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    return t.record(sqm::sigmoid(a.value()), {a}, [ia](Tape& tp, std::size_t self) {
        if (Tensor* ga = tp.grad_slot(ia)) {
            const Tensor& y = tp.value(self);
            const Tensor& g = tp.grad(self);
            for (std::size_t k = 0; k < g.size(); ++k) {
                (*ga)[k] += g[k] * y[k] * (1.0 - y[k]);
            }
        }
    });
}

Var softmax(Var x) {
    Tape& t = tape_of(x);
    const std::size_t ix = x.index();
    return t.record(sqm::softmax(x.value()), {x}, [ix](Tape& tp, std::size_t self) {
        if (Tensor* gx = tp.grad_slot(ix)) {
            const Tensor& y = tp.value(self);
            const Tensor& g = tp.grad(self);
            const double gy = sqm::dot(g, y);
            for (std::size_t k = 0; k < y.size(); ++k) {
                (*gx)[k] += y[k] * (g[k] - gy);
            }
        }
    });
}

Var maximum(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    if (a.shape() != b.shape()) {
        throw DimensionError("maximum: shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
    Tensor out(a.shape());
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k] = std::max(a.value()[k], b.value()[k]);
    }
    return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        const Tensor& av = tp.value(ia);
        const Tensor& bv = tp.value(ib);
        Tensor* ga = tp.grad_slot(ia);
        Tensor* gb = tp.grad_slot(ib);
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (av[k] >= bv[k]) {
                if (ga != nullptr) {
                    (*ga)[k] += g[k];
                }
            } else if (gb != nullptr) {
                (*gb)[k] += g[k];
            }
        }
    });
}

Var add_column_broadcast(Var m, Var v) {
    Tape& t = tape_of(m);
    const std::size_t im = m.index();
    const std::size_t iv = v.index();
    const Tensor& mv = m.value();
    const Tensor& vv = v.value();
    if (mv.rank() != 2 || vv.rank() != 1 || vv.size() != mv.rows()) {
        throw DimensionError("add_column_broadcast: " + shape_string(mv.shape()) + " + " +
                             shape_string(vv.shape()));
    }
    Tensor out = mv;
    for (std::size_t i = 0; i < mv.rows(); ++i) {
        for (std::size_t j = 0; j < mv.cols(); ++j) {
            out.at(i, j) += vv[i];
        }
    }
    return t.record(std::move(out), {m, v}, [im, iv](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        accumulate(tp.grad_slot(im), g);
        if (Tensor* gv = tp.grad_slot(iv)) {
            for (std::size_t i = 0; i < g.rows(); ++i) {
                for (std::size_t j = 0; j < g.cols(); ++j) {
                    (*gv)[i] += g.at(i, j);
                }
            }
        }
    });
}

Var column(Var m, std::size_t j) {
    Tape& t = tape_of(m);
    const std::size_t im = m.index();
    return t.record(sqm::column(m.value(), j), {m}, [im, j](Tape& tp, std::size_t self) {
        if (Tensor* gm = tp.grad_slot(im)) {
            const Tensor& g = tp.grad(self);
            for (std::size_t i = 0; i < g.size(); ++i) {
                gm->at(i, j) += g[i];
            }
        }
    });
}

Var stack_columns(std::span<const Var> columns) {
    if (columns.empty()) {
        throw ArgumentError("stack_columns: no columns");
    }
    Tape& t = tape_of(columns[0]);
    std::vector<Tensor> values;
    std::vector<std::size_t> ids;
    values.reserve(columns.size());
    for (const auto& c : columns) {
        values.push_back(c.value());
        ids.push_back(c.index());
    }
    return t.record(sqm::stack_columns(values), columns, [ids](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (Tensor* gc = tp.grad_slot(ids[j])) {
                for (std::size_t i = 0; i < g.rows(); ++i) {
                    (*gc)[i] += g.at(i, j);
                }
            }
        }
    });
}

Var concat(std::span<const Var> parts) {
    if (parts.empty()) {
        throw ArgumentError("concat: no parts");
    }
    Tape& t = tape_of(parts[0]);
    std::vector<double> out;
    std::vector<std::size_t> ids;
    std::vector<std::size_t> offsets;
    for (const auto& p : parts) {
        if (p.value().rank() != 1) {
            throw DimensionError("concat: expected vectors, got " + shape_string(p.shape()));
        }
        offsets.push_back(out.size());
        ids.push_back(p.index());
        out.insert(out.end(), p.value().values().begin(), p.value().values().end());
    }
    return t.record(Tensor::vector(std::move(out)), parts, [ids, offsets](Tape& tp, std::size_t self) {
        const Tensor& g = tp.grad(self);
        for (std::size_t k = 0; k < ids.size(); ++k) {
            if (Tensor* gp = tp.grad_slot(ids[k])) {
                for (std::size_t i = 0; i < gp->size(); ++i) {
                    (*gp)[i] += g[offsets[k] + i];
                }
            }
        }
    });
}

Var mean_pool(Var columns) {
    Tape& t = tape_of(columns);
    const std::size_t ic = columns.index();
    return t.record(sqm::mean_pool(columns.value()), {columns}, [ic](Tape& tp, std::size_t self) {
        if (Tensor* gc = tp.grad_slot(ic)) {
            const Tensor& g = tp.grad(self);
            const std::size_t n = gc->cols();
            const double inv = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < gc->rows(); ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    (*gc)[i * n + j] += g[i] * inv;
                }
            }
        }
    });
}

Var sum(Var a) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    double s = 0.0;
    for (double x : a.value().values()) {
        s += x;
    }
    return t.record(Tensor::scalar(s), {a}, [ia](Tape& tp, std::size_t self) {
        if (Tensor* ga = tp.grad_slot(ia)) {
            const double g = tp.grad(self)[0];
            for (auto& x : ga->values()) {
                x += g;
            }
        }
    });
}

Var dot(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    return t.record(Tensor::scalar(sqm::dot(a.value(), b.value())), {a, b},
                    [ia, ib](Tape& tp, std::size_t self) {
                        const double g = tp.grad(self)[0];
                        accumulate(tp.grad_slot(ia), sqm::scale(tp.value(ib), g));
                        accumulate(tp.grad_slot(ib), sqm::scale(tp.value(ia), g));
                    });
}

Var cosine(Var a, Var b) {
    Tape& t = tape_of(a);
    const std::size_t ia = a.index();
    const std::size_t ib = b.index();
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.size() != bv.size()) {
        throw DimensionError("cosine: length mismatch " + shape_string(av.shape()) + " vs " +
                             shape_string(bv.shape()));
    }
    const double na = sqm::norm(av);
    const double nb = sqm::norm(bv);
    const double c = (na == 0.0 || nb == 0.0) ? 0.0 : sqm::dot(av, bv) / (na * nb);
    return t.record(Tensor::scalar(c), {a, b}, [ia, ib, na, nb, c](Tape& tp, std::size_t self) {
        if (na == 0.0 || nb == 0.0) {
            return;
        }
        const double g = tp.grad(self)[0];
        const Tensor& x = tp.value(ia);
        const Tensor& y = tp.value(ib);
        // d cos / dx = y/(|x||y|) - cos x/|x|^2
        if (Tensor* gx = tp.grad_slot(ia)) {
            for (std::size_t k = 0; k < x.size(); ++k) {
                (*gx)[k] += g * (y[k] / (na * nb) - c * x[k] / (na * na));
            }
        }
        if (Tensor* gy = tp.grad_slot(ib)) {
            for (std::size_t k = 0; k < y.size(); ++k) {
                (*gy)[k] += g * (x[k] / (na * nb) - c * y[k] / (nb * nb));
            }
        }
    });
}

Var max_of(std::span<const Var> scalars) {
    if (scalars.empty()) {
        throw ArgumentError("max_of: no inputs");
    }
    Tape& t = tape_of(scalars[0]);
    std::size_t best = 0;
    for (std::size_t k = 0; k < scalars.size(); ++k) {
        if (!scalars[k].value().is_scalar()) {
            throw DimensionError("max_of: non-scalar input " + shape_string(scalars[k].shape()));
        }
        if (scalars[k].value()[0] > scalars[best].value()[0]) {
            best = k;
        }
    }
    const std::size_t ib = scalars[best].index();
    return t.record(Tensor::scalar(scalars[best].value()[0]), scalars, [ib](Tape& tp, std::size_t self) {
        accumulate(tp.grad_slot(ib), tp.grad(self));
    });
}

Var average(std::span<const Var> items) {
    if (items.empty()) {
        throw ArgumentError("average: no inputs");
    }
    Tape& t = tape_of(items[0]);
    Tensor out(items[0].shape());
    std::vector<std::size_t> ids;
    for (const auto& v : items) {
        if (v.shape() != out.shape()) {
            throw DimensionError("average: shape mismatch " + shape_string(v.shape()));
        }
        ids.push_back(v.index());
        for (std::size_t k = 0; k < out.size(); ++k) {
            out[k] += v.value()[k];
        }
    }
    const double inv = 1.0 / static_cast<double>(items.size());
    for (auto& x : out.values()) {
        x *= inv;
    }
    return t.record(std::move(out), items, [ids, inv](Tape& tp, std::size_t self) {
        const Tensor g = sqm::scale(tp.grad(self), inv);
        for (auto id : ids) {
            accumulate(tp.grad_slot(id), g);
        }
    });
}

Var softmax_cross_entropy(Var logits, std::size_t target) {
    Tape& t = tape_of(logits);
    const std::size_t il = logits.index();
    if (target >= logits.value().size()) {
        throw ArgumentError("softmax_cross_entropy: target " + std::to_string(target) +
                            " out of range for " + shape_string(logits.shape()));
    }
    Tensor p = sqm::softmax(logits.value());
    const Tensor& z = logits.value();
    double mx = z[0];
    for (double x : z.values()) {
        mx = std::max(mx, x);
    }
    double lse = 0.0;
    for (double x : z.values()) {
        lse += std::exp(x - mx);
    }
    const double loss = mx + std::log(lse) - z[target];
    return t.record(Tensor::scalar(loss), {logits},
                    [il, target, p = std::move(p)](Tape& tp, std::size_t self) {
                        if (Tensor* gl = tp.grad_slot(il)) {
                            const double g = tp.grad(self)[0];
                            for (std::size_t k = 0; k < p.size(); ++k) {
                                (*gl)[k] += g * (p[k] - (k == target ? 1.0 : 0.0));
                            }
                        }
                    });
}

Var gather_columns(Var table, std::span<const std::size_t> rows, std::size_t zero_row) {
    Tape& t = tape_of(table);
    const Tensor& tv = table.value();
    if (tv.rank() != 2 || rows.empty()) {
        throw DimensionError("gather_columns: bad table " + shape_string(tv.shape()) + " or no rows");
    }
    const std::size_t d = tv.cols();
    Tensor out({d, rows.size()});
    for (std::size_t j = 0; j < rows.size(); ++j) {
        if (rows[j] == zero_row) {
            continue;
        }
        if (rows[j] >= tv.rows()) {
            throw DimensionError("gather_columns: row " + std::to_string(rows[j]) + " out of range");
        }
        for (std::size_t i = 0; i < d; ++i) {
            out.at(i, j) = tv.at(rows[j], i);
        }
    }
    const std::size_t it = table.index();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return t.record(std::move(out), {table}, [it, idx, zero_row, d](Tape& tp, std::size_t self) {
        if (Tensor* gt = tp.grad_slot(it)) {
            const Tensor& g = tp.grad(self);
            for (std::size_t j = 0; j < idx.size(); ++j) {
                if (idx[j] == zero_row) {
                    continue;
                }
                for (std::size_t i = 0; i < d; ++i) {
                    gt->at(idx[j], i) += g.at(i, j);
                }
            }
        }
    });
}

}  // namespace ad

}  // namespace sqm
