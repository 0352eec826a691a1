#pragma once

// Minimal reverse-mode differentiation over dense double matrices. A Tape
// records every operation; backward() walks it in reverse once.

#include <Eigen/Dense>

#include <functional>
#include <vector>

namespace forge::ad {

using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

struct Var {
    int id = -1;
};

class Tape {
public:
    Var leaf(Matrix value, bool requires_grad = true);
    Var constant(Matrix value) { return leaf(std::move(value), false); }

    const Matrix& value(Var v) const { return nodes_[idx(v)].value; }
    /// Gradient accumulated by backward(); zero-sized if the node never
    /// received one.
    const Matrix& grad(Var v) const { return nodes_[idx(v)].grad; }
    bool requires_grad(Var v) const { return nodes_[idx(v)].requires_grad; }

    Var matmul(Var a, Var b);
    /// a * b^T
    Var matmul_nt(Var a, Var b);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double s);
    /// Adds the 1xD row `r` to every row of `a`.
    Var add_row(Var a, Var r);
    /// Multiplies every row of `a` elementwise by the 1xD row `r`.
    Var mul_row(Var a, Var r);
    Var tanh(Var a);
    /// Row-wise softmax. Entries where `mask` is false get probability 0;
    /// every row must keep at least one entry.
    Var softmax_rows(Var a, const BoolMatrix* mask = nullptr);
    Var vstack(const std::vector<Var>& parts);
    /// Mean of squared entries of (a - target).
    Var mse(Var a, const Matrix& target);

    void backward(Var scalar);
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        bool requires_grad = false;
        std::function<void(Tape&, const Matrix&)> backprop;
    };

    std::size_t idx(Var v) const { return static_cast<std::size_t>(v.id); }
    Var push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backprop);
    void accumulate(Var v, const Matrix& g);

    std::vector<Node> nodes_;
};

}  // namespace forge::ad
