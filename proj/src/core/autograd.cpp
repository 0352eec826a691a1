#include "forge/autograd.hpp"

#include "forge/error.hpp"

#include <cmath>
#include <limits>

namespace forge::ad {

Var Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&, const Matrix&)> backprop) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backprop)});
    return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::leaf(Matrix value, bool requires_grad) { return push(std::move(value), requires_grad, nullptr); }

void Tape::accumulate(Var v, const Matrix& g) {
    auto& node = nodes_[idx(v)];
    if (!node.requires_grad) return;
    if (node.grad.size() == 0) node.grad = g;
    else node.grad += g;
}

Var Tape::matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) throw InvalidInput("matmul: inner dimensions differ");
    Matrix out = value(a) * value(b);
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
        if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw InvalidInput("matmul_nt: inner dimensions differ");
    Matrix out = value(a) * value(b).transpose();
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, g * t.value(b));
        if (t.requires_grad(b)) t.accumulate(b, g.transpose() * t.value(a));
    });
}

Var Tape::add(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
        throw InvalidInput("add: shapes differ");
    Matrix out = value(a) + value(b);
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
        throw InvalidInput("sub: shapes differ");
    Matrix out = value(a) - value(b);
    const bool rg = requires_grad(a) || requires_grad(b);
    return push(std::move(out), rg, [a, b](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, -g);
    });
}

Var Tape::scale(Var a, double s) {
    Matrix out = value(a) * s;
    return push(std::move(out), requires_grad(a), [a, s](Tape& t, const Matrix& g) { t.accumulate(a, g * s); });
}

Var Tape::add_row(Var a, Var r) {
    if (value(r).rows() != 1 || value(r).cols() != value(a).cols())
        throw InvalidInput("add_row: row vector shape mismatch");
    Matrix out = value(a).rowwise() + value(r).row(0);
    const bool rg = requires_grad(a) || requires_grad(r);
    return push(std::move(out), rg, [a, r](Tape& t, const Matrix& g) {
        t.accumulate(a, g);
        if (t.requires_grad(r)) t.accumulate(r, g.colwise().sum());
    });
}

Var Tape::mul_row(Var a, Var r) {
    if (value(r).rows() != 1 || value(r).cols() != value(a).cols())
        throw InvalidInput("mul_row: row vector shape mismatch");
    Matrix out = (value(a).array().rowwise() * value(r).row(0).array()).matrix();
    const bool rg = requires_grad(a) || requires_grad(r);
    return push(std::move(out), rg, [a, r](Tape& t, const Matrix& g) {
        if (t.requires_grad(a)) t.accumulate(a, (g.array().rowwise() * t.value(r).row(0).array()).matrix());
        if (t.requires_grad(r)) t.accumulate(r, (g.array() * t.value(a).array()).colwise().sum().matrix());
    });
}

Var Tape::tanh(Var a) {
    Matrix out = value(a).array().tanh().matrix();
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Matrix& g) {
        const auto& y = t.nodes_[static_cast<std::size_t>(self)].value;
        t.accumulate(a, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

Var Tape::softmax_rows(Var a, const BoolMatrix* mask) {
    const auto& x = value(a);
    if (mask && (mask->rows() != x.rows() || mask->cols() != x.cols()))
        throw InvalidInput("softmax_rows: mask shape mismatch");
    Matrix out = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        bool any = false, finite = true;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (mask && !(*mask)(i, j)) continue;
            any = true;
            finite = finite && std::isfinite(x(i, j));
            mx = std::max(mx, x(i, j));
        }
        if (!any) throw InvalidInput("softmax_rows: row has no admissible entry");
        if (!finite) throw DivergenceError("softmax_rows: non-finite score", -1);
        double sum = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (mask && !(*mask)(i, j)) continue;
            out(i, j) = std::exp(x(i, j) - mx);
            sum += out(i, j);
        }
        out.row(i) /= sum;
    }
    const int self = static_cast<int>(nodes_.size());
    return push(std::move(out), requires_grad(a), [a, self](Tape& t, const Matrix& g) {
        const auto& y = t.nodes_[static_cast<std::size_t>(self)].value;
        // dx = y * (g - sum(g * y)); masked entries have y = 0.
        const Eigen::VectorXd dot = (g.array() * y.array()).rowwise().sum();
        Matrix dx = y.array() * (g.colwise() - dot).array();
        t.accumulate(a, dx);
    });
}

Var Tape::vstack(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidInput("vstack: no inputs");
    const auto cols = value(parts.front()).cols();
    Eigen::Index rows = 0;
    bool rg = false;
    for (Var p : parts) {
        if (value(p).cols() != cols) throw InvalidInput("vstack: column counts differ");
        rows += value(p).rows();
        rg = rg || requires_grad(p);
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (Var p : parts) {
        out.middleRows(r, value(p).rows()) = value(p);
        r += value(p).rows();
    }
    return push(std::move(out), rg, [parts](Tape& t, const Matrix& g) {
        Eigen::Index r = 0;
        for (Var p : parts) {
            const auto n = t.value(p).rows();
            if (t.requires_grad(p)) t.accumulate(p, g.middleRows(r, n));
            r += n;
        }
    });
}

Var Tape::mse(Var a, const Matrix& target) {
    const auto& x = value(a);
    if (x.rows() != target.rows() || x.cols() != target.cols()) throw InvalidInput("mse: shapes differ");
    const double n = static_cast<double>(x.size());
    Matrix out(1, 1);
    out(0, 0) = (x - target).squaredNorm() / n;
    return push(std::move(out), requires_grad(a), [a, target, n](Tape& t, const Matrix& g) {
        t.accumulate(a, (t.value(a) - target) * (2.0 * g(0, 0) / n));
    });
}

void Tape::backward(Var scalar) {
    auto& root = nodes_[idx(scalar)];
    if (root.value.size() != 1) throw InvalidInput("backward: output is not a scalar");
    if (!root.requires_grad) return;
    root.grad = Matrix::Ones(1, 1);
    for (auto i = static_cast<std::ptrdiff_t>(idx(scalar)); i >= 0; --i) {
        auto& node = nodes_[static_cast<std::size_t>(i)];
        if (!node.backprop || node.grad.size() == 0) continue;
        node.backprop(*this, node.grad);
    }
}

}  // namespace forge::ad
