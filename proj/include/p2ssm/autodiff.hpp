/*
 * p2ssm - self-supervised correspondence learning for statistical shape models.
 *
 * Copyright 2026 The p2ssm Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "p2ssm/types.hpp"

#include <Eigen/Core>

#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace p2ssm::ad {

/// Handle to a node on a Tape.
struct Var
{
    int id = -1;
};

/// Reverse-mode tape over dense matrices. Nodes are appended by the op
/// methods; backward() walks them in reverse. Parameter leaves reference
/// external storage, which must outlive the tape and stay unmodified until
/// backward() has run.
template <typename Scalar>
class Tape
{
public:
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

    Tape() { nodes_.reserve(256); }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    // Backward closures capture `this`.
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    Var constant(Matrix v) { return push(std::move(v), false); }

    /// Leaf referencing external storage (not copied). Its gradient is
    /// tracked when requires_grad is set.
    Var leaf(const Matrix& external, bool requires_grad = true)
    {
        Node n;
        n.external = &external;
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    const Matrix& value(Var v) const
    {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        return n.external ? *n.external : n.value;
    }

    /// Gradient after backward(); a zero matrix when nothing reached the node.
    Matrix grad(Var v) const
    {
        const Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (n.grad.size() == 0) {
            const Matrix& x = value(v);
            return Matrix::Zero(x.rows(), x.cols());
        }
        return n.grad;
    }

    bool requires_grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].requires_grad; }

    std::size_t size() const { return nodes_.size(); }

    /// Adds `g` to the gradient of `out` without propagating.
    void seed(Var out, const Matrix& g)
    {
        const Matrix& v = value(out);
        if (g.rows() != v.rows() || g.cols() != v.cols()) {
            throw ShapeError("backward: seed shape does not match output");
        }
        accumulate(out, g);
    }

    /// Propagates all seeded gradients back to the leaves.
    void propagate()
    {
        for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<std::size_t>(i)];
            if (n.backward && n.grad.size() != 0) {
                n.backward();
            }
        }
    }

    void backward(Var out, const Matrix& g)
    {
        seed(out, g);
        propagate();
    }

    // ---- ops -------------------------------------------------------------

    Var matmul(Var a, Var b)
    {
        check(value(a).cols() == value(b).rows(), "matmul");
        Matrix out = value(a) * value(b);
        return record(std::move(out), {a, b}, [this, a, b](int self) {
            const Matrix& g = gref(self);
            if (requires_grad(a)) {
                accumulate(a, g * value(b).transpose());
            }
            if (requires_grad(b)) {
                accumulate(b, value(a).transpose() * g);
            }
        });
    }

    /// a * b^T
    Var matmul_nt(Var a, Var b)
    {
        check(value(a).cols() == value(b).cols(), "matmul_nt");
        Matrix out = value(a) * value(b).transpose();
        return record(std::move(out), {a, b}, [this, a, b](int self) {
            const Matrix& g = gref(self);
            if (requires_grad(a)) {
                accumulate(a, g * value(b));
            }
            if (requires_grad(b)) {
                accumulate(b, g.transpose() * value(a));
            }
        });
    }

    Var add(Var a, Var b)
    {
        check(value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols(), "add");
        Matrix out = value(a) + value(b);
        return record(std::move(out), {a, b}, [this, a, b](int self) {
            const Matrix& g = gref(self);
            if (requires_grad(a)) {
                accumulate(a, g);
            }
            if (requires_grad(b)) {
                accumulate(b, g);
            }
        });
    }

    /// Adds a 1 x C row to every row of a.
    Var add_row(Var a, Var row)
    {
        check(value(row).rows() == 1 && value(row).cols() == value(a).cols(), "add_row");
        Matrix out = value(a).rowwise() + RowVector(value(row));
        return record(std::move(out), {a, row}, [this, a, row](int self) {
            const Matrix& g = gref(self);
            if (requires_grad(a)) {
                accumulate(a, g);
            }
            if (requires_grad(row)) {
                accumulate(row, g.colwise().sum());
            }
        });
    }

    Var scale(Var a, Scalar s)
    {
        Matrix out = value(a) * s;
        return record(std::move(out), {a}, [this, a, s](int self) { accumulate(a, gref(self) * s); });
    }

    Var leaky_relu(Var a, Scalar slope)
    {
        const auto x = value(a).array();
        Matrix out = (x > Scalar(0)).select(x, slope * x).matrix();
        return record(std::move(out), {a}, [this, a, slope](int self) {
            const auto x = value(a).array();
            const auto g = gref(self).array();
            accumulate(a, (x > Scalar(0)).select(g, slope * g).matrix());
        });
    }

    Var relu(Var a) { return leaky_relu(a, Scalar(0)); }

    /// GELU, tanh approximation.
    Var gelu(Var a)
    {
        const auto x = value(a).array();
        Matrix th = (kGeluC * (x + Scalar(0.044715) * x.cube())).tanh().matrix();
        Matrix out = (Scalar(0.5) * x * (Scalar(1) + th.array())).matrix();
        return record(std::move(out), {a}, [this, a, th = std::move(th)](int self) {
            const auto x = value(a).array();
            const auto t = th.array();
            const Matrix d = (Scalar(0.5) * (Scalar(1) + t) +
                              Scalar(0.5) * x * (Scalar(1) - t.square()) * kGeluC *
                                  (Scalar(1) + Scalar(3 * 0.044715) * x.square()))
                                 .matrix();
            accumulate(a, gref(self).cwiseProduct(d));
        });
    }

    Var softmax_rows(Var a)
    {
        const Matrix& x = value(a);
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mx = x.rowwise().maxCoeff();
        Matrix out = (x.colwise() - mx).array().exp().matrix();
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv = out.rowwise().sum().cwiseInverse();
        out = inv.asDiagonal() * out;
        return record(std::move(out), {a}, [this, a](int self) {
            const Matrix& y = vref(self);
            const Matrix& g = gref(self);
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
            accumulate(a, y.cwiseProduct(g.colwise() - dot));
        });
    }

    Var log_softmax_rows(Var a)
    {
        const Matrix& x = value(a);
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mx = x.rowwise().maxCoeff();
        Matrix out = x.colwise() - mx;
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lse = out.array().exp().rowwise().sum().log().matrix();
        out.colwise() -= lse;
        return record(std::move(out), {a}, [this, a](int self) {
            const Matrix p = vref(self).array().exp().matrix();
            const Matrix& g = gref(self);
            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> total = g.rowwise().sum();
            accumulate(a, g - total.asDiagonal() * p);
        });
    }

    /// Per-row normalisation over columns with learned gain and bias (1 x C each).
    Var layer_norm(Var a, Var gain, Var bias, Scalar eps = Scalar(1e-5))
    {
        const Matrix& x = value(a);
        const Eigen::Index c = x.cols();
        check(value(gain).cols() == c && value(bias).cols() == c, "layer_norm");
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> mean = x.rowwise().mean();
        Matrix xhat = x.colwise() - mean;
        const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std =
            ((xhat.array().square().rowwise().sum() / Scalar(c)) + eps).rsqrt().matrix();
        xhat = inv_std.asDiagonal() * xhat;
        Matrix out = (xhat.array().rowwise() * value(gain).row(0).array()).matrix();
        out.rowwise() += RowVector(value(bias));
        return record(std::move(out), {a, gain, bias},
                      [this, a, gain, bias, xhat = std::move(xhat), inv_std](int self) {
                          const Matrix& g = gref(self);
                          if (requires_grad(gain)) {
                              accumulate(gain, g.cwiseProduct(xhat).colwise().sum());
                          }
                          if (requires_grad(bias)) {
                              accumulate(bias, g.colwise().sum());
                          }
                          if (requires_grad(a)) {
                              const Matrix dxhat = (g.array().rowwise() * value(gain).row(0).array()).matrix();
                              const Scalar cc = Scalar(dxhat.cols());
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m1 = dxhat.rowwise().sum() / cc;
                              const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> m2 =
                                  dxhat.cwiseProduct(xhat).rowwise().sum() / cc;
                              Matrix dx = dxhat;
                              dx.colwise() -= m1;
                              dx -= m2.asDiagonal() * xhat;
                              accumulate(a, inv_std.asDiagonal() * dx);
                          }
                      });
    }

    Var transpose(Var a)
    {
        Matrix out = value(a).transpose();
        return record(std::move(out), {a}, [this, a](int self) { accumulate(a, gref(self).transpose()); });
    }

    Var cols(Var a, Eigen::Index start, Eigen::Index n)
    {
        check(start >= 0 && start + n <= value(a).cols(), "cols");
        Matrix out = value(a).middleCols(start, n);
        return record(std::move(out), {a}, [this, a, start, n](int self) {
            Matrix g = Matrix::Zero(value(a).rows(), value(a).cols());
            g.middleCols(start, n) = gref(self);
            accumulate(a, g);
        });
    }

    Var concat_cols(std::span<const Var> parts)
    {
        if (parts.empty()) {
            throw ShapeError("concat_cols: no inputs");
        }
        const Eigen::Index rows = value(parts[0]).rows();
        Eigen::Index total = 0;
        for (const Var p : parts) {
            check(value(p).rows() == rows, "concat_cols");
            total += value(p).cols();
        }
        Matrix out(rows, total);
        Eigen::Index at = 0;
        for (const Var p : parts) {
            out.middleCols(at, value(p).cols()) = value(p);
            at += value(p).cols();
        }
        std::vector<Var> inputs(parts.begin(), parts.end());
        return record(std::move(out), inputs, [this, inputs](int self) {
            const Matrix& g = gref(self);
            Eigen::Index pos = 0;
            for (const Var p : inputs) {
                const Eigen::Index w = value(p).cols();
                if (requires_grad(p)) {
                    accumulate(p, g.middleCols(pos, w));
                }
                pos += w;
            }
        });
    }

    /// out(i, c) = a(i, c) + max_k b(nbr(i, k), c).
    ///
    /// With a monotone activation applied afterwards this equals max-pooling of
    /// edge features a_i + b_j over the neighbourhood of i.
    Var neighbor_max(Var a, Var b, const IndexMatrix& nbr)
    {
        const Matrix& av = value(a);
        const Matrix& bv = value(b);
        check(av.rows() == bv.rows() && av.cols() == bv.cols() && nbr.rows() == av.rows(), "neighbor_max");
        const Eigen::Index n = av.rows();
        const Eigen::Index c = av.cols();
        const Eigen::Index k = nbr.cols();
        Matrix out(n, c);
        IndexMatrix arg(n, c);
        for (Eigen::Index ch = 0; ch < c; ++ch) {
            for (Eigen::Index i = 0; i < n; ++i) {
                int best = nbr(i, 0);
                Scalar bestv = bv(best, ch);
                for (Eigen::Index r = 1; r < k; ++r) {
                    const int j = nbr(i, r);
                    if (bv(j, ch) > bestv) {
                        bestv = bv(j, ch);
                        best = j;
                    }
                }
                out(i, ch) = av(i, ch) + bestv;
                arg(i, ch) = best;
            }
        }
        return record(std::move(out), {a, b}, [this, a, b, arg = std::move(arg)](int self) {
            const Matrix& g = gref(self);
            if (requires_grad(a)) {
                accumulate(a, g);
            }
            if (requires_grad(b)) {
                Matrix gb = Matrix::Zero(g.rows(), g.cols());
                for (Eigen::Index ch = 0; ch < g.cols(); ++ch) {
                    for (Eigen::Index i = 0; i < g.rows(); ++i) {
                        gb(arg(i, ch), ch) += g(i, ch);
                    }
                }
                accumulate(b, gb);
            }
        });
    }

    /// Subtracts the column means, centring the rows at the origin.
    Var center_rows(Var a)
    {
        const Matrix& x = value(a);
        Matrix out = x.rowwise() - x.colwise().mean();
        return record(std::move(out), {a}, [this, a](int self) {
            const Matrix& g = gref(self);
            accumulate(a, g.rowwise() - g.colwise().mean());
        });
    }

    /// Divides by the root-mean-square row norm; a zero input passes through.
    Var rms_normalize(Var a)
    {
        const Matrix& x = value(a);
        const Scalar ms = x.squaredNorm() / static_cast<Scalar>(x.rows());
        const Scalar s = ms > Scalar(0) ? std::sqrt(ms) : Scalar(1);
        Matrix out = x / s;
        return record(std::move(out), {a}, [this, a, s, ms](int self) {
            const Matrix& g = gref(self);
            if (!(ms > Scalar(0))) {
                accumulate(a, g);
                return;
            }
            const Matrix& y = vref(self);
            const Scalar proj = g.cwiseProduct(y).sum() / static_cast<Scalar>(y.rows());
            accumulate(a, (g - proj * y) / s);
        });
    }

    /// Row-major flatten into a single 1 x (rows * cols) row.
    Var flatten_rows(Var a)
    {
        const Matrix& x = value(a);
        const Eigen::Index r = x.rows();
        const Eigen::Index c = x.cols();
        Matrix out(1, r * c);
        for (Eigen::Index i = 0; i < r; ++i) {
            for (Eigen::Index j = 0; j < c; ++j) {
                out(0, i * c + j) = x(i, j);
            }
        }
        return record(std::move(out), {a}, [this, a, r, c](int self) {
            const Matrix& g = gref(self);
            Matrix ga(r, c);
            for (Eigen::Index i = 0; i < r; ++i) {
                for (Eigen::Index j = 0; j < c; ++j) {
                    ga(i, j) = g(0, i * c + j);
                }
            }
            accumulate(a, ga);
        });
    }

private:
    static constexpr Scalar kGeluC = Scalar(0.7978845608028654); // sqrt(2 / pi)

    struct Node
    {
        Matrix value;
        const Matrix* external = nullptr;
        Matrix grad;
        bool requires_grad = false;
        std::function<void()> backward;
    };

    static void check(bool ok, const char* op)
    {
        if (!ok) {
            throw ShapeError(std::string("autodiff: incompatible shapes in ") + op);
        }
    }

    Var push(Matrix v, bool requires_grad)
    {
        Node n;
        n.value = std::move(v);
        n.requires_grad = requires_grad;
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    template <typename Fn>
    Var record(Matrix v, std::initializer_list<Var> inputs, Fn&& fn)
    {
        return record(std::move(v), std::vector<Var>(inputs), std::forward<Fn>(fn));
    }

    template <typename Fn>
    Var record(Matrix v, const std::vector<Var>& inputs, Fn&& fn)
    {
        bool needs = false;
        for (const Var in : inputs) {
            needs = needs || requires_grad(in);
        }
        const Var out = push(std::move(v), needs);
        if (needs) {
            const int self = out.id;
            nodes_.back().backward = [fn = std::forward<Fn>(fn), self]() { fn(self); };
        }
        return out;
    }

    const Matrix& gref(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
    const Matrix& vref(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    template <typename Derived>
    void accumulate(Var v, const Eigen::MatrixBase<Derived>& g)
    {
        Node& n = nodes_[static_cast<std::size_t>(v.id)];
        if (!n.requires_grad) {
            return;
        }
        if (n.grad.size() == 0) {
            n.grad = g;
        } else {
            n.grad += g;
        }
    }

    std::vector<Node> nodes_;
};

} // namespace p2ssm::ad
