#include "praf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace praf {

namespace {

constexpr double kDegenerateNorm = 1e-12;

std::string shape_str(const Shape& s) {
    std::string out = "{";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "}";
}

// Lazily allocate a parent's adjoint buffer.
std::vector<double>& adj(Node* n) {
    if (n->grad.empty()) n->grad.assign(n->values.size(), 0.0);
    return n->grad;
}

void check_same_tape(Tensor a, Tensor b) {
    if (a.node()->tape != b.node()->tape)
        throw ContractError("operands were recorded on different tapes");
}

void check_same_shape(Tensor a, Tensor b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

void check_2d(Tensor m, const char* op) {
    if (m.shape().size() != 2) throw ShapeError(std::string(op) + ": expected a 2-d tensor");
}

}  // namespace

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

double Tensor::value() const {
    if (size() != 1) throw ContractError("value(): tensor is not a scalar");
    return node_->values[0];
}

std::vector<double> Tensor::grad() const {
    if (!node_->grad.empty()) return node_->grad;
    return std::vector<double>(node_->values.size(), 0.0);
}

Node* Tape::make_node(Shape shape, bool requires_grad, std::vector<Node*> parents) {
    auto node = std::make_unique<Node>();
    node->tape = this;
    node->index = nodes_.size();
    node->shape = std::move(shape);
    node->values.resize(numel(node->shape));
    node->requires_grad = requires_grad;
    node->parents = std::move(parents);
    nodes_.push_back(std::move(node));
    return nodes_.back().get();
}

Tensor Tape::leaf(Shape shape, std::vector<double> values, bool requires_grad) {
    if (numel(shape) != values.size())
        throw ShapeError("leaf: value count does not match shape " + shape_str(shape));
    Node* n = make_node(std::move(shape), requires_grad, {});
    n->values = std::move(values);
    n->leaf = true;
    return Tensor(n);
}

Tensor Tape::constant(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size())
        throw ShapeError("constant: value count does not match shape " + shape_str(shape));
    Node* n = make_node(std::move(shape), false, {});
    n->values = std::move(values);
    n->leaf = true;
    return Tensor(n);
}

Tensor Tape::constant(Shape shape, std::span<const double> values) {
    return constant(std::move(shape), std::vector<double>(values.begin(), values.end()));
}

void Tape::backward(Tensor root) {
    Node* r = root.node();
    if (r == nullptr || r->tape != this) throw ContractError("backward: root is not on this tape");
    if (r->values.size() != 1) throw ContractError("backward: loss must be a scalar");
    for (std::size_t i = 0; i <= r->index; ++i) nodes_[i]->grad.clear();
    r->grad.assign(1, 1.0);
    for (std::size_t i = r->index + 1; i-- > 0;) {
        Node& n = *nodes_[i];
        if (n.grad.empty() || !n.backward_fn) continue;
        n.backward_fn(n);
    }
}

// ---------------------------------------------------------------------------
// elementwise

Tensor add(Tensor a, Tensor b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "add");
    Node* pa = a.node();
    Node* pb = b.node();
    Node* n = pa->tape->make_node(a.shape(), pa->requires_grad || pb->requires_grad, {pa, pb});
    for (std::size_t i = 0; i < n->values.size(); ++i) n->values[i] = pa->values[i] + pb->values[i];
    if (n->requires_grad)
        n->backward_fn = [pa, pb](Node& self) {
            if (pa->requires_grad) {
                auto& ga = adj(pa);
                for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                auto& gb = adj(pb);
                for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i];
            }
        };
    return Tensor(n);
}

Tensor sub(Tensor a, Tensor b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "sub");
    Node* pa = a.node();
    Node* pb = b.node();
    Node* n = pa->tape->make_node(a.shape(), pa->requires_grad || pb->requires_grad, {pa, pb});
    for (std::size_t i = 0; i < n->values.size(); ++i) n->values[i] = pa->values[i] - pb->values[i];
    if (n->requires_grad)
        n->backward_fn = [pa, pb](Node& self) {
            if (pa->requires_grad) {
                auto& ga = adj(pa);
                for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
            }
            if (pb->requires_grad) {
                auto& gb = adj(pb);
                for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] -= self.grad[i];
            }
        };
    return Tensor(n);
}

Tensor mul(Tensor a, Tensor b) {
    check_same_tape(a, b);
    check_same_shape(a, b, "mul");
    Node* pa = a.node();
    Node* pb = b.node();
    Node* n = pa->tape->make_node(a.shape(), pa->requires_grad || pb->requires_grad, {pa, pb});
    for (std::size_t i = 0; i < n->values.size(); ++i) n->values[i] = pa->values[i] * pb->values[i];
    if (n->requires_grad)
        n->backward_fn = [pa, pb](Node& self) {
            if (pa->requires_grad) {
                auto& ga = adj(pa);
                for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * pb->values[i];
            }
            if (pb->requires_grad) {
                auto& gb = adj(pb);
                for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i] += self.grad[i] * pa->values[i];
            }
        };
    return Tensor(n);
}

Tensor scalar_mul(Tensor a, double c) {
    Node* pa = a.node();
    Node* n = pa->tape->make_node(a.shape(), pa->requires_grad, {pa});
    for (std::size_t i = 0; i < n->values.size(); ++i) n->values[i] = pa->values[i] * c;
    if (n->requires_grad)
        n->backward_fn = [pa, c](Node& self) {
            auto& ga = adj(pa);
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * c;
        };
    return Tensor(n);
}

Tensor scalar_add(Tensor a, double c) {
    Node* pa = a.node();
    Node* n = pa->tape->make_node(a.shape(), pa->requires_grad, {pa});
    for (std::size_t i = 0; i < n->values.size(); ++i) n->values[i] = pa->values[i] + c;
    if (n->requires_grad)
        n->backward_fn = [pa](Node& self) {
            auto& ga = adj(pa);
            for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
        };
    return Tensor(n);
}

Tensor add_rowvec(Tensor m, Tensor v) {
    check_same_tape(m, v);
    check_2d(m, "add_rowvec");
    if (v.shape().size() != 1 || v.shape()[0] != m.shape()[1])
        throw ShapeError("add_rowvec: vector length must equal column count");
    Node* pm = m.node();
    Node* pv = v.node();
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    Node* n = pm->tape->make_node(m.shape(), pm->requires_grad || pv->requires_grad, {pm, pv});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            n->values[r * cols + c] = pm->values[r * cols + c] + pv->values[c];
    if (n->requires_grad)
        n->backward_fn = [pm, pv, rows, cols](Node& self) {
            if (pm->requires_grad) {
                auto& gm = adj(pm);
                for (std::size_t i = 0; i < self.grad.size(); ++i) gm[i] += self.grad[i];
            }
            if (pv->requires_grad) {
                auto& gv = adj(pv);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c) gv[c] += self.grad[r * cols + c];
            }
        };
    return Tensor(n);
}

Tensor mul_rowvec(Tensor m, Tensor v) {
    check_same_tape(m, v);
    check_2d(m, "mul_rowvec");
    if (v.shape().size() != 1 || v.shape()[0] != m.shape()[1])
        throw ShapeError("mul_rowvec: vector length must equal column count");
    Node* pm = m.node();
    Node* pv = v.node();
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    Node* n = pm->tape->make_node(m.shape(), pm->requires_grad || pv->requires_grad, {pm, pv});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            n->values[r * cols + c] = pm->values[r * cols + c] * pv->values[c];
    if (n->requires_grad)
        n->backward_fn = [pm, pv, rows, cols](Node& self) {
            if (pm->requires_grad) {
                auto& gm = adj(pm);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        gm[r * cols + c] += self.grad[r * cols + c] * pv->values[c];
            }
            if (pv->requires_grad) {
                auto& gv = adj(pv);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        gv[c] += self.grad[r * cols + c] * pm->values[r * cols + c];
            }
        };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor matmul(Tensor a, Tensor b) {
    check_same_tape(a, b);
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], p = b.shape()[1];
    if (k != k2)
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    Node* pa = a.node();
    Node* pb = b.node();
    Node* n = pa->tape->make_node({m, p}, pa->requires_grad || pb->requires_grad, {pa, pb});
    const double* A = pa->values.data();
    const double* B = pb->values.data();
    double* C = n->values.data();
    std::fill(n->values.begin(), n->values.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = A[i * k + l];
            const double* brow = B + l * p;
            double* crow = C + i * p;
            for (std::size_t j = 0; j < p; ++j) crow[j] += ail * brow[j];
        }
    if (n->requires_grad)
        n->backward_fn = [pa, pb, m, k, p](Node& self) {
            const double* G = self.grad.data();
            if (pa->requires_grad) {
                double* GA = adj(pa).data();
                const double* B = pb->values.data();
                // dA = G * B^T
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < p; ++j) {
                        const double gij = G[i * p + j];
                        const double* bcol = B + j;  // column j stride p
                        double* garow = GA + i * k;
                        for (std::size_t l = 0; l < k; ++l) garow[l] += gij * bcol[l * p];
                    }
            }
            if (pb->requires_grad) {
                double* GB = adj(pb).data();
                const double* A = pa->values.data();
                // dB = A^T * G
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t l = 0; l < k; ++l) {
                        const double ail = A[i * k + l];
                        const double* grow = G + i * p;
                        double* gbrow = GB + l * p;
                        for (std::size_t j = 0; j < p; ++j) gbrow[j] += ail * grow[j];
                    }
            }
        };
    return Tensor(n);
}

Tensor transpose(Tensor m) {
    check_2d(m, "transpose");
    Node* pm = m.node();
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    Node* n = pm->tape->make_node({cols, rows}, pm->requires_grad, {pm});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) n->values[c * rows + r] = pm->values[r * cols + c];
    if (n->requires_grad)
        n->backward_fn = [pm, rows, cols](Node& self) {
            auto& gm = adj(pm);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) gm[r * cols + c] += self.grad[c * rows + r];
        };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// reductions

Tensor mean_over_axis(Tensor m, int axis) {
    check_2d(m, "mean_over_axis");
    if (axis != 0 && axis != 1) throw ContractError("mean_over_axis: axis must be 0 or 1");
    Node* pm = m.node();
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    if (axis == 0) {
        Node* n = pm->tape->make_node({cols}, pm->requires_grad, {pm});
        for (std::size_t c = 0; c < cols; ++c) {
            double s = 0.0;
            for (std::size_t r = 0; r < rows; ++r) s += pm->values[r * cols + c];
            n->values[c] = s / static_cast<double>(rows);
        }
        if (n->requires_grad)
            n->backward_fn = [pm, rows, cols](Node& self) {
                auto& gm = adj(pm);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t c = 0; c < cols; ++c)
                        gm[r * cols + c] += self.grad[c] / static_cast<double>(rows);
            };
        return Tensor(n);
    }
    Node* n = pm->tape->make_node({rows}, pm->requires_grad, {pm});
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < cols; ++c) s += pm->values[r * cols + c];
        n->values[r] = s / static_cast<double>(cols);
    }
    if (n->requires_grad)
        n->backward_fn = [pm, rows, cols](Node& self) {
            auto& gm = adj(pm);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    gm[r * cols + c] += self.grad[r] / static_cast<double>(cols);
        };
    return Tensor(n);
}

Tensor sum_all(Tensor x) {
    Node* px = x.node();
    Node* n = px->tape->make_node({1}, px->requires_grad, {px});
    double s = 0.0;
    for (double v : px->values) s += v;
    n->values[0] = s;
    if (n->requires_grad)
        n->backward_fn = [px](Node& self) {
            auto& gx = adj(px);
            for (double& g : gx) g += self.grad[0];
        };
    return Tensor(n);
}

Tensor mean_all(Tensor x) {
    Node* px = x.node();
    const double count = static_cast<double>(px->values.size());
    Node* n = px->tape->make_node({1}, px->requires_grad, {px});
    double s = 0.0;
    for (double v : px->values) s += v;
    n->values[0] = s / count;
    if (n->requires_grad)
        n->backward_fn = [px, count](Node& self) {
            auto& gx = adj(px);
            for (double& g : gx) g += self.grad[0] / count;
        };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// nonlinearities

Tensor layer_norm(Tensor m, double eps) {
    check_2d(m, "layer_norm");
    Node* pm = m.node();
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    Node* n = pm->tape->make_node(m.shape(), pm->requires_grad, {pm});
    auto inv_sigma = std::make_shared<std::vector<double>>(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = pm->values.data() + r * cols;
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += x[c];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double d = x[c] - mu;
            var += d * d;
        }
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[r] = is;
        for (std::size_t c = 0; c < cols; ++c) n->values[r * cols + c] = (x[c] - mu) * is;
    }
    if (n->requires_grad)
        n->backward_fn = [pm, rows, cols, inv_sigma](Node& self) {
            auto& gm = adj(pm);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.values.data() + r * cols;   // normalized row
                const double* gy = self.grad.data() + r * cols;
                double mean_gy = 0.0, mean_gyy = 0.0;
                for (std::size_t c = 0; c < cols; ++c) {
                    mean_gy += gy[c];
                    mean_gyy += gy[c] * y[c];
                }
                mean_gy /= static_cast<double>(cols);
                mean_gyy /= static_cast<double>(cols);
                const double is = (*inv_sigma)[r];
                for (std::size_t c = 0; c < cols; ++c)
                    gm[r * cols + c] += is * (gy[c] - mean_gy - y[c] * mean_gyy);
            }
        };
    return Tensor(n);
}

Tensor gelu(Tensor x) {
    Node* px = x.node();
    Node* n = px->tape->make_node(x.shape(), px->requires_grad, {px});
    static const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < n->values.size(); ++i) {
        const double v = px->values[i];
        n->values[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    if (n->requires_grad)
        n->backward_fn = [px](Node& self) {
            static const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
            auto& gx = adj(px);
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double v = px->values[i];
                const double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                const double pdf = std::exp(-0.5 * v * v) * inv_sqrt2pi;
                gx[i] += self.grad[i] * (phi + v * pdf);
            }
        };
    return Tensor(n);
}

Tensor softmax_rows(Tensor m) {
    check_2d(m, "softmax_rows");
    Node* pm = m.node();
    const std::size_t rows = m.shape()[0], cols = m.shape()[1];
    Node* n = pm->tape->make_node(m.shape(), pm->requires_grad, {pm});
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = pm->values.data() + r * cols;
        double* y = n->values.data() + r * cols;
        double mx = x[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            y[c] = std::exp(x[c] - mx);
            z += y[c];
        }
        for (std::size_t c = 0; c < cols; ++c) y[c] /= z;
    }
    if (n->requires_grad)
        n->backward_fn = [pm, rows, cols](Node& self) {
            auto& gm = adj(pm);
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = self.values.data() + r * cols;
                const double* gy = self.grad.data() + r * cols;
                double dot = 0.0;
                for (std::size_t c = 0; c < cols; ++c) dot += gy[c] * y[c];
                for (std::size_t c = 0; c < cols; ++c)
                    gm[r * cols + c] += y[c] * (gy[c] - dot);
            }
        };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// structure

Tensor concat(Tensor a, Tensor b, int axis) {
    check_same_tape(a, b);
    Node* pa = a.node();
    Node* pb = b.node();
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != sb.size()) throw ShapeError("concat: rank mismatch");
    if (sa.size() == 1) {
        if (axis != 0) throw ContractError("concat: axis out of range for 1-d");
        Node* n = pa->tape->make_node({sa[0] + sb[0]}, pa->requires_grad || pb->requires_grad, {pa, pb});
        std::copy(pa->values.begin(), pa->values.end(), n->values.begin());
        std::copy(pb->values.begin(), pb->values.end(), n->values.begin() + sa[0]);
        if (n->requires_grad)
            n->backward_fn = [pa, pb](Node& self) {
                const std::size_t na = pa->values.size();
                if (pa->requires_grad) {
                    auto& ga = adj(pa);
                    for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
                }
                if (pb->requires_grad) {
                    auto& gb = adj(pb);
                    for (std::size_t i = 0; i < pb->values.size(); ++i) gb[i] += self.grad[na + i];
                }
            };
        return Tensor(n);
    }
    if (sa.size() != 2) throw ShapeError("concat: only 1-d and 2-d supported");
    if (axis == 0) {
        if (sa[1] != sb[1]) throw ShapeError("concat: column counts differ");
        Node* n = pa->tape->make_node({sa[0] + sb[0], sa[1]}, pa->requires_grad || pb->requires_grad,
                                      {pa, pb});
        std::copy(pa->values.begin(), pa->values.end(), n->values.begin());
        std::copy(pb->values.begin(), pb->values.end(), n->values.begin() + pa->values.size());
        if (n->requires_grad)
            n->backward_fn = [pa, pb](Node& self) {
                const std::size_t na = pa->values.size();
                if (pa->requires_grad) {
                    auto& ga = adj(pa);
                    for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
                }
                if (pb->requires_grad) {
                    auto& gb = adj(pb);
                    for (std::size_t i = 0; i < pb->values.size(); ++i) gb[i] += self.grad[na + i];
                }
            };
        return Tensor(n);
    }
    if (axis != 1) throw ContractError("concat: axis out of range");
    if (sa[0] != sb[0]) throw ShapeError("concat: row counts differ");
    const std::size_t rows = sa[0], ca = sa[1], cb = sb[1];
    Node* n = pa->tape->make_node({rows, ca + cb}, pa->requires_grad || pb->requires_grad, {pa, pb});
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy(pa->values.begin() + r * ca, pa->values.begin() + (r + 1) * ca,
                  n->values.begin() + r * (ca + cb));
        std::copy(pb->values.begin() + r * cb, pb->values.begin() + (r + 1) * cb,
                  n->values.begin() + r * (ca + cb) + ca);
    }
    if (n->requires_grad)
        n->backward_fn = [pa, pb, rows, ca, cb](Node& self) {
            for (std::size_t r = 0; r < rows; ++r) {
                if (pa->requires_grad) {
                    auto& ga = adj(pa);
                    for (std::size_t c = 0; c < ca; ++c)
                        ga[r * ca + c] += self.grad[r * (ca + cb) + c];
                }
                if (pb->requires_grad) {
                    auto& gb = adj(pb);
                    for (std::size_t c = 0; c < cb; ++c)
                        gb[r * cb + c] += self.grad[r * (ca + cb) + ca + c];
                }
            }
        };
    return Tensor(n);
}

Tensor slice(Tensor x, int axis, std::size_t start, std::size_t len) {
    Node* px = x.node();
    const Shape& s = x.shape();
    if (s.size() == 1) {
        if (axis != 0) throw ContractError("slice: axis out of range for 1-d");
        if (start + len > s[0]) throw ShapeError("slice: range exceeds extent");
        Node* n = px->tape->make_node({len}, px->requires_grad, {px});
        std::copy(px->values.begin() + start, px->values.begin() + start + len, n->values.begin());
        if (n->requires_grad)
            n->backward_fn = [px, start, len](Node& self) {
                auto& gx = adj(px);
                for (std::size_t i = 0; i < len; ++i) gx[start + i] += self.grad[i];
            };
        return Tensor(n);
    }
    if (s.size() != 2) throw ShapeError("slice: only 1-d and 2-d supported");
    const std::size_t rows = s[0], cols = s[1];
    if (axis == 0) {
        if (start + len > rows) throw ShapeError("slice: range exceeds row count");
        Node* n = px->tape->make_node({len, cols}, px->requires_grad, {px});
        std::copy(px->values.begin() + start * cols, px->values.begin() + (start + len) * cols,
                  n->values.begin());
        if (n->requires_grad)
            n->backward_fn = [px, start, len, cols](Node& self) {
                auto& gx = adj(px);
                for (std::size_t i = 0; i < len * cols; ++i) gx[start * cols + i] += self.grad[i];
            };
        return Tensor(n);
    }
    if (axis != 1) throw ContractError("slice: axis out of range");
    if (start + len > cols) throw ShapeError("slice: range exceeds column count");
    Node* n = px->tape->make_node({rows, len}, px->requires_grad, {px});
    for (std::size_t r = 0; r < rows; ++r)
        std::copy(px->values.begin() + r * cols + start, px->values.begin() + r * cols + start + len,
                  n->values.begin() + r * len);
    if (n->requires_grad)
        n->backward_fn = [px, start, len, rows, cols](Node& self) {
            auto& gx = adj(px);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < len; ++c)
                    gx[r * cols + start + c] += self.grad[r * len + c];
        };
    return Tensor(n);
}

Tensor reshape(Tensor x, Shape shape) {
    if (numel(shape) != x.size()) throw ShapeError("reshape: element count mismatch");
    Node* px = x.node();
    Node* n = px->tape->make_node(std::move(shape), px->requires_grad, {px});
    n->values = px->values;
    if (n->requires_grad)
        n->backward_fn = [px](Node& self) {
            auto& gx = adj(px);
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        };
    return Tensor(n);
}

Tensor gather(Tensor x, std::shared_ptr<const std::vector<std::size_t>> index_map, Shape out_shape) {
    if (numel(out_shape) != index_map->size())
        throw ShapeError("gather: index map size does not match output shape");
    Node* px = x.node();
    const std::size_t limit = px->values.size();
    Node* n = px->tape->make_node(std::move(out_shape), px->requires_grad, {px});
    const auto& map = *index_map;
    for (std::size_t i = 0; i < map.size(); ++i) {
        if (map[i] >= limit) throw ContractError("gather: index out of range");
        n->values[i] = px->values[map[i]];
    }
    if (n->requires_grad)
        n->backward_fn = [px, index_map](Node& self) {
            auto& gx = adj(px);
            const auto& map = *index_map;
            for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += self.grad[i];
        };
    return Tensor(n);
}

// ---------------------------------------------------------------------------
// similarity

namespace {

struct CosineParts {
    double uu, vv, uv, denom, cos;
};

// Formulated over sums of squares so that bitwise-identical inputs give
// exactly cos == 1 and exactly zero gradient.
CosineParts cosine_parts(const double* u, const double* v, std::size_t n, const char* op) {
    CosineParts p{0.0, 0.0, 0.0, 0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        p.uu += u[i] * u[i];
        p.vv += v[i] * v[i];
        p.uv += u[i] * v[i];
    }
    if (std::sqrt(p.uu) < kDegenerateNorm || std::sqrt(p.vv) < kDegenerateNorm)
        throw DegenerateError(std::string(op) + ": vector norm below 1e-12");
    p.denom = std::sqrt(p.uu * p.vv);
    p.cos = p.uv / p.denom;
    return p;
}

}  // namespace

Tensor cosine_similarity(Tensor u, Tensor v) {
    check_same_tape(u, v);
    if (u.size() != v.size()) throw ShapeError("cosine_similarity: length mismatch");
    if (u.size() == 0) throw ShapeError("cosine_similarity: empty vectors");
    Node* pu = u.node();
    Node* pv = v.node();
    const std::size_t n_el = u.size();
    CosineParts parts = cosine_parts(pu->values.data(), pv->values.data(), n_el, "cosine_similarity");
    Node* n = pu->tape->make_node({1}, pu->requires_grad || pv->requires_grad, {pu, pv});
    n->values[0] = parts.cos;
    if (n->requires_grad)
        n->backward_fn = [pu, pv, parts, n_el](Node& self) {
            const double g = self.grad[0];
            if (pu->requires_grad) {
                auto& gu = adj(pu);
                for (std::size_t i = 0; i < n_el; ++i)
                    gu[i] += g * (pv->values[i] / parts.denom - parts.cos * pu->values[i] / parts.uu);
            }
            if (pv->requires_grad) {
                auto& gv = adj(pv);
                for (std::size_t i = 0; i < n_el; ++i)
                    gv[i] += g * (pu->values[i] / parts.denom - parts.cos * pv->values[i] / parts.vv);
            }
        };
    return Tensor(n);
}

Tensor rowwise_cosine(Tensor a, Tensor b) {
    check_same_tape(a, b);
    check_2d(a, "rowwise_cosine");
    check_same_shape(a, b, "rowwise_cosine");
    Node* pa = a.node();
    Node* pb = b.node();
    const std::size_t rows = a.shape()[0], cols = a.shape()[1];
    auto parts = std::make_shared<std::vector<CosineParts>>();
    parts->reserve(rows);
    Node* n = pa->tape->make_node({rows}, pa->requires_grad || pb->requires_grad, {pa, pb});
    for (std::size_t r = 0; r < rows; ++r) {
        parts->push_back(cosine_parts(pa->values.data() + r * cols, pb->values.data() + r * cols,
                                      cols, "rowwise_cosine"));
        n->values[r] = parts->back().cos;
    }
    if (n->requires_grad)
        n->backward_fn = [pa, pb, parts, rows, cols](Node& self) {
            for (std::size_t r = 0; r < rows; ++r) {
                const double g = self.grad[r];
                const CosineParts& p = (*parts)[r];
                const double* u = pa->values.data() + r * cols;
                const double* v = pb->values.data() + r * cols;
                if (pa->requires_grad) {
                    auto& ga = adj(pa);
                    for (std::size_t c = 0; c < cols; ++c)
                        ga[r * cols + c] += g * (v[c] / p.denom - p.cos * u[c] / p.uu);
                }
                if (pb->requires_grad) {
                    auto& gb = adj(pb);
                    for (std::size_t c = 0; c < cols; ++c)
                        gb[r * cols + c] += g * (u[c] / p.denom - p.cos * v[c] / p.vv);
                }
            }
        };
    return Tensor(n);
}

}  // namespace praf
