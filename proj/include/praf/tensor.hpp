#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "praf/errors.hpp"

namespace praf {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);

class Tape;

/// One recorded value in the computation graph. Owned by a Tape; creation
/// order is topological, so reverse iteration is a valid backward order.
struct Node {
    Tape* tape = nullptr;
    std::size_t index = 0;
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    bool leaf = false;
    // Adjoint buffer. Filled lazily during Tape::backward; empty means the
    // node was not reached from the root (gradient is zero).
    std::vector<double> grad;
    std::vector<Node*> parents;
    std::function<void(Node&)> backward_fn;
};

/// Lightweight handle to a Node. Copyable; does not own storage.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Node* node) : node_(node) {}

    bool valid() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->values.size(); }
    const std::vector<double>& values() const { return node_->values; }
    /// Scalar convenience accessor; requires size() == 1.
    double value() const;
    bool requires_grad() const { return node_->requires_grad; }
    /// Gradient of the most recent backward root w.r.t. this tensor.
    /// Zero-filled if the node was not on the path to the root.
    std::vector<double> grad() const;
    Node* node() const { return node_; }

  private:
    Node* node_ = nullptr;
};

/// Arena of graph nodes for one forward pass. Values are computed eagerly as
/// ops are recorded; backward() can be called repeatedly from different
/// scalar roots on the same tape (each call resets adjoints first).
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad);
    Tensor constant(Shape shape, std::vector<double> values);
    Tensor constant(Shape shape, std::span<const double> values);

    /// Reverse sweep from a scalar root. Every node is visited at most once,
    /// in reverse creation order. requires_grad leaves reachable from the
    /// root end up with their adjoint in Node::grad.
    void backward(Tensor root);

    std::size_t size() const { return nodes_.size(); }

    Node* make_node(Shape shape, bool requires_grad, std::vector<Node*> parents);

  private:
    std::vector<std::unique_ptr<Node>> nodes_;
};

// Elementwise and reduction ops. All are recorded on the operands' tape and
// computed eagerly; gradients propagate to every requires_grad input.
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scalar_mul(Tensor a, double c);
Tensor scalar_add(Tensor a, double c);
/// m: {R,C}, v: {C}; broadcasts v over the rows of m.
Tensor add_rowvec(Tensor m, Tensor v);
Tensor mul_rowvec(Tensor m, Tensor v);

Tensor matmul(Tensor a, Tensor b);
Tensor transpose(Tensor m);

/// axis 0 averages rows together (result {C}); axis 1 averages within each
/// row (result {R}).
Tensor mean_over_axis(Tensor m, int axis);
Tensor mean_all(Tensor x);
Tensor sum_all(Tensor x);

/// Row-wise normalization to zero mean / unit variance, no affine part.
Tensor layer_norm(Tensor m, double eps = 1e-5);
Tensor gelu(Tensor x);
Tensor softmax_rows(Tensor m);

Tensor concat(Tensor a, Tensor b, int axis);
Tensor slice(Tensor x, int axis, std::size_t start, std::size_t len);
Tensor reshape(Tensor x, Shape shape);

/// out[i] = x[index_map[i]]; backward scatter-adds. The map is shared so
/// callers can cache it across iterations.
Tensor gather(Tensor x, std::shared_ptr<const std::vector<std::size_t>> index_map, Shape out_shape);

/// <u,v> / (|u||v|), treating both operands as flat vectors.
/// Exact 1.0 for bitwise-identical inputs, with exactly zero gradient there.
/// Throws DegenerateError when either norm is below 1e-12.
Tensor cosine_similarity(Tensor u, Tensor v);

/// Per-row cosine between matching rows of a and b (both {R,C}) -> {R}.
Tensor rowwise_cosine(Tensor a, Tensor b);

inline Tensor operator+(Tensor a, Tensor b) { return add(a, b); }
inline Tensor operator-(Tensor a, Tensor b) { return sub(a, b); }
inline Tensor operator*(Tensor a, double c) { return scalar_mul(a, c); }
inline Tensor operator*(double c, Tensor a) { return scalar_mul(a, c); }

}  // namespace praf
