#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace cbvd {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::string to_string(const Shape& shape);
inline Index shape_size(const Shape& shape);

namespace detail {

struct Flags {
    bool grad_enabled = true;
    bool validate_finite = false;
};

inline Flags& flags()
{
    thread_local Flags f;
    return f;
}

template <class Scalar>
struct TensorNode {
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

    Shape shape;
    Array value;
    Array grad; // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Reads this node's grad and accumulates into parents. Empty for leaves.
    std::function<void(TensorNode&)> backward;

    bool is_leaf() const { return !backward; }

    Array& ensure_grad()
    {
        if (grad.size() != value.size())
            grad = Array::Zero(value.size());
        return grad;
    }
};

} // namespace detail

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
public:
    NoGradGuard() : previous_(detail::flags().grad_enabled) { detail::flags().grad_enabled = false; }
    ~NoGradGuard() { detail::flags().grad_enabled = previous_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Enables the debug check that every op output is finite.
class FiniteCheckGuard {
public:
    explicit FiniteCheckGuard(bool enabled = true) : previous_(detail::flags().validate_finite)
    {
        detail::flags().validate_finite = enabled;
    }
    ~FiniteCheckGuard() { detail::flags().validate_finite = previous_; }
    FiniteCheckGuard(const FiniteCheckGuard&) = delete;
    FiniteCheckGuard& operator=(const FiniteCheckGuard&) = delete;

private:
    bool previous_;
};

inline bool grad_enabled() { return detail::flags().grad_enabled; }
inline bool finite_checks_enabled() { return detail::flags().validate_finite; }

/**
 * Dense row-major n-dimensional array with optional reverse-mode gradient.
 *
 * A Tensor is a handle: copies share storage and graph position, the same
 * way an autograd variable does. Use clone() for an independent copy.
 */
template <class Scalar_>
class Tensor {
public:
    using Scalar = Scalar_;
    using Node = detail::TensorNode<Scalar>;
    using Array = typename Node::Array;

    Tensor() = default;

    explicit Tensor(Shape shape, Scalar fill = Scalar(0), bool requires_grad = false)
        : node_(std::make_shared<Node>())
    {
        check_shape(shape);
        node_->value = Array::Constant(shape_size(shape), fill);
        node_->shape = std::move(shape);
        node_->requires_grad = requires_grad;
    }

    static Tensor from(Shape shape, Array values, bool requires_grad = false)
    {
        check_shape(shape);
        if (shape_size(shape) != values.size())
            throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape "
                             + to_string(shape));
        Tensor t;
        t.node_ = std::make_shared<Node>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor scalar(Scalar v, bool requires_grad = false) { return Tensor({1}, v, requires_grad); }

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    int rank() const { return static_cast<int>(node_->shape.size()); }
    Index dim(int axis) const { return node_->shape.at(static_cast<std::size_t>(axis)); }
    Index size() const { return node_->value.size(); }

    Array& values() { return node_->value; }
    const Array& values() const { return node_->value; }
    Scalar* data() { return node_->value.data(); }
    const Scalar* data() const { return node_->value.data(); }

    Scalar item() const
    {
        if (size() != 1)
            throw ContractError("item() on tensor of shape " + to_string(shape()));
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    const Array& grad() const { return node_->grad; }
    Array& grad() { return node_->grad; }
    void clear_grad() { node_->grad.resize(0); }

    /// Copy of the values without history or gradient.
    Tensor clone(bool requires_grad = false) const { return from(shape(), values(), requires_grad); }

    template <class Other>
    Tensor<Other> cast() const
    {
        return Tensor<Other>::from(shape(), values().template cast<Other>());
    }

    const std::shared_ptr<Node>& node() const { return node_; }

    /// Internal: wraps a freshly computed op result. Records parents only when
    /// grad mode is on and some parent needs a gradient.
    static Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                              std::function<void(Node&)> backward, const char* op)
    {
        Tensor out = from(std::move(shape), std::move(value));
        if (finite_checks_enabled() && !out.values().allFinite())
            throw NumericError(std::string(op) + ": non-finite value in output");
        bool needs = false;
        if (grad_enabled())
            for (const auto& in : inputs)
                needs = needs || in.requires_grad();
        if (needs) {
            out.node_->requires_grad = true;
            out.node_->backward = std::move(backward);
            for (auto& in : inputs)
                out.node_->parents.push_back(in.node_);
        }
        return out;
    }

private:
    static void check_shape(const Shape& shape)
    {
        if (shape.empty())
            throw ShapeError("tensor: rank-0 shape; use {1} for scalars");
        for (Index e : shape)
            if (e <= 0)
                throw ShapeError("tensor: non-positive extent in " + to_string(shape));
    }

    std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/**
 * Reverse-mode sweep from a scalar loss.
 *
 * Leaf tensors accumulate across calls; interior nodes are reset at the start
 * of each sweep so that a second call adds exactly one more gradient.
 */
template <class Scalar>
void backward(const Tensor<Scalar>& loss)
{
    using Node = detail::TensorNode<Scalar>;
    if (!loss.defined() || loss.size() != 1)
        throw ContractError("backward: loss must be a scalar tensor");
    if (!loss.requires_grad())
        throw ContractError("backward: loss does not depend on any tensor requiring grad");

    // Iterative post-order DFS; order is reversed for the sweep.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node* n : order) {
        if (n->is_leaf())
            n->ensure_grad();
        else
            n->grad = Node::Array::Zero(n->value.size());
    }
    loss.node()->grad[0] += Scalar(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf()) {
            n->backward(*n);
            if (finite_checks_enabled()) {
                for (auto& p : n->parents)
                    if (p->requires_grad && !p->grad.allFinite())
                        throw NumericError("backward: non-finite gradient");
            }
        }
    }
}

inline std::string to_string(const Shape& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline Index shape_size(const Shape& shape)
{
    Index n = 1;
    for (Index e : shape)
        n *= e;
    return n;
}

} // namespace cbvd
