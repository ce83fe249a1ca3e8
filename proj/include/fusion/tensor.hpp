#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fusion {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Shape or dimension mismatch in a tensor operation.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values or other numerical breakdown.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dense N-d array of doubles with reverse-mode autodiff.
///
/// Tensor is a cheap handle onto a shared node. Operations on tensors that
/// require gradients record the computation so that backward() on a scalar
/// result fills the grad buffers of all reachable leaf tensors. Repeated
/// backward() calls accumulate into leaf grads until zero_grad().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t rank() const { return shape().size(); }

    std::span<const double> data() const;
    std::span<double> data();
    double item() const;
    double operator[](std::size_t i) const { return data()[i]; }

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool is_leaf() const;

    /// Grad buffer; empty span until backward() has touched this leaf.
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();

    /// Reverse-mode sweep from a scalar. Throws ShapeError on non-scalars.
    void backward();

    /// Same values, detached from the graph (never requires grad).
    Tensor detach() const;

    bool same_node(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Node;
    using BackwardFn = std::function<void(const Node&)>;

    struct Node {
        Shape shape;
        std::vector<double> data;
        std::vector<double> grad;
        bool requires_grad = false;
        std::vector<Tensor> parents;
        BackwardFn backprop;
    };

    std::shared_ptr<Node> impl_;

    explicit Tensor(std::shared_ptr<Node> impl) : impl_(std::move(impl)) {}

    friend class OpBuilder;
    friend void accumulate_grad(Tensor& t, std::span<const double> delta);
};

/// RAII switch that disables graph recording on this thread (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

    static bool grad_enabled();

private:
    bool previous_;
};

/// Internal helper used by op implementations to create graph nodes.
class OpBuilder {
public:
    static Tensor make(Shape shape, std::vector<double> data,
                       std::vector<Tensor> parents,
                       Tensor::BackwardFn backprop);
    static std::span<const double> node_grad(const Tensor::Node& node);
};

/// Adds delta into t's grad buffer (sized on first use). No-op when t does
/// not require grad.
void accumulate_grad(Tensor& t, std::span<const double> delta);

}  // namespace fusion
