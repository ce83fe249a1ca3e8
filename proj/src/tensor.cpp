#include "fusion/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

namespace fusion {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor Tensor::zeros(Shape shape) {
    auto node = std::make_shared<Node>();
    node->data.assign(numel(shape), 0.0);
    node->shape = std::move(shape);
    return Tensor(std::move(node));
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t = zeros(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (numel(shape) != values.size())
        throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                         " values do not fill shape " + shape_str(shape));
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::size() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::data() { return impl_->data; }

double Tensor::item() const {
    if (size() != 1)
        throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool value) {
    if (value && !is_leaf())
        throw std::logic_error("set_requires_grad on a non-leaf tensor");
    impl_->requires_grad = value;
}

bool Tensor::is_leaf() const { return impl_->parents.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

std::span<double> Tensor::grad_mut() {
    if (impl_->grad.size() != impl_->data.size())
        impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
}

void Tensor::zero_grad() {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
    auto node = std::make_shared<Node>();
    node->shape = impl_->shape;
    node->data = impl_->data;
    return Tensor(std::move(node));
}

void Tensor::backward() {
    if (size() != 1)
        throw ShapeError("backward() requires a scalar, got " +
                         shape_str(shape()));
    if (!requires_grad()) return;

    // Post-order DFS; reverse gives a valid topological evaluation order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{impl_.get(), 0}};
    seen.insert(impl_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next].impl_.get();
            ++next;
            if (parent->requires_grad && seen.insert(parent).second)
                stack.emplace_back(parent, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    // Interior grads are per-sweep scratch; leaf grads accumulate.
    for (Node* node : order) {
        if (node->parents.empty()) {
            if (node->grad.size() != node->data.size())
                node->grad.assign(node->data.size(), 0.0);
        } else {
            node->grad.assign(node->data.size(), 0.0);
        }
    }
    impl_->grad[0] = 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop) node->backprop(*node);
    }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
    g_grad_enabled = false;
}
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

Tensor OpBuilder::make(Shape shape, std::vector<double> data,
                       std::vector<Tensor> parents,
                       Tensor::BackwardFn backprop) {
    auto node = std::make_shared<Tensor::Node>();
    if (numel(shape) != data.size())
        throw ShapeError("op result data does not match shape " +
                         shape_str(shape));
    node->shape = std::move(shape);
    node->data = std::move(data);
    bool track = g_grad_enabled &&
                 std::any_of(parents.begin(), parents.end(),
                             [](const Tensor& p) { return p.requires_grad(); });
    if (track) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

std::span<const double> OpBuilder::node_grad(const Tensor::Node& node) {
    return node.grad;
}

void accumulate_grad(Tensor& t, std::span<const double> delta) {
    if (!t.requires_grad()) return;
    auto g = t.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

}  // namespace fusion
