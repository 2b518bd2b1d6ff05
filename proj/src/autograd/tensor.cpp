// SPDX-License-Identifier: Apache-2.0
#include "xkd/autograd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "xkd/core/error.hpp"

namespace xkd {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
thread_local bool t_grad_enabled = true;

std::shared_ptr<detail::Node> new_node(Shape shape, std::vector<double> values) {
    if (shape_numel(shape) != values.size()) {
        throw ShapeError("tensor: shape " + shape_string(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
    return node;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

std::vector<double>& detail::Node::ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : node_(new_node(std::move(shape), std::move(values))) {
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

detail::Node& Tensor::node() const {
    if (!node_) throw ContractError("tensor: use of an undefined tensor");
    return *node_;
}

const Shape& Tensor::shape() const { return node().shape; }

std::size_t Tensor::size(std::size_t axis) const {
    const auto& s = shape();
    if (axis >= s.size()) throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_string(s));
    return s[axis];
}

std::size_t Tensor::numel() const { return node().values.size(); }

std::span<const double> Tensor::values() const { return node().values; }

std::span<double> Tensor::mutable_values() {
    auto& n = node();
    if (!n.is_leaf()) throw ContractError("tensor: in-place mutation of a graph-produced tensor");
    return n.values;
}

double Tensor::item() const {
    if (numel() != 1) throw ContractError("tensor: item() on a tensor of shape " + shape_string(shape()));
    return node().values[0];
}

double Tensor::at(std::size_t flat) const {
    const auto& v = node().values;
    if (flat >= v.size()) throw ContractError("tensor: flat index out of range");
    return v[flat];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    const auto& s = shape();
    if (s.size() != 2 || row >= s[0] || col >= s[1]) throw ContractError("tensor: 2-D index out of range");
    return node().values[row * s[1] + col];
}

bool Tensor::requires_grad() const { return node().requires_grad; }

void Tensor::set_requires_grad(bool value) {
    auto& n = node();
    if (!n.is_leaf()) throw ContractError("tensor: requires_grad can only be set on leaves");
    n.requires_grad = value;
}

bool Tensor::is_leaf() const { return node().is_leaf(); }

bool Tensor::has_grad() const { return !node().grad.empty(); }

std::span<const double> Tensor::grad() const {
    if (!has_grad()) throw ContractError("tensor: no gradient held");
    return node().grad;
}

void Tensor::zero_grad() {
    auto& g = node().grad;
    std::fill(g.begin(), g.end(), 0.0);
}

void Tensor::clear_grad() {
    auto& g = node().grad;
    g.clear();
    g.shrink_to_fit();
}

const char* Tensor::op_name() const { return node().op; }

Tensor Tensor::detach() const { return Tensor(shape(), node().values, false); }

Tensor Tensor::clone(bool requires_grad) const { return Tensor(shape(), node().values, requires_grad); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents, const char* op,
                           detail::BackwardFn backward) {
    auto node = new_node(std::move(shape), std::move(values));
    node->op = op;
    if (t_grad_enabled) {
        const bool any = std::any_of(parents.begin(), parents.end(),
                                     [](const Tensor& p) { return p.defined() && p.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->parents.reserve(parents.size());
            for (auto& p : parents) node->parents.push_back(p.node_);
            node->backward = std::move(backward);
        }
    }
    return Tensor(std::move(node));
}

void Tensor::backward() const {
    auto& root = node();
    if (root.values.size() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " + shape_string(root.shape));
    }
    if (!root.requires_grad) return;

    // Parents are always created before their children, so descending id is
    // a valid reverse topological order and each node is processed once.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> seen;
    std::vector<detail::Node*> stack{&root};
    seen.insert(&root);
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents) {
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
        }
    }
    std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->id > b->id; });

    for (auto* n : order) {
        if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
    }
    root.ensure_grad()[0] += 1.0;
    for (auto* n : order) {
        if (n->is_leaf()) continue;
        n->backward(*n);
        n->grad.clear();
        n->grad.shrink_to_fit();
    }
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

}  // namespace xkd
