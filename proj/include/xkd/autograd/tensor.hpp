// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace xkd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node;
using BackwardFn = std::function<void(Node&)>;

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // empty when no gradient is held
    bool requires_grad = false;
    std::uint64_t id = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> parents;
    BackwardFn backward;

    bool is_leaf() const { return !backward; }
    std::vector<double>& ensure_grad();
};

}  // namespace detail

/// Handle to a node of the reverse-mode graph.
///
/// Copies are shallow: they alias the same values and gradient buffer, which
/// is how parameters are shared between networks. Values of non-leaf tensors
/// never change after creation; leaf values change only through explicit
/// mutation (optimizer, EMA, checkpoint load).
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> values() const;
    /// Writable view for in-place updates of leaves. Throws on graph-produced tensors.
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t flat) const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    void set_requires_grad(bool value);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<const double> grad() const;
    void zero_grad();
    /// Drops the gradient buffer so has_grad() becomes false.
    void clear_grad();

    /// Backpropagates from this scalar into every requires_grad ancestor.
    /// Leaf gradients accumulate across calls.
    void backward() const;

    /// Same values, no graph history.
    Tensor detach() const;
    /// Independent leaf with a copy of the values.
    Tensor clone(bool requires_grad) const;

    bool same_object(const Tensor& other) const { return node_ == other.node_; }
    const char* op_name() const;

    /// Builds an op result. Records `parents` and `backward` only when grad
    /// mode is on and some parent requires a gradient.
    static Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                              const char* op, detail::BackwardFn backward);

    detail::Node& node() const;

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Whether new op results are recorded for backpropagation on this thread.
bool grad_enabled();

/// Disables graph recording for its lifetime (teacher forwards).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

}  // namespace xkd
