#pragma once

// Reverse-mode automatic differentiation over dense tensors.
//
// A Tape records every operation as a node; Var is a cheap handle to a node.
// Nodes are appended in evaluation order, so the node sequence is always a
// topological order and backward() is a single reverse sweep.

#include "spader/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace spader::ad {

class Tape;

class TapeError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class Var {
public:
    Var() = default;

    const Tensor& value() const;
    /// Gradient after backward(); nullptr when the node received none.
    const Tensor* grad() const;
    const Shape& shape() const { return value().shape(); }
    std::size_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    bool valid() const noexcept { return tape_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

/// What a backward rule sees. `in_grads[i]` is null when input i needs no gradient.
struct GradContext {
    const Tensor& out_value;
    const Tensor& out_grad;
    std::span<const Tensor* const> in_values;
    std::span<Tensor* const> in_grads;
};

using BackwardRule = std::function<void(const GradContext&)>;

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf that owns its value.
    Var leaf(Tensor value, bool requires_grad = true);
    /// Leaf that refers to a tensor owned elsewhere; it must outlive the tape.
    Var borrow(const Tensor& value, bool requires_grad = true);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    /// Appends a computed node. Used by the operator library.
    Var record(Tensor value, std::vector<Var> inputs, BackwardRule rule);

    /// Populates grad() on every node that requires a gradient and is reachable
    /// from `output`. Previous gradients are discarded first.
    void backward(Var output);

    /// d(output)/d(activation), propagating only through nodes downstream of
    /// `activation`. Upstream parameters are not touched.
    Tensor grad_wrt(Var output, Var activation);

    void zero_grad();

    std::size_t size() const noexcept { return nodes_.size(); }
    const Tensor& value(std::size_t id) const;
    const Tensor* grad(std::size_t id) const;

private:
    struct Node {
        Tensor owned;
        const Tensor* borrowed = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardRule rule;

        const Tensor& value() const { return borrowed != nullptr ? *borrowed : owned; }
    };

    void check_owner(Var v, const char* what) const;
    void sweep(std::size_t output, const std::vector<char>& active, std::size_t floor);

    std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operators. All operands must live on the same tape.
// ---------------------------------------------------------------------------

/// Cross-correlation. input [C,H,W] or [N,C,H,W]; kernel [Co,C,kH,kW]; bias [Co].
Var conv2d(Var input, Var kernel, Var bias, std::size_t stride, std::size_t padding);

/// input [N_in] or [B,N_in]; weight [M,N_in]; bias [M].
Var dense(Var input, Var weight, Var bias);

Var relu(Var x);
Var sigmoid(Var x);
Var abs(Var x);
Var exp(Var x);
Var square(Var x);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double factor);
Var add_scalar(Var x, double offset);

Var sum(Var x);
Var mean(Var x);

Var reshape(Var x, Shape shape);
/// Nearest-neighbour resize of the two trailing axes to (height, width).
Var upsample_nearest(Var x, std::size_t height, std::size_t width);

enum class Elementwise { relu, sigmoid, abs, add, sub, mul, square };
Var elementwise(Elementwise kind, Var a, Var b = {});

enum class Reduction { sum, mean };
Var reduce(Reduction kind, Var x);

}  // namespace spader::ad
