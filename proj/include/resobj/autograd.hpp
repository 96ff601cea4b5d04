#pragma once

// Tape-based reverse-mode differentiation over dense double tensors.
//
// Every primitive appends one TapeNode to the tape that owns its inputs; node
// ids grow in creation order so the tape is topologically sorted by
// construction and backward() is a single reverse sweep. A tape is confined to
// one thread; independent tapes may run concurrently.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "resobj/tensor.hpp"

namespace resobj {

using NodeId = std::size_t;
using ParamId = std::size_t;

enum class OpKind {
    constant,
    parameter,
    add,
    subtract,
    multiply,
    matmul,
    conv2d,
    relu,
    sigmoid,
    log,
    exp,
    softplus,
    scale,
    sum,
    mean,
    masked_select,
    broadcast,
    reshape,
    smooth_l1,
    stop_gradient,
};

std::string_view op_name(OpKind kind);

struct TapeNode {
    OpKind kind = OpKind::constant;
    std::vector<NodeId> inputs;
    Tensor value;
    /// Extra activations kept for the backward pass (zero-padded channel-major conv2d input).
    std::vector<double> saved;
    /// Flat gather indices for masked_select.
    std::vector<std::size_t> indices;
    /// Scalar attribute: factor for scale, beta for smooth_l1.
    double attr = 0.0;
    std::optional<ParamId> param;
    bool stop_gradient = false;
    bool requires_grad = false;
};

/// Gradient of a scalar w.r.t. every parameter bound on the tape.
using GradMap = std::map<ParamId, Tensor>;

class Tape;

/// Lightweight handle to a node on a tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    Tape& tape() const { return *tape_; }
    NodeId id() const { return id_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
    bool valid() const { return tape_ != nullptr; }

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value);
    /// Binds a trainable parameter. Each id may be bound once per tape.
    Var parameter(ParamId id, Tensor value);

    const TapeNode& node(NodeId id) const { return nodes_.at(id); }
    std::size_t size() const { return nodes_.size(); }

    /// Appends a node; inputs must already live on this tape.
    Var record(TapeNode node);

    /// Reverse sweep from a scalar node. Every bound parameter gets an entry,
    /// unreachable ones an explicit zero tensor.
    GradMap backward(Var loss) const;

private:
    std::vector<TapeNode> nodes_;
    std::map<ParamId, NodeId> params_;
};

// Primitives. Elementwise binary ops require identical shapes; use broadcast()
// to expand explicitly.
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var multiply(Var a, Var b);
/// [m,k] x [k,n] -> [m,n]
Var matmul(Var a, Var b);
/// 3x3, stride 1, zero "same" padding. input [H,W,Cin], weight [Cout,3,3,Cin]
/// -> [H,W,Cout].
Var conv2d(Var input, Var weight);
Var relu(Var x);
Var sigmoid(Var x);
/// Natural log; throws DomainError on non-positive input.
Var log(Var x);
Var exp(Var x);
/// log(1 + e^x) in overflow-free form.
Var softplus(Var x);
Var scale(Var x, double factor);
Var sum(Var x);
Var mean(Var x);
/// Gathers the elements whose mask entry is true, in flat order -> [n].
Var masked_select(Var x, const std::vector<bool>& mask);
/// Repeats x over leading dimensions; x.shape must be a suffix of `shape`.
Var broadcast(Var x, const Shape& shape);
Var reshape(Var x, const Shape& shape);
/// Elementwise Huber-style smooth L1 with transition point beta.
Var smooth_l1(Var x, double beta);
/// Identity forward; contributes no gradient to its input.
Var stop_gradient(Var x);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return subtract(a, b); }
inline Var operator*(Var a, Var b) { return multiply(a, b); }

/// Builds a scalar graph from parameters bound on the supplied tape.
using ScalarGraph = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    std::size_t checked = 0;
};

/// Compares backward() against central differences. The error per element is
/// |analytic - numeric| / max(1, |numeric|). When `subset` is non-empty only
/// those parameter indices are compared. Throws NumericError if the function
/// evaluates to a non-finite value.
GradCheckResult finite_diff_check(const ScalarGraph& f, const std::vector<Tensor>& params,
                                  double epsilon, std::span<const std::size_t> subset = {});

}  // namespace resobj
