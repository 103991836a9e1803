// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode automatic differentiation over scalars.
//
// A Tape owns a flat arena of nodes in creation order; creation order is a
// valid topological order because every operation's inputs already exist when
// the operation is recorded. The backward pass walks the arena in strict
// reverse creation order, which makes gradients deterministic: two backward
// passes over identical tapes produce bit-identical adjoints.
//
// Every loss in this project is a scalar expression per preference pair, so
// there is deliberately no tensor machinery here: scalar nodes keep the
// gradient semantics auditable, in particular the stop-gradient operator that
// the adaptive loss coefficients rely on.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace preflab::ad {

enum class Op : std::uint8_t {
    kConst,
    kParam,
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kLog,
    kExp,
    kPowConst,
    kClampMax,
    kLogSigmoid,
    kLog1mExp,
    kStopGrad,
};

using NodeId = std::uint32_t;

struct Node {
    double value = 0.0;
    double grad = 0.0;      // adjoint, accumulated additively on fan-out
    Op op = Op::kConst;
    NodeId a = 0;
    NodeId b = 0;
    double da = 0.0;        // local partial w.r.t. parent a, fixed at creation
    double db = 0.0;
    std::uint8_t arity = 0;
    bool stop_grad = false; // blocks adjoint flow into parents
};

class Tape;

// Cheap handle to a node; valid for the lifetime of its tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

    double value() const;
    double grad() const;
    NodeId id() const { return id_; }
    Tape* tape() const { return tape_; }

private:
    Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

class Tape {
public:
    explicit Tape(std::size_t reserve_nodes = 256);

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that never receives an adjoint.
    Var constant(double v);
    // Differentiable leaf.
    Var param(double v);

    Var add(Var x, Var y);
    Var sub(Var x, Var y);
    Var mul(Var x, Var y);
    Var div(Var x, Var y);          // y.value != 0
    Var neg(Var x);
    Var log(Var x);                 // x.value > 0
    Var exp(Var x);
    Var pow_const(Var x, double k); // x.value > 0 unless k is integral
    Var clamp_max(Var x, double c); // subgradient 0 at and above the ceiling
    Var log_sigmoid(Var x);
    Var log1m_exp(Var x);           // x.value < 0
    Var stop_gradient(Var x);       // value-preserving, zero adjoint to parents

    // Zeroes every adjoint, seeds root with 1 and accumulates adjoints in
    // reverse creation order. Parameter adjoints are then available via
    // grad()/Var::grad().
    void backward(Var root);

    double value(NodeId id) const { return nodes_[id].value; }
    double grad(NodeId id) const { return nodes_[id].grad; }
    const Node& node(NodeId id) const { return nodes_[id]; }
    std::size_t size() const { return nodes_.size(); }

    // Drops every node; handles into this tape become invalid.
    void reset();

private:
    Var emplace(Op op, double value, NodeId a, NodeId b, double da, double db,
                std::uint8_t arity, bool stop_grad);
    Var unary(Op op, Var x, double value, double dx);
    Var binary(Op op, Var x, Var y, double value, double dx, double dy);
    void check_same_tape(Var x) const;

    std::vector<Node> nodes_;
};

inline double Var::value() const { return tape_->value(id_); }
inline double Var::grad() const { return tape_->grad(id_); }

// Expression-style operators; double operands become constants on the tape.
inline Var operator+(Var x, Var y) { return x.tape()->add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape()->sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape()->mul(x, y); }
inline Var operator/(Var x, Var y) { return x.tape()->div(x, y); }
inline Var operator-(Var x) { return x.tape()->neg(x); }

inline Var operator+(Var x, double c) { return x + x.tape()->constant(c); }
inline Var operator+(double c, Var x) { return x.tape()->constant(c) + x; }
inline Var operator-(Var x, double c) { return x - x.tape()->constant(c); }
inline Var operator-(double c, Var x) { return x.tape()->constant(c) - x; }
inline Var operator*(Var x, double c) { return x * x.tape()->constant(c); }
inline Var operator*(double c, Var x) { return x.tape()->constant(c) * x; }
inline Var operator/(Var x, double c) { return x / x.tape()->constant(c); }
inline Var operator/(double c, Var x) { return x.tape()->constant(c) / x; }

inline Var log(Var x) { return x.tape()->log(x); }
inline Var exp(Var x) { return x.tape()->exp(x); }
inline Var pow_const(Var x, double k) { return x.tape()->pow_const(x, k); }
inline Var clamp_max(Var x, double c) { return x.tape()->clamp_max(x, c); }
inline Var log_sigmoid(Var x) { return x.tape()->log_sigmoid(x); }
inline Var log1m_exp(Var x) { return x.tape()->log1m_exp(x); }
inline Var stop_gradient(Var x) { return x.tape()->stop_gradient(x); }

}  // namespace preflab::ad
