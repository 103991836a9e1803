// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "preflab/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "preflab/numeric.hpp"

namespace preflab::ad {

Tape::Tape(std::size_t reserve_nodes) {
    nodes_.reserve(reserve_nodes);
}

Var Tape::emplace(Op op, double value, NodeId a, NodeId b, double da, double db,
                  std::uint8_t arity, bool stop_grad) {
    Node n;
    n.value = value;
    n.op = op;
    n.a = a;
    n.b = b;
    n.da = da;
    n.db = db;
    n.arity = arity;
    n.stop_grad = stop_grad;
    nodes_.push_back(n);
    return Var(this, static_cast<NodeId>(nodes_.size() - 1));
}

void Tape::check_same_tape(Var x) const {
    if (x.tape() != this) {
        throw std::invalid_argument("ad: operands created on different tapes");
    }
}

Var Tape::unary(Op op, Var x, double value, double dx) {
    check_same_tape(x);
    return emplace(op, value, x.id(), 0, dx, 0.0, 1, false);
}

Var Tape::binary(Op op, Var x, Var y, double value, double dx, double dy) {
    check_same_tape(x);
    check_same_tape(y);
    return emplace(op, value, x.id(), y.id(), dx, dy, 2, false);
}

Var Tape::constant(double v) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument("ad: constant must be finite");
    }
    return emplace(Op::kConst, v, 0, 0, 0.0, 0.0, 0, false);
}

Var Tape::param(double v) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument("ad: parameter must be finite");
    }
    return emplace(Op::kParam, v, 0, 0, 0.0, 0.0, 0, false);
}

Var Tape::add(Var x, Var y) {
    return binary(Op::kAdd, x, y, x.value() + y.value(), 1.0, 1.0);
}

Var Tape::sub(Var x, Var y) {
    return binary(Op::kSub, x, y, x.value() - y.value(), 1.0, -1.0);
}

Var Tape::mul(Var x, Var y) {
    return binary(Op::kMul, x, y, x.value() * y.value(), y.value(), x.value());
}

Var Tape::div(Var x, Var y) {
    const double yv = y.value();
    if (yv == 0.0) {
        throw std::domain_error("ad: division by zero");
    }
    return binary(Op::kDiv, x, y, x.value() / yv, 1.0 / yv,
                  -x.value() / (yv * yv));
}

Var Tape::neg(Var x) {
    return unary(Op::kNeg, x, -x.value(), -1.0);
}

Var Tape::log(Var x) {
    const double xv = x.value();
    if (!(xv > 0.0)) {
        throw std::domain_error("ad: log of non-positive value");
    }
    return unary(Op::kLog, x, std::log(xv), 1.0 / xv);
}

Var Tape::exp(Var x) {
    const double v = std::exp(x.value());
    return unary(Op::kExp, x, v, v);
}

Var Tape::pow_const(Var x, double k) {
    const double xv = x.value();
    const double v = std::pow(xv, k);
    const double dv = k == 0.0 ? 0.0 : k * std::pow(xv, k - 1.0);
    return unary(Op::kPowConst, x, v, dv);
}

Var Tape::clamp_max(Var x, double c) {
    // Subgradient at the exact ceiling is 0: a saturated clamp carries no
    // gradient. This also keeps an overflowed exp upstream harmless, since the
    // saturated branch multiplies every adjoint by zero.
    const double xv = x.value();
    const bool below = xv < c;
    return unary(Op::kClampMax, x, below ? xv : c, below ? 1.0 : 0.0);
}

Var Tape::log_sigmoid(Var x) {
    const double xv = x.value();
    return unary(Op::kLogSigmoid, x, num::log_sigmoid(xv), num::sigmoid(-xv));
}

Var Tape::log1m_exp(Var x) {
    const double xv = x.value();
    if (!(xv < 0.0)) {
        throw std::domain_error("ad: log1m_exp requires a negative argument");
    }
    return unary(Op::kLog1mExp, x, num::log1m_exp(xv), num::log1m_exp_grad(xv));
}

Var Tape::stop_gradient(Var x) {
    check_same_tape(x);
    return emplace(Op::kStopGrad, x.value(), x.id(), 0, 0.0, 0.0, 1, true);
}

void Tape::backward(Var root) {
    check_same_tape(root);
    for (Node& n : nodes_) {
        n.grad = 0.0;
    }
    nodes_[root.id()].grad = 1.0;

    // Reverse creation order is reverse topological order. Zero adjoints are
    // skipped; beyond speed, this avoids forming 0 * inf = NaN for saturated
    // branches whose local partials are non-finite.
    for (NodeId i = root.id() + 1; i-- > 0;) {
        const Node& n = nodes_[i];
        const double g = n.grad;
        if (g == 0.0 || n.stop_grad || n.arity == 0) {
            continue;
        }
        Node& pa = nodes_[n.a];
        if (pa.op != Op::kConst) {
            pa.grad += n.da * g;
        }
        if (n.arity == 2) {
            Node& pb = nodes_[n.b];
            if (pb.op != Op::kConst) {
                pb.grad += n.db * g;
            }
        }
    }
}

void Tape::reset() {
    nodes_.clear();
}

}  // namespace preflab::ad
