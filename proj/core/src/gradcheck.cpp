// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "preflab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "preflab/rng.hpp"

namespace preflab::gradcheck {

using losses::BalanceSpace;
using losses::LossSpec;
using losses::Method;
using losses::PairLogProbs;

namespace {

struct PairGrads {
    double g_w = 0.0;       // full-loss gradients w.r.t. the policy log-probs
    double g_l = 0.0;
    double bg_w = 0.0;      // balance-root gradients (== g for non-ORPO)
    double bg_l = 0.0;
    losses::AdaptiveCoefficient coef;
};

PairGrads loss_gradients(const PairLogProbs& lp, const LossSpec& spec) {
    ad::Tape tape(64);
    const ad::Var pw = tape.param(lp.logp_w_pol);
    const ad::Var pl = tape.param(lp.logp_l_pol);
    const losses::LossGraph g = losses::build_loss(tape, pw, pl, lp, spec);

    PairGrads out;
    out.coef = g.coef;
    tape.backward(g.loss);
    out.g_w = pw.grad();
    out.g_l = pl.grad();
    if (g.balance_root.id() != g.loss.id()) {
        tape.backward(g.balance_root);
        out.bg_w = pw.grad();
        out.bg_l = pl.grad();
    } else {
        out.bg_w = out.g_w;
        out.bg_l = out.g_l;
    }
    return out;
}

// exp(log|gw| - log|gl| + shift); NaN when either gradient vanishes.
double log_space_ratio(double gw, double gl, double shift) {
    return std::exp(std::log(std::fabs(gw)) - std::log(std::fabs(gl)) + shift);
}

// Zero or subnormal gradients carry no usable mantissa, so the pair's balance
// is unmeasurable rather than imbalanced.
double guarded_ratio(double gw, double gl, double shift) {
    if (std::fabs(gw) < std::numeric_limits<double>::min() ||
        std::fabs(gl) < std::numeric_limits<double>::min()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return log_space_ratio(gw, gl, shift);
}

double in_space_shift(const PairLogProbs& lp, const LossSpec& spec) {
    const double pw = lp.logp_w_pol;
    const double pl = lp.logp_l_pol;
    const double rw = lp.logp_w_ref;
    const double rl = lp.logp_l_ref;
    double aw = 1.0;
    double al = 1.0;
    losses::effective_alphas(lp, spec, &aw, &al);

    switch (losses::base_method(spec.method)) {
        case Method::kDPO:
            if (spec.balance_space == BalanceSpace::kPolicy) {
                return al * pl - aw * pw;
            }
            return al * (pl - rl) - aw * (pw - rw);
        case Method::kIPO:
        case Method::kRDPO:
            return al * (pl - rl) - aw * (pw - rw);
        case Method::kCPO:
        case Method::kSimPO:
        case Method::kORPO:
            return pl - pw;
        default:
            throw std::logic_error("in_space_shift: unmapped method");
    }
}

double fd_step(double x) {
    return 1e-6 * std::max(1.0, std::fabs(x));
}

double rel_err(double fd, double analytic) {
    return std::fabs(fd - analytic) / std::max(1.0, std::fabs(analytic));
}

// Central finite differences on the frozen-coefficient loss: the analytic
// gradients treat the detached coefficient as a constant, so the oracle must
// hold it at its center value as well.
double fd_max_rel_err_for(const PairLogProbs& lp, const LossSpec& spec,
                          double beta_w, double g_w, double g_l) {
    const auto frozen_value = [&](const PairLogProbs& q) {
        ad::Tape tape(64);
        const ad::Var pw = tape.param(q.logp_w_pol);
        const ad::Var pl = tape.param(q.logp_l_pol);
        return losses::build_loss_frozen(tape, pw, pl, q, spec, beta_w)
            .loss.value();
    };

    PairLogProbs up = lp;
    PairLogProbs down = lp;
    const double hw = fd_step(lp.logp_w_pol);
    up.logp_w_pol = lp.logp_w_pol + hw;
    down.logp_w_pol = lp.logp_w_pol - hw;
    const double fd_w = (frozen_value(up) - frozen_value(down)) / (2.0 * hw);

    up = lp;
    down = lp;
    const double hl = fd_step(lp.logp_l_pol);
    up.logp_l_pol = lp.logp_l_pol + hl;
    down.logp_l_pol = lp.logp_l_pol - hl;
    const double fd_l = (frozen_value(up) - frozen_value(down)) / (2.0 * hl);

    return std::max(rel_err(fd_w, g_w), rel_err(fd_l, g_l));
}

}  // namespace

ProbGradients grads_wrt_probs(const PairLogProbs& lp, const LossSpec& spec) {
    const PairGrads g = loss_gradients(lp, spec);

    ProbGradients out;
    out.d_logp_w = g.g_w;
    out.d_logp_l = g.g_l;
    const double inv_pw = std::exp(-lp.logp_w_pol);
    const double inv_pl = std::exp(-lp.logp_l_pol);
    out.overflow = std::isinf(inv_pw) || std::isinf(inv_pl);
    out.d_prob_w = (g.g_w == 0.0) ? 0.0 : g.g_w * inv_pw;
    out.d_prob_l = (g.g_l == 0.0) ? 0.0 : g.g_l * inv_pl;
    return out;
}

BalanceReport balance_report(const PairLogProbs& lp, const LossSpec& spec,
                             bool with_fd) {
    const PairGrads g = loss_gradients(lp, spec);
    const double pw = lp.logp_w_pol;
    const double pl = lp.logp_l_pol;
    const double rw = lp.logp_w_ref;
    const double rl = lp.logp_l_ref;

    BalanceReport out;
    out.grad_logp_w = g.g_w;
    out.grad_logp_l = g.g_l;
    out.ratio_P = log_space_ratio(g.g_w, g.g_l, pl - pw);
    out.ratio_x = log_space_ratio(g.g_w, g.g_l, (pl - rl) - (pw - rw));
    out.in_space_ratio = guarded_ratio(g.bg_w, g.bg_l, in_space_shift(lp, spec));
    out.clamped = g.coef.clamped;
    out.fd_max_rel_err =
        with_fd ? fd_max_rel_err_for(lp, spec, g.coef.beta_w, g.g_w, g.g_l)
                : std::numeric_limits<double>::quiet_NaN();
    return out;
}

SweepSummary random_balance_sweep(std::size_t n, std::uint64_t seed,
                                  const LossSpec& spec) {
    if (n == 0) {
        throw std::invalid_argument("random_balance_sweep: n must be >= 1");
    }
    spec.validate();

    rng::SplitMix64 r(seed);
    SweepSummary out;
    out.n_samples = n;
    for (std::size_t i = 0; i < n; ++i) {
        PairLogProbs lp;
        lp.logp_w_pol = r.next_double(-50.0, -0.1);
        lp.logp_l_pol = r.next_double(-50.0, -0.1);
        lp.logp_w_ref = r.next_double(-50.0, -0.1);
        lp.logp_l_ref = r.next_double(-50.0, -0.1);
        lp.len_w = static_cast<int>(r.next_int(1, 64));
        lp.len_l = static_cast<int>(r.next_int(1, 64));

        const BalanceReport br = balance_report(lp, spec, /*with_fd=*/true);
        out.fd_max_rel_err = std::max(out.fd_max_rel_err, br.fd_max_rel_err);
        if (!br.clamped) {
            ++out.n_unclamped;
            if (std::isfinite(br.in_space_ratio)) {
                out.max_unclamped_deviation =
                    std::max(out.max_unclamped_deviation,
                             std::fabs(br.in_space_ratio - 1.0));
            }
        }
    }
    out.clamp_rate =
        static_cast<double>(n - out.n_unclamped) / static_cast<double>(n);
    return out;
}

}  // namespace preflab::gradcheck
