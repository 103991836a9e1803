// Copyright 2026 The preflab authors
// SPDX-License-Identifier: Apache-2.0

#include "preflab/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "preflab/numeric.hpp"

namespace preflab::losses {

void PairLogProbs::validate() const {
    const double lps[] = {logp_w_pol, logp_l_pol, logp_w_ref, logp_l_ref};
    for (double lp : lps) {
        if (!std::isfinite(lp) || lp > 0.0) {
            throw std::invalid_argument(
                "PairLogProbs: log-probabilities must be finite and <= 0");
        }
    }
    if (len_w < 1 || len_l < 1) {
        throw std::invalid_argument("PairLogProbs: lengths must be >= 1");
    }
}

void LossSpec::validate() const {
    if (!(beta > 0.0) || !std::isfinite(beta)) {
        throw std::invalid_argument("LossSpec: beta must be positive and finite");
    }
    if (!(ceiling_C > 1.0)) {
        throw std::invalid_argument("LossSpec: ceiling_C must be > 1");
    }
    if (!(k > 0.0) || !std::isfinite(k)) {
        throw std::invalid_argument("LossSpec: k must be positive and finite");
    }
    if (!(alpha_w >= 0.0) || !(alpha_l >= 0.0) || !std::isfinite(alpha_w) ||
        !std::isfinite(alpha_l)) {
        throw std::invalid_argument("LossSpec: alpha exponents must be >= 0");
    }
    if ((method == Method::kIPO || method == Method::kAdaIPO) &&
        (!(tau > 0.0) || !std::isfinite(tau))) {
        throw std::invalid_argument("LossSpec: tau must be positive for IPO");
    }
    if (!(len_penalty_alpha >= 0.0) || !std::isfinite(len_penalty_alpha)) {
        throw std::invalid_argument("LossSpec: len_penalty_alpha must be >= 0");
    }
    if (!std::isfinite(gamma)) {
        throw std::invalid_argument("LossSpec: gamma must be finite");
    }
}

bool is_adaptive(Method m) {
    switch (m) {
        case Method::kAdaDPO:
        case Method::kStableAdaDPO:
        case Method::kAdaIPO:
        case Method::kAdaSimPO:
        case Method::kAdaRDPO:
        case Method::kAdaCPO:
        case Method::kAdaORPO:
            return true;
        default:
            return false;
    }
}

Method base_method(Method m) {
    switch (m) {
        case Method::kAdaDPO:
        case Method::kStableAdaDPO:
            return Method::kDPO;
        case Method::kAdaIPO:
            return Method::kIPO;
        case Method::kAdaSimPO:
            return Method::kSimPO;
        case Method::kAdaRDPO:
            return Method::kRDPO;
        case Method::kAdaCPO:
            return Method::kCPO;
        case Method::kAdaORPO:
            return Method::kORPO;
        default:
            return m;
    }
}

std::string_view method_name(Method m) {
    switch (m) {
        case Method::kDPO: return "DPO";
        case Method::kAdaDPO: return "AdaDPO";
        case Method::kStableAdaDPO: return "StableAdaDPO";
        case Method::kIPO: return "IPO";
        case Method::kAdaIPO: return "AdaIPO";
        case Method::kSimPO: return "SimPO";
        case Method::kAdaSimPO: return "AdaSimPO";
        case Method::kRDPO: return "RDPO";
        case Method::kAdaRDPO: return "AdaRDPO";
        case Method::kCPO: return "CPO";
        case Method::kAdaCPO: return "AdaCPO";
        case Method::kORPO: return "ORPO";
        case Method::kAdaORPO: return "AdaORPO";
    }
    return "?";
}

std::optional<Method> method_from_name(std::string_view name) {
    for (Method m : kAllMethods) {
        if (method_name(m) == name) {
            return m;
        }
    }
    return std::nullopt;
}

double beta_l(const LossSpec& spec) {
    return (spec.method == Method::kIPO || spec.method == Method::kAdaIPO)
               ? 1.0
               : spec.beta;
}

void effective_alphas(const PairLogProbs& lp, const LossSpec& spec,
                      double* alpha_w, double* alpha_l) {
    if (spec.method == Method::kStableAdaDPO) {
        *alpha_w = 1.0 / static_cast<double>(lp.len_w);
        *alpha_l = 1.0 / static_cast<double>(lp.len_l);
    } else {
        *alpha_w = spec.alpha_w;
        *alpha_l = spec.alpha_l;
    }
}

namespace {

// Detached log of the adaptive ratio. adaptive_log_ratio_node mirrors this
// operation for operation so that both paths produce bit-identical
// coefficients.
double adaptive_log_ratio(const PairLogProbs& lp, const LossSpec& spec) {
    const double pw = lp.logp_w_pol;
    const double pl = lp.logp_l_pol;
    const double rw = lp.logp_w_ref;
    const double rl = lp.logp_l_ref;
    double aw = 1.0;
    double al = 1.0;
    effective_alphas(lp, spec, &aw, &al);

    switch (spec.method) {
        case Method::kAdaDPO:
        case Method::kStableAdaDPO:
            if (spec.balance_space == BalanceSpace::kPolicy) {
                return aw * pw - al * pl;
            }
            return aw * (pw - rw) - al * (pl - rl);
        case Method::kAdaIPO:
        case Method::kAdaRDPO:
            return aw * (pw - rw) - al * (pl - rl);
        case Method::kAdaCPO:
            return pw - pl;
        case Method::kAdaSimPO:
            return (pw - pl) + (std::log(static_cast<double>(lp.len_w)) -
                                std::log(static_cast<double>(lp.len_l)));
        case Method::kAdaORPO:
            return ((pw + num::log1m_exp(pw)) - pl) - num::log1m_exp(pl);
        default:
            return 0.0;
    }
}

ad::Var adaptive_log_ratio_node(ad::Var pw, ad::Var pl,
                                const PairLogProbs& lp, const LossSpec& spec) {
    double aw = 1.0;
    double al = 1.0;
    effective_alphas(lp, spec, &aw, &al);

    switch (spec.method) {
        case Method::kAdaDPO:
        case Method::kStableAdaDPO:
            if (spec.balance_space == BalanceSpace::kPolicy) {
                return aw * pw - al * pl;
            }
            return aw * (pw - lp.logp_w_ref) - al * (pl - lp.logp_l_ref);
        case Method::kAdaIPO:
        case Method::kAdaRDPO:
            return aw * (pw - lp.logp_w_ref) - al * (pl - lp.logp_l_ref);
        case Method::kAdaCPO:
            return pw - pl;
        case Method::kAdaSimPO:
            return (pw - pl) + (std::log(static_cast<double>(lp.len_w)) -
                                std::log(static_cast<double>(lp.len_l)));
        case Method::kAdaORPO:
            return ((pw + log1m_exp(pw)) - pl) - log1m_exp(pl);
        default:
            throw std::logic_error("adaptive_log_ratio_node: base method");
    }
}

void check_orpo_domain(const PairLogProbs& lp, const LossSpec& spec) {
    if (base_method(spec.method) == Method::kORPO &&
        (lp.logp_w_pol == 0.0 || lp.logp_l_pol == 0.0)) {
        throw std::domain_error(
            "ORPO: odds are undefined for a response probability of exactly 1");
    }
}

struct BuiltLoss {
    ad::Var loss;
    ad::Var balance_root;
};

// Shared margin/link construction, parameterized by the chosen-response
// coefficient node (stop-gradient chain or injected constant).
BuiltLoss build_with_coef(ad::Tape& t, ad::Var pw, ad::Var pl, ad::Var bw,
                          const PairLogProbs& lp, const LossSpec& spec) {
    const double bl = beta_l(spec);
    const ad::Var bl_node = t.constant(bl);

    switch (base_method(spec.method)) {
        case Method::kDPO: {
            const ad::Var delta =
                bw * (pw - lp.logp_w_ref) - bl_node * (pl - lp.logp_l_ref);
            const ad::Var loss = -log_sigmoid(delta);
            return {loss, loss};
        }
        case Method::kRDPO: {
            const ad::Var margin =
                bw * (pw - lp.logp_w_ref) - bl_node * (pl - lp.logp_l_ref);
            const double penalty =
                spec.len_penalty_alpha * static_cast<double>(lp.len_w - lp.len_l);
            const ad::Var loss = -log_sigmoid(margin - penalty);
            return {loss, loss};
        }
        case Method::kIPO: {
            const ad::Var margin =
                bw * (pw - lp.logp_w_ref) - bl_node * (pl - lp.logp_l_ref);
            const ad::Var loss =
                pow_const(margin - 1.0 / (2.0 * spec.tau), 2.0);
            return {loss, loss};
        }
        case Method::kSimPO: {
            const ad::Var term_w =
                (bw / static_cast<double>(lp.len_w)) * pw;
            const ad::Var term_l =
                (bl_node / static_cast<double>(lp.len_l)) * pl;
            const ad::Var loss =
                -log_sigmoid((term_w - term_l) - spec.gamma);
            return {loss, loss};
        }
        case Method::kCPO: {
            const ad::Var loss = -log_sigmoid(bw * pw - bl_node * pl);
            return {loss, loss};
        }
        case Method::kORPO: {
            const ad::Var odds_w = pw - log1m_exp(pw);
            const ad::Var odds_l = pl - log1m_exp(pl);
            const ad::Var ls = log_sigmoid(bw * odds_w - bl_node * odds_l);
            const ad::Var loss = -(pw + ls);
            // The odds-margin term alone; the relative-penalty gradients this
            // method balances exclude the likelihood term.
            const ad::Var pref = -ls;
            return {loss, pref};
        }
        default:
            throw std::logic_error("build_with_coef: unmapped method");
    }
}

}  // namespace

AdaptiveCoefficient adaptive_coefficient(const PairLogProbs& lp,
                                         const LossSpec& spec) {
    lp.validate();
    spec.validate();
    const double bl = beta_l(spec);
    if (!is_adaptive(spec.method)) {
        return {bl, 0.0, false};
    }
    const double log_ratio = adaptive_log_ratio(lp, spec);
    double ratio = std::exp(log_ratio);
    const bool clamped = !(ratio < spec.ceiling_C);
    if (clamped) {
        ratio = spec.ceiling_C;
    }
    return {(spec.k * bl) * ratio, log_ratio, clamped};
}

LossGraph build_loss(ad::Tape& tape, ad::Var logp_w, ad::Var logp_l,
                     const PairLogProbs& lp, const LossSpec& spec) {
    lp.validate();
    spec.validate();
    check_orpo_domain(lp, spec);
    if (logp_w.value() != lp.logp_w_pol || logp_l.value() != lp.logp_l_pol) {
        throw std::invalid_argument(
            "build_loss: policy bindings disagree with PairLogProbs values");
    }

    ad::Var bw;
    AdaptiveCoefficient coef;
    if (is_adaptive(spec.method)) {
        const ad::Var lr = adaptive_log_ratio_node(logp_w, logp_l, lp, spec);
        const ad::Var ratio =
            clamp_max(exp(stop_gradient(lr)), spec.ceiling_C);
        bw = tape.constant(spec.k * beta_l(spec)) * ratio;
        coef = {bw.value(), lr.value(), !(std::exp(lr.value()) < spec.ceiling_C)};
    } else {
        coef = {beta_l(spec), 0.0, false};
        bw = tape.constant(coef.beta_w);
    }

    const BuiltLoss built = build_with_coef(tape, logp_w, logp_l, bw, lp, spec);
    return {built.loss, built.balance_root, coef};
}

LossGraph build_loss_frozen(ad::Tape& tape, ad::Var logp_w, ad::Var logp_l,
                            const PairLogProbs& lp, const LossSpec& spec,
                            double beta_w) {
    lp.validate();
    spec.validate();
    check_orpo_domain(lp, spec);
    const ad::Var bw = tape.constant(beta_w);
    const BuiltLoss built = build_with_coef(tape, logp_w, logp_l, bw, lp, spec);
    return {built.loss, built.balance_root, {beta_w, 0.0, false}};
}

double loss_value(const PairLogProbs& lp, const LossSpec& spec) {
    ad::Tape tape(64);
    const ad::Var pw = tape.param(lp.logp_w_pol);
    const ad::Var pl = tape.param(lp.logp_l_pol);
    return build_loss(tape, pw, pl, lp, spec).loss.value();
}

ImplicitRewards implicit_rewards(const PairLogProbs& lp, const LossSpec& spec) {
    const AdaptiveCoefficient coef = adaptive_coefficient(lp, spec);
    const double bw = coef.beta_w;
    const double bl = beta_l(spec);
    const double pw = lp.logp_w_pol;
    const double pl = lp.logp_l_pol;

    switch (base_method(spec.method)) {
        case Method::kDPO:
        case Method::kIPO:
        case Method::kRDPO:
            return {bw * (pw - lp.logp_w_ref), bl * (pl - lp.logp_l_ref)};
        case Method::kSimPO:
            return {(bw / static_cast<double>(lp.len_w)) * pw,
                    (bl / static_cast<double>(lp.len_l)) * pl};
        case Method::kCPO:
            return {bw * pw, bl * pl};
        case Method::kORPO:
            return {bw * (pw - num::log1m_exp(pw)),
                    bl * (pl - num::log1m_exp(pl))};
        default:
            throw std::logic_error("implicit_rewards: unmapped method");
    }
}

}  // namespace preflab::losses
